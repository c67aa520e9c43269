"""Step-size schedules of the form c * H^a * K^b with rational exponents.

Grammar (whitespace ignored)::

    expr   := term (('*' | '/') term)*
    term   := factor ('^' exponent)?
    factor := number | 'H' | 'K' | '(' expr ')'
    exponent := ('-' | '+')* (number | '(' exponent (('*' | '/') exponent)* ')')

Exponents are rational numbers only, so every schedule is a single monomial.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from ..errors import ConfigError

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(.))")
VARIABLES = ("H", "K")


@dataclass(frozen=True)
class Schedule:
    coef: float
    h_power: Fraction
    k_power: Fraction
    text: str = ""

    def __call__(self, H: float, K: int) -> float:
        return self.coef * H ** float(self.h_power) * K ** float(self.k_power)

    def __mul__(self, other: "Schedule") -> "Schedule":
        return Schedule(self.coef * other.coef, self.h_power + other.h_power, self.k_power + other.k_power)

    def power(self, p: Fraction) -> "Schedule":
        return Schedule(self.coef ** float(p), self.h_power * p, self.k_power * p)

    def inverse(self) -> "Schedule":
        return self.power(Fraction(-1))

    def __str__(self) -> str:
        return self.text or f"{self.coef:g}*H^{self.h_power}*K^{self.k_power}"


def _tokens(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif name is not None:
            out.append(("name", name))
        elif op is not None and not op.isspace():
            out.append(("op", op))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            raise ConfigError(f"schedule {self.text!r}: unexpected {tok[1] or 'end of input'!r}")
        self.i += 1
        return tok

    def expr(self) -> Schedule:
        s = self.term()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.term()
            s = s * (rhs if op == "*" else rhs.inverse())
        return s

    def term(self) -> Schedule:
        base = self.factor()
        if self.peek() == ("op", "^"):
            self.take()
            base = base.power(self.exponent())
        return base

    def exponent(self) -> Fraction:
        sign = 1
        while self.peek() in (("op", "-"), ("op", "+")):
            if self.take()[1] == "-":
                sign = -sign
        if self.peek() == ("op", "("):
            self.take()
            val = self.exponent()
            while self.peek() in (("op", "/"), ("op", "*")):
                op = self.take()[1]
                rhs = self.exponent()
                val = val / rhs if op == "/" else val * rhs
            self.take("op", ")")
            return sign * val
        return sign * Fraction(self.take("num")[1]).limit_denominator(10 ** 6)

    def factor(self) -> Schedule:
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return Schedule(float(val), Fraction(0), Fraction(0))
        if kind == "name":
            self.take()
            if val == "H":
                return Schedule(1.0, Fraction(1), Fraction(0))
            if val == "K":
                return Schedule(1.0, Fraction(0), Fraction(1))
            raise ConfigError(f"schedule {self.text!r}: unknown parameter {val!r} (allowed: H, K)")
        if (kind, val) == ("op", "("):
            self.take()
            s = self.expr()
            self.take("op", ")")
            return s
        if (kind, val) == ("op", "-"):
            raise ConfigError(f"schedule {self.text!r}: negative step sizes are not allowed")
        raise ConfigError(f"schedule {self.text!r}: unexpected {val or 'end of input'!r}")


def parse_schedule(text: str) -> Schedule:
    p = _Parser(text)
    s = p.expr()
    p.take("end")
    if not s.coef > 0:
        raise ConfigError(f"schedule {text!r} must have a positive coefficient")
    return Schedule(s.coef, s.h_power, s.k_power, text.strip())


# Seven inner step-size schedules: (1/2) H^-1 K^b for b from 0 down to -2.
STANDARD_SCHEDULES = {
    f"1/(2H*K^{b})" if b else "1/(2H)": Schedule(0.5, Fraction(-1), Fraction(-b).limit_denominator(100))
    for b in (0, 0.25, 0.5, 0.75, 1, 1.5, 2)
}

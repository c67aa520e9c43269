"""Evaluators for upper and lower convergence bounds of local and mini-batch methods.

Values are the displayed formulas with logarithmic factors and absolute constants
dropped unless a constant is printed explicitly. Every evaluator returns a term
breakdown so that trends can be compared term by term.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

LOG_CAVEAT = "logarithmic factors and absolute constants omitted"


@dataclass(frozen=True)
class BoundParams:
    H: float = 1.0
    B: float = 1.0
    sigma: float = 0.0
    mu: float = 0.0
    tau: float = 0.0
    zeta: float = 0.0  # heterogeneity over the visited region (or the whole space)
    zeta_star: float = 0.0  # heterogeneity at the optimum
    Q: float = 0.0
    M: int = 1
    K: int = 1
    R: int = 1
    D: float = 0.0
    epsilon: float = 1e-6

    def __post_init__(self):
        for name in ("H", "B", "sigma", "mu", "tau", "zeta", "zeta_star", "Q", "D", "epsilon"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be finite and non-negative, got {v}")
        for name in ("M", "K", "R"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "BoundParams":
        data = dict(data)
        if "zeta_consensus" in data:
            data["zeta"] = data.pop("zeta_consensus")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown bound parameters: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BoundReport:
    name: str
    value: float
    terms: dict
    reads: tuple = ()
    caveats: tuple = ()
    branch: str | None = None
    extra: dict = field(default_factory=dict)

    def table(self) -> str:
        width = max([len(k) for k in self.terms] + [5])
        lines = [f"{self.name}"]
        lines += [f"  {k:<{width}}  {v:.6g}" for k, v in self.terms.items()]
        lines.append(f"  {'total':<{width}}  {self.value:.6g}")
        if self.branch:
            lines.append(f"  min branch: {self.branch}")
        for c in self.caveats:
            lines.append(f"  note: {c}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "terms": dict(self.terms), "reads": list(self.reads),
                "caveats": list(self.caveats), "branch": self.branch, **({"extra": self.extra} if self.extra else {})}


def _report(name, terms, reads, caveats=(LOG_CAVEAT,), branch=None, extra=None) -> BoundReport:
    return BoundReport(name, float(sum(terms.values())), terms, tuple(reads), tuple(caveats), branch, extra or {})


def eval_sc_upper_bound(p: BoundParams) -> BoundReport:
    """Strongly convex local SGD upper bound (six terms). ``zeta`` is the consensus-level zeta."""
    if not p.mu > 0:
        raise DomainError("mu = 0: use eval_convex_upper_bound for the convex setting")
    H, B, s, mu, t, z, Q, M, K, R = p.H, p.B, p.sigma, p.mu, p.tau, p.zeta, p.Q, p.M, p.K, p.R
    terms = {
        "optimization": H * B ** 2 * math.exp(-mu * K * R / H),
        "noise": s ** 2 / (mu * M * K * R),
        "tau_sigma": t ** 2 * s ** 2 / (mu ** 3 * K * R ** 2),
        "tau_zeta_consensus": t ** 2 * z ** 2 / (mu ** 3 * R ** 2),
        "Q_sigma": Q ** 2 * s ** 4 / (mu ** 5 * K ** 2 * R ** 4),
        "Q_zeta_consensus": Q ** 2 * z ** 4 / (mu ** 5 * R ** 4),
    }
    return _report("sc_upper", terms, ("H", "B", "sigma", "mu", "tau", "zeta", "Q", "M", "K", "R"))


def convex_zeta_branches(p: BoundParams) -> tuple[float, float]:
    """(zeta branch, zeta_star + tau D branch) of the convex bound's inner minimum."""
    B, R, t, Q = p.B, p.R, p.tau, p.Q
    zeta_branch = math.sqrt(t * p.zeta * B ** 3 / R) + (Q * p.zeta ** 2 * B ** 5) ** (1 / 3) / R ** (2 / 3)
    star_branch = (math.sqrt(t * p.zeta_star * B ** 3 / R) + (Q * p.zeta_star ** 2 * B ** 5) ** (1 / 3) / R ** (2 / 3)
                   + math.sqrt(t ** 2 * p.D * B ** 3 / R) + (Q * t ** 2 * p.D ** 2 * B ** 5) ** (1 / 3) / R ** (2 / 3))
    return zeta_branch, star_branch


def eval_convex_upper_bound(p: BoundParams) -> BoundReport:
    H, B, s, t, Q, M, K, R = p.H, p.B, p.sigma, p.tau, p.Q, p.M, p.K, p.R
    zb, sb = convex_zeta_branches(p)
    branch = "zeta" if zb <= sb else "zeta_star_tau_D"
    terms = {
        "optimization": H * B ** 2 / (K * R),
        "noise": s * B / math.sqrt(M * K * R),
        "tau_sigma": math.sqrt(t * s * B ** 3) / (K ** 0.25 * R ** 0.5),
        "Q_sigma": (Q * s ** 2 * B ** 5) ** (1 / 3) / (K ** (1 / 3) * R ** (2 / 3)),
        "heterogeneity_min": min(zb, sb),
    }
    return _report("convex_upper", terms, ("H", "B", "sigma", "tau", "zeta", "zeta_star", "Q", "M", "K", "R", "D"),
                   branch=branch, extra={"zeta_branch": zb, "zeta_star_tau_D_branch": sb})


def eval_lsgd_lower_bound(p: BoundParams) -> BoundReport:
    H, B, s, zs, M, K, R = p.H, p.B, p.sigma, p.zeta_star, p.M, p.K, p.R
    terms = {
        "optimization": H * B ** 2 / R,
        "noise_local": (H * s ** 2 * B ** 4) ** (1 / 3) / (K ** (1 / 3) * R ** (2 / 3)),
        "noise_minibatch": s * B / math.sqrt(M * K * R),
        "heterogeneity": (H * zs ** 2 * B ** 4) ** (1 / 3) / R ** (2 / 3),
    }
    return _report("lsgd_lower", terms, ("H", "B", "sigma", "zeta_star", "M", "K", "R"))


def eval_ai_lower_bound(p: BoundParams) -> BoundReport:
    H, B, s, M, K, R = p.H, p.B, p.sigma, p.M, p.K, p.R
    terms = {"optimization": H * B ** 2 / R ** 2, "noise": s * B / math.sqrt(M * K * R)}
    return _report("ai_lower", terms, ("H", "B", "sigma", "M", "K", "R"))


def eval_gd_lower_bound(H: float, B: float, kappa: float, R: int) -> float:
    """HB^2/(4 kappa) e^{-12 R / kappa}; explicit constants, no caveat."""
    if not kappa > 0 or R < 0:
        raise DomainError("need kappa > 0 and R >= 0")
    return H * B ** 2 / (4.0 * kappa) * math.exp(-12.0 * R / kappa)


def gd_lower_report(p: BoundParams) -> BoundReport:
    if not p.mu > 0:
        raise DomainError("the GD lower bound needs mu > 0 (kappa = H/mu)")
    v = eval_gd_lower_bound(p.H, p.B, p.H / p.mu, p.R)
    return BoundReport("gd_lower", v, {"optimization": v}, ("H", "B", "mu", "R"), ())


@dataclass(frozen=True)
class TwoStageRounds:
    R1: int
    R2: int
    total: int
    printed_formula_total: int


def two_stage_rounds(kappa: float, K: int, zeta_star: float, tau: float, H: float, mu: float, B: float,
                     epsilon: float) -> TwoStageRounds:
    """R1 solves B e^{-K R1/kappa} = zeta* tau/(H mu); R2 = kappa ln(zeta* tau/(H mu eps)).

    ``printed_formula_total`` evaluates the printed combined expression, whose first
    logarithm carries B in the denominator instead of the numerator.
    """
    if not zeta_star * tau > 0:
        raise DomainError("two-stage round counts need zeta_star * tau > 0")
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if K < 1 or not kappa >= 1:
        raise DomainError("need K >= 1 and kappa >= 1")
    floor = zeta_star * tau / (H * mu)
    r1_real = kappa / K * math.log(B / floor)
    r2_real = kappa * math.log(floor / epsilon)
    R1 = max(0, math.ceil(r1_real - 1e-12))
    R2 = max(0, math.ceil(r2_real - 1e-12))
    printed = kappa * (math.log(1.0 / (floor * B)) / K + math.log(floor / epsilon))
    return TwoStageRounds(R1, R2, R1 + R2, max(0, math.ceil(printed - 1e-12)))


def closed_form_motivating(H: float, eta: float, beta: float, K: int, R: int, x_star) -> np.ndarray:
    """x_R = x* (1 - (1 - (beta/2)(1 - (1 - eta H)^K))^R) for local GD from zero on the separable pair."""
    x_star = np.asarray(x_star, dtype=float)
    gain = 1.0 - (1.0 - eta * H) ** K
    return x_star * (1.0 - (1.0 - 0.5 * beta * gain) ** R)


def consensus_bound(sigma: float, eta: float, K: int, zeta: float) -> float:
    """3 K sigma^2 eta^2 + 6 K^2 eta^2 zeta^2."""
    return 3.0 * K * sigma ** 2 * eta ** 2 + 6.0 * K ** 2 * eta ** 2 * zeta ** 2


EVALUATORS = {
    "sc_upper": eval_sc_upper_bound,
    "convex_upper": eval_convex_upper_bound,
    "lsgd_lower": eval_lsgd_lower_bound,
    "ai_lower": eval_ai_lower_bound,
    "gd_lower": gd_lower_report,
}


def evaluate(name: str, params: BoundParams) -> BoundReport:
    try:
        fn = EVALUATORS[name]
    except KeyError:
        raise ConfigError(f"unknown bound {name!r}; choose from {', '.join(EVALUATORS)}") from None
    return fn(params)

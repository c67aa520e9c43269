"""Problem generators: hard instances for the lower bounds, random families, linear regression."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CoverageError, DomainError, InfeasibleError, InvalidInstanceError
from .oracle import RngKey
from .quad_core import ProblemInstance, QuadraticMachine, SymMatrix


def _machines(hessians, optima, linears=None, offsets=None) -> tuple:
    out = []
    for i, (h, x) in enumerate(zip(hessians, optima)):
        lin = None if linears is None else linears[i]
        off = 0.0 if offsets is None else offsets[i]
        out.append(QuadraticMachine(SymMatrix(np.asarray(h, dtype=float)), np.asarray(x, dtype=float),
                                    label=i + 1, linear=lin, offset=off))
    return tuple(out)


# ---------------------------------------------------------------------------
# Two-machine separable example
# ---------------------------------------------------------------------------

def make_motivating_pair(H: float, x_star) -> ProblemInstance:
    """F_1 = (H/2)(x[1] - x*[1])^2 and F_2 = (H/2)(x[2] - x*[2])^2; both machines are rank one."""
    if not H > 0:
        raise DomainError("H must be positive")
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape != (2,):
        raise InvalidInstanceError("x_star must be a 2-vector")
    hess = [np.diag([H, 0.0]), np.diag([0.0, H])]
    return ProblemInstance(_machines(hess, [x_star, x_star]))


# ---------------------------------------------------------------------------
# Rank-one pair with a tunable condition number
# ---------------------------------------------------------------------------

def odd_fraction(M: int) -> float:
    """Share of machines with odd 1-based label: 1/2 for even M, (M+1)/(2M) for odd M."""
    return math.ceil(M / 2) / M


def rank_one_pair_kappa(alpha: float, a: float) -> float:
    """Condition number of (1-a) diag(1,0) + a v v^T with v = (alpha, sqrt(1-alpha^2))."""
    det = (a - a * a) * (1.0 - alpha * alpha)
    disc = math.sqrt(max(0.25 - det, 0.0))
    lo = 0.5 - disc
    if lo <= 0:
        return math.inf
    return (0.5 + disc) / lo


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v) > 1e-12))
    return v if v[i] >= 0 else -v


def make_rank_one_pair(H: float, B: float, M: int, target_kappa: float) -> tuple[ProblemInstance, float]:
    """Even-labelled machines get H diag(1,0), odd-labelled get H v v^T; all share one optimum.

    alpha is found by bisection so that the average Hessian has condition number
    ``target_kappa``; the shared optimum is -B (v_1 + v_2)/sqrt(2) in the average's eigenbasis.
    """
    if M < 2:
        raise DomainError("the rank-one pair needs M >= 2")
    if not target_kappa >= 1:
        raise DomainError("target_kappa must be at least 1")
    a = odd_fraction(M)
    k0 = rank_one_pair_kappa(0.0, a)
    if target_kappa < k0 - 1e-12:
        raise InfeasibleError(f"target_kappa={target_kappa} is below the alpha=0 value {k0:.6g} for M={M}")
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if rank_one_pair_kappa(mid, a) < target_kappa:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    v = np.array([alpha, math.sqrt(1.0 - alpha * alpha)])
    A1 = H * np.diag([1.0, 0.0])
    A2 = H * np.outer(v, v)
    avg = (1.0 - a) * A1 + a * A2
    _, vecs = np.linalg.eigh(avg)
    v1, v2 = _canonical_sign(vecs[:, 1]), _canonical_sign(vecs[:, 0])
    xstar = -B * (v1 + v2) / math.sqrt(2.0)
    hess = [A2 if label % 2 == 1 else A1 for label in range(1, M + 1)]
    inst = ProblemInstance(_machines(hess, [xstar] * M), claimed_radius_b=B)
    return inst, alpha


# ---------------------------------------------------------------------------
# Tridiagonal chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainSpec:
    H: float = 1.0
    B: float = 1.0
    R: int = 10
    d: int | None = None
    M: int = 2

    @property
    def q(self) -> float:
        return 1.0 - 1.0 / self.R

    @property
    def t(self) -> float:
        """1/2 log_q(B^2/R): coordinates below t are populated in the start point."""
        return 0.5 * math.log(self.B ** 2 / self.R) / math.log(self.q)

    @property
    def dim(self) -> int:
        return self.d if self.d is not None else math.ceil(4 * (self.t + self.R))


def chain_toeplitz_eigenvalues(H: float, q: float, d: int) -> np.ndarray:
    """(1+q^2) H + 2 q H cos(i pi/(d+1)), i = 1..d, in descending order."""
    i = np.arange(1, d + 1)
    return (1.0 + q * q) * H + 2.0 * q * H * np.cos(i * np.pi / (d + 1))


def chain_start(spec: ChainSpec) -> np.ndarray:
    d, q, t = spec.dim, spec.q, spec.t
    i = np.arange(1, d + 1)
    return np.where(i < t, q ** i, 0.0)


def _term_hessian(d: int, i: int, q: float) -> np.ndarray:
    """Hessian of (q x_i - x_{i+1})^2 / 2 with 1-based coordinates; i=0 is (q - x_1)^2/2, i=d is (q x_d)^2/2."""
    h = np.zeros((d, d))
    if i == 0:
        h[0, 0] = 1.0
    elif i == d:
        h[d - 1, d - 1] = q * q
    else:
        a, b = i - 1, i
        h[a, a] = q * q
        h[b, b] = 1.0
        h[a, b] = h[b, a] = -q
    return h


def make_chain_instance(spec: ChainSpec) -> tuple[ProblemInstance, np.ndarray]:
    """Average objective (H/2)[(q - x_1)^2 + sum_i (q x_i - x_{i+1})^2 + (q x_d)^2].

    Terms with even index go to even-labelled machines and odd index to odd-labelled
    machines, each group rescaled so the machine average is exactly the chain. Gradient
    linear parts are set exactly (zero except the anchor), so any method built from
    these gradients extends the support of an iterate by at most one coordinate per round.
    """
    if spec.R < 2:
        raise DomainError("the chain construction needs R >= 2")
    if spec.M < 2:
        raise DomainError("the chain construction needs M >= 2")
    if not spec.H > 0 or not spec.B > 0:
        raise DomainError("H and B must be positive")
    q, t, d = spec.q, spec.t, spec.dim
    if d < 1:
        raise CoverageError("dimension must be positive")
    if 2 * (d - t - spec.R) * math.log(q) > math.log(1e-3):
        need = math.ceil(t + spec.R + math.log(1e-3) / (2 * math.log(q)))
        raise CoverageError(f"d={d} leaves a non-negligible q^(2d) tail; need d >= {need}")
    n_odd = math.ceil(spec.M / 2)
    n_even = spec.M // 2
    group = {0: np.zeros((d, d)), 1: np.zeros((d, d))}
    for i in range(0, d + 1):
        group[i % 2] += _term_hessian(d, i, q)
    scale = {0: spec.M / n_even * spec.H, 1: spec.M / n_odd * spec.H}

    powers = q ** np.arange(1, d + 1)
    hess, optima, linears = [], [], []
    for label in range(1, spec.M + 1):
        p = label % 2
        hess.append(scale[p] * group[p])
        opt = powers.copy()
        if d % 2 == p:
            opt[-1] = 0.0  # this group holds the truncating (q x_d)^2 term
        optima.append(opt)
        lin = np.zeros(d)
        if p == 0:
            lin[0] = scale[0] * q  # anchor (q - x_1)^2
        linears.append(lin)
    x0 = chain_start(spec)
    inst = ProblemInstance(_machines(hess, optima, linears), start=x0, claimed_radius_b=spec.B)
    return inst, x0


# ---------------------------------------------------------------------------
# Ill-conditioned single quadratic
# ---------------------------------------------------------------------------

def make_gd_worst_case(H: float, kappa: float, B: float, d: int = 2) -> ProblemInstance:
    """One quadratic with eigenvalues H and H/kappa (extra dimensions at H); x* = -B (e_1 + e_2)/sqrt(2)."""
    if d < 2:
        raise DomainError("d must be at least 2")
    if not kappa >= 1:
        raise DomainError("kappa must be at least 1")
    if kappa < 6:
        warnings.warn("kappa < 6: the GD lower-bound constant is not valid here", RuntimeWarning, stacklevel=2)
    diag = np.full(d, float(H))
    diag[1] = H / kappa
    xstar = np.zeros(d)
    xstar[:2] = -B / math.sqrt(2.0)
    return ProblemInstance(_machines([np.diag(diag)], [xstar]), claimed_radius_b=B)


# ---------------------------------------------------------------------------
# Random family
# ---------------------------------------------------------------------------

def _random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    Q, Rm = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.where(np.diag(Rm) == 0, 1.0, np.diag(Rm)))


def _random_spectrum(rng: np.random.Generator, d: int, mu: float, H: float) -> np.ndarray:
    if d == 1:
        return np.array([rng.uniform(mu, H)])
    lam = rng.uniform(mu, H, size=d)
    lam[0], lam[-1] = H, mu
    return lam


def make_random_instance(M: int, d: int, mu: float, H: float, concept_spread: float = 1.0,
                         hessian_spread: float = 1.0, seed: int = 0, target=None,
                         sigma: float = 0.0) -> ProblemInstance:
    """A_m = (1-t) A_base + t B_m with spectra in [mu, H]; x_m* = target + concept_spread u_m."""
    if not 0 < mu <= H:
        raise DomainError("need 0 < mu <= H")
    if not 0 <= hessian_spread <= 1:
        raise DomainError("hessian_spread must lie in [0, 1]")
    if concept_spread < 0:
        raise DomainError("concept_spread must be non-negative")
    rng = RngKey(seed, 0xC0FFEE, 0, 0).generator()

    def spd():
        Q = _random_orthogonal(rng, d)
        return (Q * _random_spectrum(rng, d, mu, H)) @ Q.T

    base = spd()
    if target is None:
        target = rng.standard_normal(d)
        target /= np.linalg.norm(target)
    target = np.asarray(target, dtype=float)
    hess, optima = [], []
    for _ in range(M):
        Bm = spd()
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        A = (1.0 - hessian_spread) * base + hessian_spread * Bm
        hess.append(0.5 * (A + A.T))
        optima.append(target + concept_spread * u)
    return ProblemInstance(_machines(hess, optima), sigma=sigma)


# ---------------------------------------------------------------------------
# Distributed linear regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionSpec:
    covariate_mean: np.ndarray
    covariate_cov: np.ndarray
    ground_truth: np.ndarray
    label_noise: float = 0.0

    def second_moment(self) -> np.ndarray:
        mu = np.asarray(self.covariate_mean, dtype=float)
        S = np.asarray(self.covariate_cov, dtype=float)
        return np.outer(mu, mu) + S


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T


class RegressionSampler:
    """Draws (beta, y) with beta ~ N(mu_m, Sigma_m) and y = <x_m*, beta> + N(0, label_noise^2)."""

    def __init__(self, specs: Sequence[RegressionSpec], seed: int = 0):
        self.specs = tuple(specs)
        self.seed = seed
        self._roots = [_psd_sqrt(np.asarray(s.covariate_cov, dtype=float)) for s in self.specs]

    def sample(self, m: int, n: int, round_index: int = 0, step: int = 0) -> tuple[np.ndarray, np.ndarray]:
        spec = self.specs[m]
        rng = RngKey(self.seed, m, round_index, step).generator()
        d = len(spec.covariate_mean)
        betas = np.asarray(spec.covariate_mean, dtype=float) + rng.standard_normal((n, d)) @ self._roots[m]
        y = betas @ np.asarray(spec.ground_truth, dtype=float) + spec.label_noise * rng.standard_normal(n)
        return betas, y

    def gradients(self, m: int, x, n: int, round_index: int = 0, step: int = 0) -> np.ndarray:
        """(n, d) per-sample gradients of (1/2)(y - <x, beta>)^2 at x."""
        betas, y = self.sample(m, n, round_index, step)
        resid = betas @ np.asarray(x, dtype=float) - y
        return resid[:, None] * betas


def _validate_regression(specs: Sequence[RegressionSpec]) -> None:
    if not specs:
        raise InvalidInstanceError("need at least one machine spec")
    for i, s in enumerate(specs):
        S = np.asarray(s.covariate_cov, dtype=float)
        if not np.allclose(S, S.T, atol=1e-12):
            raise InvalidInstanceError(f"machine {i + 1}: covariance is not symmetric")
        if np.linalg.eigvalsh(S).min() < -1e-10 * max(1.0, np.abs(S).max()):
            raise InvalidInstanceError(f"machine {i + 1}: covariance is indefinite")
        if s.label_noise < 0:
            raise InvalidInstanceError(f"machine {i + 1}: label noise must be non-negative")


def make_linear_regression(specs: Sequence[RegressionSpec], seed: int = 0,
                           strongly_convex: bool = False) -> tuple[ProblemInstance, RegressionSampler]:
    """F_m(x) = (1/2)(x - x_m*)^T (mu_m mu_m^T + Sigma_m)(x - x_m*) + (1/2) label_noise^2."""
    _validate_regression(specs)
    hess = [s.second_moment() for s in specs]
    if strongly_convex:
        for i, h in enumerate(hess):
            if np.linalg.eigvalsh(h).min() <= 1e-12:
                raise InvalidInstanceError(f"machine {i + 1}: second moment is singular")
    optima = [np.asarray(s.ground_truth, dtype=float) for s in specs]
    offsets = [0.5 * s.label_noise ** 2 for s in specs]
    inst = ProblemInstance(_machines(hess, optima, offsets=offsets))
    return inst, RegressionSampler(specs, seed)


def regression_tau_bound(specs: Sequence[RegressionSpec]) -> tuple[np.ndarray, float, float]:
    """Pairwise (|mu_m| + |mu_n|)|mu_m - mu_n| + |Sigma_m - Sigma_n|, their max, and the measured tau."""
    _validate_regression(specs)
    M = len(specs)
    mus = [np.asarray(s.covariate_mean, dtype=float) for s in specs]
    covs = [np.asarray(s.covariate_cov, dtype=float) for s in specs]
    hess = [s.second_moment() for s in specs]
    bound = np.zeros((M, M))
    measured = 0.0
    for m in range(M):
        for n in range(m + 1, M):
            cov_gap = np.max(np.abs(np.linalg.eigvalsh(covs[m] - covs[n])))
            b = (np.linalg.norm(mus[m]) + np.linalg.norm(mus[n])) * np.linalg.norm(mus[m] - mus[n]) + cov_gap
            bound[m, n] = bound[n, m] = b
            measured = max(measured, float(np.max(np.abs(np.linalg.eigvalsh(hess[m] - hess[n])))))
    return bound, float(bound.max()), measured


# ---------------------------------------------------------------------------
# Name -> generator registry used by configs and the command line
# ---------------------------------------------------------------------------

def _regression_from_params(specs, seed: int = 0, strongly_convex: bool = False) -> ProblemInstance:
    parsed = [RegressionSpec(np.asarray(s["covariate_mean"], dtype=float), np.asarray(s["covariate_cov"], dtype=float),
                             np.asarray(s["ground_truth"], dtype=float), float(s.get("label_noise", 0.0)))
              for s in specs]
    return make_linear_regression(parsed, seed, strongly_convex)[0]


GENERATORS = {
    "motivating": lambda H=1.0, x_star=(1.0, 1.0): make_motivating_pair(H, x_star),
    "rank_one": lambda H=1.0, B=1.0, M=2, kappa=10.0: make_rank_one_pair(H, B, M, kappa)[0],
    "chain": lambda H=1.0, B=1.0, R=10, d=None, M=2: make_chain_instance(ChainSpec(H, B, R, d, M))[0],
    "gd_worst": lambda H=1.0, kappa=30.0, B=1.0, d=2: make_gd_worst_case(H, kappa, B, d),
    "random": make_random_instance,
    "regression": _regression_from_params,
}


def build_instance(name: str, params: dict | None = None) -> ProblemInstance:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise InvalidInstanceError(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}") from None
    try:
        return gen(**(params or {}))
    except TypeError as exc:
        raise InvalidInstanceError(f"generator {name!r}: {exc}") from exc

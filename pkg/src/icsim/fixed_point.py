"""Fixed point of noiseless local GD on quadratics and the bounds around it.

With ``C_m = I - (I - eta A_m)^K`` one round of local GD maps
``x -> x - (beta/M) sum_m C_m (x - x_m*)``, so the limit solves
``C x = (1/M) sum_m C_m x_m*`` with ``C`` the mean of the ``C_m``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algorithms import _local_round
from .errors import DivergenceError, DomainError, NotStronglyConvexError
from .heterogeneity import tau, zeta_star
from .oracle import NoiseSpec
from .quad_core import ZERO_EIGENVALUE, ProblemInstance, SymMatrix, global_optimum, matrix_function, mean_optimum


@dataclass(frozen=True)
class FixedPointReport:
    x_infinity: np.ndarray  # NaN-filled when the fixed point does not exist
    c_matrices: tuple  # (C_1, ..., C_M)
    c_average: SymMatrix
    exists: bool
    lambda_min_C: float
    kappa_prime: float
    eta: float
    K: int
    beta: Optional[float] = None
    residual: float = float("nan")


@dataclass(frozen=True)
class DiscrepancyReport:
    bound_xstar_xbar: float  # zeta* tau / (H mu)
    bound_xinf_xbar: float  # the above times eta mu K (1-eta mu)^{K-1} / (1 - (1-eta mu)^K)
    measured_xstar_xbar: float
    measured_xinf_xbar: float
    zeta_star: float
    tau: float

    @property
    def holds(self) -> bool:
        return (self.measured_xstar_xbar <= self.bound_xstar_xbar + 1e-9
                and self.measured_xinf_xbar <= self.bound_xinf_xbar + 1e-9)


def _k_step_gain(lam, eta: float, K: int):
    """1 - (1 - eta*lam)^K, computed without cancellation where 0 <= eta*lam < 1."""
    lam = np.asarray(lam, dtype=float)
    z = eta * lam
    out = np.empty_like(z)
    safe = (z >= 0) & (z < 1)
    out[safe] = -np.expm1(K * np.log1p(-z[safe]))
    out[~safe] = 1.0 - (1.0 - z[~safe]) ** K
    return out


def c_matrix(hessian: SymMatrix, eta: float, K: int) -> SymMatrix:
    return matrix_function(hessian, lambda lam: _k_step_gain(lam, eta, K))


def kappa_prime(instance: ProblemInstance, eta: float, K: int) -> float:
    """K-step condition number (1 - (1-eta H)^K) / (1 - (1-eta mu)^K) from the machine spectra."""
    num, den = _k_step_gain([instance.smoothness, instance.mu], eta, K)
    if den <= 0:
        return float("inf")
    return float(num / den)


def _check_steps(eta: float, K: int) -> None:
    if not eta > 0:
        raise DomainError("eta must be positive")
    if K < 1:
        raise DomainError("K must be at least 1")


def fixed_point(instance: ProblemInstance, eta: float, K: int, beta: float | None = None) -> FixedPointReport:
    """Closed-form limit of local GD; ``beta`` is only echoed, the limit does not depend on it."""
    _check_steps(eta, K)
    for m in instance.machines:
        if not m.strongly_convex:
            raise NotStronglyConvexError(f"machine {m.label} has a singular hessian; x_m* is not unique")
    Cs = tuple(c_matrix(m.hessian, eta, K) for m in instance.machines)
    C = SymMatrix(np.mean([c.entries for c in Cs], axis=0))
    lam_min = C.lambda_min
    kp = kappa_prime(instance, eta, K)
    if not lam_min > ZERO_EIGENVALUE:
        return FixedPointReport(np.full(instance.dim, np.nan), Cs, C, False, lam_min, kp, eta, K, beta)
    rhs = np.mean([c.entries @ m.optimum for c, m in zip(Cs, instance.machines)], axis=0)
    V = C.eigenvectors
    x_inf = V @ ((V.T @ rhs) / C.eigenvalues)
    res = float(np.linalg.norm(sum(c.entries @ (x_inf - m.optimum) for c, m in zip(Cs, instance.machines))))
    return FixedPointReport(x_inf, Cs, C, True, lam_min, kp, eta, K, beta, res)


def fixed_point_exists(instance: ProblemInstance, eta: float, K: int, beta: float) -> tuple[bool, float]:
    """Sufficient test: lambda_min(C) > 0 and spectral radius of I - beta C below 1."""
    _check_steps(eta, K)
    if not beta > 0:
        raise DomainError("beta must be positive")
    Cs = [c_matrix(m.hessian, eta, K).entries for m in instance.machines]
    lam = np.linalg.eigvalsh(np.mean(Cs, axis=0))
    radius = float(np.max(np.abs(1.0 - beta * lam)))
    return bool(np.min(lam) > ZERO_EIGENVALUE and radius < 1.0), radius


def discrepancy_factor(eta_mu: float, K: int) -> float:
    """eta mu K (1 - eta mu)^{K-1} / (1 - (1 - eta mu)^K); lies in (0, 1] for eta mu in (0, 1]."""
    if not 0 < eta_mu <= 1:
        raise DomainError(f"eta*mu must lie in (0, 1], got {eta_mu}")
    if eta_mu == 1:
        return 1.0 if K == 1 else 0.0
    num = eta_mu * K * np.exp((K - 1) * np.log1p(-eta_mu))
    return float(num / -np.expm1(K * np.log1p(-eta_mu)))


def discrepancy_bounds(instance: ProblemInstance, eta: float, K: int) -> DiscrepancyReport:
    """Bounds on |x* - xbar*| and |x_inf - xbar*| next to their measured values."""
    _check_steps(eta, K)
    if K <= 1:
        raise DomainError("the fixed-point discrepancy bound needs K > 1")
    H, mu = instance.smoothness, instance.mu
    if not mu > 0:
        raise NotStronglyConvexError("discrepancy bounds need mu > 0")
    if eta * H > 1:
        raise DomainError(f"discrepancy bounds assume eta <= 1/H (eta*H = {eta * H:.3g})")
    zs = zeta_star(instance).value
    t, _ = tau(instance)
    b1 = zs * t / (H * mu)
    b2 = b1 * discrepancy_factor(eta * mu, K)
    xbar = mean_optimum(instance)
    xinf = fixed_point(instance, eta, K).x_infinity
    return DiscrepancyReport(
        bound_xstar_xbar=b1,
        bound_xinf_xbar=b2,
        measured_xstar_xbar=float(np.linalg.norm(global_optimum(instance) - xbar)),
        measured_xinf_xbar=float(np.linalg.norm(xinf - xbar)),
        zeta_star=zs,
        tau=t,
    )


def contraction_predictor(instance: ProblemInstance, eta: float, beta: float, K: int, R: int) -> float:
    """Upper bound on |x_R - x_inf| for noiseless local GD started at ``instance.start``.

    beta = 1 gives (1-eta mu)^{KR} kappa' |x_0 - x_inf|; beta = 1/(c (1-(1-eta H)^K)) with
    c > 1 gives (1 - 1/(c kappa'))^R kappa' |x_0 - x_inf|. Other outer steps are declined.
    """
    _check_steps(eta, K)
    if R < 0:
        raise DomainError("R must be non-negative")
    H, mu = instance.smoothness, instance.mu
    if eta * H > 1:
        raise DomainError(f"the contraction bound assumes eta <= 1/H (eta*H = {eta * H:.3g})")
    rep = fixed_point(instance, eta, K)
    if not rep.exists:
        raise DomainError("fixed point does not exist for these step sizes")
    kp = rep.kappa_prime
    dist0 = float(np.linalg.norm(instance.start - rep.x_infinity))
    if beta == 1:
        return float(np.exp(K * R * np.log1p(-eta * mu))) * kp * dist0
    top = float(_k_step_gain([H], eta, K)[0])
    c = 1.0 / (beta * top)
    if not c > 1:
        raise DomainError(
            f"beta={beta} is neither 1 nor of the form 1/(c(1-(1-eta H)^K)) with c > 1 (c={c:.4g}); "
            "no contraction bound is available"
        )
    return (1.0 - 1.0 / (c * kp)) ** R * kp * dist0


def simplified_contraction_bound(instance: ProblemInstance, K: int, R: int) -> float:
    """B e^{-KR/kappa}, the eta = 1/(2H) form valid once K >= 1/(-log2(1 - 1/(2 kappa))).

    Order-level only: the exact rate is (1 - 1/(2 kappa))^{KR}, so this value is not a
    pointwise bound on the error. Use :func:`contraction_predictor` for that.
    """
    kappa = instance.kappa
    if K < 1.0 / -np.log2(1.0 - 1.0 / (2.0 * kappa)):
        raise DomainError("K is below the threshold where the simplified contraction bound applies")
    return instance.radius_b * float(np.exp(-K * R / kappa))


def simulate_fixed_point(instance: ProblemInstance, eta: float, K: int, beta: float = 1.0,
                         max_rounds: int = 10_000, tol: float = 1e-14) -> tuple[np.ndarray, int]:
    """Run noiseless local GD until successive server iterates agree to ``tol*(1+|x|)``.

    Returns ``(x, rounds_used)``. Independent of the closed form: it executes the
    actual local steps of the algorithm.
    """
    _check_steps(eta, K)
    x = instance.start.copy()
    noise = NoiseSpec()
    limit = 1e12 * (1.0 + instance.radius_b)
    for r in range(1, max_rounds + 1):
        nxt = _local_round(instance, x, eta, beta, K, noise, r, None, 0)
        if not np.all(np.isfinite(nxt)) or np.linalg.norm(nxt) > limit:
            raise DivergenceError(f"local GD diverged at round {r}", r)
        step = np.linalg.norm(nxt - x)
        x = nxt
        if step <= tol * (1.0 + np.linalg.norm(x)):
            return x, r
    return x, max_rounds


def fixed_point_to_dict(instance: ProblemInstance, report: FixedPointReport) -> dict:
    out = {
        "eta": report.eta,
        "K": report.K,
        "beta": report.beta,
        "exists": report.exists,
        "x_infinity": [float(v) for v in report.x_infinity] if report.exists else None,
        "lambda_min_C": report.lambda_min_C,
        "kappa_prime": report.kappa_prime,
        "stationarity_residual": report.residual if report.exists else None,
    }
    if report.exists:
        xstar = global_optimum(instance)
        out["dist_to_xstar"] = float(np.linalg.norm(report.x_infinity - xstar))
        if all(m.strongly_convex for m in instance.machines):
            out["dist_to_xbar"] = float(np.linalg.norm(report.x_infinity - mean_optimum(instance)))
        if report.K > 1 and report.eta * instance.smoothness <= 1:
            d = discrepancy_bounds(instance, report.eta, report.K)
            out["bounds"] = {"xstar_xbar": d.bound_xstar_xbar, "xinf_xbar": d.bound_xinf_xbar}
            out["measured"] = {"xstar_xbar": d.measured_xstar_xbar, "xinf_xbar": d.measured_xinf_xbar}
    return out


def fixed_point_json(instance: ProblemInstance, report: FixedPointReport) -> str:
    return json.dumps(fixed_point_to_dict(instance, report), indent=2, sort_keys=True)

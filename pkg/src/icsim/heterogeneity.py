"""Heterogeneity measurements for quadratic instances.

zeta*  : H times the RMS distance of machine optima from x*.
tau    : largest spectral-norm gap between two machine Hessians.
zeta(D): sup over the ball |x - x*| <= D of the RMS gradient dissimilarity.
rho    : normalized drift of the averaged iterate after K exact local steps from x*.
Q      : Lipschitz constant of the Hessian, identically 0 for quadratics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .oracle import RngKey
from .quad_core import ProblemInstance, global_optimum


@dataclass(frozen=True)
class ZetaStar:
    value: float  # H * sqrt(mean |x_m* - x*|^2)
    gradient_form: float  # sqrt(mean |grad F_m(x*)|^2)


@dataclass(frozen=True)
class ZetaBall:
    D: float
    empirical_sup: float
    analytic_bound: float
    exact_sup: float
    sampled_sup: float


@dataclass(frozen=True)
class RhoBounds:
    general: float  # zeta* ((1 + eta H)^{K-1} - 1)
    quadratic: float  # (1 - (1 - eta H)^K) / (eta K) * zeta* / H
    quadratic_printed: float  # same without the 1/H factor


@dataclass(frozen=True)
class HeterogeneityReport:
    zeta_star: float
    zeta_star_gradient: float
    tau: float
    pairwise_tau: np.ndarray
    zeta_ball: ZetaBall | None = None
    rho: tuple | None = None  # (eta, K, value)
    rho_bounds: RhoBounds | None = None
    q_lipschitz: float = 0.0

    def to_dict(self) -> dict:
        out = {
            "zeta_star": self.zeta_star,
            "zeta_star_gradient": self.zeta_star_gradient,
            "tau": self.tau,
            "pairwise_tau": self.pairwise_tau.tolist(),
            "q_lipschitz": self.q_lipschitz,
        }
        if self.zeta_ball is not None:
            zb = self.zeta_ball
            out["zeta_ball"] = {"D": zb.D, "empirical_sup": zb.empirical_sup, "analytic_bound": zb.analytic_bound}
        if self.rho is not None:
            out["rho"] = {"eta": self.rho[0], "K": self.rho[1], "value": self.rho[2]}
        if self.rho_bounds is not None:
            out["rho_bounds"] = {
                "general": self.rho_bounds.general,
                "quadratic": self.rho_bounds.quadratic,
                "quadratic_printed": self.rho_bounds.quadratic_printed,
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [("zeta_star", self.zeta_star), ("zeta_star (gradient form)", self.zeta_star_gradient),
                ("tau", self.tau), ("Q", self.q_lipschitz)]
        if self.zeta_ball is not None:
            rows += [(f"zeta(B(x*, {self.zeta_ball.D:g})) sup", self.zeta_ball.empirical_sup),
                     ("  bound zeta_star + tau*D", self.zeta_ball.analytic_bound)]
        if self.rho is not None:
            rows.append((f"rho (eta={self.rho[0]:g}, K={self.rho[1]})", self.rho[2]))
        if self.rho_bounds is not None:
            rows += [("  general bound", self.rho_bounds.general), ("  quadratic bound", self.rho_bounds.quadratic)]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value:.6g}" for name, value in rows)


def zeta_star(instance: ProblemInstance) -> ZetaStar:
    """Smallest zeta* with mean |x_m* - x*|^2 <= zeta*^2 / H^2, plus the gradient form at x*."""
    xstar = global_optimum(instance)
    optima = np.stack([m.optimum for m in instance.machines])
    rms = np.sqrt(np.mean(np.sum((optima - xstar) ** 2, axis=1)))
    grads = np.einsum("mij,j->mi", instance.hessian_stack, xstar) - instance.linear_stack
    grad_rms = np.sqrt(np.mean(np.sum(grads ** 2, axis=1)))
    return ZetaStar(float(instance.smoothness * rms), float(grad_rms))


def pairwise_tau(instance: ProblemInstance) -> np.ndarray:
    Hs = instance.hessian_stack
    M = instance.M
    out = np.zeros((M, M))
    for m in range(M):
        for n in range(m + 1, M):
            out[m, n] = out[n, m] = np.max(np.abs(np.linalg.eigvalsh(Hs[m] - Hs[n])))
    return out


def tau(instance: ProblemInstance) -> tuple[float, np.ndarray]:
    pw = pairwise_tau(instance)
    return float(pw.max()), pw


def _rms_dissimilarity(E: np.ndarray, g: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """RMS over machines of |E_m y + g_m| for each row y of Y."""
    diffs = np.einsum("mij,nj->nmi", E, Y) + g[None]
    return np.sqrt(np.mean(np.sum(diffs ** 2, axis=2), axis=1))


def _ball_quadratic_max(P: np.ndarray, q: np.ndarray, D: float) -> np.ndarray:
    """Maximizer of y^T P y + 2 q^T y over |y| = D for symmetric PSD P."""
    d = len(q)
    p, V = np.linalg.eigh(P)
    qt = V.T @ q
    pmax = p[-1]
    scale = max(1.0, abs(pmax))
    top = p >= pmax - 1e-12 * scale
    qnorm = np.linalg.norm(qt)
    if qnorm == 0:
        return D * V[:, -1]
    if np.linalg.norm(qt[top]) <= 1e-13 * qnorm:
        # Hard case: q has no weight on the top eigenspace.
        coef = np.zeros(d)
        coef[~top] = qt[~top] / (pmax - p[~top])
        rest = np.linalg.norm(coef)
        if rest <= D:
            coef[np.argmax(p)] += np.sqrt(D * D - rest * rest)
            return V @ coef

    gap = np.clip(pmax - p, 0.0, None)  # exact zeros on the top eigenspace, so gap + s > 0 for s > 0

    def phi(s):
        return np.sum((qt / (gap + s)) ** 2) - D * D

    hi = qnorm / D  # phi(hi) <= 0 since gap >= 0
    top_norm = np.linalg.norm(qt[top])
    lo = top_norm / D if top_norm > 0 else hi  # the top block alone gives phi(lo) >= 0
    while phi(lo) <= 0 and lo > 1e-300:
        lo *= 0.5
    if phi(lo) <= 0 or phi(hi) >= 0:
        s = lo if phi(lo) <= 0 else hi
    else:
        s = brentq(phi, lo, hi, xtol=1e-15 * max(hi, 1e-300), rtol=4 * np.finfo(float).eps, maxiter=500)
    y = V @ (qt / (gap + s))
    n = np.linalg.norm(y)
    return y * (D / n) if n > 0 else D * V[:, -1]


def zeta_ball(instance: ProblemInstance, D: float, n_samples: int = 10_000, seed: int = 0) -> ZetaBall:
    """Sup over |x - x*| <= D of sqrt(mean_m |grad F_m(x) - grad F(x)|^2), against zeta* + tau D.

    The sup is found exactly by maximizing the convex quadratic on the sphere
    (a trust-region secular equation), and cross-checked by uniform sampling of
    the ball plus the centre and top-eigenvector probes.
    """
    if not D >= 0:
        raise DomainError("D must be non-negative")
    xstar = global_optimum(instance)
    E = instance.hessian_stack - instance.average.entries[None]
    g = np.einsum("mij,j->mi", instance.hessian_stack, xstar) - instance.linear_stack
    zs = zeta_star(instance).value
    t, _ = tau(instance)
    bound = zs + t * D
    d = instance.dim

    probes = [np.zeros(d)]
    if D > 0:
        P = np.mean(np.einsum("mji,mjk->mik", E, E), axis=0)
        qv = np.mean(np.einsum("mji,mj->mi", E, g), axis=0)
        y_exact = _ball_quadratic_max(P, qv, D)
        probes.append(y_exact)
        for vec in np.linalg.eigh(P)[1].T[-2:]:
            probes += [D * vec, -D * vec]
    probe_vals = _rms_dissimilarity(E, g, np.stack(probes))
    exact = float(probe_vals.max())

    sampled = float(probe_vals[0])
    if D > 0 and n_samples > 0:
        rng = RngKey(seed, 0, 0, 0).generator()
        dirs = rng.standard_normal((n_samples, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = D * rng.random(n_samples) ** (1.0 / d)
        Y = dirs * radii[:, None]
        sampled = max(sampled, float(_rms_dissimilarity(E, g, Y).max()))
    return ZetaBall(float(D), max(exact, sampled), float(bound), exact, sampled)


def local_gd_from_optimum(instance: ProblemInstance, eta: float, K: int) -> np.ndarray:
    """(M, d) iterates after K exact local GD steps on every machine, all started at x*."""
    xstar = global_optimum(instance)
    X = np.tile(xstar, (instance.M, 1))
    for _ in range(K):
        X = X - eta * (np.einsum("mij,mj->mi", instance.hessian_stack, X) - instance.linear_stack)
    return X


def rho(instance: ProblemInstance, eta: float, K: int) -> float:
    """(1/(M eta K)) |sum_m (x* - xhat_K^m)| with xhat from K exact local steps started at x*."""
    if not eta > 0 or K < 1:
        raise DomainError("rho needs eta > 0 and K >= 1")
    xstar = global_optimum(instance)
    X = local_gd_from_optimum(instance, eta, K)
    return float(np.linalg.norm(np.sum(xstar - X, axis=0)) / (instance.M * eta * K))


def rho_bounds(instance: ProblemInstance, eta: float, K: int) -> RhoBounds:
    if not eta > 0 or K < 1:
        raise DomainError("rho bounds need eta > 0 and K >= 1")
    H = instance.smoothness
    zs = zeta_star(instance).value
    general = zs * float(np.expm1((K - 1) * np.log1p(eta * H)))
    gain = 1.0 - (1.0 - eta * H) ** K
    printed = gain / (eta * K) * zs
    return RhoBounds(general, printed / H, printed)


def heterogeneity_report(instance: ProblemInstance, eta: float | None = None, K: int | None = None,
                         D: float | None = None, n_samples: int = 10_000, seed: int = 0) -> HeterogeneityReport:
    zs = zeta_star(instance)
    t, pw = tau(instance)
    zb = zeta_ball(instance, D, n_samples, seed) if D is not None else None
    r = rb = None
    if eta is not None and K is not None:
        r = (float(eta), int(K), rho(instance, eta, K))
        rb = rho_bounds(instance, eta, K)
    return HeterogeneityReport(zs.value, zs.gradient_form, t, pw, zb, r, rb, 0.0)

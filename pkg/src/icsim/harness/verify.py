"""Self-verification suites: one check per acceptance criterion."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..algorithms import AlgorithmConfig, rounds_to_accuracy, run
from ..errors import ConfigError
from ..fixed_point import contraction_predictor, discrepancy_bounds, fixed_point, simulate_fixed_point
from ..heterogeneity import rho, rho_bounds, tau, zeta_ball, zeta_star
from ..instances import (ChainSpec, chain_toeplitz_eigenvalues, make_chain_instance, make_gd_worst_case,
                         make_motivating_pair, make_random_instance, make_rank_one_pair)
from ..oracle import NoiseSpec, RngKey, minibatch_gradient, noise_vector
from ..quad_core import ProblemInstance, global_optimum, make_instance
from ..theory_bounds import (BoundParams, closed_form_motivating, consensus_bound, eval_ai_lower_bound, eval_convex_upper_bound, eval_gd_lower_bound,
                             eval_lsgd_lower_bound, eval_sc_upper_bound, two_stage_rounds)
from .experiment import step_size_search, sweep_fixed_point
from .schedules import parse_schedule


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    measured: float
    expected: float
    tolerance: str
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.criterion:>2} {self.name}: measured={self.measured:.6g} "
                f"expected={self.expected:.6g} ({self.tolerance}) {self.detail} [{self.seconds:.2f}s]").rstrip()


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        return "\n".join(c.line() for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [
            {"criterion": c.criterion, "name": c.name, "status": "pass" if c.passed else "fail",
             "measured": c.measured, "expected": c.expected, "tolerance": c.tolerance, "detail": c.detail,
             "seconds": c.seconds} for c in self.checks]}


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

def suite_instance(seed: int) -> ProblemInstance:
    """Seeded strongly convex instance with M <= 8, d <= 10 and kappa in [1.5, 20]."""
    rng = RngKey(seed, 0xACCE, 0, 0).generator()
    M = int(rng.integers(1, 9))
    d = int(rng.integers(1, 11))
    H = float(rng.uniform(0.5, 5.0))
    kappa = float(rng.uniform(1.5, 20.0))
    cs = float(rng.uniform(0.0, 2.0))
    hs = float(rng.uniform(0.0, 1.0))
    return make_random_instance(M, d, H / kappa, H, cs, hs, seed)


def trend_instance(seed: int) -> ProblemInstance:
    """Member of the mu=1, H=6, M=5, d=2 family."""
    return make_random_instance(5, 2, 1.0, 6.0, 1.0, 1.0, seed)


def two_stage_instance(spread: float = 5e-5) -> ProblemInstance:
    """Four machines sharing an eigenbasis with spectra {1, 0.3+0.1m, 0.02}: kappa = 50 exactly."""
    rng = RngKey(12, 0, 0, 0).generator()
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    target = np.ones(3) / math.sqrt(3.0)
    hess, optima = [], []
    for m in range(4):
        hess.append((Q * np.array([1.0, 0.3 + 0.1 * m, 0.02])) @ Q.T)
        u = rng.standard_normal(3)
        optima.append(target + spread * u / np.linalg.norm(u))
    return make_instance(hess, optima)


def _leq(measured, bound, rel=1e-9):
    return measured <= bound + rel * (1.0 + abs(bound))


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

def check_fixed_point_simulation(n: int = 100) -> CheckResult:
    worst = 0.0
    for seed in range(n):
        inst = suite_instance(seed)
        K = (1, 2, 5, 10)[seed % 4]
        eta = 1.0 / (2.0 * inst.smoothness)
        xi = fixed_point(inst, eta, K).x_infinity
        xs, _ = simulate_fixed_point(inst, eta, K, max_rounds=10_000)
        worst = max(worst, np.linalg.norm(xs - xi) / (1.0 + np.linalg.norm(xi)))
    return CheckResult(1, "fixed point closed form vs simulation", worst <= 1e-6, worst, 1e-6,
                       "max |x_sim - x_inf| / (1+|x_inf|) <= 1e-6", f"{n} instances")


def check_k1_fixed_point(n: int = 100) -> CheckResult:
    worst = 0.0
    for seed in range(n):
        inst = suite_instance(seed)
        H, xstar = inst.smoothness, global_optimum(inst)
        for eta in (0.1 / H, 0.5 / H, 1.0 / H):
            err = np.linalg.norm(fixed_point(inst, eta, 1).x_infinity - xstar) / (1.0 + np.linalg.norm(xstar))
            worst = max(worst, err)
    return CheckResult(2, "K=1 fixed point equals x*", worst <= 1e-10, worst, 1e-10,
                       "max |x_inf - x*| / (1+|x*|) <= 1e-10", f"{n} instances x 3 step sizes")


def check_motivating_closed_form() -> CheckResult:
    H, xstar = 2.0, np.array([1.0, -0.5])
    inst = make_motivating_pair(H, xstar)
    worst = 0.0
    for eta in np.array([0.1, 0.3, 0.5, 0.8, 1.0]) / H:
        for beta in (0.25, 0.5, 1.0, 1.5, 2.0):
            for K in (1, 2, 4, 16, 32):
                for R in (1, 2, 5, 16, 32):
                    traj = run(inst, AlgorithmConfig("local_sgd", K=K, R=R, eta=eta, beta=beta))
                    ref = closed_form_motivating(H, eta, beta, K, R, xstar)
                    worst = max(worst, float(np.max(np.abs(traj.final - ref))))
    one = run(inst, AlgorithmConfig("local_sgd", K=1000, R=1, eta=1.0 / (2 * H), beta=2.0))
    single = np.linalg.norm(one.final - xstar) / np.linalg.norm(xstar)
    ok = worst <= 1e-12 and single <= 1e-6
    return CheckResult(3, "motivating pair closed form", ok, worst, 1e-12, "max coordinate error <= 1e-12",
                       f"625 grid points; one-round beta=2 rel. error {single:.2e} (<= 1e-6)")


def check_discrepancy_bounds(n: int = 1000) -> CheckResult:
    violations, worst = 0, -math.inf
    for seed in range(n):
        inst = suite_instance(seed)
        K = 2 + seed % 49
        rep = discrepancy_bounds(inst, 1.0 / (2.0 * inst.smoothness), K)
        for meas, bound in ((rep.measured_xstar_xbar, rep.bound_xstar_xbar),
                            (rep.measured_xinf_xbar, rep.bound_xinf_xbar)):
            worst = max(worst, meas - bound)
            if not _leq(meas, bound):
                violations += 1
    return CheckResult(4, "fixed-point discrepancy inequalities", violations == 0, violations, 0,
                       "violations at 1e-9 slack", f"{n} instances; max(measured - bound) = {worst:.3g}")


def check_contraction(n: int = 200) -> CheckResult:
    violations, worst_ratio = 0, 0.0
    for seed in range(n):
        inst = suite_instance(seed)
        K = (2, 5, 10, 20)[seed % 4]
        R = 1 + (seed * 37) % 100
        eta = 1.0 / (2.0 * inst.smoothness)
        traj = run(inst, AlgorithmConfig("local_sgd", K=K, R=R, eta=eta, beta=1.0))
        xstar = global_optimum(inst)
        rep = discrepancy_bounds(inst, eta, K)
        rhs = contraction_predictor(inst, eta, 1.0, K, R) + rep.bound_xinf_xbar + rep.measured_xstar_xbar
        lhs = float(np.linalg.norm(traj.final - xstar))
        if rhs > 1e-12:  # below this both sides are roundoff
            worst_ratio = max(worst_ratio, lhs / rhs)
        if not _leq(lhs, rhs):
            violations += 1
    return CheckResult(5, "local GD contraction to the fixed point", violations == 0, violations, 0,
                       "violations", f"{n} instances; max |x_R - x*| / bound = {worst_ratio:.3g} (bounds above 1e-12)")


def check_rank_one_floor(R: int = 20) -> CheckResult:
    H, B = 1.0, 1.0
    inst, _ = make_rank_one_pair(H, B, 2, 3.0 * R)
    etas = np.logspace(-4, math.log10(2.0), 50) / H
    betas = np.logspace(-2, 2, 50)
    floors = [step_size_search(inst, "local_sgd", etas, betas, R, K).best for K in (1, 10, 100, 1000)]
    threshold = 1e-3 * H * B ** 2 / R
    spread = max(floors) / min(floors)
    ok = min(floors) >= threshold and spread <= 2.0
    return CheckResult(6, "rank-one pair lower-bound floor", ok, min(floors), threshold,
                       "best suboptimality >= 1e-3 HB^2/R; floors within x2",
                       "floors K=1,10,100,1000: " + ", ".join(f"{f:.4g}" for f in floors))


def check_gd_floor(kappa: float = 30.0) -> CheckResult:
    H, B = 1.0, 1.0
    R = int(kappa)
    inst = make_gd_worst_case(H, kappa, B)
    res = step_size_search(inst, "minibatch_sgd", np.logspace(-4, math.log10(3.0), 50) / H, None, R)
    bound = eval_gd_lower_bound(H, B, kappa, R)
    return CheckResult(7, "GD condition-number floor", res.best >= bound, res.best, bound,
                       "best-over-step suboptimality >= HB^2/(4 kappa) e^{-12R/kappa}", f"best gamma={res.eta:.4g}")


def check_chain() -> CheckResult:
    errs = []
    for d in (1, 2, 3, 50, 256):
        q = 0.9
        T = np.diag(np.full(d, 1 + q * q)) - q * (np.eye(d, k=1) + np.eye(d, k=-1))
        errs.append(np.max(np.abs(np.sort(np.linalg.eigvalsh(T)) - np.sort(chain_toeplitz_eigenvalues(1.0, q, d)))))
    for R in (2, 5, 10, 20):
        spec = ChainSpec(1.0, 1.0, R)
        inst, _ = make_chain_instance(spec)
        errs.append(np.max(np.abs(np.sort(inst.average.eigenvalues)
                                  - np.sort(chain_toeplitz_eigenvalues(spec.H, spec.q, spec.dim)))))
    eig_err = float(max(errs))

    spec = ChainSpec(1.0, 1.0, 10)
    inst, _ = make_chain_instance(spec)
    leaks = 0
    for K in (1, 5, 50):
        for eta in (0.1 / inst.smoothness, 0.25 / inst.smoothness):
            traj = run(inst, AlgorithmConfig("local_sgd", K=K, R=10, eta=eta, beta=1.0))
            for r, x in enumerate(traj.iterates):
                first_zero = math.floor(spec.t + r)  # 0-based position of 1-based index floor(t+r)+1
                leaks += int(np.count_nonzero(x[first_zero:]))
    threshold = 1e-3 * inst.smoothness * spec.B ** 2 / spec.R ** 2
    etas = np.logspace(-3, math.log10(2.0 / inst.smoothness), 25)
    betas = np.logspace(-1, 1, 25)
    floor = min(step_size_search(inst, "local_sgd", etas, betas, 10, K).best for K in (1, 10, 100))
    ok = eig_err <= 1e-9 and leaks == 0 and floor >= threshold
    return CheckResult(8, "tridiagonal chain", ok, floor, threshold, "tuned suboptimality >= 1e-3 H B^2/R^2",
                       f"eigenvalue error {eig_err:.2e} (<= 1e-9); nonzero coordinates past t+r: {leaks}")


def check_oracle(n_draws: int = 100_000, n_reps: int = 10_000) -> CheckResult:
    sigma, d = 1.0, 2
    noise = NoiseSpec(sigma, seed=9)
    draws = np.stack([noise_vector(noise, RngKey(9, 0, r, 0), d) for r in range(n_draws)])
    ratio1 = float(np.mean(np.sum(draws ** 2, axis=1)) / sigma ** 2)
    M, K = 4, 8
    inst = make_random_instance(M, d, 1.0, 2.0, 1.0, 0.5, seed=9, sigma=sigma)
    x = np.array([0.3, -0.7])
    exact = inst.gradient(x)
    devs = np.stack([minibatch_gradient(inst, x, K, noise, r) - exact for r in range(n_reps)])
    ratio2 = float(np.mean(np.sum(devs ** 2, axis=1)) / (sigma ** 2 / (M * K)))
    ok = abs(ratio1 - 1) <= 0.02 and abs(ratio2 - 1) <= 0.05
    return CheckResult(9, "oracle noise statistics", ok, ratio1, 1.0, "E|xi|^2/sigma^2 within 2%",
                       f"mini-batch variance ratio {ratio2:.4f} (within 5%)")


def check_heterogeneity(n: int = 100) -> CheckResult:
    violations = 0
    for seed in range(n):
        inst = suite_instance(seed)
        H = inst.smoothness
        for eta in (0.1 / H, 0.5 / H, 1.0 / H):
            for K in (1, 2, 8, 64):
                r = rho(inst, eta, K)
                b = rho_bounds(inst, eta, K)
                violations += int(not _leq(r, b.general)) + int(not _leq(r, b.quadratic))
        B = inst.radius_b
        for D in (0.5 * B, B, 2.0 * B):
            zb = zeta_ball(inst, D, n_samples=2000, seed=seed)
            violations += int(not _leq(zb.empirical_sup, zb.analytic_bound))
    inst = suite_instance(0)
    H = inst.smoothness
    trend = [rho_bounds(inst, 1.0 / (2.0 * H * math.sqrt(K)), K).quadratic for K in (10, 100, 1000, 10_000)]
    decreasing = all(b < a for a, b in zip(trend, trend[1:])) and trend[-1] <= 0.1 * trend[0]
    ok = violations == 0 and decreasing
    return CheckResult(10, "heterogeneity inequalities", ok, violations, 0, "violations",
                       "rho bound trend K=10..1e4: " + ", ".join(f"{v:.3g}" for v in trend))


def check_trends(seeds=range(10)) -> CheckResult:
    K_grid = [2, 5, 10, 25, 50, 100]
    schedules = {"A": parse_schedule("1/(2*H)"), "B": parse_schedule("1/(H*K^2)")}
    bad = 0
    for seed in seeds:
        rows, _ = sweep_fixed_point(trend_instance(seed), schedules, K_grid)
        a = [r["dist_to_xbar"] for r in rows if r["eta_schedule"] == "A"]
        b = [r["dist_to_xstar"] for r in rows if r["eta_schedule"] == "B"]
        bad += int(any(y > x + 1e-10 for x, y in zip(a, a[1:])))
        bad += int(any(y > x + 1e-10 for x, y in zip(b, b[1:])))
    return CheckResult(11, "fixed-point trends in K", bad == 0, bad, 0, "non-monotone sequences",
                       f"{len(list(seeds))} instances, trends A and B")


def check_two_stage() -> CheckResult:
    inst = two_stage_instance()
    K, eps = 64, 1e-6
    zs, t = zeta_star(inst).value, tau(inst)[0]
    H, mu, B = inst.smoothness, inst.mu, inst.radius_b
    floor = zs * t / (H * mu)
    pred = two_stage_rounds(inst.kappa, K, zs, t, H, mu, B, eps)
    R = 3 * pred.total
    ts = rounds_to_accuracy(run(inst, AlgorithmConfig("two_stage", K=K, R=R)), eps)
    gd = rounds_to_accuracy(run(inst, AlgorithmConfig("minibatch_sgd", K=K, R=R)), eps)
    ok = (floor <= 1e-3 * B and abs(inst.kappa - 50) < 1e-9 and ts is not None and gd is not None
          and ts <= gd and ts <= 1.5 * pred.total)
    return CheckResult(12, "two-stage advantage", ok, -1 if ts is None else ts, pred.total,
                       "rounds <= GD rounds and <= 1.5x prediction",
                       f"GD rounds {gd}; R1={pred.R1}, R2={pred.R2}; zeta*tau/(H mu)={floor:.3g}")


def _close(a, b, rel=1e-12):
    return abs(a - b) <= rel * max(1.0, abs(b))


def check_bounds() -> CheckResult:
    failures = []
    sc = eval_sc_upper_bound(BoundParams(H=1, B=1, mu=0.1, sigma=1, tau=0.5, zeta=1, Q=0, M=4, K=8, R=16))
    expect = {"optimization": math.exp(-12.8), "noise": 0.01953125, "tau_sigma": 0.1220703125,
              "tau_zeta_consensus": 0.9765625, "Q_sigma": 0.0, "Q_zeta_consensus": 0.0}
    failures += [f"sc:{k}" for k, v in expect.items() if not _close(sc.terms[k], v)]
    lo = eval_lsgd_lower_bound(BoundParams(H=1, B=1, sigma=1, zeta_star=1, M=2, K=4, R=8))
    expect = {"optimization": 0.125, "noise_local": 1 / (4 ** (1 / 3) * 4), "noise_minibatch": 0.125,
              "heterogeneity": 0.25}
    failures += [f"lsgd:{k}" for k, v in expect.items() if not _close(lo.terms[k], v)]
    ai = eval_ai_lower_bound(BoundParams(H=1, B=1, sigma=1, M=4, K=4, R=10))
    failures += [] if _close(ai.value, 0.01 + 1 / math.sqrt(160)) else ["ai"]
    failures += [] if _close(eval_gd_lower_bound(2, 1, 10, 5), 0.05 * math.exp(-6)) else ["gd"]
    cv = eval_convex_upper_bound(BoundParams(H=1, B=1, sigma=1, tau=1, zeta=1, zeta_star=0.25, D=1, M=1, K=16, R=4))
    expect = {"optimization": 1 / 64, "noise": 0.125, "tau_sigma": 0.25, "Q_sigma": 0.0, "heterogeneity_min": 0.5}
    failures += [f"convex:{k}" for k, v in expect.items() if not _close(cv.terms[k], v)]
    failures += [] if cv.branch == "zeta" else ["convex:branch"]
    failures += [] if _close(consensus_bound(1, 0.1, 4, 2), 3.96) else ["consensus"]
    ts = two_stage_rounds(10, 16, 0.1, 0.1, 1, 0.1, 1, 1e-4)
    if (ts.R1, ts.R2, ts.total, ts.printed_formula_total) != (2, 70, 72, 71):
        failures.append("two_stage")
    if not np.allclose(closed_form_motivating(1, 1, 1, 1, 3, [1.0, 2.0]), [0.875, 1.75], rtol=0, atol=1e-15):
        failures.append("closed_form")

    # branch switch of the convex bound's inner minimum, Q = 0: sqrt(zeta) = sqrt(zeta*) + sqrt(tau D)
    zeta, zs, t = 1.0, 0.25, 1.0
    cross = (math.sqrt(zeta) - math.sqrt(zs)) ** 2 / t
    for D, want in ((0.9 * cross, "zeta_star_tau_D"), (1.1 * cross, "zeta")):
        rep = eval_convex_upper_bound(BoundParams(tau=t, zeta=zeta, zeta_star=zs, D=D))
        if rep.branch != want:
            failures.append(f"convex crossover at D={D:.3g}")

    base = dict(H=1.0, B=1.0, mu=0.1, sigma=1.0, tau=0.5, zeta=1.0, zeta_star=0.5, Q=0.3, D=1.0)
    evals = (eval_sc_upper_bound, eval_convex_upper_bound, eval_lsgd_lower_bound, eval_ai_lower_bound)
    grid = (1, 2, 4, 8, 16, 32, 64)
    for fn in evals:
        for axis in ("R", "K", "M"):
            vals = [fn(BoundParams(**base, **{"M": 4, "K": 8, "R": 16, axis: v})).value for v in grid]
            if any(b > a * (1 + 1e-12) for a, b in zip(vals, vals[1:])):
                failures.append(f"{fn.__name__}:{axis}")
    gd_vals = [eval_gd_lower_bound(1, 1, 10, R) for R in grid]
    if any(b > a for a, b in zip(gd_vals, gd_vals[1:])):
        failures.append("gd:R")
    return CheckResult(13, "bound evaluators", not failures, len(failures), 0, "failed spot/monotonicity checks",
                       ", ".join(failures))


CRITERIA: dict[int, tuple[str, Callable[[], CheckResult]]] = {
    1: ("fixed_point_simulation", check_fixed_point_simulation),
    2: ("k1_fixed_point", check_k1_fixed_point),
    3: ("motivating", check_motivating_closed_form),
    4: ("discrepancy", check_discrepancy_bounds),
    5: ("contraction", check_contraction),
    6: ("rank_one_floor", check_rank_one_floor),
    7: ("gd_floor", check_gd_floor),
    8: ("chain", check_chain),
    9: ("oracle", check_oracle),
    10: ("heterogeneity", check_heterogeneity),
    11: ("trends", check_trends),
    12: ("two_stage", check_two_stage),
    13: ("bounds", check_bounds),
}
SUITES = {
    "all": list(CRITERIA),
    "fixed_point": [1, 2, 4, 5],
    "bounds_monotonicity": [13],
    "lower_bounds": [6, 7, 8],
    **{name: [k] for k, (name, _) in CRITERIA.items()},
    **{str(k): [k] for k in CRITERIA},
}


def run_check(criterion: int) -> CheckResult:
    _, fn = CRITERIA[criterion]
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = fn()
    res.seconds = time.perf_counter() - start
    return res


def verify(selector: str = "all") -> VerifyReport:
    if selector not in SUITES:
        raise ConfigError(f"unknown suite {selector!r}; choose from {', '.join(sorted(SUITES))}")
    return VerifyReport([run_check(k) for k in SUITES[selector]])

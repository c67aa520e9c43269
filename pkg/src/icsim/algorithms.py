"""Optimizers run under intermittent communication: M machines, K local steps, R rounds.

All procedures share the same server reduction: every machine reports a
displacement from the round's starting point and the server moves by ``beta``
times their ordered mean. Mini-batch methods report ``-gamma * g_m`` where
``g_m`` is machine m's K-sample mean gradient, so local SGD with ``K=1, beta=1``
and mini-batch SGD with ``gamma=eta`` execute the same floating-point operations.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError
from .oracle import NoiseSpec, machine_noise
from .quad_core import ProblemInstance, fingerprint, global_optimum

ALGORITHMS = (
    "local_sgd",
    "minibatch_sgd",
    "accelerated_minibatch_sgd",
    "single_machine_sgd",
    "two_stage",
)
DIVERGENCE_FACTOR = 1e12


@dataclass(frozen=True)
class AlgorithmConfig:
    """Step sizes left as ``None`` resolve per instance: eta=1/(2H), gamma=1/H."""

    algorithm: str = "local_sgd"
    K: int = 1
    R: int = 1
    eta: Optional[float] = None
    beta: float = 1.0
    gamma: Optional[float] = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    record_local: bool = False
    stage_switch: Optional[int] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.K < 0 or self.R < 0:
            raise ConfigError("K and R must be non-negative")
        for name in ("eta", "gamma"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if self.stage_switch is not None:
            if self.stage_switch < 0:
                raise ConfigError("stage_switch must be non-negative")
            if self.stage_switch > self.R:
                raise ConfigError(f"stage_switch R1={self.stage_switch} exceeds R={self.R}")

    def resolved(self, instance: ProblemInstance) -> "AlgorithmConfig":
        H = instance.smoothness
        cfg = replace(
            self,
            eta=self.eta if self.eta is not None else 1.0 / (2.0 * H),
            gamma=self.gamma if self.gamma is not None else 1.0 / H,
        )
        if cfg.eta * H >= 2 or cfg.gamma * H >= 2:
            warnings.warn(f"step size times H is >= 2 (eta*H={cfg.eta * H:.3g}); iterates may diverge",
                          RuntimeWarning, stacklevel=3)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = self.noise.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "AlgorithmConfig":
        data = dict(data)
        noise = NoiseSpec.from_dict(data.pop("noise", {}) or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown algorithm config keys: {sorted(unknown)}")
        return cls(noise=noise, **data)


@dataclass
class Trajectory:
    algorithm: str
    iterates: np.ndarray  # (R+1, d), row r is the server iterate after round r
    suboptimality: np.ndarray  # (R+1,)
    distance: np.ndarray  # (R+1,) distance to x*
    config: dict
    instance_fingerprint: str
    locals: Optional[np.ndarray] = None  # (R, K+1, M, d)
    consensus: Optional[np.ndarray] = None  # (R, K+1): Xi at every local step
    switch_round: Optional[int] = None

    @property
    def R(self) -> int:
        return len(self.iterates) - 1

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


def _machine_gradients(instance: ProblemInstance, pts: np.ndarray) -> np.ndarray:
    return np.einsum("mij,mj->mi", instance.hessian_stack, pts) - instance.linear_stack


def _server_step(x: np.ndarray, displacements: np.ndarray, beta: float) -> np.ndarray:
    return x + beta * (displacements.sum(axis=0) / displacements.shape[0])


def _check(x: np.ndarray, r: int, limit: float) -> None:
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > limit:
        raise DivergenceError(f"iterate diverged at round {r}", r)


def _limit(instance: ProblemInstance) -> float:
    return DIVERGENCE_FACTOR * (1.0 + instance.radius_b + float(np.linalg.norm(instance.start)))


class _Recorder:
    def __init__(self, instance: ProblemInstance, R: int, K: int, record_local: bool, consensus: bool):
        self.iterates = [instance.start.copy()]
        self.locals = np.zeros((R, K + 1, instance.M, instance.dim)) if record_local else None
        self.consensus = np.zeros((R, K + 1)) if consensus else None


def _local_round(instance, x, eta, beta, K, noise, r, rec: _Recorder | None, slot: int):
    M, d = instance.M, instance.dim
    disp = np.zeros((M, d))
    for k in range(K):
        pts = x + disp
        if rec is not None:
            if rec.locals is not None:
                rec.locals[slot, k] = pts
            if rec.consensus is not None:
                rec.consensus[slot, k] = consensus_error(pts)
        g = _machine_gradients(instance, pts)
        if noise.sigma:
            g = g + machine_noise(noise, M, d, r, k)
        disp = disp - eta * g
    if rec is not None:
        pts = x + disp
        if rec.locals is not None:
            rec.locals[slot, K] = pts
        if rec.consensus is not None:
            rec.consensus[slot, K] = consensus_error(pts)
    return _server_step(x, disp, beta)


def _minibatch_displacements(instance, y, gamma, K, noise, r):
    M, d = instance.M, instance.dim
    pts = np.broadcast_to(y, (M, d)) + np.zeros((M, d))
    g = _machine_gradients(instance, pts)
    if noise.sigma:
        acc = np.zeros((M, d))
        for k in range(max(K, 1)):
            acc = acc + machine_noise(noise, M, d, r, k)
        g = g + acc / max(K, 1)
    return np.zeros((M, d)) - gamma * g


def _finish(instance, cfg: AlgorithmConfig, algorithm: str, iterates, rec: _Recorder | None = None,
            switch_round=None) -> Trajectory:
    X = np.array(iterates)
    xstar = global_optimum(instance)
    return Trajectory(
        algorithm=algorithm,
        iterates=X,
        suboptimality=np.asarray(instance.suboptimality(X)),
        distance=np.linalg.norm(X - xstar, axis=1),
        config=cfg.to_dict(),
        instance_fingerprint=fingerprint(instance),
        locals=None if rec is None else rec.locals,
        consensus=None if rec is None else rec.consensus,
        switch_round=switch_round,
    )


def _expect(cfg: AlgorithmConfig, name: str) -> None:
    if cfg.algorithm != name:
        raise ConfigError(f"config is for {cfg.algorithm!r}, not {name!r}")


def run_local_sgd(instance: ProblemInstance, config: AlgorithmConfig) -> Trajectory:
    """Each round: K local steps per machine from x_{r-1}, then x_r = x_{r-1} + beta * mean displacement."""
    _expect(config, "local_sgd")
    cfg = config.resolved(instance)
    rec = _Recorder(instance, cfg.R, cfg.K, cfg.record_local, consensus=True)
    x, limit = instance.start.copy(), _limit(instance)
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(1, cfg.R + 1):
            x = _local_round(instance, x, cfg.eta, cfg.beta, cfg.K, cfg.noise, r, rec, r - 1)
            _check(x, r, limit)
            rec.iterates.append(x)
    return _finish(instance, cfg, "local_sgd", rec.iterates, rec)


def run_minibatch_sgd(instance: ProblemInstance, config: AlgorithmConfig) -> Trajectory:
    """x_r = x_{r-1} - gamma * (mean of M*K stochastic gradients at x_{r-1})."""
    _expect(config, "minibatch_sgd")
    cfg = config.resolved(instance)
    x, limit, its = instance.start.copy(), _limit(instance), [instance.start.copy()]
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(1, cfg.R + 1):
            x = _server_step(x, _minibatch_displacements(instance, x, cfg.gamma, cfg.K, cfg.noise, r), 1.0)
            _check(x, r, limit)
            its.append(x)
    return _finish(instance, cfg, "minibatch_sgd", its)


def run_accelerated_minibatch_sgd(instance: ProblemInstance, config: AlgorithmConfig) -> Trajectory:
    """Two-sequence Nesterov scheme: y_r = x_r + (r-1)/(r+2) (x_r - x_{r-1}), x_{r+1} = y_r - gamma g(y_r)."""
    _expect(config, "accelerated_minibatch_sgd")
    cfg = config.resolved(instance)
    x = instance.start.copy()
    x_prev = x.copy()
    limit, its = _limit(instance), [x.copy()]
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(1, cfg.R + 1):
            y = x + ((r - 1) / (r + 2)) * (x - x_prev)
            x_prev, x = x, _server_step(y, _minibatch_displacements(instance, y, cfg.gamma, cfg.K, cfg.noise, r), 1.0)
            _check(x, r, limit)
            its.append(x)
    return _finish(instance, cfg, "accelerated_minibatch_sgd", its)


def run_single_machine_sgd(instance: ProblemInstance, config: AlgorithmConfig) -> Trajectory:
    """K*R SGD steps on machine 1 alone; suboptimality is still measured on the average F."""
    _expect(config, "single_machine_sgd")
    cfg = config.resolved(instance)
    machine = instance.machines[0]
    H, b = machine.hessian.entries, machine.linear
    x, limit, its = instance.start.copy(), _limit(instance), [instance.start.copy()]
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(1, cfg.R + 1):
            for k in range(cfg.K):
                g = H @ x - b
                if cfg.noise.sigma:
                    g = g + machine_noise(cfg.noise, 1, instance.dim, r, k)[0]
                x = x - cfg.eta * g
            _check(x, r, limit)
            its.append(x)
    return _finish(instance, cfg, "single_machine_sgd", its)


def auto_stage_switch(instance: ProblemInstance, K: int) -> int:
    """Crossover round count R1 from the measured heterogeneity of the instance."""
    from .heterogeneity import tau, zeta_star
    from .theory_bounds import two_stage_rounds

    zs = zeta_star(instance).value
    t, _ = tau(instance)
    if zs * t == 0:
        return -1
    res = two_stage_rounds(instance.kappa, K, zs, t, instance.smoothness, instance.mu, instance.radius_b, 1.0)
    return res.R1


def run_two_stage(instance: ProblemInstance, config: AlgorithmConfig) -> Trajectory:
    """Local SGD for rounds 1..R1, then mini-batch SGD for rounds R1+1..R."""
    _expect(config, "two_stage")
    cfg = config.resolved(instance)
    R1 = cfg.stage_switch
    if R1 is None:
        R1 = auto_stage_switch(instance, cfg.K)
        R1 = cfg.R if R1 < 0 else min(R1, cfg.R)
    rec = _Recorder(instance, cfg.R, cfg.K, cfg.record_local, consensus=False)
    x, limit = instance.start.copy(), _limit(instance)
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(1, cfg.R + 1):
            if r <= R1:
                x = _local_round(instance, x, cfg.eta, cfg.beta, cfg.K, cfg.noise, r, rec, r - 1)
            else:
                x = _server_step(x, _minibatch_displacements(instance, x, cfg.gamma, cfg.K, cfg.noise, r), 1.0)
            _check(x, r, limit)
            rec.iterates.append(x)
    cfg = replace(cfg, stage_switch=R1)
    return _finish(instance, cfg, "two_stage", rec.iterates, rec if cfg.record_local else None, switch_round=R1)


_RUNNERS = {
    "local_sgd": run_local_sgd,
    "minibatch_sgd": run_minibatch_sgd,
    "accelerated_minibatch_sgd": run_accelerated_minibatch_sgd,
    "single_machine_sgd": run_single_machine_sgd,
    "two_stage": run_two_stage,
}


def run(instance: ProblemInstance, config: AlgorithmConfig) -> Trajectory:
    return _RUNNERS[config.algorithm](instance, config)


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------

def consensus_error(local_iterates) -> float:
    """Xi = (1/M) sum_m |x^m - mean|^2 for an (M, d) array of machine iterates."""
    X = np.asarray(local_iterates, dtype=float)
    return float(np.mean(np.sum((X - X.mean(axis=0)) ** 2, axis=1)))


def weighted_average_iterate(traj: Trajectory, mu: float, eta: float) -> np.ndarray:
    """Weights w_t = (1 - mu*eta/2)^{-(t+1)} over local iterates x_{r,k}^m, k in [0, K-1]."""
    if traj.locals is None:
        raise ConfigError("trajectory has no recorded local iterates (set record_local=True)")
    if mu < 0:
        raise DomainError("mu must be non-negative")
    c = mu * eta / 2.0
    if c >= 1:
        raise DomainError(f"mu*eta/2 = {c:.3g} >= 1: weights (1 - mu*eta/2)^-(t+1) are undefined")
    R, K1, M, d = traj.locals.shape
    K = K1 - 1
    if R * K == 0:
        raise ConfigError("no local iterates to average")
    pts = traj.locals[:, :K].reshape(R * K, M, d)
    t = np.arange(R * K)
    logw = -(t + 1) * np.log1p(-c)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return np.einsum("t,tmd->d", w, pts) / M


def rounds_to_accuracy(traj: Trajectory, epsilon: float) -> Optional[int]:
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    hits = np.nonzero(traj.suboptimality <= epsilon)[0]
    return int(hits[0]) if hits.size else None


def trajectory_csv(traj: Trajectory, fixed_point: np.ndarray | None = None) -> str:
    """CSV text: round, suboptimality, distance_to_opt[, distance_to_fixed_point][, consensus]."""
    header = ["round", "suboptimality", "distance_to_opt"]
    if fixed_point is not None:
        header.append("distance_to_fixed_point")
        dfp = np.linalg.norm(traj.iterates - np.asarray(fixed_point), axis=1)
    if traj.consensus is not None:
        header.append("consensus")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in range(traj.R + 1):
        row = [str(r), f"{traj.suboptimality[r]:.17g}", f"{traj.distance[r]:.17g}"]
        if fixed_point is not None:
            row.append(f"{dfp[r]:.17g}")
        if traj.consensus is not None:
            row.append("" if r == 0 else f"{traj.consensus[r - 1, -1]:.17g}")
        w.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Vectorized noiseless local GD over a batch of (eta, beta) pairs
# ---------------------------------------------------------------------------

def local_gd_batch(instance: ProblemInstance, etas, betas, K: int, R: int, start=None):
    """Run noiseless local GD for many (eta, beta) pairs at once.

    Returns ``(final_iterates (G, d), diverged (G,) bool)``. Diverged rows are
    zeroed after detection so the rest of the batch stays finite.
    """
    etas = np.asarray(etas, dtype=float)
    betas = np.broadcast_to(np.asarray(betas, dtype=float), etas.shape)
    G, M, d = etas.size, instance.M, instance.dim
    x0 = instance.start if start is None else np.asarray(start, dtype=float)
    X = np.tile(x0, (G, 1))
    Hs, Ls = instance.hessian_stack, instance.linear_stack[:, None, :]
    limit = _limit(instance)
    diverged = np.zeros(G, dtype=bool)
    e = etas[None, :, None]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(R):
            disp = np.zeros((M, G, d))
            for _ in range(K):
                pts = X[None, :, :] + disp
                disp = disp - e * (np.matmul(pts, Hs) - Ls)
            X = X + betas[:, None] * (disp.sum(axis=0) / M)
            bad = ~np.all(np.isfinite(X), axis=1) | (np.linalg.norm(X, axis=1) > limit)
            if bad.any():
                diverged |= bad
                X[bad] = 0.0
    return X, diverged

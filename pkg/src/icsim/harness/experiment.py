"""Experiment configs, sweep execution and deterministic CSV/JSON output."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..algorithms import AlgorithmConfig, local_gd_batch, run, trajectory_csv
from ..errors import ConfigError, DivergenceError, NumericalError
from ..fixed_point import fixed_point, fixed_point_exists
from ..instances import build_instance
from ..oracle import NoiseSpec
from ..quad_core import ProblemInstance, fingerprint, global_optimum, load_instance, mean_optimum
from .schedules import STANDARD_SCHEDULES, Schedule, parse_schedule

SWEEP_AXES = ("K", "R", "eta", "beta", "gamma", "stage_switch")
SCHEDULE_AXES = ("eta", "beta", "gamma")
DEFAULT_MAX_RUNS = 100_000


def thread_count() -> int:
    raw = os.environ.get("ICSIM_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"ICSIM_THREADS must be an integer, got {raw!r}") from None
    return min(8, os.cpu_count() or 1)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return "" if v is None else str(v)


def rows_to_csv(header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(row.get(h)) for h in header])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    instance: dict
    algorithms: list = field(default_factory=list)
    sweep: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=lambda: {"directory": "icsim_out", "formats": ["csv"]})
    seed: int = 0
    max_runs: int = DEFAULT_MAX_RUNS
    kind: str = "trajectories"  # or "fixed_point_sweep"
    schedules: dict | str | None = None
    K_grid: list | None = None
    raw_bytes: bytes = b""

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {"instance", "algorithms", "sweep", "outputs", "seed", "max_runs", "kind", "schedules", "K_grid"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        if "instance" not in data:
            raise ConfigError("experiment config needs an 'instance' entry")
        cfg = cls(
            instance=data["instance"],
            algorithms=list(data.get("algorithms", [])),
            sweep=dict(data.get("sweep", {})),
            outputs=dict(data.get("outputs", {"directory": "icsim_out", "formats": ["csv"]})),
            seed=int(data.get("seed", 0)),
            max_runs=int(data.get("max_runs", DEFAULT_MAX_RUNS)),
            kind=data.get("kind", "trajectories"),
            schedules=data.get("schedules"),
            K_grid=data.get("K_grid"),
            raw_bytes=json.dumps(data, sort_keys=True, separators=(",", ":")).encode(),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        cfg = cls.from_dict(data)
        src = cfg.instance
        if "file" in src and not os.path.isabs(src["file"]):
            cfg.instance = {**src, "file": str(Path(path).parent / src["file"])}
        return cfg

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_bytes).hexdigest()

    def validate(self) -> None:
        if self.kind not in ("trajectories", "fixed_point_sweep"):
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise ConfigError(f"sweep axis {axis!r} is not a parameter (allowed: {', '.join(SWEEP_AXES)})")
            if isinstance(values, str):
                if axis not in SCHEDULE_AXES:
                    raise ConfigError(f"sweep axis {axis!r} does not accept a schedule expression")
                parse_schedule(values)
            elif not isinstance(values, list):
                raise ConfigError(f"sweep axis {axis!r} must be a list or a schedule expression")
            else:
                for v in values:
                    if isinstance(v, str):
                        if axis not in SCHEDULE_AXES:
                            raise ConfigError(f"sweep axis {axis!r} does not accept schedule expressions")
                        parse_schedule(v)
        for a in self.algorithms:
            AlgorithmConfig.from_dict(_algo_dict(a, self.seed))
        if self.kind == "trajectories":
            n = len(self.algorithms) * math.prod(len(v) if isinstance(v, list) else 1 for v in self.sweep.values())
            if n > self.max_runs:
                raise ConfigError(f"sweep has {n} runs, above the cap of {self.max_runs}")
        else:
            if not self.K_grid:
                raise ConfigError("a fixed_point_sweep needs a non-empty K_grid")
            resolve_schedules(self.schedules)

    def build_instance(self) -> ProblemInstance:
        src = self.instance
        if "file" in src:
            return load_instance(src["file"])
        if "generator" in src:
            return build_instance(src["generator"], src.get("params", {}))
        raise ConfigError("instance entry needs 'generator' or 'file'")


def _algo_dict(a: dict, seed: int) -> dict:
    a = dict(a)
    noise = dict(a.get("noise", {}) or {})
    noise.setdefault("seed", seed)
    a["noise"] = noise
    return a


def resolve_schedules(spec) -> dict[str, Schedule]:
    if spec is None or spec == "standard":
        return dict(STANDARD_SCHEDULES)
    if isinstance(spec, list):
        return {s: parse_schedule(s) for s in spec}
    if isinstance(spec, dict):
        return {name: parse_schedule(text) for name, text in spec.items()}
    raise ConfigError("schedules must be 'standard', a list of expressions, or a name -> expression map")


# ---------------------------------------------------------------------------
# Trajectory sweeps
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    index: int
    algorithm: str
    params: dict
    status: str
    file: str | None
    final_suboptimality: float | None
    csv_text: str | None = None

    def manifest_entry(self) -> dict:
        return {"index": self.index, "algorithm": self.algorithm, "params": self.params, "status": self.status,
                "file": self.file, "final_suboptimality": self.final_suboptimality}


def sweep_points(cfg: ExperimentConfig) -> list[tuple[dict, dict]]:
    axes = list(cfg.sweep.items())
    names = [a for a, _ in axes]
    values = [v if isinstance(v, list) else [v] for _, v in axes]
    out = []
    for algo in cfg.algorithms:
        for combo in itertools.product(*values):
            out.append((_algo_dict(algo, cfg.seed), dict(zip(names, combo))))
    return out


def _resolve_point(instance: ProblemInstance, base: dict, point: dict) -> AlgorithmConfig:
    merged = {**base}
    K = point.get("K", merged.get("K", 1))
    for axis, v in point.items():
        if isinstance(v, str):
            v = parse_schedule(v)(instance.smoothness, K)
        merged[axis] = v
    return AlgorithmConfig.from_dict(merged)


def _execute(instance: ProblemInstance, index: int, base: dict, point: dict) -> RunRecord:
    cfg = _resolve_point(instance, base, point)
    name = f"run_{index:05d}_{cfg.algorithm}.csv"
    try:
        traj = run(instance, cfg)
    except DivergenceError as exc:
        return RunRecord(index, cfg.algorithm, point, f"diverged@{exc.round_index}", None, None)
    except NumericalError as exc:
        return RunRecord(index, cfg.algorithm, point, f"numerical_error: {exc}", None, None)
    return RunRecord(index, cfg.algorithm, point, "ok", name, float(traj.suboptimality[-1]), trajectory_csv(traj))


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[RunRecord]:
    """Execute every (algorithm, sweep point); write one CSV per run and a manifest."""
    out = Path(out_dir if out_dir is not None else cfg.outputs.get("directory", "icsim_out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    instance = cfg.build_instance()
    manifest = {
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "kind": cfg.kind,
        "instance_fingerprint": fingerprint(instance),
    }
    if cfg.kind == "fixed_point_sweep":
        rows, header = sweep_fixed_point(instance, resolve_schedules(cfg.schedules), cfg.K_grid)
        atomic_write(out / "fixed_point_sweep.csv", rows_to_csv(header, rows))
        manifest["files"] = ["fixed_point_sweep.csv"]
        atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return []
    points = sweep_points(cfg)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        records = list(pool.map(lambda ip: _execute(instance, ip[0], *ip[1]), enumerate(points)))
    for rec in records:  # barrier passed: write in grid order
        if rec.csv_text is not None:
            atomic_write(out / rec.file, rec.csv_text)
    manifest["runs"] = [r.manifest_entry() for r in records]
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return records


# ---------------------------------------------------------------------------
# Fixed-point sweeps and step-size searches
# ---------------------------------------------------------------------------

def sweep_fixed_point(instance: ProblemInstance, eta_schedules, K_grid) -> tuple[list[dict], list[str]]:
    """One row per (schedule, K): x_inf, its distances to x* and xbar*, and a status column."""
    if not isinstance(eta_schedules, dict):
        eta_schedules = {str(s): (s if isinstance(s, Schedule) else parse_schedule(s)) for s in eta_schedules}
    else:
        eta_schedules = {k: (v if isinstance(v, Schedule) else parse_schedule(v)) for k, v in eta_schedules.items()}
    xstar = global_optimum(instance)
    xbar = mean_optimum(instance)
    H, d = instance.smoothness, instance.dim
    header = ["K", "eta_schedule", "eta", "status", "dist_to_xstar", "dist_to_xbar", "log_dist_to_xstar"]
    header += [f"x_inf_{i + 1}" for i in range(d)]
    rows = []
    for name, sched in eta_schedules.items():
        for K in K_grid:
            eta = sched(H, K)
            row = {"K": int(K), "eta_schedule": name, "eta": eta}
            ok, _ = fixed_point_exists(instance, eta, int(K), 1.0)
            rep = fixed_point(instance, eta, int(K)) if ok else None
            if rep is None or not rep.exists:
                row["status"] = "no_fixed_point"
            else:
                dist = float(np.linalg.norm(rep.x_infinity - xstar))
                row.update(status="ok", dist_to_xstar=dist,
                           dist_to_xbar=float(np.linalg.norm(rep.x_infinity - xbar)),
                           log_dist_to_xstar=math.log(dist) if dist > 0 else -math.inf)
                row.update({f"x_inf_{i + 1}": float(v) for i, v in enumerate(rep.x_infinity)})
            rows.append(row)
    return rows, header


@dataclass(frozen=True)
class SearchResult:
    best: float
    eta: float
    beta: float
    values: np.ndarray  # (len(eta_grid), len(beta_grid)); inf marks divergence
    diverged: int


def step_size_search(instance: ProblemInstance, algorithm: str, eta_grid, beta_grid, R: int, K: int = 1,
                     noise: NoiseSpec | None = None) -> SearchResult:
    """Best final suboptimality over the grid; for mini-batch methods ``eta_grid`` holds gamma."""
    eta_grid = np.asarray(eta_grid, dtype=float)
    beta_grid = np.asarray(beta_grid if beta_grid is not None else [1.0], dtype=float)
    if eta_grid.size == 0 or beta_grid.size == 0:
        raise ConfigError("step-size grids must be non-empty")
    noise = noise or NoiseSpec()
    E, Bt = np.meshgrid(eta_grid, beta_grid, indexing="ij")
    if noise.sigma == 0 and algorithm in ("local_sgd", "minibatch_sgd"):
        if algorithm == "local_sgd":
            X, div = local_gd_batch(instance, E.ravel(), Bt.ravel(), K, R)
        else:
            X, div = local_gd_batch(instance, E.ravel(), np.ones(E.size), 1, R)
        vals = np.asarray(instance.suboptimality(X), dtype=float)
        vals[div] = np.inf
    else:
        vals = np.empty(E.size)
        for i, (e, b) in enumerate(zip(E.ravel(), Bt.ravel())):
            kw = {"gamma": e} if algorithm in ("minibatch_sgd", "accelerated_minibatch_sgd") else {"eta": e, "beta": b}
            cfg = AlgorithmConfig(algorithm, K=K, R=R, noise=noise, **kw)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    vals[i] = run(instance, cfg).suboptimality[-1]
            except DivergenceError:
                vals[i] = np.inf
    vals = vals.reshape(E.shape)
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    return SearchResult(float(vals[i, j]), float(eta_grid[i]), float(beta_grid[j]), vals,
                        int(np.sum(~np.isfinite(vals))))

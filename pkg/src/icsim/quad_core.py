"""Quadratic client objectives, problem instances and symmetric-matrix functions.

Every client objective has the form ``F_m(x) = 1/2 (x - x_m)^T A_m (x - x_m) + c_m``
with ``A_m`` symmetric positive semi-definite. The average objective ``F`` is the
plain mean over machines.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AmbiguousOptimumError,
    InvalidInstanceError,
    NotStronglyConvexError,
    SingularityError,
)

SYMMETRY_ATOL = 1e-12
ZERO_EIGENVALUE = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Dense symmetric matrix with an eagerly computed eigendecomposition.

    Eigenvalues are stored in descending order; ``eigenvectors[:, i]`` belongs to
    ``eigenvalues[i]``.
    """

    entries: np.ndarray
    eigenvalues: np.ndarray = field(init=False, repr=False)
    eigenvectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidInstanceError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInstanceError("matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a))))
        asym = float(np.max(np.abs(a - a.T)))
        if asym > SYMMETRY_ATOL * scale:
            raise InvalidInstanceError(f"matrix is not symmetric (max |S - S^T| = {asym:.3e})")
        a = 0.5 * (a + a.T)
        lam, vec = np.linalg.eigh(a)
        object.__setattr__(self, "entries", _frozen(a))
        object.__setattr__(self, "eigenvalues", _frozen(lam[::-1]))
        object.__setattr__(self, "eigenvectors", _frozen(vec[:, ::-1]))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def spectral_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def __matmul__(self, other):
        return self.entries @ other

    @classmethod
    def identity(cls, d: int) -> "SymMatrix":
        return cls(np.eye(d))


def matrix_function(S: SymMatrix, f: Callable[[np.ndarray], np.ndarray]) -> SymMatrix:
    """Return ``V diag(f(lambda)) V^T`` for the eigendecomposition of ``S``."""
    vals = np.asarray(f(S.eigenvalues), dtype=float)
    if vals.shape != S.eigenvalues.shape or not np.all(np.isfinite(vals)):
        raise SingularityError("scalar map is not finite on the spectrum")
    V = S.eigenvectors
    return SymMatrix((V * vals) @ V.T)


def matrix_power(S: SymMatrix, k: int) -> SymMatrix:
    return matrix_function(S, lambda lam: lam ** int(k))


def matrix_power_by_squaring(S: SymMatrix, k: int) -> np.ndarray:
    """Binary exponentiation; a cross-check for :func:`matrix_power`, not the main route."""
    if k < 0:
        raise ValueError("k must be non-negative")
    result = np.eye(S.dim)
    base = S.entries.copy()
    while k:
        if k & 1:
            result = result @ base
        base = base @ base
        k >>= 1
    return result


def matrix_inverse(S: SymMatrix) -> SymMatrix:
    small = np.abs(S.eigenvalues) <= ZERO_EIGENVALUE
    if np.any(small):
        bad = float(S.eigenvalues[small][0])
        raise SingularityError(f"matrix is singular: eigenvalue {bad:.3e} is within 1e-12 of 0", bad)
    return matrix_function(S, lambda lam: 1.0 / lam)


@dataclass(frozen=True, eq=False)
class QuadraticMachine:
    """One client objective ``1/2 (x - optimum)^T hessian (x - optimum) + offset``.

    ``linear`` is ``hessian @ optimum``; generators may pass it explicitly when
    they know it exactly (the chain construction relies on exact zeros).
    """

    hessian: SymMatrix
    optimum: np.ndarray
    label: int = 0
    linear: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        if not isinstance(self.hessian, SymMatrix):
            object.__setattr__(self, "hessian", SymMatrix(self.hessian))
        opt = np.asarray(self.optimum, dtype=float)
        if opt.shape != (self.hessian.dim,):
            raise InvalidInstanceError(
                f"machine {self.label}: optimum has shape {opt.shape}, expected ({self.hessian.dim},)"
            )
        if not np.all(np.isfinite(opt)):
            raise InvalidInstanceError(f"machine {self.label}: optimum has non-finite entries")
        lam_min = self.hessian.lambda_min
        if lam_min < -1e-10 * max(1.0, self.hessian.spectral_norm):
            raise InvalidInstanceError(f"machine {self.label}: hessian is indefinite (lambda_min={lam_min:.3e})")
        object.__setattr__(self, "optimum", _frozen(opt))
        lin = self.hessian.entries @ opt if self.linear is None else np.asarray(self.linear, dtype=float)
        object.__setattr__(self, "linear", _frozen(lin))

    @property
    def dim(self) -> int:
        return self.hessian.dim

    @property
    def strongly_convex(self) -> bool:
        return self.hessian.lambda_min > ZERO_EIGENVALUE * max(1.0, self.hessian.lambda_max)

    def value(self, x) -> np.ndarray | float:
        diff = np.asarray(x, dtype=float) - self.optimum
        q = 0.5 * np.einsum("...i,ij,...j->...", diff, self.hessian.entries, diff)
        return q + self.offset

    def gradient(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.hessian.entries - self.linear


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """M quadratic machines sharing one dimension, plus the gradient-noise level.

    ``claimed_*`` values are optional; when given they are validated against the
    computed spectra, but the computed values are what every formula uses.
    """

    machines: tuple
    sigma: float = 0.0
    start: np.ndarray | None = None
    claimed_mu: float | None = None
    claimed_smoothness: float | None = None
    claimed_radius_b: float | None = None

    def __post_init__(self):
        machines = tuple(self.machines)
        if not machines:
            raise InvalidInstanceError("an instance needs at least one machine")
        d = machines[0].dim
        for m in machines:
            if m.dim != d:
                raise InvalidInstanceError(f"dimension mismatch: machine {m.label} has dim {m.dim}, expected {d}")
        if self.sigma < 0 or not np.isfinite(self.sigma):
            raise InvalidInstanceError("sigma must be a finite non-negative number")
        start = np.zeros(d) if self.start is None else np.asarray(self.start, dtype=float)
        if start.shape != (d,) or not np.all(np.isfinite(start)):
            raise InvalidInstanceError("start point must be a finite vector of the instance dimension")
        object.__setattr__(self, "machines", machines)
        object.__setattr__(self, "start", _frozen(start))

        hess = np.stack([m.hessian.entries for m in machines])
        lin = np.stack([m.linear for m in machines])
        hess.setflags(write=False)
        lin.setflags(write=False)
        object.__setattr__(self, "hessian_stack", hess)
        object.__setattr__(self, "linear_stack", lin)
        avg = SymMatrix(hess.mean(axis=0))
        object.__setattr__(self, "average", avg)
        mu = min(m.hessian.lambda_min for m in machines)
        smooth = max(m.hessian.lambda_max for m in machines)
        object.__setattr__(self, "mu", max(mu, 0.0))
        object.__setattr__(self, "smoothness", smooth)
        if smooth <= 0:
            raise InvalidInstanceError("all hessians are zero")

        xstar = None
        if avg.lambda_min > ZERO_EIGENVALUE * max(1.0, avg.lambda_max):
            V = avg.eigenvectors
            xstar = _frozen(V @ ((V.T @ lin.mean(axis=0)) / avg.eigenvalues))
        object.__setattr__(self, "_xstar", xstar)

        if self.claimed_mu is not None and self.claimed_mu > self.mu + 1e-10:
            raise InvalidInstanceError(f"claimed mu={self.claimed_mu} exceeds computed {self.mu}")
        if self.claimed_smoothness is not None and self.claimed_smoothness < smooth - 1e-10:
            raise InvalidInstanceError(f"claimed H={self.claimed_smoothness} is below computed {smooth}")
        if self.claimed_radius_b is not None and self.claimed_radius_b < 0:
            raise InvalidInstanceError("claimed B must be non-negative")

    @property
    def dim(self) -> int:
        return self.machines[0].dim

    @property
    def M(self) -> int:
        return len(self.machines)

    @property
    def radius_b(self) -> float:
        if self.claimed_radius_b is not None:
            return float(self.claimed_radius_b)
        if self._xstar is not None:
            return float(np.linalg.norm(self._xstar))
        return max(float(np.linalg.norm(m.optimum)) for m in self.machines)

    @property
    def kappa(self) -> float:
        """Condition number H/mu from the machine spectra (inf if some machine is singular)."""
        return self.smoothness / self.mu if self.mu > 0 else float("inf")

    @property
    def strongly_convex(self) -> bool:
        return self._xstar is not None

    def value(self, x):
        return sum(m.value(x) for m in self.machines) / self.M

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.average.entries - self.linear_stack.mean(axis=0)

    def suboptimality(self, x):
        """F(x) - F(x*), evaluated in the cancellation-free quadratic form."""
        diff = np.asarray(x, dtype=float) - global_optimum(self)
        return 0.5 * np.einsum("...i,ij,...j->...", diff, self.average.entries, diff)


def average_hessian(instance: ProblemInstance) -> SymMatrix:
    return instance.average


def global_optimum(instance: ProblemInstance) -> np.ndarray:
    """Minimizer of the average objective, ``A^{-1} (1/M) sum_m A_m x_m``."""
    if instance._xstar is None:
        raise NotStronglyConvexError(
            f"average hessian is singular (lambda_min={instance.average.lambda_min:.3e})"
        )
    return instance._xstar


def mean_optimum(instance: ProblemInstance) -> np.ndarray:
    """Coordinate-wise mean of the machine optima."""
    for m in instance.machines:
        if not m.strongly_convex:
            raise AmbiguousOptimumError(f"machine {m.label} has a singular hessian; its optimum is not unique")
    return np.mean([m.optimum for m in instance.machines], axis=0)


def eval_and_gradient(target, x) -> tuple[float, np.ndarray]:
    """Value and gradient of a machine objective or of an instance's average objective."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != target.dim:
        raise InvalidInstanceError(f"point has dimension {x.shape[-1]}, expected {target.dim}")
    return target.value(x), target.gradient(x)


# ---------------------------------------------------------------------------
# JSON file format
# ---------------------------------------------------------------------------

def instance_to_dict(instance: ProblemInstance) -> dict:
    machines = []
    for m in instance.machines:
        entry = {
            "hessian": m.hessian.entries.tolist(),
            "optimum": m.optimum.tolist(),
            "label": m.label,
        }
        if not np.array_equal(m.linear, m.hessian.entries @ m.optimum):
            entry["linear"] = m.linear.tolist()
        if m.offset:
            entry["offset"] = m.offset
        machines.append(entry)
    out = {
        "dim": instance.dim,
        "sigma": instance.sigma,
        "machines": machines,
        "start": instance.start.tolist(),
    }
    claimed = {
        k: v
        for k, v in (
            ("mu", instance.claimed_mu),
            ("H", instance.claimed_smoothness),
            ("B", instance.claimed_radius_b),
        )
        if v is not None
    }
    if claimed:
        out["claimed"] = claimed
    return out


def instance_from_dict(data: dict) -> ProblemInstance:
    try:
        d = int(data["dim"])
        raw = data["machines"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInstanceError(f"malformed instance document: {exc}") from exc
    machines = []
    for i, entry in enumerate(raw):
        h = np.asarray(entry["hessian"], dtype=float)
        if h.ndim == 1:
            if h.size != d * d:
                raise InvalidInstanceError(f"machine {i}: flat hessian has {h.size} entries, expected {d * d}")
            h = h.reshape(d, d)
        if h.shape != (d, d):
            raise InvalidInstanceError(f"machine {i}: hessian shape {h.shape} does not match dim {d}")
        machines.append(
            QuadraticMachine(
                SymMatrix(h),
                np.asarray(entry["optimum"], dtype=float),
                label=int(entry.get("label", i + 1)),
                linear=entry.get("linear"),
                offset=float(entry.get("offset", 0.0)),
            )
        )
    claimed = data.get("claimed", {})
    return ProblemInstance(
        tuple(machines),
        sigma=float(data.get("sigma", 0.0)),
        start=data.get("start"),
        claimed_mu=claimed.get("mu"),
        claimed_smoothness=claimed.get("H"),
        claimed_radius_b=claimed.get("B"),
    )


def instance_to_json(instance: ProblemInstance) -> str:
    return json.dumps(instance_to_dict(instance), sort_keys=True, separators=(",", ":"))


def save_instance(instance: ProblemInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=1, sort_keys=True) + "\n")


def load_instance(path) -> ProblemInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInstanceError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(data)


def fingerprint(instance: ProblemInstance) -> str:
    return hashlib.sha256(instance_to_json(instance).encode()).hexdigest()


def make_instance(hessians: Sequence, optima: Sequence, sigma: float = 0.0, start=None, **claimed) -> ProblemInstance:
    """Convenience constructor from raw arrays; machine labels are 1-based."""
    machines = tuple(
        QuadraticMachine(SymMatrix(np.asarray(h, dtype=float)), np.asarray(x, dtype=float), label=i + 1)
        for i, (h, x) in enumerate(zip(hessians, optima))
    )
    return ProblemInstance(machines, sigma=sigma, start=start, **claimed)

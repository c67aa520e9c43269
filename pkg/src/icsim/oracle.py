"""Stochastic first-order oracle with keyed, order-independent noise.

Each draw is addressed by ``(seed, machine, round, step)``. The key selects a
Philox stream (``key = (seed, machine)``, ``counter`` starts at ``(0, 0, step, round)``),
so any schedule of calls, in any order or thread, sees the same numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quad_core import ProblemInstance, QuadraticMachine

_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0
    model: str = "isotropic_gaussian"

    def __post_init__(self):
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise ValueError("sigma must be finite and non-negative")
        if self.model != "isotropic_gaussian":
            raise ValueError(f"unsupported noise model {self.model!r}")

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSpec":
        return cls(sigma=float(data.get("sigma", 0.0)), seed=int(data.get("seed", 0)))


@dataclass(frozen=True)
class RngKey:
    seed: int
    machine: int
    round: int
    step: int

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK, self.machine & _MASK], dtype=np.uint64)
        counter = np.array([0, 0, self.step & _MASK, self.round & _MASK], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


def noise_vector(noise: NoiseSpec, key: RngKey, d: int) -> np.ndarray:
    """Isotropic Gaussian with per-coordinate variance sigma^2/d, so E|xi|^2 = sigma^2."""
    if noise.sigma == 0:
        return np.zeros(d)
    return key.generator().standard_normal(d) * (noise.sigma / np.sqrt(d))


def stochastic_gradient(machine: QuadraticMachine, x, noise: NoiseSpec, key: RngKey) -> np.ndarray:
    g = machine.gradient(x)
    if noise.sigma == 0:
        return g
    return g + noise_vector(noise, key, machine.dim)


def machine_noise(noise: NoiseSpec, M: int, d: int, round_index: int, step: int) -> np.ndarray:
    """Noise rows for all M machines at one (round, step); row m uses machine index m."""
    if noise.sigma == 0:
        return np.zeros((M, d))
    return np.stack([noise_vector(noise, RngKey(noise.seed, m, round_index, step), d) for m in range(M)])


def per_machine_minibatch(instance: ProblemInstance, x, K: int, noise: NoiseSpec, round_index: int) -> np.ndarray:
    """(M, d) array: row m is the mean of machine m's K stochastic gradients at x."""
    if K < 1:
        raise ValueError("K must be at least 1")
    x = np.asarray(x, dtype=float)
    grads = np.einsum("mij,j->mi", instance.hessian_stack, x) - instance.linear_stack
    if noise.sigma == 0:
        return grads
    acc = np.zeros_like(grads)
    for k in range(K):
        acc += machine_noise(noise, instance.M, instance.dim, round_index, k)
    return grads + acc / K


def minibatch_gradient(instance: ProblemInstance, x, K: int, noise: NoiseSpec, round_index: int) -> np.ndarray:
    """Mean of M*K stochastic gradients all taken at x; noise variance sigma^2/(MK)."""
    return per_machine_minibatch(instance, x, K, noise, round_index).mean(axis=0)

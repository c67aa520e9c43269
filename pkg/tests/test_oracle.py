from __future__ import annotations

import numpy as np

from icsim.oracle import NoiseSpec, RngKey, minibatch_gradient, noise_vector, per_machine_minibatch, stochastic_gradient


def test_noiseless_gradient_exact(inst_a):
    m = inst_a.machines[0]
    x = np.array([0.3, -0.4])
    g = stochastic_gradient(m, x, NoiseSpec(0.0), RngKey(1, 0, 0, 0))
    np.testing.assert_array_equal(g, m.hessian.entries @ (x - m.optimum))


def test_same_key_bitwise_identical():
    spec = NoiseSpec(1.5, seed=9)
    a = noise_vector(spec, RngKey(9, 3, 7, 2), 6)
    b = noise_vector(spec, RngKey(9, 3, 7, 2), 6)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, noise_vector(spec, RngKey(9, 3, 7, 3), 6))
    assert not np.array_equal(a, noise_vector(spec, RngKey(9, 4, 7, 2), 6))


def test_noise_second_moment():
    spec = NoiseSpec(1.0, seed=0)
    vals = [np.sum(noise_vector(spec, RngKey(0, 0, r, 0), 2) ** 2) for r in range(100_000)]
    assert 0.99 <= np.mean(vals) <= 1.01


def test_minibatch_noiseless_is_full_gradient(inst_a):
    x = np.array([1.0, 2.0])
    np.testing.assert_allclose(minibatch_gradient(inst_a, x, 5, NoiseSpec(), 1), inst_a.gradient(x), atol=1e-15)


def test_minibatch_single_machine_single_sample():
    from icsim.quad_core import make_instance
    inst = make_instance([np.diag([1.0, 2.0])], [[1.0, 1.0]])
    spec = NoiseSpec(0.5, seed=4)
    x = np.zeros(2)
    g = minibatch_gradient(inst, x, 1, spec, 3)
    expect = stochastic_gradient(inst.machines[0], x, spec, RngKey(4, 0, 3, 0))
    np.testing.assert_allclose(g, expect, atol=1e-15)


def test_minibatch_variance():
    from icsim.quad_core import make_instance
    inst = make_instance([np.eye(3)] * 4, [[0, 0, 0]] * 4)
    spec = NoiseSpec(1.0, seed=2)
    dev = np.array([minibatch_gradient(inst, np.zeros(3), 8, spec, r) for r in range(10_000)])
    v = np.mean(np.sum(dev ** 2, axis=1))
    assert 0.95 / 32 <= v <= 1.05 / 32


def test_per_machine_rows_shape(inst_a):
    assert per_machine_minibatch(inst_a, np.zeros(2), 3, NoiseSpec(1.0), 0).shape == (2, 2)

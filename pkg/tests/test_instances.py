from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from icsim.algorithms import AlgorithmConfig, run
from icsim.errors import CoverageError, InfeasibleError, InvalidInstanceError
from icsim.heterogeneity import tau, zeta_star
from icsim.instances import (ChainSpec, RegressionSpec, build_instance, chain_toeplitz_eigenvalues,
                             make_chain_instance, make_gd_worst_case, make_linear_regression,
                             make_motivating_pair, make_random_instance, make_rank_one_pair, odd_fraction,
                             rank_one_pair_kappa, regression_tau_bound)
from icsim.quad_core import global_optimum, instance_to_json, mean_optimum
from icsim.theory_bounds import eval_gd_lower_bound


def test_motivating_shape():
    inst = make_motivating_pair(2.0, [1.0, -1.0])
    assert inst.M == 2 and inst.dim == 2 and inst.sigma == 0
    assert not any(m.strongly_convex for m in inst.machines)
    np.testing.assert_allclose(global_optimum(inst), [1.0, -1.0])


def test_rank_one_kappa_four_gives_three_fifths():
    inst, alpha = make_rank_one_pair(1.0, 1.0, 2, 4.0)
    assert alpha == pytest.approx(0.6, abs=1e-12)
    # (a - a^2)(1 - alpha^2) = kappa/(1+kappa)^2 at a = 1/2
    assert 0.25 * (1 - alpha ** 2) == pytest.approx(4 / 25, rel=1e-10)
    lam = np.linalg.eigvalsh(inst.average.entries)
    assert lam[1] / lam[0] == pytest.approx(4.0, rel=1e-9)


def test_rank_one_symmetric_case():
    assert rank_one_pair_kappa(0.0, 0.5) == pytest.approx(1.0)
    assert rank_one_pair_kappa(1.0 - 1e-12, 0.5) > 1e10


def test_rank_one_optimum_and_radius():
    inst, _ = make_rank_one_pair(2.0, 3.0, 4, 20.0)
    np.testing.assert_allclose(np.linalg.norm(global_optimum(inst)), 3.0, rtol=1e-12)
    assert zeta_star(inst).value == pytest.approx(0, abs=1e-12)


def test_rank_one_infeasible():
    assert odd_fraction(3) == pytest.approx(2 / 3)
    assert rank_one_pair_kappa(0.0, 2 / 3) == pytest.approx(2.0)
    with pytest.raises(InfeasibleError):
        make_rank_one_pair(1.0, 1.0, 3, 1.5)


def test_chain_single_coordinate():
    assert chain_toeplitz_eigenvalues(2.0, 0.5, 1) == pytest.approx([(1 + 0.25) * 2.0])


def test_chain_strong_convexity():
    inst, _ = make_chain_instance(ChainSpec(H=1.0, B=1.0, R=10))
    lam = np.linalg.eigvalsh(inst.average.entries)
    assert lam.min() >= 1.0 / 100 - 1e-12
    np.testing.assert_allclose(np.sort(lam), np.sort(chain_toeplitz_eigenvalues(1.0, 0.9, inst.dim)), atol=1e-9)


def test_chain_coverage_error():
    with pytest.raises(CoverageError):
        make_chain_instance(ChainSpec(R=10, d=5))


def test_chain_machine_average_is_chain():
    spec = ChainSpec(H=1.5, B=1.0, R=8, M=3)
    inst, _ = make_chain_instance(spec)
    d, q = inst.dim, spec.q
    T = np.diag(np.full(d, (1 + q * q) * 1.5)) - q * 1.5 * (np.eye(d, k=1) + np.eye(d, k=-1))
    # interior rows carry q^2 + 1; the last row carries 1 + q^2 from (q x_{d-1} - x_d)^2 and (q x_d)^2
    T[-1, -1] = (1 + q * q) * 1.5
    np.testing.assert_allclose(inst.average.entries, T, atol=1e-12)


def test_gd_worst_case_explodes():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        inst = make_gd_worst_case(1.0, 30.0, 1.0)
        from icsim.errors import DivergenceError
        with pytest.raises(DivergenceError):
            run(inst, AlgorithmConfig("minibatch_sgd", R=200, gamma=3.0))


def test_gd_worst_case_floor():
    H, B, kappa = 1.0, 1.0, 30.0
    inst = make_gd_worst_case(H, kappa, B)
    best = min(run(inst, AlgorithmConfig("minibatch_sgd", R=30, gamma=g)).suboptimality[-1]
               for g in np.geomspace(1e-2, 1.99, 60))
    assert best >= eval_gd_lower_bound(H, B, kappa, 30)
    assert eval_gd_lower_bound(H, B, kappa, 30) == pytest.approx(H * B ** 2 / (4 * kappa) * math.exp(-12))


def test_gd_worst_case_warns_small_kappa():
    with pytest.warns(RuntimeWarning):
        make_gd_worst_case(1.0, 3.0, 1.0)


def test_random_homogeneous_hessians():
    inst = make_random_instance(4, 3, 0.5, 2.0, concept_spread=1.0, hessian_spread=0.0, seed=1)
    assert tau(inst)[0] == pytest.approx(0, abs=1e-12)
    np.testing.assert_allclose(global_optimum(inst), mean_optimum(inst), atol=1e-12)
    inst = make_random_instance(4, 3, 0.5, 2.0, concept_spread=0.0, hessian_spread=0.0, seed=1)
    assert zeta_star(inst).value == pytest.approx(0, abs=1e-12)


def test_random_spectrum_and_determinism():
    a = make_random_instance(5, 4, 0.25, 3.0, seed=7)
    b = make_random_instance(5, 4, 0.25, 3.0, seed=7)
    assert instance_to_json(a) == instance_to_json(b)
    assert a.mu >= 0.25 - 1e-12 and a.smoothness <= 3.0 + 1e-12
    assert instance_to_json(make_random_instance(5, 4, 0.25, 3.0, seed=8)) != instance_to_json(a)


def _spec(mu, cov, x, noise=0.0):
    return RegressionSpec(np.array(mu, float), np.array(cov, float), np.array(x, float), noise)


def test_regression_identical_machines():
    specs = [_spec([1, 0], np.eye(2), [1, 2])] * 3
    inst, _ = make_linear_regression(specs)
    assert tau(inst)[0] == 0.0 and zeta_star(inst).value == pytest.approx(0, abs=1e-14)
    _, bmax, measured = regression_tau_bound(specs)
    assert bmax == 0.0 and measured == 0.0


def test_regression_covariate_shift_example():
    specs = [_spec([1, 0], np.eye(2), [0, 0]), _spec([0, 1], np.eye(2), [0, 0])]
    _, bmax, measured = regression_tau_bound(specs)
    assert bmax == pytest.approx(2 * math.sqrt(2))
    assert measured == pytest.approx(1.0)


def test_regression_pure_concept_shift():
    specs = [_spec([1, 1], np.eye(2), [1, 0]), _spec([1, 1], np.eye(2), [0, 1])]
    inst, _ = make_linear_regression(specs)
    _, bmax, measured = regression_tau_bound(specs)
    assert bmax == 0.0 and measured == 0.0 and tau(inst)[0] == 0.0


def test_regression_sampler_gradients_match_in_mean():
    specs = [_spec([0.5, -0.5], [[1.0, 0.2], [0.2, 0.5]], [1, 2], 0.1)]
    inst, sampler = make_linear_regression(specs, seed=3)
    x = np.array([0.3, -0.1])
    g = sampler.gradients(0, x, 200_000).mean(axis=0)
    np.testing.assert_allclose(g, inst.machines[0].gradient(x), atol=2e-2)


def test_regression_indefinite_rejected():
    with pytest.raises(InvalidInstanceError):
        make_linear_regression([_spec([0, 0], [[1, 0], [0, -1]], [0, 0])])


def test_registry():
    inst = build_instance("rank_one", {"kappa": 6.0, "M": 4})
    assert inst.M == 4
    with pytest.raises(InvalidInstanceError):
        build_instance("nope")
    with pytest.raises(InvalidInstanceError):
        build_instance("motivating", {"bogus": 1})

from __future__ import annotations

import math

import numpy as np
import pytest

from icsim.algorithms import AlgorithmConfig, run
from icsim.errors import DomainError, NotStronglyConvexError
from icsim.fixed_point import (c_matrix, contraction_predictor, discrepancy_bounds, discrepancy_factor, fixed_point,
                               fixed_point_exists, fixed_point_json, kappa_prime, simplified_contraction_bound,
                               simulate_fixed_point)
from icsim.instances import make_motivating_pair, make_random_instance
from icsim.quad_core import global_optimum, make_instance, mean_optimum


def affine_round_fixed_point(inst, eta, K, beta=1.0):
    """Oracle: read the one-round affine map x -> T x + c off single rounds, then solve (I - T) x = c."""
    d = inst.dim

    def one_round(x):
        start = make_instance([m.hessian.entries for m in inst.machines], [m.optimum for m in inst.machines],
                              start=x)
        return run(start, AlgorithmConfig("local_sgd", K=K, R=1, eta=eta, beta=beta)).final

    c = one_round(np.zeros(d))
    T = np.column_stack([one_round(e) - c for e in np.eye(d)])
    return np.linalg.solve(np.eye(d) - T, c)


def test_inst_a_closed_form(inst_a):
    rep = fixed_point(inst_a, 0.25, 2)
    np.testing.assert_allclose(rep.c_matrices[0].entries, np.diag([0.75, 0.4375]), atol=1e-15)
    np.testing.assert_allclose(rep.c_matrices[1].entries, np.diag([0.4375, 0.75]), atol=1e-15)
    np.testing.assert_allclose(rep.x_infinity, [12 / 19, 12 / 19], rtol=1e-14)
    np.testing.assert_allclose(rep.x_infinity, affine_round_fixed_point(inst_a, 0.25, 2), rtol=1e-12)
    sim, _ = simulate_fixed_point(inst_a, 0.25, 2)
    np.testing.assert_allclose(sim, rep.x_infinity, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_closed_form_vs_affine_oracle(seed):
    inst = make_random_instance(4, 3, 0.3, 2.0, seed=seed)
    for K in (1, 3, 8):
        eta = 0.7 / inst.smoothness
        np.testing.assert_allclose(fixed_point(inst, eta, K).x_infinity, affine_round_fixed_point(inst, eta, K),
                                   rtol=1e-9, atol=1e-12)


def test_k1_recovers_optimum():
    inst = make_random_instance(5, 4, 0.2, 3.0, seed=11)
    for f in (0.1, 0.5, 1.0, 1.9):
        x = fixed_point(inst, f / inst.smoothness, 1).x_infinity
        assert np.linalg.norm(x - global_optimum(inst)) <= 1e-10 * (1 + np.linalg.norm(global_optimum(inst)))


def test_homogeneous_fixed_point(homogeneous):
    x = fixed_point(homogeneous, 0.1, 7).x_infinity
    np.testing.assert_allclose(x, global_optimum(homogeneous), atol=1e-12)
    np.testing.assert_allclose(x, mean_optimum(homogeneous), atol=1e-12)


def test_rank_deficient_refused():
    with pytest.raises(NotStronglyConvexError):
        fixed_point(make_motivating_pair(1.0, [1, 1]), 0.5, 2)


def test_singular_c_reported_not_raised():
    inst = make_instance([np.diag([1.0, 1.0])], [[1.0, 1.0]])
    rep = fixed_point(inst, 2.0, 2)  # (1 - 2)^2 = 1 so C = 0
    assert not rep.exists
    assert np.all(np.isnan(rep.x_infinity))


def test_c_matrix_matches_power(inst_a):
    A = inst_a.machines[0].hessian
    direct = np.eye(2) - np.linalg.matrix_power(np.eye(2) - 0.3 * A.entries, 5)
    np.testing.assert_allclose(c_matrix(A, 0.3, 5).entries, direct, atol=1e-15)


def test_existence(inst_a):
    H, mu = inst_a.smoothness, inst_a.mu
    eta = 1 / (2 * H)
    for K in (1, 2, 9):
        ok, factor = fixed_point_exists(inst_a, eta, K, 1.0)
        assert ok and factor <= (1 - eta * mu) ** K + 1e-15
    ok, _ = fixed_point_exists(inst_a, eta, 2, 100.0)
    assert not ok
    ok, _ = fixed_point_exists(inst_a, 3 / H, 2, 1.0)
    assert not ok


def test_discrepancy_inst_a(inst_a):
    rep = discrepancy_bounds(inst_a, 0.25, 2)
    assert rep.bound_xstar_xbar == pytest.approx(2 * math.sqrt(5) / 3 / 2, rel=1e-14)
    assert rep.measured_xstar_xbar == pytest.approx(math.sqrt(2) / 6, rel=1e-14)
    assert rep.holds


def test_discrepancy_homogeneous():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    rep = discrepancy_bounds(make_instance([A, A], [[1, 1], [1, 1]]), 0.2, 3)
    assert rep.measured_xstar_xbar == pytest.approx(0, abs=1e-14)
    assert rep.measured_xinf_xbar == pytest.approx(0, abs=1e-14)


def test_discrepancy_needs_k_above_one(inst_a):
    with pytest.raises(DomainError):
        discrepancy_bounds(inst_a, 0.25, 1)


def test_discrepancy_factor_values():
    assert discrepancy_factor(0.5, 1) == pytest.approx(1.0)
    # K=2, eta mu = 1/2: (1/2)(2)(1/2) / (1 - 1/4) = 2/3
    assert discrepancy_factor(0.5, 2) == pytest.approx(2 / 3, rel=1e-14)
    with pytest.raises(DomainError):
        discrepancy_factor(1.5, 2)


def test_kappa_prime_inst_a(inst_a):
    assert kappa_prime(inst_a, 0.25, 2) == pytest.approx(12 / 7, rel=1e-14)


def test_contraction_inst_a(inst_a):
    bound = contraction_predictor(inst_a, 0.25, 1.0, 2, 10)
    xinf = np.array([12 / 19, 12 / 19])
    assert bound == pytest.approx(0.75 ** 20 * 12 / 7 * np.linalg.norm(xinf), rel=1e-12)
    traj = run(inst_a, AlgorithmConfig("local_sgd", K=2, R=10, eta=0.25))
    assert np.linalg.norm(traj.final - xinf) <= bound


def test_contraction_r0(inst_a):
    xinf = fixed_point(inst_a, 0.25, 2).x_infinity
    assert contraction_predictor(inst_a, 0.25, 1.0, 2, 0) >= np.linalg.norm(xinf)


def test_contraction_declines_unsupported_beta(inst_a):
    with pytest.raises(DomainError):
        contraction_predictor(inst_a, 0.25, 5.0, 2, 3)


def test_contraction_second_form(inst_a):
    eta, K = 0.25, 3
    top = 1 - (1 - eta * inst_a.smoothness) ** K
    beta = 1 / (1.5 * top)
    bound = contraction_predictor(inst_a, eta, beta, K, 6)
    traj = run(inst_a, AlgorithmConfig("local_sgd", K=K, R=6, eta=eta, beta=beta))
    assert np.linalg.norm(traj.final - fixed_point(inst_a, eta, K).x_infinity) <= bound


def test_simplified_bound(inst_a):
    kappa = inst_a.kappa
    K = math.ceil(1 / -math.log2(1 - 1 / (2 * kappa)))
    assert simplified_contraction_bound(inst_a, K, 5) == pytest.approx(
        inst_a.radius_b * math.exp(-K * 5 / kappa), rel=1e-14)
    # the exact predictor behind the simplified form does bound the measured error
    traj = run(inst_a, AlgorithmConfig("local_sgd", K=K, R=5))
    xinf = fixed_point(inst_a, 1 / (2 * inst_a.smoothness), K).x_infinity
    assert np.linalg.norm(traj.final - xinf) <= contraction_predictor(inst_a, 1 / (2 * inst_a.smoothness), 1.0, K, 5)
    with pytest.raises(DomainError):
        simplified_contraction_bound(inst_a, 1, 5)


def test_json_output(inst_a):
    import json
    d = json.loads(fixed_point_json(inst_a, fixed_point(inst_a, 0.25, 2)))
    assert d["exists"] and d["K"] == 2
    assert d["x_infinity"] == pytest.approx([12 / 19, 12 / 19])

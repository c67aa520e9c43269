from __future__ import annotations

import math

import numpy as np
import pytest

from icsim.errors import DomainError
from icsim.heterogeneity import heterogeneity_report, rho, rho_bounds, tau, zeta_ball, zeta_star
from icsim.instances import make_motivating_pair, make_random_instance
from icsim.quad_core import make_instance


def test_zeta_star_inst_a(inst_a):
    assert zeta_star(inst_a).value == pytest.approx(2 * math.sqrt(5) / 3, rel=1e-14)


def test_zeta_star_shared_optimum():
    assert zeta_star(make_motivating_pair(2.0, [1.0, -1.0])).value == 0.0


def test_zeta_star_homogeneous():
    A = np.array([[2.0, 0.1], [0.1, 1.0]])
    assert zeta_star(make_instance([A, A], [[1, 2], [1, 2]])).value == pytest.approx(0, abs=1e-14)


def test_tau_values(inst_a):
    assert tau(inst_a)[0] == pytest.approx(1.0)
    assert tau(make_motivating_pair(3.0, [1, 1]))[0] == pytest.approx(3.0)
    A = np.eye(2)
    assert tau(make_instance([A, A], [[0, 0], [1, 1]]))[0] == 0.0


def test_zeta_ball_inst_a(inst_a):
    zb = zeta_ball(inst_a, 2.0, 10_000)
    assert zb.analytic_bound == pytest.approx(2 * math.sqrt(5) / 3 + 2.0, rel=1e-14)
    assert zb.empirical_sup <= zb.analytic_bound
    assert zb.exact_sup >= zb.sampled_sup - 1e-12


def test_zeta_ball_radius_zero_is_centre(inst_a):
    zb = zeta_ball(inst_a, 0.0)
    assert zb.empirical_sup == pytest.approx(zeta_star(inst_a).gradient_form, rel=1e-14)


def test_zeta_ball_identical_machines():
    A = np.array([[2.0, 0.1], [0.1, 1.0]])
    zb = zeta_ball(make_instance([A, A, A], [[1, 2]] * 3), 3.0, 1000)
    assert zb.empirical_sup == pytest.approx(0, abs=1e-14)


def test_zeta_ball_exact_beats_dense_sampling():
    inst = make_random_instance(4, 3, 0.5, 3.0, seed=2)
    zb = zeta_ball(inst, 1.5, 50_000, seed=3)
    assert zb.exact_sup >= zb.sampled_sup - 1e-12
    assert zb.exact_sup <= zb.analytic_bound + 1e-12


def test_rho_inst_a(inst_a):
    # two hand-unrolled steps from x* = (2/3, 2/3): machine 1 reaches (11/12, 3/8), machine 2 (3/8, 11/12)
    assert rho(inst_a, 0.25, 2) == pytest.approx(math.sqrt(2) / 24, rel=1e-12)
    # matrix form (1/(M eta K)) |sum_m (I - (I - eta A_m)^K)(x* - x_m*)|
    xs = np.array([2 / 3, 2 / 3])
    tot = np.zeros(2)
    for m in inst_a.machines:
        C = np.eye(2) - np.linalg.matrix_power(np.eye(2) - 0.25 * m.hessian.entries, 2)
        tot += C @ (xs - m.optimum)
    assert rho(inst_a, 0.25, 2) == pytest.approx(np.linalg.norm(tot) / (2 * 0.25 * 2), rel=1e-12)


def test_rho_k1_and_shared_optimum(inst_a):
    assert rho(inst_a, 0.3, 1) == pytest.approx(0, abs=1e-14)
    assert rho(make_instance([np.diag([1.0, 2.0]), np.eye(2)], [[1, 1], [1, 1]]), 0.3, 5) == pytest.approx(0, abs=1e-14)
    assert rho_bounds(inst_a, 0.3, 1).general == 0.0


def test_rho_quadratic_limit():
    inst = make_random_instance(3, 2, 0.5, 2.0, seed=1)
    H, zs = inst.smoothness, zeta_star(inst).value
    K = 10_000
    b = rho_bounds(inst, 1 / (2 * H * K), K)
    assert b.quadratic == pytest.approx((1 - math.exp(-0.5)) * 2 * zs, rel=1e-2)
    assert b.quadratic_printed == pytest.approx(b.quadratic * H, rel=1e-14)


def test_rho_quadratic_decays_for_sqrt_schedule():
    inst = make_random_instance(3, 2, 0.5, 2.0, seed=1)
    H = inst.smoothness
    vals = [rho_bounds(inst, 1 / (2 * H * math.sqrt(K)), K).quadratic for K in (1, 10, 100, 1000, 10_000)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= 0.05 * vals[0]


def test_rho_domain(inst_a):
    with pytest.raises(DomainError):
        rho(inst_a, 0.0, 2)


def test_report(inst_a):
    rep = heterogeneity_report(inst_a, 0.25, 2, 1.0, 100)
    d = rep.to_dict()
    assert d["tau"] == pytest.approx(1.0)
    assert d["rho"]["value"] == pytest.approx(math.sqrt(2) / 24, rel=1e-12)
    assert "zeta_star" in rep.table()


def test_ball_maximizer_tiny_top_weight():
    from icsim.heterogeneity import _ball_quadratic_max
    P, q = np.diag([0.5, 1.0]), np.array([0.3, 1e-30])
    y = _ball_quadratic_max(P, q, 1.0)
    assert np.all(np.isfinite(y)) and np.linalg.norm(y) == pytest.approx(1.0)
    th = np.linspace(0, 2 * np.pi, 100_001)
    Y = np.stack([np.cos(th), np.sin(th)], axis=1)
    grid = np.max(np.einsum("ni,ij,nj->n", Y, P, Y) + 2 * Y @ q)
    assert y @ P @ y + 2 * q @ y >= grid - 1e-12

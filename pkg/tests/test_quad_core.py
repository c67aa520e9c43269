from __future__ import annotations

import json

import numpy as np
import pytest

from icsim.errors import AmbiguousOptimumError, InvalidInstanceError, NotStronglyConvexError, SingularityError
from icsim.instances import make_motivating_pair
from icsim.quad_core import (QuadraticMachine, SymMatrix, eval_and_gradient, fingerprint, global_optimum,
                             instance_from_dict, instance_to_json, load_instance, make_instance,
                             matrix_function, matrix_inverse, matrix_power, matrix_power_by_squaring,
                             mean_optimum, save_instance)


def test_average_hessian_inst_a(inst_a):
    np.testing.assert_allclose(inst_a.average.entries, np.diag([1.5, 1.5]))


def test_average_hessian_identical_machines():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    inst = make_instance([A, A], [[0, 0], [1, 1]])
    np.testing.assert_allclose(inst.average.entries, A)


def test_average_hessian_motivating():
    np.testing.assert_allclose(make_motivating_pair(1.0, [1, 1]).average.entries, np.diag([0.5, 0.5]))


def test_global_optimum_inst_a(inst_a):
    x = global_optimum(inst_a)
    np.testing.assert_allclose(x, [2 / 3, 2 / 3], rtol=1e-14)
    np.testing.assert_allclose(inst_a.gradient(x), 0.0, atol=1e-14)


def test_global_optimum_homogeneous(homogeneous):
    mean = np.mean([m.optimum for m in homogeneous.machines], axis=0)
    np.testing.assert_allclose(global_optimum(homogeneous), mean, atol=1e-14)
    np.testing.assert_allclose(mean_optimum(homogeneous), mean, atol=1e-15)


def test_global_optimum_single_machine():
    inst = make_instance([np.diag([1.0, 4.0])], [[3.0, -2.0]])
    np.testing.assert_allclose(global_optimum(inst), [3.0, -2.0], atol=1e-15)


def test_global_optimum_singular_average():
    inst = make_instance([np.diag([1.0, 0.0])], [[1.0, 0.0]])
    with pytest.raises(NotStronglyConvexError):
        global_optimum(inst)


def test_mean_optimum(inst_a):
    np.testing.assert_allclose(mean_optimum(inst_a), [0.5, 0.5])
    inst = make_instance([np.eye(2)] * 3, [[1, 0], [0, 1], [-1, -1]])
    np.testing.assert_allclose(mean_optimum(inst), [0.0, 0.0], atol=1e-15)


def test_mean_optimum_rank_deficient():
    with pytest.raises(AmbiguousOptimumError):
        mean_optimum(make_motivating_pair(1.0, [1, 1]))


def test_eval_and_gradient_machine():
    m = QuadraticMachine(SymMatrix(np.diag([2.0, 1.0])), np.array([1.0, 0.0]))
    v, g = eval_and_gradient(m, [0.0, 0.0])
    assert v == pytest.approx(1.0)
    np.testing.assert_allclose(g, [-2.0, 0.0])
    v, g = eval_and_gradient(m, [1.0, 0.0])
    assert v == 0.0
    np.testing.assert_allclose(g, 0.0)


def test_motivating_value_zero_at_optimum():
    inst = make_motivating_pair(3.0, [0.7, -1.2])
    v, g = eval_and_gradient(inst, [0.7, -1.2])
    assert v == 0.0
    np.testing.assert_allclose(g, 0.0)


def test_eval_dimension_mismatch(inst_a):
    with pytest.raises(InvalidInstanceError):
        eval_and_gradient(inst_a, [1.0, 2.0, 3.0])


def test_dimension_mismatch_between_machines():
    with pytest.raises(InvalidInstanceError):
        make_instance([np.eye(2), np.eye(3)], [[0, 0], [0, 0, 0]])


def test_asymmetric_rejected():
    with pytest.raises(InvalidInstanceError):
        SymMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_matrix_function_examples():
    S = SymMatrix(np.diag([0.5, 0.75]))
    np.testing.assert_allclose(matrix_function(S, lambda x: x).entries, S.entries)
    np.testing.assert_allclose(matrix_function(S, lambda x: x ** 2).entries, np.diag([0.25, 0.5625]))
    np.testing.assert_allclose(matrix_inverse(SymMatrix(np.diag([2.0, 1.0]))).entries, np.diag([0.5, 1.0]))


def test_matrix_power_routes_agree():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 5))
    S = SymMatrix(X @ X.T / 5)
    for k in range(9):
        direct = np.linalg.matrix_power(S.entries, k)
        np.testing.assert_allclose(matrix_power(S, k).entries, direct, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(matrix_power_by_squaring(S, k), direct, rtol=1e-12, atol=1e-12)


def test_singular_inverse_names_eigenvalue():
    with pytest.raises(SingularityError) as exc:
        matrix_inverse(SymMatrix(np.diag([1.0, 1e-14])))
    assert exc.value.eigenvalue == pytest.approx(1e-14)


def test_json_round_trip(tmp_path, inst_a):
    p = tmp_path / "a.json"
    save_instance(inst_a, p)
    back = load_instance(p)
    assert fingerprint(back) == fingerprint(inst_a)
    np.testing.assert_array_equal(back.hessian_stack, inst_a.hessian_stack)
    assert instance_to_json(back) == instance_to_json(inst_a)
    assert fingerprint(instance_from_dict(json.loads(p.read_text()))) == fingerprint(inst_a)


def test_claimed_values_checked():
    with pytest.raises(InvalidInstanceError):
        make_instance([np.diag([2.0, 1.0])], [[0, 0]], claimed_mu=1.5)
    with pytest.raises(InvalidInstanceError):
        make_instance([np.diag([2.0, 1.0])], [[0, 0]], claimed_smoothness=1.0)

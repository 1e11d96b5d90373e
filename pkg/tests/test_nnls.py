import numpy as np
import pytest

from convkernel.nnls import NnlsError, kkt_violation, nnls_dense, nnls_gram, nnls_solve
from oracles import nnls_enumerate


def test_identity_clips():
    sol = nnls_dense(np.eye(3), np.array([1.0, -2.0, 3.0]))
    np.testing.assert_allclose(sol.weights, [1, 0, 3], atol=1e-15)
    assert sol.residual_norm_sq == pytest.approx(4.0, abs=1e-12)


def test_single_column_exact():
    sol = nnls_dense(np.array([[1.0], [1.0]]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(sol.weights, [1.0])
    assert sol.residual_norm_sq == pytest.approx(0.0, abs=1e-14)


def test_random_6x4_against_enumeration():
    g = np.random.default_rng(42)
    M, b = g.standard_normal((6, 4)), g.standard_normal(6)
    sol = nnls_dense(M, b)
    best, best_v = nnls_enumerate(M, b)
    assert abs(sol.residual_norm_sq - best) <= 1e-10
    np.testing.assert_allclose(sol.weights, best_v, atol=1e-9)
    assert sol.kkt_violation <= 1e-10


def test_operator_form_matches_dense():
    g = np.random.default_rng(3)
    M, b = g.standard_normal((9, 5)), g.standard_normal(9)
    a = nnls_solve(lambda v: M @ v, lambda r: M.T @ r, b)
    d = nnls_dense(M, b)
    np.testing.assert_allclose(a.weights, d.weights, atol=1e-12)


def test_duplicate_columns_reported_dependent():
    g = np.random.default_rng(4)
    c = g.standard_normal(6)
    M = np.column_stack([c, c, g.standard_normal(6)])
    sol = nnls_dense(M, 2 * c)
    assert sol.residual_norm_sq <= 1e-12
    assert np.all(sol.weights >= 0)


def test_zero_rhs():
    sol = nnls_dense(np.ones((3, 2)), np.zeros(3))
    np.testing.assert_array_equal(sol.weights, 0)


def test_kkt_violation_detects_bad_point():
    G = np.eye(2)
    c = np.array([1.0, 1.0])
    assert kkt_violation(G, c, np.zeros(2)) > 0.5
    assert kkt_violation(G, c, np.ones(2)) == 0.0


def test_nonfinite_rejected():
    with pytest.raises((ValueError, NnlsError)):
        nnls_gram(np.array([[np.nan]]), np.array([1.0]), 1.0)

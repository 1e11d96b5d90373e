import numpy as np
import pytest

from convkernel.nnls import nnls_dense
from convkernel.nnsp import (
    CirculantDictionary,
    DenseDictionary,
    MultivariateDictionary,
    SolverConfig,
    SparseKernel,
    TensorDictionary,
    UnivariateDictionary,
    brute_force_oracle,
    nnsp_solve,
    one_shot_kernel,
)
from oracles import shift_matrix

PULSE = np.array([1.0, 0, 0, 0, 1, 0, 0, 0])


def test_pulse_train_lag4():
    k = nnsp_solve(UnivariateDictionary(PULSE), 1)
    assert k.support == (4,)
    assert k.weights == pytest.approx((1.0,))
    assert k.loss == pytest.approx(0.0, abs=1e-12)


def test_oracle_agrees_on_pulse_train():
    k = brute_force_oracle(UnivariateDictionary(PULSE), 1)
    assert k.support == (4,) and k.loss == pytest.approx(0.0, abs=1e-12)
    assert "oracle" in k.flags


def test_tau_all_lags_is_plain_nnls():
    x = np.random.default_rng(1).standard_normal(6)
    k = nnsp_solve(UnivariateDictionary(x), 5)
    ref = nnls_dense(shift_matrix(x), x)
    assert "tau-equals-all-lags" in k.flags
    assert k.loss == pytest.approx(ref.residual_norm_sq, abs=1e-10)


def test_oracle_bounds_greedy_T8():
    x = np.random.default_rng(2).standard_normal(8)
    d = UnivariateDictionary(x)
    assert nnsp_solve(d, 2).loss >= brute_force_oracle(d, 2).loss - 1e-12


def test_dictionary_matches_explicit_matrix():
    g = np.random.default_rng(3)
    x, r = g.standard_normal(7), g.standard_normal(7)
    A = shift_matrix(x)
    d = UnivariateDictionary(x)
    np.testing.assert_allclose(d.correlate(r), A.T @ r, atol=1e-12)
    np.testing.assert_allclose(d.gram([2, 5]), A[:, [1, 4]].T @ A[:, [1, 4]], atol=1e-12)
    np.testing.assert_allclose(d.rhs([2, 5]), A[:, [1, 4]].T @ x, atol=1e-12)
    np.testing.assert_allclose(d.synthesize([2, 5], [0.5, 1.5]), A[:, [1, 4]] @ [0.5, 1.5], atol=1e-12)


def test_tensor_dictionary_uses_mode_fibers():
    X = np.random.default_rng(4).standard_normal((2, 3, 9))
    a = TensorDictionary(X)
    b = MultivariateDictionary(X.reshape(6, 9))
    np.testing.assert_allclose(a.autocorrelation, b.autocorrelation, atol=1e-12)


def test_kernel_invariants():
    for seed in range(20):
        x = np.random.default_rng(seed).standard_normal(12)
        k = nnsp_solve(UnivariateDictionary(x), 3)
        assert len(k.support) <= 3
        assert all(w > 0 for w in k.weights)
        assert list(k.support) == sorted(k.support)
        th = k.theta()
        assert th[0] == 1.0 and np.all(th[1:] <= 0)


def test_greedy_not_worse_than_one_shot():
    for seed in range(30):
        d = UnivariateDictionary(np.random.default_rng(seed).standard_normal(10))
        assert nnsp_solve(d, 2).loss <= one_shot_kernel(d, 2).loss + 1e-12


def test_abs_selection_still_feasible():
    x = np.random.default_rng(5).standard_normal(10)
    k = nnsp_solve(UnivariateDictionary(x), 2, SolverConfig(selection="abs"))
    assert k.loss <= float(x @ x) + 1e-12


def test_dense_dictionary_generic_path():
    g = np.random.default_rng(6)
    A, y = g.random((10, 5)), g.random(10)
    k = nnsp_solve(DenseDictionary(A, y), 5)
    assert k.loss == pytest.approx(nnls_dense(A, y).residual_norm_sq, abs=1e-10)


@pytest.mark.parametrize("tau", [0, 8, 2.5])
def test_bad_tau(tau):
    with pytest.raises(ValueError):
        nnsp_solve(UnivariateDictionary(PULSE), tau)


def test_zero_series_rejected():
    with pytest.raises(ValueError):
        nnsp_solve(UnivariateDictionary(np.zeros(5)), 1)


def test_sparse_kernel_validation():
    with pytest.raises(ValueError):
        SparseKernel(T=5, tau=1, support=(3, 1), weights=(0.1, 0.2), loss=0.0)
    with pytest.raises(ValueError):
        SparseKernel(T=5, tau=2, support=(5,), weights=(0.1,), loss=0.0)
    with pytest.raises(ValueError):
        SparseKernel(T=5, tau=2, support=(1,), weights=(-0.1,), loss=0.0)


def test_theta_definition():
    k = SparseKernel(T=4, tau=1, support=(1,), weights=(0.5,), loss=0.0)
    np.testing.assert_array_equal(k.theta(), [1, -0.5, 0, 0])
    np.testing.assert_array_equal(SparseKernel(T=4, tau=1, support=(), weights=(), loss=0.0).theta(), [1, 0, 0, 0])


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(selection="largest")
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)


def test_circulant_dictionary_is_base_of_regimes():
    for cls in (UnivariateDictionary, MultivariateDictionary, TensorDictionary):
        assert issubclass(cls, CirculantDictionary)

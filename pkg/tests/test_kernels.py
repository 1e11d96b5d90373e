import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convkernel.kernels import (
    SeriesBundle,
    evaluate_loss,
    kernel_from_json,
    kernel_to_json,
    kernel_to_theta,
    learn_kernel,
    learn_spatial_kernel,
)
from convkernel.nnsp import SparseKernel

PULSE = np.array([1.0, 0, 0, 0, 1, 0, 0, 0])


def test_univariate_periodic():
    k = learn_kernel(SeriesBundle("univariate", PULSE), 1)
    assert k.support == (4,) and k.weights == pytest.approx((1.0,)) and k.loss == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 10**6))
def test_copies_give_same_kernel(copies, tau, seed):
    x = np.random.default_rng(seed).standard_normal(9)
    a = learn_kernel(SeriesBundle("univariate", x), tau)
    b = learn_kernel(SeriesBundle("multivariate", np.tile(x, (copies, 1))), tau)
    assert a.support == b.support
    np.testing.assert_allclose(a.weights, b.weights, rtol=1e-9)


def test_weekly_synthetic_support():
    from convkernel.dataio import synth_seasonal

    X = synth_seasonal((6, 6, 504), [(24, 1.0), (168, 0.6)], 0.05, 7, noise_ar=0.5)
    k = learn_kernel(SeriesBundle("tensor3", X), 4)
    assert {1, 168} <= set(k.support)


def test_constant_input_flagged():
    k = learn_kernel(SeriesBundle("multivariate", np.full((2, 6), 3.0)), 2)
    assert "constant-input" in k.flags and k.support == (1,) and k.loss == 0.0


def test_all_zero_rejected():
    with pytest.raises(ValueError):
        learn_kernel(SeriesBundle("univariate", np.zeros(6)), 1)


def test_bundle_validation():
    with pytest.raises(ValueError):
        SeriesBundle("univariate", np.ones((2, 5)))
    with pytest.raises(ValueError):
        SeriesBundle("univariate", np.ones(2))
    assert SeriesBundle.from_array(np.ones((2, 3, 4))).kind == "tensor3"


def test_mean_centered():
    b = SeriesBundle("multivariate", np.array([[1.0, 2, 3], [5, 5, 8]])).mean_centered()
    np.testing.assert_allclose(b.data.mean(axis=-1), 0, atol=1e-15)


def test_evaluate_loss_identity_and_periodic():
    X = np.random.default_rng(0).standard_normal((3, 7))
    e1 = SparseKernel(T=7, tau=1, support=(), weights=(), loss=0.0)
    assert evaluate_loss(SeriesBundle("multivariate", X), e1) == pytest.approx(np.sum(X * X))
    k = SparseKernel(T=8, tau=1, support=(4,), weights=(1.0,), loss=0.0)
    assert evaluate_loss(SeriesBundle("univariate", PULSE), k) == 0.0
    with pytest.raises(ValueError):
        evaluate_loss(SeriesBundle("univariate", PULSE[:6]), k)


def test_learned_loss_matches_evaluate():
    X = np.random.default_rng(1).standard_normal((2, 3, 20))
    b = SeriesBundle("tensor3", X)
    k = learn_kernel(b, 3)
    assert k.loss == pytest.approx(evaluate_loss(b, k), rel=1e-9)


def test_theta_positions():
    k = SparseKernel(T=150, tau=2, support=(1, 149), weights=(0.5, 0.5), loss=0.0)
    th = kernel_to_theta(k)
    # lag l sits at 1-based position l + 1
    assert th[1] == -0.5 and th[149] == -0.5 and th[0] == 1.0


def test_json_roundtrip_and_layout():
    k = learn_kernel(SeriesBundle("univariate", PULSE), 1)
    text = kernel_to_json(k, {"tau": 1})
    obj = json.loads(text)
    assert list(obj) == ["T", "tau", "support", "weights", "loss", "regime", "config", "flags"]
    assert '"weights": [1.0]' in text
    back = kernel_from_json(text)
    assert back.support == k.support and back.weights == k.weights and back.loss == k.loss
    with pytest.raises(ValueError):
        kernel_from_json('{"T": 3}')


def test_json_floats_exact():
    k = SparseKernel(T=9, tau=2, support=(2, 5), weights=(0.1, 1 / 3), loss=12.000000000000002)
    back = kernel_from_json(kernel_to_json(k))
    assert back.weights == k.weights and back.loss == k.loss


def test_spatial_kernel_mode1():
    g = np.random.default_rng(2)
    X = g.standard_normal((10, 3, 4))
    k = learn_spatial_kernel(X, 1, 2)
    assert k.T == 10 and "mode-1" in k.flags
    ref = learn_kernel(SeriesBundle("tensor3", np.moveaxis(X, 0, -1)), 2)
    assert k.support == ref.support

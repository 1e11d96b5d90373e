"""Sparse non-negative convolutional kernel learning for time series.

Kernels are learned by non-negative subspace pursuit over implicit circulant
dictionaries, and can be used as circulant regularizers in masked CP tensor
factorization.
"""

from convkernel.circconv import circ_conv, circ_corr_all_lags, circulant_apply, synth_support
from convkernel.kernels import (
    SeriesBundle,
    evaluate_loss,
    kernel_from_json,
    kernel_to_json,
    kernel_to_theta,
    learn_kernel,
    learn_spatial_kernel,
)
from convkernel.nnls import NnlsError, NnlsSolution, nnls_dense, nnls_solve
from convkernel.nnsp import (
    CirculantDictionary,
    MultivariateDictionary,
    SolverConfig,
    SparseKernel,
    TensorDictionary,
    UnivariateDictionary,
    brute_force_oracle,
    nnsp_solve,
)
from convkernel.tensor import as_tensor, fold, khatri_rao, modal_product, unfold, vec
from convkernel.tensorfact import (
    FactorModel,
    FitConfig,
    ObservationMask,
    make_mask,
    rse,
    tf_fit,
    tf_gradients,
    tf_objective,
)

__version__ = "0.1.0"

__all__ = [
    "circ_conv",
    "circ_corr_all_lags",
    "circulant_apply",
    "synth_support",
    "SeriesBundle",
    "evaluate_loss",
    "kernel_from_json",
    "kernel_to_json",
    "kernel_to_theta",
    "learn_kernel",
    "learn_spatial_kernel",
    "NnlsError",
    "NnlsSolution",
    "nnls_dense",
    "nnls_solve",
    "CirculantDictionary",
    "MultivariateDictionary",
    "SolverConfig",
    "SparseKernel",
    "TensorDictionary",
    "UnivariateDictionary",
    "brute_force_oracle",
    "nnsp_solve",
    "as_tensor",
    "fold",
    "khatri_rao",
    "modal_product",
    "unfold",
    "vec",
    "FactorModel",
    "FitConfig",
    "ObservationMask",
    "make_mask",
    "rse",
    "tf_fit",
    "tf_gradients",
    "tf_objective",
]

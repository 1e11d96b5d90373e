"""Kernel learning for univariate, multivariate and third-order tensor series."""

import json
import logging
from dataclasses import dataclass, replace

import numpy as np

from convkernel.circconv import circ_conv
from convkernel.nnsp import (
    MultivariateDictionary,
    SolverConfig,
    SparseKernel,
    TensorDictionary,
    UnivariateDictionary,
    nnsp_solve,
)
from convkernel.tensor import as_tensor

log = logging.getLogger(__name__)

KINDS = {"univariate": 1, "multivariate": 2, "tensor3": 3}
_DICTIONARIES = {
    "univariate": UnivariateDictionary,
    "multivariate": MultivariateDictionary,
    "tensor3": TensorDictionary,
}


@dataclass(frozen=True)
class SeriesBundle:
    """A stack of equally long series with time on the last axis.

    ``univariate`` is a length-``T`` vector, ``multivariate`` an ``N x T``
    matrix whose rows are series, ``tensor3`` an ``M x N x T`` tensor whose
    mode-3 fibers are series.
    """

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bundle kind {self.kind!r}; expected one of {sorted(KINDS)}")
        data = as_tensor(self.data)
        if data.ndim != KINDS[self.kind]:
            raise ValueError(f"{self.kind} bundle needs order-{KINDS[self.kind]} data, got shape {data.shape}")
        if data.shape[-1] < 3:
            raise ValueError(f"series must have at least 3 time steps, got {data.shape[-1]}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data):
        kind = {v: k for k, v in KINDS.items()}.get(np.ndim(data))
        if kind is None:
            raise ValueError(f"cannot infer bundle kind from an order-{np.ndim(data)} array")
        return cls(kind, data)

    @property
    def T(self):
        return self.data.shape[-1]

    def mean_centered(self):
        return SeriesBundle(self.kind, self.data - self.data.mean(axis=-1, keepdims=True))


def learn_kernel(bundle, tau, cfg=None):
    """Learn a single ``tau``-sparse kernel shared by every series in ``bundle``.

    A bundle whose series are all constant fits every lag perfectly; the lag-1
    kernel with unit weight is returned and flagged ``constant-input``.
    """
    cfg = cfg or SolverConfig()
    data = bundle.data
    if not np.any(data):
        raise ValueError("cannot learn a kernel from all-zero data")
    if np.all(data == data[..., :1]):
        log.warning("every series is constant; returning the lag-1 kernel")
        if not 1 <= tau <= bundle.T - 1:
            raise ValueError(f"sparsity level must lie in [1, {bundle.T - 1}], got {tau}")
        k = SparseKernel(T=bundle.T, tau=tau, support=(1,), weights=(1.0,), loss=0.0,
                         regime=bundle.kind, flags=("constant-input",))
        return _with_loss(k, evaluate_loss(bundle, k))
    return nnsp_solve(_DICTIONARIES[bundle.kind](data), tau, cfg)


def _with_loss(kernel, loss):
    return replace(kernel, loss=float(loss))


def learn_spatial_kernel(tensor, mode, tau, cfg=None):
    """Learn a kernel along a spatial mode by treating it as the time axis.

    ``mode`` is 1-based; the tensor's mode is moved last and the remaining
    fibers are used as the series.
    """
    tensor = as_tensor(tensor)
    if tensor.ndim != 3 or not 1 <= mode <= 3:
        raise ValueError("spatial kernels need a third-order tensor and a mode in 1..3")
    moved = np.moveaxis(tensor, mode - 1, -1)
    kernel = learn_kernel(SeriesBundle("tensor3", moved), tau, cfg)
    return _replace_flags(kernel, kernel.flags + (f"mode-{mode}",))


def _replace_flags(kernel, flags):
    return replace(kernel, flags=tuple(flags))


def kernel_to_theta(kernel):
    """Dense ``theta = (1, -w_1, ..., -w_{T-1})``."""
    return kernel.theta()


def evaluate_loss(bundle, kernel):
    """``sum over series of ||circ_conv(theta, series)||^2``."""
    if kernel.T != bundle.T:
        raise ValueError(f"kernel length {kernel.T} does not match series length {bundle.T}")
    y = circ_conv(kernel.theta(), bundle.data)
    return float(np.sum(y * y))


def _num(x):
    text = format(float(x), ".17g")
    return text if any(ch in text for ch in ".en") else text + ".0"


def kernel_to_json(kernel, config=None):
    """Serialize with a fixed field order and 17 significant digits for floats."""
    cfg = json.dumps(config or {}, sort_keys=True)
    lines = [
        "{",
        f'  "T": {kernel.T},',
        f'  "tau": {kernel.tau},',
        f'  "support": [{", ".join(str(l) for l in kernel.support)}],',
        f'  "weights": [{", ".join(_num(w) for w in kernel.weights)}],',
        f'  "loss": {_num(kernel.loss)},',
        f'  "regime": {json.dumps(kernel.regime)},',
        f'  "config": {cfg},',
        f'  "flags": {json.dumps(list(kernel.flags))}',
        "}",
    ]
    return "\n".join(lines) + "\n"


def kernel_from_json(text):
    obj = json.loads(text)
    try:
        return SparseKernel(
            T=int(obj["T"]),
            tau=int(obj["tau"]),
            support=tuple(int(l) for l in obj["support"]),
            weights=tuple(float(w) for w in obj["weights"]),
            loss=float(obj["loss"]),
            regime=obj.get("regime", ""),
            flags=tuple(obj.get("flags", ())),
        )
    except KeyError as exc:
        raise ValueError(f"kernel JSON is missing field {exc}") from None

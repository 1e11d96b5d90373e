"""Dense tensor algebra: unfolding, vectorization, Khatri-Rao and modal products.

Tensors are plain C-ordered ``numpy.ndarray`` objects of order 1 to 4. Modes
are 1-based throughout, matching the usual CP notation.

The unfolding follows the Kolda-Bader convention: the mode-``k`` unfolding of
a tensor with shape ``(n1, ..., nd)`` is ``n_k x prod(n_j, j != k)`` and the
remaining modes are laid out with the *lowest* mode varying fastest. For a
``2 x 2 x 2`` tensor ``X[i, j, k] = 4i + 2j + k`` (0-based)::

    unfold(X, 3) == [[0, 4, 2, 6],
                     [1, 5, 3, 7]]

column ``c`` of that matrix holds ``X[i, j, :]`` with ``c = i + 2 j``. With
this layout ``vec(X) == vec(unfold(X, 1))`` and a CP model with factors
``W, U, V`` satisfies ``unfold(Y, 1) == W @ khatri_rao(V, U).T``.
"""

import numpy as np

MAX_ORDER = 4


def as_tensor(data, dtype=np.float64):
    """Validate external input and return it as a C-ordered float tensor.

    Raises ``ValueError`` if the order is outside 1..4, a dimension is zero,
    or any entry is NaN/Inf.
    """
    t = np.ascontiguousarray(data, dtype=dtype)
    if not 1 <= t.ndim <= MAX_ORDER:
        raise ValueError(f"tensor order must be between 1 and {MAX_ORDER}, got {t.ndim}")
    if 0 in t.shape:
        raise ValueError(f"tensor dimensions must be positive, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains NaN or Inf entries")
    return t


def _check_mode(ndim, mode):
    if not 1 <= mode <= ndim:
        raise ValueError(f"mode {mode} out of range for a tensor of order {ndim}")


def unfold(t, mode):
    """Mode-``mode`` unfolding of ``t`` (1-based mode).

    Returns a fresh ``(t.shape[mode-1], -1)`` matrix with the remaining modes
    ordered lowest-fastest.
    """
    t = np.asarray(t)
    _check_mode(t.ndim, mode)
    moved = np.moveaxis(t, mode - 1, 0)
    return np.array(moved.reshape(t.shape[mode - 1], -1, order="F"), order="C")


def fold(matrix, mode, shape):
    """Inverse of :func:`unfold`."""
    shape = tuple(shape)
    _check_mode(len(shape), mode)
    matrix = np.asarray(matrix)
    rest = shape[: mode - 1] + shape[mode:]
    expected = (shape[mode - 1], int(np.prod(rest, dtype=np.int64)))
    if matrix.shape != expected:
        raise ValueError(f"cannot fold a {matrix.shape} matrix into mode {mode} of {shape}")
    moved = matrix.reshape((shape[mode - 1],) + rest, order="F")
    return np.ascontiguousarray(np.moveaxis(moved, 0, mode - 1))


def vec(t):
    """Column-major vectorization, so that ``vec(t) == vec(unfold(t, 1))``."""
    return np.asarray(t).reshape(-1, order="F").copy()


def unvec(v, shape):
    """Inverse of :func:`vec`."""
    return np.ascontiguousarray(np.asarray(v).reshape(tuple(shape), order="F"))


def khatri_rao(A, B):
    """Column-wise Kronecker product of an ``n x R`` and an ``m x R`` matrix.

    Row ``i * m + j`` of the result is ``A[i] * B[j]``.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"column counts differ: {A.shape[1]} != {B.shape[1]}")
    return np.einsum("ir,jr->ijr", A, B).reshape(A.shape[0] * B.shape[0], A.shape[1])


def modal_product(t, w, mode):
    """Contract mode ``mode`` of ``t`` against the vector ``w``.

    Each entry of the result is the inner product of a mode-``mode`` fiber of
    ``t`` with ``w``; the contracted mode is dropped.
    """
    t = np.asarray(t)
    w = np.asarray(w)
    _check_mode(t.ndim, mode)
    if w.ndim != 1 or w.shape[0] != t.shape[mode - 1]:
        raise ValueError(
            f"vector of length {w.shape[0] if w.ndim == 1 else w.shape} does not match "
            f"mode {mode} of size {t.shape[mode - 1]}"
        )
    return np.tensordot(t, w, axes=([mode - 1], [0]))

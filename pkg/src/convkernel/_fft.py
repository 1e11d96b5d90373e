"""Complex FFT along the last axis: iterative radix-2 with Bluestein fallback.

Batched over all leading axes. Twiddle and chirp tables are cached per length
behind ``functools.lru_cache``; cached arrays are marked read-only.
"""

from functools import lru_cache

import numpy as np


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=64)
def _bit_reverse(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=64)
def _twiddles(n):
    tw = np.exp(-2j * np.pi * np.arange(n // 2) / n)
    tw.setflags(write=False)
    return tw


def _radix2(a, inverse):
    n = a.shape[-1]
    lead = a.shape[:-1]
    out = a[..., _bit_reverse(n)].astype(np.complex128, copy=True)
    tw_full = _twiddles(n)
    if inverse:
        tw_full = tw_full.conj()
    size = 2
    while size <= n:
        half = size // 2
        tw = tw_full[:: n // size][:half]
        blocks = out.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        blocks[..., half:] = even - odd
        blocks[..., :half] = even + odd
        size *= 2
    return out


@lru_cache(maxsize=64)
def _chirp(n):
    k = np.arange(n)
    # k^2 mod 2n keeps the phase argument small for large n
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << (2 * n - 1).bit_length()
    kernel = np.zeros(m, dtype=np.complex128)
    kernel[:n] = chirp.conj()
    kernel[m - n + 1 :] = chirp[1:][::-1].conj()
    kernel_hat = _radix2(kernel, inverse=False)
    chirp.setflags(write=False)
    kernel_hat.setflags(write=False)
    return chirp, kernel_hat, m


def _bluestein(a, inverse):
    n = a.shape[-1]
    chirp, kernel_hat, m = _chirp(n)
    if inverse:
        chirp = chirp.conj()
        kernel_hat = np.conj(kernel_hat[(-np.arange(m)) % m])
    padded = np.zeros(a.shape[:-1] + (m,), dtype=np.complex128)
    padded[..., :n] = a * chirp
    conv = _radix2(_radix2(padded, False) * kernel_hat, True) / m
    return conv[..., :n] * chirp


def fft(a):
    """Forward DFT along the last axis (no normalization)."""
    a = np.asarray(a)
    n = a.shape[-1]
    if n == 1:
        return a.astype(np.complex128)
    if _is_pow2(n):
        return _radix2(a, inverse=False)
    return _bluestein(a, inverse=False)


def ifft(a):
    """Inverse DFT along the last axis, normalized by ``1/n``."""
    a = np.asarray(a)
    n = a.shape[-1]
    if n == 1:
        return a.astype(np.complex128)
    if _is_pow2(n):
        return _radix2(a, inverse=True) / n
    return _bluestein(a, inverse=True) / n


def dft_direct(a):
    """O(n^2) reference DFT along the last axis."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return a @ mat.T

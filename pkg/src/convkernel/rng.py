"""Portable seeded random streams.

Every stream is PCG64 (numpy's implementation of PCG XSL-RR 128/64) seeded
through ``SeedSequence([seed, stream])``. Only the raw 64-bit outputs are
consumed, and the transforms below are fixed, so another PCG64 + SeedSequence
implementation reproduces the same masks and synthetic data:

* uniform: ``(raw >> 11) * 2**-53`` in ``[0, 1)``
* normal: Box-Muller on consecutive pairs ``(u1, u2)`` with
  ``u1 = ((raw >> 11) + 1) * 2**-53`` in ``(0, 1]``, giving
  ``sqrt(-2 ln u1) * cos(2 pi u2)`` and ``sqrt(-2 ln u1) * sin(2 pi u2)``
"""

import numpy as np

MASK_STREAM = 1
SYNTH_STREAM = 2
INIT_STREAM = 3
NOISE_STREAM = 4

_TWO53 = 2.0**-53


def raw(seed, n, stream=0):
    """``n`` raw unsigned 64-bit draws."""
    bitgen = np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)]))
    return bitgen.random_raw(int(n))


def uniform(seed, n, stream=0):
    return (raw(seed, n, stream) >> np.uint64(11)).astype(np.float64) * _TWO53


def normal(seed, n, stream=0):
    n = int(n)
    m = (n + 1) // 2
    bits = raw(seed, 2 * m, stream) >> np.uint64(11)
    u1 = (bits[0::2].astype(np.float64) + 1.0) * _TWO53
    u2 = bits[1::2].astype(np.float64) * _TWO53
    rad = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * m)
    out[0::2] = rad * np.cos(2.0 * np.pi * u2)
    out[1::2] = rad * np.sin(2.0 * np.pi * u2)
    return out[:n]

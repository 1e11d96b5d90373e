import numpy as np
import pytest

from convkernel._fft import dft_direct, fft, ifft


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 17, 64, 100, 127, 150, 504, 1024, 1343])
def test_fft_matches_numpy(n):
    g = np.random.default_rng(n)
    x = g.standard_normal(n) + 1j * g.standard_normal(n)
    ref = np.fft.fft(x)
    assert np.max(np.abs(fft(x) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
    np.testing.assert_allclose(ifft(fft(x)), x, atol=1e-12)


@pytest.mark.parametrize("n", [1, 6, 7, 16])
def test_fft_matches_direct_dft(n):
    x = np.random.default_rng(n).standard_normal(n)
    np.testing.assert_allclose(fft(x), dft_direct(x), atol=1e-12)

"""Brute-force reference solvers shared by the unit and acceptance tests."""

import itertools

import numpy as np


def nnls_enumerate(M, b):
    """Best objective over every passive subset whose LS solution is feasible."""
    k = M.shape[1]
    best = float(b @ b)
    best_v = np.zeros(k)
    for size in range(1, k + 1):
        for S in itertools.combinations(range(k), size):
            S = list(S)
            vS, *_ = np.linalg.lstsq(M[:, S], b, rcond=None)
            if np.all(vS >= 0):
                r = b - M[:, S] @ vS
                f = float(r @ r)
                if f < best:
                    best = f
                    best_v = np.zeros(k)
                    best_v[S] = vS
    return best, best_v


def shift_matrix(x):
    """Columns are x shifted by lags 1..T-1."""
    return np.column_stack([np.roll(x, l) for l in range(1, len(x))])

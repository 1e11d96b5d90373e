"""Active-set (Lawson-Hanson) non-negative least squares.

The solver works on the normal equations: given ``G = M^T M``, ``c = M^T b``
and ``||b||^2`` it minimizes ``||b - M v||^2`` over ``v >= 0``. That lets the
circulant dictionaries in :mod:`convkernel.nnsp` hand over a Gram matrix built
from autocorrelations instead of the (possibly huge) matrix ``M``.

Passive-set systems are solved by Cholesky with diagonal pivoting. Pivots whose
residual diagonal falls below ``PIVOT_RTOL * max(diag)`` mark a column as
numerically dependent on the columns already factored; such variables get zero
weight and are excluded from re-entry for the rest of the solve (reported in
``NnlsSolution.dependent`` and left out of the KKT check). Collinear columns are routine here (shifts of a constant or
periodic series coincide), so this path is deterministic rather than an error.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

PIVOT_RTOL = 1e-12
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class NnlsSolution:
    weights: np.ndarray
    residual_norm_sq: float
    kkt_violation: float
    iterations: int
    dependent: tuple = field(default=())


class NnlsError(RuntimeError):
    """NNLS failed; ``best`` carries the last feasible iterate when available."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def _pivoted_cholesky_keep(A, rtol=PIVOT_RTOL):
    """Indices kept by diagonally pivoted Cholesky, in pivot order."""
    n = A.shape[0]
    d = np.diag(A).astype(np.float64).copy()
    dmax = d.max(initial=0.0)
    if dmax <= 0:
        return []
    L = np.zeros((n, n))
    remaining = list(range(n))
    kept = []
    for s in range(n):
        # largest residual diagonal, smallest index on ties
        p = max(remaining, key=lambda i: (d[i], -i))
        if d[p] <= rtol * dmax:
            break
        L[p, s] = np.sqrt(d[p])
        remaining.remove(p)
        for i in remaining:
            L[i, s] = (A[i, p] - L[i, :s] @ L[p, :s]) / L[p, s]
            d[i] -= L[i, s] ** 2
        kept.append(p)
    return kept


def _solve_passive(G, c):
    """Least-squares solve of ``G z = c`` on a PSD block; returns ``(z, dropped)``."""
    n = len(c)
    kept = sorted(_pivoted_cholesky_keep(G))
    z = np.zeros(n)
    dropped = [i for i in range(n) if i not in kept]
    if not kept:
        return z, dropped
    Gk = G[np.ix_(kept, kept)]
    ck = c[kept]
    try:
        factor = linalg.cho_factor(Gk, lower=True, check_finite=False)
        zk = linalg.cho_solve(factor, ck, check_finite=False)
        zk += linalg.cho_solve(factor, ck - Gk @ zk, check_finite=False)
    except linalg.LinAlgError:
        zk = linalg.lstsq(Gk, ck, check_finite=False)[0]
    z[kept] = zk
    return z, dropped


def kkt_violation(G, c, v, exclude=()):
    """Scaled KKT violation of ``v`` for ``min ||b - Mv||^2, v >= 0``.

    With ``g = G v - c`` and ``scale = max|c|`` (1 if zero): positive entries
    need ``|g_i| <= tol * scale`` and zero entries ``g_i >= -tol * scale``.
    Returns the largest violation divided by ``scale``.
    """
    g = G @ v - c
    scale = float(np.abs(c).max(initial=0.0)) or 1.0
    viol = np.where(v > 0, np.abs(g), np.maximum(-g, 0.0))
    if len(exclude):
        viol[list(exclude)] = 0.0
    return float(viol.max(initial=0.0)) / scale


def nnls_gram(G, c, btb, tol=DEFAULT_TOL, max_iter=None):
    """NNLS from normal-equation data ``G = M^T M``, ``c = M^T b``, ``btb = ||b||^2``.

    ``residual_norm_sq`` is evaluated as ``btb - 2 v.c + v.G v`` (clipped at 0);
    callers that need it to full relative accuracy near zero should recompute
    the residual explicitly.
    """
    G = np.asarray(G, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    k = c.shape[0]
    if k < 1:
        raise ValueError("NNLS needs at least one variable")
    if G.shape != (k, k):
        raise ValueError(f"Gram matrix shape {G.shape} does not match {k} variables")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(c)) and np.isfinite(btb)):
        raise NnlsError("NaN or Inf in NNLS input")
    if max_iter is None:
        max_iter = 3 * k + 30

    G = 0.5 * (G + G.T)
    scale = float(np.abs(c).max(initial=0.0)) or 1.0
    v = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    blocked = np.zeros(k, dtype=bool)
    iterations = 0

    def fail(msg):
        best = _finish(G, c, btb, v, iterations, blocked)
        raise NnlsError(msg, best=best)

    while True:
        w = c - G @ v
        cand = ~passive & ~blocked & (w > tol * scale)
        if not cand.any():
            break
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[j] = True
        while True:
            iterations += 1
            if iterations > max_iter:
                fail(f"NNLS did not converge in {max_iter} iterations")
            P = np.flatnonzero(passive)
            zP, dropped = _solve_passive(G[np.ix_(P, P)], c[P])
            if not np.all(np.isfinite(zP)):
                fail("NaN encountered in passive-set solve")
            z = np.zeros(k)
            z[P] = zP
            dropped_idx = P[dropped]
            blocked[dropped_idx] = True
            ok = np.ones(k, dtype=bool)
            ok[dropped_idx] = False
            bad = P[(zP <= 0) | ~ok[P]]
            if len(bad) == 0:
                v = z
                break
            vb = v[bad]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(vb > 0, vb / (vb - z[bad]), 0.0)
            i = int(np.argmin(ratios))
            alpha = ratios[i]
            v = v + alpha * (z - v)
            v[bad[i]] = 0.0
            leaving = passive & (v <= 0)
            v[leaving] = 0.0
            passive &= ~leaving
            if not passive[j] and alpha == 0.0 and not blocked[j]:
                # j could not move off zero: treat as numerically dependent
                blocked[j] = True
    return _finish(G, c, btb, v, iterations, blocked)


def _finish(G, c, btb, v, iterations, blocked):
    v = np.where(v > 0, v, 0.0) + 0.0
    rss = max(float(btb - 2.0 * v @ c + v @ G @ v), 0.0)
    dependent = tuple(int(i) for i in np.flatnonzero(blocked & (v == 0)))
    return NnlsSolution(
        weights=v,
        residual_norm_sq=rss,
        kkt_violation=kkt_violation(G, c, v, exclude=dependent),
        iterations=iterations,
        dependent=dependent,
    )


def _check_adjoint(apply_M, apply_Mt, k, m, rng):
    x = rng.standard_normal(k)
    y = rng.standard_normal(m)
    lhs = float(np.dot(apply_M(x), y))
    rhs = float(np.dot(x, apply_Mt(y)))
    if abs(lhs - rhs) > 1e-8 * max(abs(lhs), abs(rhs), 1.0):
        raise ValueError(f"apply_M and apply_Mt are not adjoint ({lhs} vs {rhs})")


def nnls_solve(apply_M, apply_Mt, b, tol=DEFAULT_TOL, max_iter=None, check_adjoint=__debug__):
    """NNLS in operator form.

    ``apply_M`` maps a length-``k`` vector to a length-``m`` vector and
    ``apply_Mt`` is its adjoint. The Gram matrix is assembled with ``k``
    operator applications, so this is meant for small ``k``.
    """
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(apply_Mt(b), dtype=np.float64)
    k = c.shape[0]
    if k < 1:
        raise ValueError("NNLS needs at least one variable")
    if check_adjoint:
        _check_adjoint(apply_M, apply_Mt, k, b.shape[0], np.random.default_rng(0))
    G = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1.0
        G[:, j] = apply_Mt(apply_M(e))
    sol = nnls_gram(G, c, float(b @ b), tol=tol, max_iter=max_iter)
    r = b - apply_M(sol.weights)
    return NnlsSolution(
        weights=sol.weights,
        residual_norm_sq=float(r @ r),
        kkt_violation=sol.kkt_violation,
        iterations=sol.iterations,
        dependent=sol.dependent,
    )


def nnls_dense(M, b, tol=DEFAULT_TOL, max_iter=None):
    """Convenience wrapper for an explicit ``m x k`` matrix."""
    M = np.asarray(M, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != b.shape[0]:
        raise ValueError(f"matrix {M.shape} does not match right-hand side {b.shape}")
    return nnls_solve(lambda v: M @ v, lambda y: M.T @ y, b, tol=tol, max_iter=max_iter, check_adjoint=False)

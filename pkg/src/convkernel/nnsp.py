"""Non-negative subspace pursuit over implicit shift dictionaries.

The learning problem ``min_{w >= 0, ||w||_0 <= tau} ||x - A w||^2`` has one
dictionary column per lag ``l = 1..T-1``: the data with every series cyclically
shifted by ``l`` along time. Stacking several series (rows of a matrix or
fibers of a third-order tensor) only changes how the columns are vectorized,
so one solver serves all three regimes through :class:`Dictionary`.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from convkernel import circconv
from convkernel.nnls import DEFAULT_TOL, NnlsError, nnls_gram
from convkernel.tensor import unvec, vec

log = logging.getLogger(__name__)

ORACLE_MAX_SUPPORTS = 10**6


class NnspError(RuntimeError):
    pass


SELECTION_RULES = ("positive", "abs")


@dataclass(frozen=True)
class SolverConfig:
    """Subspace pursuit settings.

    ``selection`` picks how candidate lags are ranked from the residual
    correlations ``c = A^T r``: ``"positive"`` ranks by ``max(c, 0)`` and
    ``"abs"`` by ``|c|``. Under the non-negativity constraint a negatively
    correlated lag always receives zero weight, so ``"abs"`` can spend the
    whole candidate budget on useless lags and stall; the two rules coincide
    whenever the top correlations are positive (e.g. on non-negative data).
    """

    max_iter: int = 30
    min_decrease: float = 0.0
    nnls_tol: float = DEFAULT_TOL
    selection: str = "positive"

    def __post_init__(self):
        if self.selection not in SELECTION_RULES:
            raise ValueError(f"selection must be one of {SELECTION_RULES}, got {self.selection!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.min_decrease < 0:
            raise ValueError("min_decrease must be non-negative")


def _scores(corr, rule):
    return np.maximum(corr, 0.0) if rule == "positive" else np.abs(corr)


@dataclass(frozen=True)
class SparseKernel:
    """A learned kernel ``theta = (1, -w)`` stored through its support.

    ``support`` holds lags in ascending order and ``weights`` the matching
    strictly positive coefficients. ``loss`` is the summed squared residual
    ``sum ||theta * series||^2`` at the solution.
    """

    T: int
    tau: int
    support: tuple
    weights: tuple
    loss: float
    iterations: int = 0
    regime: str = ""
    flags: tuple = field(default=())

    def __post_init__(self):
        if len(self.support) != len(self.weights):
            raise ValueError("support and weights differ in length")
        if len(self.support) > self.tau:
            raise ValueError(f"{len(self.support)} lags exceed sparsity level {self.tau}")
        if list(self.support) != sorted(set(self.support)):
            raise ValueError("support must be strictly ascending")
        if any(not 1 <= l <= self.T - 1 for l in self.support):
            raise ValueError(f"lags must lie in [1, {self.T - 1}]")
        if any(not (w > 0 and math.isfinite(w)) for w in self.weights):
            raise ValueError("kernel weights must be finite and strictly positive")

    @property
    def weight_map(self):
        return dict(zip(self.support, self.weights))

    def theta(self):
        theta = np.zeros(self.T)
        theta[0] = 1.0
        for l, w in zip(self.support, self.weights):
            theta[l] = -w
        return theta


class Dictionary:
    """Linear map from lag weights (length ``T - 1``) to vectorized observations.

    Subclasses provide ``target``, ``correlate`` and ``synthesize``. The Gram
    helpers below fall back to probing ``synthesize``; circulant dictionaries
    override them with autocorrelation lookups.
    """

    T: int
    regime = "generic"

    @property
    def n_columns(self):
        return self.T - 1

    @property
    def target(self):
        raise NotImplementedError

    def correlate(self, r):
        raise NotImplementedError

    def synthesize(self, support, v):
        raise NotImplementedError

    @property
    def target_norm_sq(self):
        t = self.target
        return float(t @ t)

    def gram(self, support):
        cols = [self.synthesize([l], [1.0]) for l in support]
        return np.array([[a @ b for b in cols] for a in cols]).reshape(len(cols), len(cols))

    def rhs(self, support):
        t = self.target
        return np.array([self.synthesize([l], [1.0]) @ t for l in support])


class DenseDictionary(Dictionary):
    """Explicit ``n x (T-1)`` dictionary; column ``j`` is lag ``j + 1``. For tests."""

    def __init__(self, A, target):
        self.A = np.asarray(A, dtype=np.float64)
        self._target = np.asarray(target, dtype=np.float64)
        self.T = self.A.shape[1] + 1

    @property
    def target(self):
        return self._target

    def correlate(self, r):
        return self.A.T @ r

    def synthesize(self, support, v):
        idx = [l - 1 for l in support]
        return self.A[:, idx] @ np.asarray(v, dtype=np.float64)


class CirculantDictionary(Dictionary):
    """Shift dictionary of a stack of series with time on the last axis.

    Column ``l`` is ``vec(shift(X, l))``. For a matrix this is the column
    ``(x_{T-l+1}; ...; x_T; x_1; ...; x_{T-l})`` of time slices, and for a
    third-order tensor the same stacking of vectorized frontal slices.
    """

    regime = "stacked"
    ndim = None

    def __init__(self, data):
        data = np.ascontiguousarray(data, dtype=np.float64)
        if self.ndim is not None and data.ndim != self.ndim:
            raise ValueError(f"{type(self).__name__} expects order-{self.ndim} data, got {data.shape}")
        if data.shape[-1] < 2:
            raise ValueError("need at least two time steps")
        self.data = data
        self.T = data.shape[-1]
        self._acf = None

    @property
    def target(self):
        return vec(self.data)

    def correlate(self, r):
        return circconv.circ_corr_all_lags(self.data, unvec(r, self.data.shape))

    def synthesize(self, support, v):
        return vec(circconv.synth_support(self.data, support, v))

    @property
    def autocorrelation(self):
        """``acf[k] = sum over series of <x, shift(x, k)>`` for ``k = 0..T-1``."""
        if self._acf is None:
            acf = np.empty(self.T)
            acf[0] = float(np.sum(self.data * self.data))
            acf[1:] = circconv.circ_corr_all_lags(self.data, self.data)
            acf.setflags(write=False)
            self._acf = acf
        return self._acf

    @property
    def target_norm_sq(self):
        return float(self.autocorrelation[0])

    def gram(self, support):
        lags = np.asarray(support, dtype=np.intp)
        return self.autocorrelation[(lags[None, :] - lags[:, None]) % self.T]

    def rhs(self, support):
        return self.autocorrelation[np.asarray(support, dtype=np.intp)]


class UnivariateDictionary(CirculantDictionary):
    regime = "univariate"
    ndim = 1


class MultivariateDictionary(CirculantDictionary):
    regime = "multivariate"
    ndim = 2


class TensorDictionary(CirculantDictionary):
    regime = "tensor3"
    ndim = 3


TIE_RTOL = 1e-10


def _top_lags(lags, scores, k):
    """The ``k`` lags with the largest scores; smaller lag wins ties.

    Scores within ``TIE_RTOL * max|score|`` of the current best count as
    tied. Lags ``l`` and ``T - l`` score identically in exact arithmetic
    whenever the residual is the data itself, so an exact comparison would
    let rounding noise pick between them.
    """
    lags = np.asarray(lags)
    scores = np.asarray(scores, dtype=np.float64)
    slack = TIE_RTOL * float(np.max(np.abs(scores), initial=0.0))
    free = np.ones(len(lags), dtype=bool)
    chosen = []
    for _ in range(min(k, len(lags))):
        best = np.max(scores[free])
        pick = np.flatnonzero(free & (scores >= best - slack))
        i = pick[np.argmin(lags[pick])]
        chosen.append(int(lags[i]))
        free[i] = False
    return sorted(chosen)


def _nnls_on(dictionary, support, tol):
    sol = nnls_gram(dictionary.gram(support), dictionary.rhs(support), dictionary.target_norm_sq, tol=tol)
    return sol.weights


def _finalize(dictionary, tau, support, weights, iterations=0, flags=()):
    keep = [(int(l), float(w)) for l, w in zip(support, weights) if w > 0]
    lags = tuple(l for l, _ in keep)
    ws = tuple(w for _, w in keep)
    r = dictionary.target - dictionary.synthesize(lags, ws)
    return SparseKernel(
        T=dictionary.T,
        tau=tau,
        support=lags,
        weights=ws,
        loss=float(r @ r),
        iterations=iterations,
        regime=dictionary.regime,
        flags=tuple(flags),
    )


def _check_tau(dictionary, tau):
    if int(tau) != tau or tau < 1:
        raise ValueError(f"sparsity level must be a positive integer, got {tau}")
    if tau > dictionary.n_columns:
        raise ValueError(f"sparsity level {tau} exceeds the {dictionary.n_columns} available lags")


def nnsp_solve(dictionary, tau, cfg=None):
    """Learn a ``tau``-sparse non-negative lag vector by subspace pursuit.

    Each iteration adds the ``tau`` best-ranked lags (see
    :class:`SolverConfig`) by correlation with the residual to
    the current support, fits NNLS on the union, prunes back to the ``tau``
    largest weights, refits, and updates the residual. Iteration stops when
    the support repeats, when the squared residual fails to drop by more than
    ``cfg.min_decrease`` (the previous iterate is kept), or after
    ``cfg.max_iter`` iterations.
    """
    cfg = cfg or SolverConfig()
    _check_tau(dictionary, tau)
    flags = []
    if tau == dictionary.n_columns:
        flags.append("tau-equals-all-lags")
        log.warning("tau = T-1 makes the sparsity constraint vacuous (plain NNLS)")
    if dictionary.target_norm_sq == 0.0:
        raise ValueError("cannot learn a kernel from an all-zero series")

    target = dictionary.target
    all_lags = np.arange(1, dictionary.T)
    support, weights = [], np.zeros(0)
    r = target
    loss = dictionary.target_norm_sq
    seen = []
    iterations = 0
    for it in range(1, cfg.max_iter + 1):
        try:
            corr = dictionary.correlate(r)
            candidates = _top_lags(all_lags, _scores(corr, cfg.selection), tau)
            union = sorted(set(support) | set(candidates))
            w_union = _nnls_on(dictionary, union, cfg.nnls_tol)
            pruned = _top_lags(union, w_union, tau)
            w_pruned = _nnls_on(dictionary, pruned, cfg.nnls_tol)
        except NnlsError as exc:
            raise NnspError(f"NNLS failed in subspace pursuit iteration {it}: {exc}") from exc
        r_new = target - dictionary.synthesize(pruned, w_pruned)
        loss_new = float(r_new @ r_new)
        if it > 1 and not loss_new < loss - cfg.min_decrease:
            break
        support, weights, r, loss = pruned, w_pruned, r_new, loss_new
        iterations = it
        if loss == 0.0 or pruned in seen[-2:]:
            break
        seen.append(pruned)
    return _finalize(dictionary, tau, support, weights, iterations, flags)


def one_shot_kernel(dictionary, tau, cfg=None):
    """Baseline: NNLS on the ``tau`` lags ranked highest against the data itself."""
    cfg = cfg or SolverConfig()
    _check_tau(dictionary, tau)
    corr = dictionary.correlate(dictionary.target)
    lags = _top_lags(np.arange(1, dictionary.T), _scores(corr, cfg.selection), tau)
    return _finalize(dictionary, tau, lags, _nnls_on(dictionary, lags, cfg.nnls_tol), 1)


def brute_force_oracle(dictionary, tau, cfg=None):
    """Exact minimizer by enumerating every support of size ``tau``.

    Ties in loss (within ``1e-12 * ||x||^2``) go to the lexicographically
    smallest support.
    """
    cfg = cfg or SolverConfig()
    _check_tau(dictionary, tau)
    n = dictionary.n_columns
    count = math.comb(n, tau)
    if count > ORACLE_MAX_SUPPORTS:
        raise ValueError(f"{count} supports exceed the oracle limit of {ORACLE_MAX_SUPPORTS}")
    xx = dictionary.target_norm_sq
    best = None
    for lags in itertools.combinations(range(1, n + 1), tau):
        lags = list(lags)
        G = dictionary.gram(lags)
        c = dictionary.rhs(lags)
        sol = nnls_gram(G, c, xx, tol=cfg.nnls_tol)
        if best is None or sol.residual_norm_sq < best[0] - 1e-12 * xx:
            best = (sol.residual_norm_sq, lags, sol.weights)
    return _finalize(dictionary, tau, best[1], best[2], flags=("oracle",))

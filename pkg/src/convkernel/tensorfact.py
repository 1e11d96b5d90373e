"""Masked CP factorization with circulant (convolutional kernel) regularizers.

Minimizes, for a third-order ``Y`` observed on ``Omega``::

    f(W, U, V) = 1/2 ||P_Omega(Y_(1) - W (V kr U)^T)||_F^2
                 + gamma/2 (||C(theta_w) W||^2 + ||C(theta_u) U||^2 + ||C(theta_v) V||^2)

where ``C(theta)`` is the circulant matrix with first column ``theta``. Terms
whose kernel is absent are dropped. Factors are updated in the order
W, U, V; each update solves its SPD stationarity system by conjugate
gradient, warm-started at the current factor.

Each subproblem carries a small proximal ridge ``eps/2 ||F - F_old||^2``
(``eps = 1e-8 * mean diagonal of the data operator``): with a kernel whose
weights sum to 1 the circulant symbol vanishes at zero frequency, and the mask
can leave rows unobserved, so the plain system may be singular. Because the
ridge is centered on the current factor and CG decreases the quadratic
monotonically from its warm start, every update is non-increasing in ``f``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from convkernel import rng
from convkernel.circconv import circ_conv, circulant_gram_apply
from convkernel.tensor import fold, khatri_rao, unfold

RIDGE_RTOL = 1e-8
FACTORS = ("W", "U", "V")


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ObservationMask:
    """Observed-entry indicator for a tensor; ``True`` marks an observed entry."""

    observed: np.ndarray
    seed: int = None
    missing_rate: float = None

    def __post_init__(self):
        obs = np.ascontiguousarray(self.observed, dtype=bool)
        obs.setflags(write=False)
        object.__setattr__(self, "observed", obs)

    @classmethod
    def full(cls, shape):
        return cls(np.ones(tuple(shape), dtype=bool), missing_rate=0.0)

    @property
    def shape(self):
        return self.observed.shape

    @property
    def n_observed(self):
        return int(self.observed.sum())

    def project(self, x):
        """``P_Omega``: zero every unobserved entry."""
        return np.where(self.observed, x, 0.0)

    def project_complement(self, x):
        return np.where(self.observed, 0.0, x)

    def select(self, projection):
        if projection == "observed":
            return self.observed
        if projection == "missing":
            return ~self.observed
        if projection == "all":
            return np.ones(self.shape, dtype=bool)
        raise ValueError(f"unknown projection {projection!r}; use observed, missing or all")


def make_mask(shape, missing_rate, seed):
    """Uniform random mask with exactly ``round((1 - rate) * size)`` observed entries.

    Each entry gets a raw 64-bit key from the seeded mask stream (row-major
    order); the entries with the smallest keys (ties by position) are missing.
    """
    shape = tuple(int(s) for s in shape)
    if not 0.0 <= missing_rate < 1.0:
        raise ValueError(f"missing rate must lie in [0, 1), got {missing_rate}")
    size = math.prod(shape)
    n_observed = math.floor((1.0 - missing_rate) * size + 0.5)
    observed = np.ones(size, dtype=bool)
    n_missing = size - n_observed
    if n_missing:
        keys = rng.raw(seed, size, rng.MASK_STREAM)
        observed[np.argsort(keys, kind="stable")[:n_missing]] = False
    return ObservationMask(observed.reshape(shape), seed=int(seed), missing_rate=float(missing_rate))


@dataclass(frozen=True)
class FitConfig:
    cg_tol: float = 1e-8
    cg_iters: int = 100
    outer_iters: int = 50
    outer_tol: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class FactorModel:
    """CP factors ``W (M x R)``, ``U (N x R)``, ``V (T x R)`` with optional kernels."""

    W: np.ndarray
    U: np.ndarray
    V: np.ndarray
    gamma: float = 0.0
    theta_w: np.ndarray = None
    theta_u: np.ndarray = None
    theta_v: np.ndarray = None
    objective_history: tuple = field(default=())

    def __post_init__(self):
        R = self.W.shape[1]
        for name in FACTORS:
            F = getattr(self, name)
            if F.ndim != 2 or F.shape[1] != R:
                raise ValueError(f"factor {name} must be a matrix with {R} columns, got {F.shape}")
            if not np.all(np.isfinite(F)):
                raise ValueError(f"factor {name} has non-finite entries")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        for name, theta in zip(FACTORS, self.kernels):
            n = getattr(self, name).shape[0]
            if theta is not None and np.shape(theta) != (n,):
                raise ValueError(
                    f"kernel for factor {name} has length {np.size(theta)} but the factor has {n} rows"
                )

    @property
    def rank(self):
        return self.W.shape[1]

    @property
    def shape(self):
        return (self.W.shape[0], self.U.shape[0], self.V.shape[0])

    @property
    def kernels(self):
        return (self.theta_w, self.theta_u, self.theta_v)

    def factors(self):
        return (self.W, self.U, self.V)

    def reconstruct(self):
        return fold(self.W @ khatri_rao(self.V, self.U).T, 1, self.shape)


def _check_shapes(model, Y, mask):
    if Y.shape != model.shape:
        raise ValueError(f"tensor shape {Y.shape} does not match factor shape {model.shape}")
    if mask.shape != Y.shape:
        raise ValueError(f"mask shape {mask.shape} does not match tensor shape {Y.shape}")


def _other_kr(factors, mode):
    W, U, V = factors
    return {1: lambda: khatri_rao(V, U), 2: lambda: khatri_rao(V, W), 3: lambda: khatri_rao(U, W)}[mode]()


def _regularizer(theta, F):
    if theta is None:
        return 0.0
    Z = circ_conv(theta, F.T)
    return float(np.sum(Z * Z))


def tf_objective(model, Y, mask):
    Y = np.asarray(Y, dtype=np.float64)
    _check_shapes(model, Y, mask)
    E = mask.project(Y - model.reconstruct())
    data = 0.5 * float(np.sum(E * E))
    if model.gamma == 0:
        return data
    reg = sum(_regularizer(th, F) for th, F in zip(model.kernels, model.factors()))
    return data + 0.5 * model.gamma * reg


def tf_gradients(model, Y, mask):
    """Gradients of :func:`tf_objective` with respect to ``W``, ``U``, ``V``."""
    Y = np.asarray(Y, dtype=np.float64)
    _check_shapes(model, Y, mask)
    E = mask.project(model.reconstruct() - Y)
    factors = model.factors()
    grads = []
    for mode, (theta, F) in enumerate(zip(model.kernels, factors), start=1):
        G = unfold(E, mode) @ _other_kr(factors, mode)
        if theta is not None and model.gamma:
            G = G + model.gamma * circulant_gram_apply(theta, F)
        grads.append(G)
    return tuple(grads)


class _FactorSystem:
    """SPD system for one factor: ``L(F) = P(F K^T) K + gamma C^T C F + eps F``."""

    def __init__(self, Yk, Ok, K, gamma, theta, F_old):
        self.Ok = Ok
        self.K = K
        self.gamma = gamma if theta is not None else 0.0
        self.theta = theta
        diag = (Ok @ (K * K)).sum()
        mean_diag = diag / F_old.size if F_old.size else 0.0
        self.eps = RIDGE_RTOL * mean_diag if mean_diag > 0 else RIDGE_RTOL
        self.rhs = (np.where(Ok, Yk, 0.0) @ K) + self.eps * F_old

    def apply(self, F):
        out = np.where(self.Ok, F @ self.K.T, 0.0) @ self.K + self.eps * F
        if self.gamma:
            out += self.gamma * circulant_gram_apply(self.theta, F)
        return out


def conjugate_gradient(apply, rhs, x0, tol, max_iter):
    """Matrix CG with Frobenius inner products; returns ``(x, iterations, rel_residual)``."""
    x = x0.copy()
    r = rhs - apply(x)
    b_norm = math.sqrt(float(np.sum(rhs * rhs))) or 1.0
    rs = float(np.sum(r * r))
    if math.sqrt(rs) <= tol * b_norm:
        return x, 0, math.sqrt(rs) / b_norm
    p = r.copy()
    it = 0
    for it in range(1, max_iter + 1):
        Lp = apply(p)
        curv = float(np.sum(p * Lp))
        if not math.isfinite(curv):
            raise FitError(f"NaN in conjugate gradient at iteration {it}")
        if curv <= 0:
            raise FitError(
                f"conjugate gradient breakdown at iteration {it}: curvature {curv:.3e} "
                f"along a direction of norm {math.sqrt(float(np.sum(p * p))):.3e} (operator not SPD)"
            )
        alpha = rs / curv
        x += alpha * p
        r -= alpha * Lp
        rs_new = float(np.sum(r * r))
        if math.sqrt(rs_new) <= tol * b_norm:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, it, math.sqrt(rs) / b_norm


def init_factors(shape, rank, seed):
    """Gaussian factors with standard deviation ``1/sqrt(rank)`` from the seeded init stream."""
    M, N, T = shape
    z = rng.normal(seed, (M + N + T) * rank, rng.INIT_STREAM) / math.sqrt(rank)
    W = z[: M * rank].reshape(M, rank)
    U = z[M * rank : (M + N) * rank].reshape(N, rank)
    V = z[(M + N) * rank :].reshape(T, rank)
    return W, U, V


def tf_fit(Y, mask, rank, gamma=0.0, kernels=None, cfg=None, init=None, callback=None):
    """Alternating minimization of the regularized masked CP objective.

    ``kernels`` maps any of ``"w"``, ``"u"``, ``"v"`` to a kernel vector of
    the matching length. ``callback(iteration, objective)`` is invoked after
    every outer iteration.
    """
    cfg = cfg or FitConfig()
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 3:
        raise ValueError(f"tensor factorization needs a third-order tensor, got shape {Y.shape}")
    if int(rank) != rank or rank < 1:
        raise ValueError(f"rank must be a positive integer, got {rank}")
    if mask.shape != Y.shape:
        raise ValueError(f"mask shape {mask.shape} does not match tensor shape {Y.shape}")
    kernels = dict(kernels or {})
    unknown = set(kernels) - {"w", "u", "v"}
    if unknown:
        raise ValueError(f"unknown kernel modes {sorted(unknown)}")
    thetas = [None if kernels.get(m) is None else np.asarray(kernels[m], dtype=np.float64) for m in "wuv"]
    W, U, V = init if init is not None else init_factors(Y.shape, rank, cfg.seed)
    factors = [np.array(W, dtype=np.float64), np.array(U, dtype=np.float64), np.array(V, dtype=np.float64)]

    def model(history=()):
        return FactorModel(*factors, gamma=float(gamma), theta_w=thetas[0], theta_u=thetas[1],
                           theta_v=thetas[2], objective_history=tuple(history))

    Yfilled = mask.project(Y)
    if not np.all(np.isfinite(Yfilled)):
        raise ValueError("observed entries must be finite")
    unfolded = [(unfold(Yfilled, k), unfold(mask.observed, k)) for k in (1, 2, 3)]
    history = [tf_objective(model(), Y, mask)]
    for it in range(1, cfg.outer_iters + 1):
        for k in (1, 2, 3):
            Yk, Ok = unfolded[k - 1]
            system = _FactorSystem(Yk, Ok, _other_kr(factors, k), gamma, thetas[k - 1], factors[k - 1])
            factors[k - 1], _, _ = conjugate_gradient(system.apply, system.rhs, factors[k - 1],
                                                      cfg.cg_tol, cfg.cg_iters)
            if not np.all(np.isfinite(factors[k - 1])):
                raise FitError(f"non-finite factor {FACTORS[k - 1]} at outer iteration {it}")
        f = tf_objective(model(), Y, mask)
        history.append(f)
        if callback is not None:
            callback(it, f)
        prev = history[-2]
        if f == 0.0 or abs(prev - f) < cfg.outer_tol * max(abs(prev), np.finfo(float).tiny):
            break
    return model(history)


def rse(estimate, truth, mask=None, projection="observed"):
    """``100 * ||P(estimate - truth)|| / ||P(truth)||`` over the chosen entries.

    ``projection`` selects the observed entries of ``mask``, the missing ones,
    or all entries. The ratio is of plain (not squared) 2-norms.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    if mask is None:
        mask = ObservationMask.full(truth.shape)
    sel = mask.select(projection)
    den = math.sqrt(float(np.sum(truth[sel] ** 2)))
    if den == 0.0:
        raise ValueError(f"RSE undefined: truth is zero on the {projection} entries")
    diff = estimate[sel] - truth[sel]
    return 100.0 * math.sqrt(float(np.sum(diff * diff))) / den

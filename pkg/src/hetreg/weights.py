"""Membership-weight update by a log-barrier interior-point method.

For a fixed coefficient matrix the objective restricted to one sample's
weight column is

    sum_k u_k^m r2_k  +  gamma * sum_{k>=2} (u_(k) - u_(k-1))^2
        subject to  sum_k u_k = 1,  u_k >= 0,

with r2_k the squared residual of the sample under subgroup k.  The
nonnegativity constraints are folded into a barrier term -r * sum_k log u_k
and the equality-constrained barrier problem is solved by Newton's method,
driving r through 1, 0.1, 0.01, ... until n*K*r < epsilon.

Two structural facts keep this cheap: the problem separates over samples
(the Hessian is block-diagonal with K x K blocks), and the sorted-gap
penalty is a quadratic form u' P'TP u once the ascending sort permutation P
is frozen at the current point, so each Newton step is n independent
(K+1) x (K+1) equality-constrained solves, batched over samples.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, DimensionError, DomainError, WeightMatrix

logger = logging.getLogger(__name__)

INTERIOR_DELTA = 1e-3  # clipping level used to push boundary starts inside


@dataclass(frozen=True)
class ResidualMatrix:
    """Squared residuals r2[k, i] = (y_i - X_i alpha_k)^2, shape (K, n)."""

    r2: np.ndarray

    def __post_init__(self):
        r2 = np.array(self.r2, dtype=float)
        if r2.ndim != 2:
            raise DimensionError("residual matrix must be 2-D (K x n)")
        if not np.isfinite(r2).all():
            raise DimensionError("squared residuals must be finite")
        if r2.min() < 0:
            raise DimensionError("squared residuals must be nonnegative")
        r2.setflags(write=False)
        object.__setattr__(self, "r2", r2)

    @property
    def k(self):
        return self.r2.shape[0]

    @property
    def n(self):
        return self.r2.shape[1]


@dataclass(frozen=True)
class BarrierState:
    """Sample-major flattened weights plus the barrier parameter.

    ``u_flat`` stacks the weight columns sample by sample:
    (u_11, ..., u_K1, u_12, ..., u_Kn).  All entries must be strictly
    positive and each sample's K entries must sum to 1 within 1e-8.
    """

    u_flat: np.ndarray
    r_barrier: float
    epsilon: float
    k: int

    def __post_init__(self):
        u = np.array(self.u_flat, dtype=float).ravel()
        if self.k < 1:
            raise DimensionError("need at least one subgroup")
        if u.size % self.k != 0:
            raise DimensionError(f"flat length {u.size} not divisible by K={self.k}")
        if u.min() <= 0:
            raise DomainError("barrier state must be strictly interior")
        sums = u.reshape(-1, self.k).sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-8:
            raise DimensionError("each sample's weights must sum to 1")
        if not self.r_barrier > 0:
            raise ConfigError("barrier parameter must be positive")
        if not self.epsilon > 0:
            raise ConfigError("stopping tolerance must be positive")
        u.setflags(write=False)
        object.__setattr__(self, "u_flat", u)

    @property
    def n(self):
        return self.u_flat.size // self.k


def closed_form_gamma0(r2_col, m):
    """Zero-fusion minimizer of the per-sample weighted loss on the simplex:
    u_k proportional to r2_k^(-1/(m-1)).

    Zero residuals absorb all weight, split uniformly among themselves.
    """
    if not m > 1:
        raise ConfigError("fuzzifier m must exceed 1")
    r2 = np.asarray(r2_col, dtype=float).ravel()
    if r2.size == 0:
        raise DimensionError("residual column must be non-empty")
    zero = r2 == 0.0
    if zero.any():
        return zero / zero.sum()
    logt = -np.log(r2) / (m - 1.0)
    logt -= logt.max()
    t = np.exp(logt)
    return t / t.sum()


def _gap_gram(k):
    """T = D'D for the (K-1) x K first-difference matrix D."""
    t = np.zeros((k, k))
    if k < 2:
        return t
    idx = np.arange(k)
    t[idx, idx] = 2.0
    t[0, 0] = t[-1, -1] = 1.0
    t[idx[:-1], idx[1:]] = -1.0
    t[idx[1:], idx[:-1]] = -1.0
    return t


def _fusion_hessians(v, gamma, gap_gram):
    """Per-sample frozen-sort fusion Hessians 2*gamma*P'TP, shape (n, K, K).

    Ties in a sample's weights are broken by subgroup index (stable sort),
    which fixes the permutation deterministically; the penalty value is
    continuous across tie boundaries so this only pins derivatives.
    """
    order = np.argsort(v, axis=1, kind="stable")
    inv = np.argsort(order, axis=1, kind="stable")
    return 2.0 * gamma * gap_gram[inv[:, :, None], inv[:, None, :]]


def _per_sample_values(v, r2t, gamma, m, r_bar):
    """Barrier objective restricted to each sample, shape (n,)."""
    loss = np.sum(v**m * r2t, axis=1)
    gaps = np.diff(np.sort(v, axis=1), axis=1)
    fusion = gamma * np.sum(gaps * gaps, axis=1) if v.shape[1] >= 2 else 0.0
    barrier = -r_bar * np.sum(np.log(v), axis=1)
    return loss + fusion + barrier


def barrier_value_grad_hess(state, r2, gamma, m):
    """Value, gradient, and per-sample Hessian blocks of the barrier
    objective at ``state``.

    Returns ``(value, grad, hess)`` with ``grad`` flat in the sample-major
    layout of ``state.u_flat`` and ``hess`` of shape (n, K, K) holding the
    diagonal blocks of the (block-diagonal) full Hessian.  The sorted-gap
    term is differentiated with the sort permutation frozen at the current
    point.
    """
    r2 = r2.r2 if isinstance(r2, ResidualMatrix) else np.asarray(r2, dtype=float)
    k, n = r2.shape
    if state.k != k or state.n != n:
        raise DimensionError(
            f"state holds {state.n} samples x {state.k} subgroups, "
            f"residuals are {n} x {k}"
        )
    v = state.u_flat.reshape(n, k)
    if v.min() <= 0:
        raise DomainError("barrier objective requires a strictly interior point")
    r2t = r2.T
    r_bar = state.r_barrier

    value = float(np.sum(_per_sample_values(v, r2t, gamma, m, r_bar)))

    grad = m * v ** (m - 1.0) * r2t - r_bar / v
    hess_diag = m * (m - 1.0) * v ** (m - 2.0) * r2t + r_bar / (v * v)
    hess = _fusion_hessians(v, gamma, _gap_gram(k)) if k >= 2 else np.zeros((n, k, k))
    if k >= 2:
        grad += np.einsum("nkl,nl->nk", hess, v)
    hess[:, np.arange(k), np.arange(k)] += hess_diag
    return value, grad.ravel(), hess


def interiorize(u, delta=INTERIOR_DELTA):
    """Push weight columns strictly inside the simplex.

    Entries are clipped to [delta, 1-(K-1)*delta] and columns renormalized;
    already-interior columns are left (almost) untouched.  Binary columns
    become (1-(K-1)*delta, delta, ..., delta).
    """
    arr = np.array(u, dtype=float)
    k = arr.shape[0]
    if k * delta >= 1.0:
        raise ConfigError(f"delta={delta} too large for K={k}")
    clipped = np.clip(arr, delta, 1.0 - (k - 1) * delta)
    return clipped / clipped.sum(axis=0)


def _newton_stage(v, r2t, gamma, m, r_bar, epsilon, max_newton, gap_gram, info):
    """Run Newton iterations at one barrier level, updating ``v`` in place."""
    n, k = v.shape
    eye = np.arange(k)
    active = np.ones(n, dtype=bool)
    for _ in range(max_newton):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            return
        va = v[rows]
        ra = r2t[rows]
        grad = m * va ** (m - 1.0) * ra - r_bar / va
        if k >= 2:
            hess = _fusion_hessians(va, gamma, gap_gram)
            grad += np.einsum("nkl,nl->nk", hess, va)
        else:
            hess = np.zeros((rows.size, k, k))
        hess[:, eye, eye] += m * (m - 1.0) * va ** (m - 2.0) * ra + r_bar / (va * va)

        # Newton step restricted to the constraint null space: solve the
        # KKT system per sample via H^{-1}[g, 1]
        rhs = np.stack([grad, np.ones_like(grad)], axis=2)
        fallback = np.zeros(rows.size, dtype=bool)
        sol = np.empty_like(rhs)
        try:
            sol = np.linalg.solve(hess, rhs)
        except np.linalg.LinAlgError:
            for i in range(rows.size):
                try:
                    sol[i] = np.linalg.solve(hess[i], rhs[i])
                except np.linalg.LinAlgError:
                    fallback[i] = True
        bad = ~np.isfinite(sol).all(axis=(1, 2))
        fallback |= bad
        hg, h1 = sol[:, :, 0], sol[:, :, 1]
        denom = h1.sum(axis=1)
        fallback |= np.abs(denom) < 1e-300
        denom = np.where(fallback, 1.0, denom)
        mult = -hg.sum(axis=1) / denom
        delta = -(hg + mult[:, None] * h1)
        lam2 = -np.einsum("nk,nk->n", grad, delta)
        # indefinite or failed blocks: damped gradient projected onto the
        # constraint null space
        fallback |= ~np.isfinite(lam2) | (lam2 < 0)
        if fallback.any():
            info["gradient_fallbacks"] += int(fallback.sum())
            gproj = grad[fallback] - grad[fallback].mean(axis=1, keepdims=True)
            delta[fallback] = -gproj
            lam2[fallback] = np.einsum("nk,nk->n", gproj, gproj)

        done = lam2 / 2.0 <= epsilon
        active[rows[done]] = False
        step_rows = rows[~done]
        if step_rows.size == 0:
            continue
        va = va[~done]
        delta = delta[~done]
        gd = -lam2[~done]
        f0 = _per_sample_values(va, r2t[step_rows], gamma, m, r_bar)

        # Armijo backtracking with shrinking steps; full Newton steps pass
        # near the optimum, preserving quadratic convergence
        t = np.ones(step_rows.size)
        pending = np.ones(step_rows.size, dtype=bool)
        slack = 1e-12 * (1.0 + np.abs(f0))
        cand = va.copy()
        for _bt in range(200):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            trial = va[idx] + t[idx, None] * delta[idx]
            interior = trial.min(axis=1) > 0.0
            f1 = np.full(idx.size, np.inf)
            if interior.any():
                f1[interior] = _per_sample_values(
                    trial[interior], r2t[step_rows[idx[interior]]], gamma, m, r_bar
                )
            ok = interior & (f1 <= f0[idx] + 0.25 * t[idx] * gd[idx] + slack[idx])
            cand[idx[ok]] = trial[ok]
            pending[idx[ok]] = False
            shrink = idx[~ok]
            t[shrink] *= 0.8
            stuck = shrink[t[shrink] < 1e-13]
            if stuck.size:
                info["line_search_failures"] += int(stuck.size)
                pending[stuck] = False
                active[step_rows[stuck]] = False
        v[step_rows] = cand
        v[step_rows] /= v[step_rows].sum(axis=1, keepdims=True)
        info["newton_iters"] += 1
    logger.debug("newton budget exhausted at barrier level %g", r_bar)


def update_weights(r2, gamma, m, u_init, epsilon=1e-6, max_newton=50, return_info=False):
    """Minimize weighted loss plus sorted-gap penalty over simplex columns.

    ``u_init`` columns are clipped strictly inside the simplex before the
    first barrier stage.  Returns a :class:`WeightMatrix` whose columns sum
    to 1 within 1e-8; with ``return_info=True`` also returns a diagnostics
    dict (Newton iterations, gradient fallbacks, line-search failures).
    """
    r2 = r2 if isinstance(r2, ResidualMatrix) else ResidualMatrix(r2)
    u0 = u_init.u if isinstance(u_init, WeightMatrix) else np.asarray(u_init, dtype=float)
    k, n = r2.k, r2.n
    if u0.shape != (k, n):
        raise DimensionError(f"initial weights are {u0.shape}, expected ({k}, {n})")
    if not m > 1:
        raise ConfigError("fuzzifier m must exceed 1")
    if gamma < 0:
        raise ConfigError("fusion strength must be nonnegative")
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")

    info = {"newton_iters": 0, "gradient_fallbacks": 0, "line_search_failures": 0}
    if k == 1:
        out = WeightMatrix(np.ones((1, n)))
        return (out, info) if return_info else out

    v = np.ascontiguousarray(interiorize(u0).T)  # (n, K), rows are samples
    r2t = np.ascontiguousarray(r2.r2.T)
    gap_gram = _gap_gram(k)
    r_bar = 1.0
    while True:
        _newton_stage(v, r2t, gamma, m, r_bar, epsilon, max_newton, gap_gram, info)
        if n * k * r_bar < epsilon:
            break
        r_bar /= 10.0
    v /= v.sum(axis=1, keepdims=True)
    out = WeightMatrix(np.clip(v.T, 0.0, 1.0))
    return (out, info) if return_info else out

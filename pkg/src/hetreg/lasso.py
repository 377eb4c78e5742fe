"""Weighted L1-penalized least squares by coordinate descent.

Solves

    argmin_alpha  sum_i w_i (y_i - x_i . alpha)^2 + lam * ||alpha||_1

exactly in this parameterization (no 1/n factor), which matches the
joint objective and makes penalty values comparable across modules.
Rescaling rows by sqrt(w_i) reduces the problem to a standard lasso.
Sweeps run over an active set with warm starts; optimality is certified
by a full stationarity check

    2 sum_i w_i x_ij r_i = lam * sign(alpha_j)    (alpha_j != 0)
    |2 sum_i w_i x_ij r_i| <= lam                 (alpha_j == 0)

with r the full residual y - x @ alpha.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _cd
from ._rng import TAG_CV_FOLDS, spawn_rng
from .core import ConfigError, DimensionError

logger = logging.getLogger(__name__)

# pathwise CV grid: 50 log-spaced values from lambda_max down to 1e-3*lambda_max
LAMBDA_PATH_SIZE = 50
LAMBDA_MIN_RATIO = 1e-3

# path fits only feed CV error estimates, so they run loose and capped;
# the deep end of the grid saturates the active set when p > n and exact
# stationarity there is both expensive and pointless for selection
PATH_TOL = 1e-5
PATH_MAX_SWEEPS = 100


@dataclass(frozen=True)
class WeightedLassoProblem:
    """One weighted lasso instance: design x, response y, sample weights w,
    penalty lam."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    lam: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        if x.ndim != 2:
            raise DimensionError("design must be 2-D")
        n = x.shape[0]
        if y.shape[0] != n or w.shape[0] != n:
            raise DimensionError(
                f"inconsistent sizes: x has {n} rows, y {y.shape[0]}, w {w.shape[0]}"
            )
        if w.min() < 0:
            raise DimensionError("sample weights must be nonnegative")
        if w.sum() <= 0:
            raise DimensionError("sample weights must not all be zero")
        if self.lam < 0:
            raise ConfigError("penalty must be nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def q(self):
        return self.x.shape[1]


class LassoSolution(NamedTuple):
    coef: np.ndarray
    converged: bool
    sweeps: int


def soft_threshold(z, t):
    """sign(z) * max(|z| - t, 0)."""
    if t < 0:
        raise ConfigError("threshold must be nonnegative")
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def lambda_max(x, y, w):
    """Smallest penalty for which the all-zero vector is optimal:
    2 * max_j |sum_i w_i x_ij y_i|."""
    g = np.asarray(x).T @ (np.asarray(w) * np.asarray(y))
    return 2.0 * float(np.abs(g).max())


def lambda_path(x, y, w, num=LAMBDA_PATH_SIZE, ratio=LAMBDA_MIN_RATIO):
    """Descending log-spaced penalty grid from lambda_max to ratio*lambda_max."""
    top = lambda_max(x, y, w)
    if top <= 0:
        # degenerate response; any penalty gives the zero solution
        return np.array([0.0])
    return np.geomspace(top, ratio * top, num)


def _kkt_violation(v, lam, alpha):
    """Max stationarity violation given v_j = 2 sum_i w_i x_ij r_i."""
    nz = alpha != 0.0
    viol = 0.0
    if nz.any():
        viol = float(np.abs(v[nz] - lam * np.sign(alpha[nz])).max())
    if (~nz).any():
        viol = max(viol, float(np.maximum(np.abs(v[~nz]) - lam, 0.0).max()))
    return viol


def _solve_prepared(xf, wxf, colsq, y, lam, alpha, scale, tol, max_iters):
    """Coordinate descent on a prepared design; mutates ``alpha`` in place."""
    kkt_tol = tol * scale
    r = y - xf @ alpha
    active = np.flatnonzero(alpha)
    dtol = 0.05 * kkt_tol
    total = 0
    while True:
        if active.size:
            budget = max(1, max_iters - total)
            total += _cd.cd_active(
                xf, wxf, colsq, alpha, r, active, lam / 2.0, dtol, budget
            )
        # full stationarity check on an exactly recomputed residual
        r = y - xf @ alpha
        v = 2.0 * (wxf.T @ r)
        if _kkt_violation(v, lam, alpha) <= kkt_tol:
            return True, total
        if total >= max_iters:
            return False, total
        violating = np.flatnonzero((alpha == 0.0) & (np.abs(v) > lam + kkt_tol))
        active = np.union1d(np.flatnonzero(alpha), violating)
        if active.size == 0:
            # zero vector already stationary
            return True, total
        if violating.size == 0:
            # violations sit on the active set; demand tighter sweeps
            dtol *= 0.1


def solve_weighted_lasso(problem, warm_start=None, tol=1e-8, max_iters=10_000):
    """Solve one weighted lasso problem to stationarity tolerance ``tol``.

    ``tol`` is relative to ``scale = max(1, lambda_max)`` of the problem;
    the returned solution satisfies a stationarity residual <= tol*scale
    unless the sweep budget ``max_iters`` is exhausted, in which case the
    best iterate is returned with ``converged=False``.  Deterministic.
    """
    x, y, w, lam = problem.x, problem.y, problem.w, problem.lam
    q = problem.q
    xf, wxf, colsq = _cd.prepare_design(x, w)
    if warm_start is None:
        alpha = np.zeros(q)
    else:
        alpha = np.array(warm_start, dtype=float).ravel()
        if alpha.shape[0] != q:
            raise DimensionError(f"warm start has {alpha.shape[0]} entries, expected {q}")
    scale = max(1.0, lambda_max(x, y, w))
    converged, total = _solve_prepared(xf, wxf, colsq, y, lam, alpha, scale, tol, max_iters)
    if not converged:
        logger.warning("lasso did not reach tol within %d sweeps", max_iters)
    return LassoSolution(alpha, converged, total)


def solve_path(x, y, w, grid, tol=PATH_TOL, max_iters=PATH_MAX_SWEEPS, dfmax=None):
    """Warm-started solutions along a descending penalty grid.

    The design is prepared once and shared across the grid.  Once the
    active set exceeds ``dfmax`` the remaining (even denser) grid entries
    reuse the last solved coefficients; that tail only matters as a
    rejected region in CV.  Returns an array of shape (len(grid), q).
    """
    y = np.asarray(y, dtype=float).ravel()
    xf, wxf, colsq = _cd.prepare_design(np.asarray(x, dtype=float), np.asarray(w, dtype=float))
    scale = max(1.0, 2.0 * float(np.abs(wxf.T @ y).max()))
    coefs = np.empty((len(grid), x.shape[1]))
    alpha = np.zeros(x.shape[1])
    for gi, lam in enumerate(grid):
        _solve_prepared(xf, wxf, colsq, y, lam, alpha, scale, tol, max_iters)
        coefs[gi] = alpha
        if dfmax is not None and np.count_nonzero(alpha) > dfmax:
            coefs[gi + 1 :] = alpha
            break
    return coefs


def fold_assignments(n, folds, rng):
    """Balanced random fold labels for n samples."""
    ids = np.resize(np.arange(folds), n)
    rng.shuffle(ids)
    return ids


def cv_select_lambda(x, y, w, lambda_grid=None, folds=5, seed=0, tol=PATH_TOL,
                     max_iters=PATH_MAX_SWEEPS):
    """Pick the penalty minimizing mean weighted held-out squared error.

    The fold partition is a seeded random split.  Folds whose held-out
    weight mass is zero are skipped.  Ties break toward the first (largest)
    grid value.  Always returns an element of the grid.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    n = x.shape[0]
    if folds < 2:
        raise ConfigError(f"need at least 2 folds, got {folds}")
    if n < folds:
        raise ConfigError(f"cannot split {n} samples into {folds} folds")
    if lambda_grid is None:
        grid = lambda_path(x, y, w)
    else:
        grid = np.asarray(lambda_grid, dtype=float)
        if grid.size == 0:
            raise ConfigError("penalty grid must be non-empty")
    if grid.size == 1:
        return float(grid[0])

    ids = fold_assignments(n, folds, spawn_rng(seed, TAG_CV_FOLDS))
    err = np.zeros((folds, grid.size))
    valid = np.zeros(folds, dtype=bool)
    for f in range(folds):
        va = ids == f
        tr = ~va
        w_tr, w_va = w[tr], w[va]
        if w_tr.sum() <= 0 or w_va.sum() <= 0:
            continue
        valid[f] = True
        dfmax = min(x.shape[1], int(0.8 * tr.sum()))
        coefs = solve_path(x[tr], y[tr], w_tr, grid, tol=tol, max_iters=max_iters,
                           dfmax=dfmax)
        resid = y[va][None, :] - coefs @ x[va].T
        err[f] = (resid * resid) @ w_va / w_va.sum()
    if not valid.any():
        logger.warning("no usable CV fold (weight mass concentrated); keeping largest penalty")
        return float(grid[0])
    mean_err = err[valid].mean(axis=0)
    return float(grid[int(np.argmin(mean_err))])

"""Feature-screening initializer for the membership weights.

Four steps produce a binary starting weight matrix without ever touching
the full high-dimensional problem:

1. Partition the p features into L small disjoint subsets.
2. For each subset, fit a tiny K0-subgroup regression by alternating a
   weighted lasso (binary sample weights) with a nearest-residual
   reassignment.
3. Rank the subset fits by BIC and keep the best few, collecting every
   feature they selected.
4. Refit on the screened feature set with the target number of subgroups;
   the resulting binary assignment is the initial weight matrix.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ._rng import TAG_INIT_FINAL, TAG_SHUFFLE, TAG_SUBMODEL, spawn_rng
from .core import ConfigError, DimensionError
from .lasso import WeightedLassoProblem, cv_select_lambda, solve_weighted_lasso

logger = logging.getLogger(__name__)

# target band for the cumulative nonzero count across kept submodels
SCREEN_NNZ_LOW = 30
SCREEN_NNZ_HIGH = 50
DEFAULT_SUBSET_SIZE = 5
DEFAULT_K0 = 2


@dataclass(frozen=True)
class SubmodelFit:
    """Result of the alternating fit on one feature subset."""

    feature_indices: tuple
    w_binary: np.ndarray
    theta: np.ndarray
    bic: float
    df: int

    def __post_init__(self):
        w = np.array(self.w_binary, dtype=float)
        theta = np.array(self.theta, dtype=float)
        if w.ndim != 2 or theta.ndim != 2:
            raise DimensionError("w_binary and theta must be 2-D")
        if theta.shape[1] != w.shape[0]:
            raise DimensionError("theta columns must match subgroup count")
        if not np.all((w == 0.0) | (w == 1.0)) or not np.allclose(w.sum(axis=0), 1.0):
            raise DimensionError("w_binary columns must be one-hot")
        if self.df != int(np.count_nonzero(theta)):
            raise DimensionError("df must equal the nonzero coefficient count")
        w.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "feature_indices", tuple(int(j) for j in self.feature_indices))
        object.__setattr__(self, "w_binary", w)
        object.__setattr__(self, "theta", theta)


def partition_features(p, big_l, seed=0, shuffle=False):
    """Split feature indices 0..p-1 into ``big_l`` disjoint subsets.

    Sizes differ by at most one (the first p mod L subsets get the extra
    feature).  Features are taken in natural order unless ``shuffle`` is
    set, in which case the seeded permutation is partitioned instead.
    """
    if not 1 <= big_l <= p:
        raise ConfigError(f"need 1 <= L <= p, got L={big_l}, p={p}")
    idx = np.arange(p)
    if shuffle:
        idx = spawn_rng(seed, TAG_SHUFFLE).permutation(idx)
    base, extra = divmod(p, big_l)
    sets = []
    start = 0
    for l in range(big_l):
        size = base + (1 if l < extra else 0)
        sets.append(np.sort(idx[start : start + size]))
        start += size
    return sets


def _rebalance_empty(assign, r2_assigned, k0):
    """Reseed emptied subgroups with the worst-fit samples."""
    counts = np.bincount(assign, minlength=k0)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return assign
    order = np.argsort(-r2_assigned, kind="stable")
    used = 0
    for g in empty:
        # skip donors that are themselves alone in their group
        while used < order.size and counts[assign[order[used]]] <= 1:
            used += 1
        if used >= order.size:
            break
        donor = order[used]
        counts[assign[donor]] -= 1
        assign[donor] = g
        counts[g] += 1
        used += 1
    return assign


def fit_submodel(x_sub, y, k0, seed, cv_folds=5, max_iters=50, rel_tol=1e-6,
                 feature_indices=None):
    """Alternating binary-weight fit of ``k0`` subgroups on one feature subset.

    Starts from a seeded random balanced assignment.  Each subgroup's lasso
    penalty is chosen by CV at its first update and then held fixed, so the
    objective (weighted loss plus penalties) is non-increasing across
    iterations.  Emptied subgroups are reseeded with the currently
    worst-fit sample.
    """
    x_sub = np.asarray(x_sub, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, q = x_sub.shape
    if k0 < 1:
        raise ConfigError(f"need at least one subgroup, got {k0}")
    if n < k0:
        raise ConfigError(f"cannot split {n} samples into {k0} subgroups")
    if feature_indices is None:
        feature_indices = np.arange(q)

    rng = spawn_rng(seed, TAG_SUBMODEL)
    assign = rng.permutation(n) % k0
    theta = np.zeros((q, k0))
    lams = np.full(k0, -1.0)  # selected at first use, then frozen
    prev_obj = None
    for it in range(max_iters):
        for k in range(k0):
            w = (assign == k).astype(float)
            if w.sum() == 0:
                continue
            if lams[k] < 0:
                lams[k] = cv_select_lambda(x_sub, y, w, folds=cv_folds, seed=seed * 31 + k)
            theta[:, k] = solve_weighted_lasso(
                WeightedLassoProblem(x_sub, y, w, lams[k]), warm_start=theta[:, k]
            ).coef
        resid = y[:, None] - x_sub @ theta          # (n, k0)
        r2 = resid * resid
        assign = np.argmin(r2, axis=1)              # ties -> smallest index
        assign = _rebalance_empty(assign, r2[np.arange(n), assign], k0)
        obj = float(r2[np.arange(n), assign].sum()) + float(
            np.where(lams > 0, lams, 0.0) @ np.abs(theta).sum(axis=0)
        )
        if prev_obj is not None and abs(prev_obj - obj) <= rel_tol * (1.0 + abs(prev_obj)):
            break
        prev_obj = obj

    w_binary = np.zeros((k0, n))
    w_binary[assign, np.arange(n)] = 1.0
    df = int(np.count_nonzero(theta))
    fit = SubmodelFit(tuple(int(j) for j in feature_indices), w_binary, theta, 0.0, df)
    bic = submodel_bic(fit, x_sub, y)
    return SubmodelFit(fit.feature_indices, w_binary, theta, bic, df)


def submodel_bic(fit, x_sub, y):
    """log(weighted RSS / n) + df * log(n) / n for one submodel fit."""
    x_sub = np.asarray(x_sub, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if x_sub.shape[0] != n or x_sub.shape[1] != fit.theta.shape[0]:
        raise DimensionError("data subset does not match the fit's dimensions")
    resid = y[:, None] - x_sub @ fit.theta
    wrss = float(np.sum(fit.w_binary.T * resid * resid))
    if wrss < 1e-12:
        logger.debug("zero residual sum in submodel BIC; clamping")
        wrss = 1e-12
    return float(np.log(wrss / n) + fit.df * np.log(n) / n)


def _bic_order(fits):
    return sorted(range(len(fits)), key=lambda i: (fits[i].bic, i))


def screen_features(fits, s):
    """Union of nonzero-coefficient features over the ``s`` best-BIC fits."""
    if not 1 <= s <= len(fits):
        raise ConfigError(f"need 1 <= s <= {len(fits)}, got {s}")
    keep = _bic_order(fits)[:s]
    selected = set()
    for i in keep:
        fit = fits[i]
        nz_rows = np.flatnonzero(np.any(fit.theta != 0.0, axis=1))
        selected.update(fit.feature_indices[j] for j in nz_rows)
    return np.array(sorted(selected), dtype=int)


def choose_s(fits, low=SCREEN_NNZ_LOW):
    """Smallest number of best-BIC submodels whose cumulative nonzero count
    reaches ``low``; falls back to all submodels if it never does."""
    if not fits:
        raise ConfigError("need at least one submodel fit")
    order = _bic_order(fits)
    total = 0
    for s, i in enumerate(order, start=1):
        total += fits[i].df
        if total >= low:
            return s
    logger.warning(
        "screening found only %d nonzero coefficients in total; keeping all %d submodels",
        total, len(fits),
    )
    return len(fits)


def initial_weights(x_screened, y, k, seed, cv_folds=5):
    """Binary K x n starting weights from the refit on screened features."""
    x_screened = np.asarray(x_screened, dtype=float)
    if x_screened.shape[1] == 0:
        raise ConfigError("screened feature set must be non-empty")
    if k == 1:
        return np.ones((1, np.asarray(y).shape[0]))
    fit = fit_submodel(x_screened, y, k, seed, cv_folds=cv_folds)
    return np.array(fit.w_binary)


def screening_initializer(x, y, k, seed, big_l=None, k0=DEFAULT_K0, cv_folds=5):
    """Run the full four-step pipeline and return the binary K x n weights.

    ``big_l`` defaults to ceil(p / 5) so each subset carries about five
    features.  If every submodel comes back fully sparse the screen is
    empty; a seeded random balanced assignment is returned instead.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = x.shape
    if k == 1:
        return np.ones((1, n))
    if big_l is None:
        big_l = int(np.ceil(p / DEFAULT_SUBSET_SIZE))
    subsets = partition_features(p, big_l, seed=seed)
    fits = [
        fit_submodel(x[:, sub], y, k0, seed * 131 + l, cv_folds=cv_folds,
                     feature_indices=sub)
        for l, sub in enumerate(subsets)
    ]
    s = choose_s(fits)
    screened = screen_features(fits, s)
    if screened.size == 0:
        logger.warning("empty feature screen; falling back to a random assignment")
        rng = spawn_rng(seed, TAG_INIT_FINAL)
        assign = rng.permutation(n) % k
        w = np.zeros((k, n))
        w[assign, np.arange(n)] = 1.0
        return w
    return initial_weights(x[:, screened], y, k, seed * 197 + 7, cv_folds=cv_folds)

"""Evaluation metrics with explicit label-alignment semantics.

Subgroup labels are arbitrary, so estimate/truth pairs are aligned first:
:func:`align_subgroups` searches all subgroup permutations for the one
minimizing coefficient RMSE, and the matrix metrics assume that
permutation has been applied.  The adjusted Rand index and the stability
measure are intrinsically permutation-invariant.
"""

import itertools
import logging

import numpy as np

from .core import CoefficientMatrix, ComparisonError, DimensionError, WeightMatrix, predict

logger = logging.getLogger(__name__)

MAX_ALIGN_K = 8  # exhaustive permutation search only


def _coef_array(a):
    return a.a if isinstance(a, CoefficientMatrix) else np.asarray(a, dtype=float)


def _weight_array(u):
    return u.u if isinstance(u, WeightMatrix) else np.asarray(u, dtype=float)


def align_subgroups(a_hat, u_hat, a_true, u_true):
    """Subgroup permutation (as an index array) minimizing the RMSE between
    the permuted coefficient estimate and the truth.

    Apply as ``a_hat[:, perm]`` and ``u_hat[perm, :]`` before computing the
    matrix metrics.  Exhaustive over all K! permutations; ties break toward
    the lexicographically first permutation.
    """
    ah, at = _coef_array(a_hat), _coef_array(a_true)
    uh, ut = _weight_array(u_hat), _weight_array(u_true)
    if ah.shape != at.shape or uh.shape != ut.shape:
        raise ComparisonError(
            f"estimate/truth shapes differ: {ah.shape} vs {at.shape}, {uh.shape} vs {ut.shape}"
        )
    k = ah.shape[1]
    if uh.shape[0] != k:
        raise ComparisonError("weight rows must match coefficient columns")
    if k > MAX_ALIGN_K:
        raise ComparisonError(f"alignment is exhaustive and capped at K={MAX_ALIGN_K}")
    best_perm, best_err = None, np.inf
    for perm in itertools.permutations(range(k)):
        err = float(np.sum((ah[:, perm] - at) ** 2))
        if err < best_err:
            best_err, best_perm = err, perm
    return np.array(best_perm, dtype=int)


def tpr_fpr(a_hat, a_true):
    """Support-recovery rates averaged over subgroups.

    Per subgroup, TPR is the fraction of truly nonzero coefficients
    estimated nonzero and FPR the fraction of truly zero coefficients
    estimated nonzero.  Subgroups with no true nonzeros (or no true zeros)
    are excluded from the respective mean.  Inputs must be aligned.
    """
    ah, at = _coef_array(a_hat), _coef_array(a_true)
    if ah.shape != at.shape:
        raise ComparisonError(f"shapes differ: {ah.shape} vs {at.shape}")
    est_nz = ah != 0.0
    true_nz = at != 0.0
    tprs, fprs = [], []
    for k in range(ah.shape[1]):
        n_true = int(true_nz[:, k].sum())
        n_zero = ah.shape[0] - n_true
        if n_true > 0:
            tprs.append(float((est_nz[:, k] & true_nz[:, k]).sum()) / n_true)
        else:
            logger.warning("subgroup %d has no true nonzeros; excluded from TPR", k)
        if n_zero > 0:
            fprs.append(float((est_nz[:, k] & ~true_nz[:, k]).sum()) / n_zero)
        else:
            logger.warning("subgroup %d has no true zeros; excluded from FPR", k)
    tpr = float(np.mean(tprs)) if tprs else float("nan")
    fpr = float(np.mean(fprs)) if fprs else float("nan")
    return tpr, fpr


def rmse(a_hat, a_true):
    """Root mean squared coefficient error over all p*K entries."""
    ah, at = _coef_array(a_hat), _coef_array(a_true)
    if ah.shape != at.shape:
        raise ComparisonError(f"shapes differ: {ah.shape} vs {at.shape}")
    d = ah - at
    return float(np.sqrt(np.mean(d * d)))


def rpe(data, a_hat, u_hat, a_true, u_true):
    """Root prediction error between estimated and true mean responses."""
    ah = a_hat if isinstance(a_hat, CoefficientMatrix) else CoefficientMatrix(a_hat)
    at = a_true if isinstance(a_true, CoefficientMatrix) else CoefficientMatrix(a_true)
    uh = u_hat if isinstance(u_hat, WeightMatrix) else WeightMatrix(u_hat)
    ut = u_true if isinstance(u_true, WeightMatrix) else WeightMatrix(u_true)
    d = predict(data, ah, uh) - predict(data, at, ut)
    return float(np.sqrt(np.mean(d * d)))


def l1_weight_loss(u_hat, u_true):
    """Average entrywise L1 difference per sample, ||U_hat - U||_1 / n.

    Inputs must carry aligned subgroup rows.
    """
    uh, ut = _weight_array(u_hat), _weight_array(u_true)
    if uh.shape != ut.shape:
        raise ComparisonError(f"shapes differ: {uh.shape} vs {ut.shape}")
    return float(np.abs(uh - ut).sum() / uh.shape[1])


def _comb2(v):
    return v * (v - 1) / 2.0


def ari(labels_hat, labels_true):
    """Adjusted Rand index between two labelings; 1 iff identical
    partitions, invariant to relabeling."""
    lh = np.asarray(labels_hat).ravel()
    lt = np.asarray(labels_true).ravel()
    if lh.shape != lt.shape:
        raise ComparisonError(f"label lengths differ: {lh.size} vs {lt.size}")
    if lh.size < 2:
        raise ComparisonError("need at least 2 samples")
    _, hi = np.unique(lh, return_inverse=True)
    _, ti = np.unique(lt, return_inverse=True)
    table = np.zeros((hi.max() + 1, ti.max() + 1))
    np.add.at(table, (hi, ti), 1.0)
    sum_cells = _comb2(table).sum()
    sum_rows = _comb2(table.sum(axis=1)).sum()
    sum_cols = _comb2(table.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / _comb2(lh.size)
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0  # both partitions trivial (all-singleton or all-together)
    return float((sum_cells - expected) / (max_index - expected))


def coexistence_matrix(labels):
    """n x n 0/1 matrix with 1 where two samples share a subgroup."""
    lab = np.asarray(labels).ravel()
    return (lab[:, None] == lab[None, :]).astype(float)


def stability(g_hat, g_true):
    """Mean absolute entrywise difference between two co-existence
    matrices; 0 for identical partitions, at most 1."""
    gh = np.asarray(g_hat, dtype=float)
    gt = np.asarray(g_true, dtype=float)
    for name, g in (("estimate", gh), ("reference", gt)):
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DimensionError(f"{name} co-existence matrix must be square")
        if not np.array_equal(g, g.T):
            raise DimensionError(f"{name} co-existence matrix must be symmetric")
        if not np.all(np.diag(g) == 1.0):
            raise DimensionError(f"{name} co-existence matrix must have unit diagonal")
    if gh.shape != gt.shape:
        raise ComparisonError(f"shapes differ: {gh.shape} vs {gt.shape}")
    return float(np.abs(gh - gt).mean())

"""Alternating optimization, tuning-parameter selection, and labeling.

One fit alternates two convex subproblems until the joint objective
stabilizes: per-subgroup weighted lassos update the coefficient matrix
(sample i enters subgroup k's problem with weight u_ki^m), then the
log-barrier interior-point step updates the membership weights.  The
number of subgroups is chosen by a modified BIC; the fusion strength can
be chosen by cross-validated prediction error.
"""

import logging
from dataclasses import replace

import numpy as np

from ._rng import TAG_GAMMA_CV, spawn_rng
from .core import (
    CoefficientMatrix,
    ConfigError,
    Dataset,
    FitResult,
    NumericalError,
    WeightMatrix,
    evaluate_objective,
    predict,
)
from .lasso import (
    WeightedLassoProblem,
    cv_select_lambda,
    fold_assignments,
    lambda_path,
    solve_weighted_lasso,
)
from .screening import screening_initializer
from .weights import interiorize, update_weights

logger = logging.getLogger(__name__)


def assign_majority(u):
    """Label each sample with its largest-weight subgroup (ties -> smallest)."""
    arr = u.u if isinstance(u, WeightMatrix) else np.asarray(u)
    return np.argmax(arr, axis=0)


def residual_matrix(data, a):
    """Squared residuals (K x n): r2[k, i] = (y_i - X_i alpha_k)^2."""
    resid = data.y[:, None] - data.x @ a.a
    return np.ascontiguousarray((resid * resid).T)


def _bic_value(data, a, u, m):
    resid = data.y[:, None] - data.x @ a.a
    wrss = float(np.sum(u.u.T**m * resid * resid))
    if wrss < 1e-12:
        logger.debug("zero weighted residual sum in BIC; clamping")
        wrss = 1e-12
    k = a.k
    d_f = k + (k - 1) + int(np.count_nonzero(a.a))
    n = data.n
    return float(np.log(wrss / n) + d_f * np.log(n) / n)


def model_bic(fit_result, data, m):
    """Modified BIC: log(weighted RSS / n) + d_f log(n)/n with
    d_f = K + (K-1) + number of nonzero coefficients."""
    return _bic_value(data, fit_result.coef, fit_result.weights, m)


def _fit_single_group(data, h):
    """K=1 degenerates to one CV-tuned lasso; weights are identically 1."""
    w = np.ones(data.n)
    if h.lambdas is not None:
        if len(h.lambdas) != 1:
            raise ConfigError("one penalty required for K=1")
        lam = h.lambdas[0]
    else:
        lam = cv_select_lambda(data.x, data.y, w, folds=h.cv_folds, seed=h.seed)
    sol = solve_weighted_lasso(WeightedLassoProblem(data.x, data.y, w, lam))
    a = CoefficientMatrix(sol.coef[:, None])
    u = WeightMatrix(np.ones((1, data.n)))
    h_cur = replace(h, lambdas=(lam,))
    obj = evaluate_objective(data, a, u, h_cur)
    return FitResult(
        coef=a,
        weights=u,
        objective_trace=(obj,),
        bic=_bic_value(data, a, u, h.m),
        labels=np.zeros(data.n, dtype=np.int64),
        selected_lambdas=(lam,),
        selected_gamma=h.gamma,
        iters=1,
        converged=True,
        diagnostics={"lasso_converged": sol.converged},
    )


def fit(data, k, h, u_init=None):
    """Alternating fit of k subgroups on ``data``.

    The starting weights come from the screening initializer unless
    ``u_init`` (a K x n matrix, binary or fuzzy) is supplied; either way
    they are clipped strictly inside the simplex.  Per-subgroup lasso
    penalties are CV-selected at each coefficient update (see
    ``Hyperparams`` for fixing or freezing them).  The objective trace
    records the value after every half-update; with frozen penalties it is
    non-increasing.  Deterministic given (data, k, h.seed).
    """
    if k < 1:
        raise ConfigError(f"need at least one subgroup, got {k}")
    if k > data.n:
        raise ConfigError(f"cannot fit {k} subgroups with {data.n} samples")
    if h.lambdas is not None and len(h.lambdas) != k:
        raise ConfigError(f"{len(h.lambdas)} penalties supplied for {k} subgroups")
    if k == 1 and u_init is None:
        return _fit_single_group(data, h)

    if u_init is None:
        u0 = screening_initializer(data.x, data.y, k, h.seed, cv_folds=h.cv_folds)
    else:
        u0 = u_init.u if isinstance(u_init, WeightMatrix) else np.asarray(u_init, dtype=float)
        if u0.shape != (k, data.n):
            raise ConfigError(f"u_init has shape {u0.shape}, expected ({k}, {data.n})")
    u = WeightMatrix(interiorize(u0))

    alpha = np.zeros((data.p, k))
    selected = list(h.lambdas) if h.lambdas is not None else [np.nan] * k
    grids = [None] * k  # per-subgroup penalty grid, fixed at the first update
    trace = []
    diagnostics = {"newton_iters": 0, "gradient_fallbacks": 0, "line_search_failures": 0}
    prev_obj = None
    converged = False
    iters = 0
    for t in range(h.max_outer_iters):
        iters = t + 1
        for kk in range(k):
            w = u.u[kk] ** h.m
            if h.lambdas is not None:
                lam = h.lambdas[kk]
            elif h.freeze_lambdas and t > 0:
                lam = selected[kk]
            else:
                if grids[kk] is None:
                    grids[kk] = lambda_path(data.x, data.y, w)
                lam = cv_select_lambda(
                    data.x, data.y, w, lambda_grid=grids[kk],
                    folds=h.cv_folds, seed=h.seed * 613 + kk,
                )
            selected[kk] = lam
            alpha[:, kk] = solve_weighted_lasso(
                WeightedLassoProblem(data.x, data.y, w, lam), warm_start=alpha[:, kk]
            ).coef
        a = CoefficientMatrix(alpha)
        h_cur = replace(h, lambdas=tuple(selected))
        trace.append(evaluate_objective(data, a, u, h_cur))

        u, info = update_weights(
            residual_matrix(data, a), h.gamma, h.m, u, epsilon=h.barrier_eps,
            return_info=True,
        )
        for key in diagnostics:
            diagnostics[key] += info[key]
        obj = evaluate_objective(data, a, u, h_cur)
        trace.append(obj)
        if not np.isfinite(obj):
            raise NumericalError(f"objective became non-finite at iteration {iters}")
        if prev_obj is not None and abs(prev_obj - obj) <= h.outer_tol * (1.0 + abs(prev_obj)):
            converged = True
            break
        prev_obj = obj
    if not converged:
        logger.info("fit stopped at max_outer_iters=%d without converging", h.max_outer_iters)

    a = CoefficientMatrix(alpha)
    return FitResult(
        coef=a,
        weights=u,
        objective_trace=tuple(trace),
        bic=_bic_value(data, a, u, h.m),
        labels=assign_majority(u),
        selected_lambdas=tuple(selected),
        selected_gamma=h.gamma,
        iters=iters,
        converged=converged,
        diagnostics=diagnostics,
    )


def select_gamma(data, k, h):
    """Five-fold CV choice of the fusion strength from ``h.gamma_grid``.

    Each candidate is scored by held-out squared prediction error: the
    coefficient matrix is fit on the training folds, held-out weights come
    from one barrier update against the trained coefficients (started from
    uniform columns), and predictions mix the trained coefficients with
    those weights.  Returns a grid element; ties break toward the earlier
    grid entry.
    """
    grid = h.gamma_grid
    if len(grid) == 0:
        raise ConfigError("gamma grid must be non-empty")
    if len(grid) == 1:
        return float(grid[0])
    if data.n < h.cv_folds:
        raise ConfigError(f"cannot split {data.n} samples into {h.cv_folds} folds")
    ids = fold_assignments(data.n, h.cv_folds, spawn_rng(h.seed, TAG_GAMMA_CV))
    scores = np.zeros(len(grid))
    for gi, gamma in enumerate(grid):
        errs = []
        for f in range(h.cv_folds):
            va = ids == f
            train = Dataset(data.x[~va], data.y[~va])
            val = Dataset(data.x[va], data.y[va])
            res = fit(train, k, replace(h, gamma=gamma))
            r2_val = residual_matrix(val, res.coef)
            u_val = update_weights(
                r2_val, gamma, h.m, np.full((k, val.n), 1.0 / k), epsilon=h.barrier_eps
            )
            pred = predict(val, res.coef, u_val)
            errs.append(float(np.mean((pred - val.y) ** 2)))
        scores[gi] = np.mean(errs)
    return float(grid[int(np.argmin(scores))])


def select_k(data, k_range, h, nested_gamma_cv=False):
    """Fit every candidate subgroup count and pick the BIC minimizer.

    Returns ``(best_k, fits)`` with one fit per candidate (ascending).
    Ties break toward the smaller count.  With ``nested_gamma_cv`` the
    fusion strength is re-selected by CV for every candidate first.
    """
    ks = sorted({int(v) for v in k_range})
    if not ks:
        raise ConfigError("k range must be non-empty")
    fits = []
    for k in ks:
        hk = h
        if nested_gamma_cv:
            hk = replace(h, gamma=select_gamma(data, k, h))
        fits.append(fit(data, k, hk))
    bics = np.array([f.bic for f in fits])
    return ks[int(np.argmin(bics))], fits

"""Central domain types, the joint objective, and prediction.

The model: each sample i carries a membership-weight vector u_i on the
probability simplex over K subgroups, each subgroup k a sparse coefficient
vector alpha_k.  The fitted objective is

    sum_i sum_k u_ki^m (y_i - X_i alpha_k)^2
        + sum_k lambda_k ||alpha_k||_1
        + gamma * sum_i sum_{k>=2} (u_(k),i - u_(k-1),i)^2

where u_(1),i <= ... <= u_(K),i are the ascending-sorted weights of sample
i.  The third term (the fusion penalty) shrinks the gaps between sorted
weights, pulling memberships toward equality absent strong evidence.
"""

from dataclasses import dataclass, field

import numpy as np


class HetregError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(HetregError, ValueError):
    """Array shapes or sizes are inconsistent with the model."""


class ConfigError(HetregError, ValueError):
    """A configuration value is invalid (folds, grids, sample counts...)."""


class NumericalError(HetregError, RuntimeError):
    """An optimization produced non-finite or otherwise unusable values."""


class ComparisonError(HetregError, ValueError):
    """Two results cannot be compared (e.g. different subgroup counts)."""


class DomainError(HetregError, ValueError):
    """A point lies outside the domain of the function being evaluated."""


def _as_readonly(arr, dtype=float):
    out = np.array(arr, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Feature matrix x (n x p) and response vector y (n,).

    Immutable after construction; arrays are copied and marked read-only.
    The library fits data exactly as given; any standardization is the
    caller's responsibility (the CLI standardizes feature columns).
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _as_readonly(self.x)
        y = _as_readonly(self.y)
        if x.ndim != 2:
            raise DimensionError(f"x must be 2-D, got ndim={x.ndim}")
        if y.ndim != 1:
            raise DimensionError(f"y must be 1-D, got ndim={y.ndim}")
        n, p = x.shape
        if n < 2:
            raise DimensionError(f"need at least 2 samples, got {n}")
        if p < 1:
            raise DimensionError("need at least 1 feature")
        if y.shape[0] != n:
            raise DimensionError(f"x has {n} rows but y has {y.shape[0]} entries")
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise DimensionError("x and y must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class CoefficientMatrix:
    """Subgroup regression coefficients, one column per subgroup (p x K)."""

    a: np.ndarray

    def __post_init__(self):
        a = _as_readonly(self.a)
        if a.ndim != 2:
            raise DimensionError(f"coefficient matrix must be 2-D, got ndim={a.ndim}")
        if a.shape[1] < 1:
            raise DimensionError("need at least one subgroup column")
        if not np.isfinite(a).all():
            raise DimensionError("coefficients must be finite")
        object.__setattr__(self, "a", a)

    @property
    def p(self):
        return self.a.shape[0]

    @property
    def k(self):
        return self.a.shape[1]


COLUMN_SUM_TOL = 1e-8


@dataclass(frozen=True)
class WeightMatrix:
    """Membership weights, one column per sample (K x n).

    Every entry lies in [0, 1] and every column sums to 1 within 1e-8.
    """

    u: np.ndarray

    def __post_init__(self):
        u = _as_readonly(self.u)
        if u.ndim != 2:
            raise DimensionError(f"weight matrix must be 2-D, got ndim={u.ndim}")
        if u.shape[0] < 1 or u.shape[1] < 1:
            raise DimensionError("weight matrix must be non-empty")
        if not np.isfinite(u).all():
            raise DimensionError("weights must be finite")
        if u.min() < 0.0 or u.max() > 1.0:
            raise DimensionError("weights must lie in [0, 1]")
        colsums = u.sum(axis=0)
        if np.abs(colsums - 1.0).max() > COLUMN_SUM_TOL:
            worst = int(np.abs(colsums - 1.0).argmax())
            raise DimensionError(
                f"column {worst} sums to {colsums[worst]:.12g}, expected 1"
            )
        object.__setattr__(self, "u", u)

    @property
    def k(self):
        return self.u.shape[0]

    @property
    def n(self):
        return self.u.shape[1]


@dataclass(frozen=True)
class Hyperparams:
    """Tuning constants for a fit.

    ``lambdas=None`` means the per-subgroup lasso penalties are selected by
    cross-validation at the first coefficient update and then held fixed,
    which keeps the objective trace monotone.  ``freeze_lambdas=False``
    re-selects them at every update instead; this can feed back into the
    weights and collapse the penalties on hard replicates, so it is opt-in.
    ``gamma`` is the fusion strength used when no CV over ``gamma_grid``
    is requested.
    """

    m: float = 2.0
    lambdas: tuple | None = None
    gamma: float = 0.5
    cv_folds: int = 5
    gamma_grid: tuple = (0.01, 0.1, 0.5, 1.0, 5.0, 10.0)
    max_outer_iters: int = 100
    outer_tol: float = 1e-5
    barrier_eps: float = 1e-6
    freeze_lambdas: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.m > 1.0:
            raise ConfigError(f"fuzzifier m must exceed 1, got {self.m}")
        if self.lambdas is not None:
            lams = tuple(float(v) for v in self.lambdas)
            if any(v < 0 for v in lams):
                raise ConfigError("lasso penalties must be nonnegative")
            object.__setattr__(self, "lambdas", lams)
        if self.gamma < 0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma}")
        if self.cv_folds < 2:
            raise ConfigError(f"need at least 2 CV folds, got {self.cv_folds}")
        grid = tuple(float(v) for v in self.gamma_grid)
        if any(v < 0 for v in grid):
            raise ConfigError("gamma grid values must be nonnegative")
        object.__setattr__(self, "gamma_grid", grid)
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters must be positive")
        if not self.outer_tol > 0:
            raise ConfigError("outer_tol must be positive")
        if not self.barrier_eps > 0:
            raise ConfigError("barrier_eps must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class FitResult:
    """Converged estimates plus bookkeeping from one alternating fit."""

    coef: CoefficientMatrix
    weights: WeightMatrix
    objective_trace: tuple
    bic: float
    labels: np.ndarray
    selected_lambdas: tuple
    selected_gamma: float
    iters: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "objective_trace", tuple(float(v) for v in self.objective_trace))
        object.__setattr__(self, "labels", _as_readonly(self.labels, dtype=np.int64))
        object.__setattr__(self, "selected_lambdas", tuple(float(v) for v in self.selected_lambdas))

    @property
    def objective(self):
        """Final objective value."""
        return self.objective_trace[-1]


def fusion_penalty(u_col, gamma):
    """Sorted-gap penalty gamma * sum of squared gaps between the
    ascending-sorted entries of one weight column.

    Invariant under any permutation of ``u_col``; zero iff all entries are
    equal.  Linear in ``gamma``.
    """
    u = np.asarray(u_col, dtype=float).ravel()
    if u.size == 0:
        raise DimensionError("weight column must be non-empty")
    if u.size == 1:
        return 0.0
    gaps = np.diff(np.sort(u))
    return float(gamma) * float(gaps @ gaps)


def _check_shapes(data, a, u):
    if a.p != data.p:
        raise DimensionError(f"coefficients have {a.p} rows but data has {data.p} features")
    if u.n != data.n:
        raise DimensionError(f"weights have {u.n} columns but data has {data.n} samples")
    if u.k != a.k:
        raise DimensionError(f"weights have {u.k} subgroups but coefficients have {a.k}")


def objective_parts(data, a, u, h):
    """Return ``(loss, lasso, fusion)`` terms of the objective.

    ``h.lambdas=None`` is treated as all-zero penalties (no lasso term).
    """
    _check_shapes(data, a, u)
    resid = data.y[:, None] - data.x @ a.a          # (n, K)
    w = u.u.T ** h.m                                 # (n, K)
    loss = float(np.sum(w * resid * resid))
    if h.lambdas is None:
        lasso = 0.0
    else:
        if len(h.lambdas) != a.k:
            raise DimensionError(
                f"{len(h.lambdas)} penalties supplied for {a.k} subgroups"
            )
        lasso = float(np.sum(np.asarray(h.lambdas) * np.abs(a.a).sum(axis=0)))
    u_sorted = np.sort(u.u, axis=0)
    if u.k >= 2:
        gaps = np.diff(u_sorted, axis=0)
        fusion = h.gamma * float(np.sum(gaps * gaps))
    else:
        fusion = 0.0
    return loss, lasso, fusion


def evaluate_objective(data, a, u, h):
    """Evaluate the full objective (weighted loss + lasso + fusion)."""
    return sum(objective_parts(data, a, u, h))


def predict(data, a, u):
    """Mixture predictions X_i @ (sum_k u_ki alpha_k) for every sample."""
    _check_shapes(data, a, u)
    xa = data.x @ a.a                                # (n, K)
    return np.einsum("nk,kn->n", xa, u.u)

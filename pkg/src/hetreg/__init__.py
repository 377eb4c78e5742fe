"""Regression-based heterogeneity analysis with overlapping subgroups.

Jointly estimates a per-subgroup sparse coefficient matrix and per-sample
simplex-constrained membership weights by alternating penalized
optimization: an L1-penalized weighted least-squares update for the
coefficients and a log-barrier interior-point update for the weights.
Includes a feature-screening initializer, BIC-based selection of the
number of subgroups, simulation generators, and evaluation metrics.
"""

from .core import (
    CoefficientMatrix,
    ConfigError,
    Dataset,
    DimensionError,
    FitResult,
    HetregError,
    Hyperparams,
    NumericalError,
    WeightMatrix,
    evaluate_objective,
    fusion_penalty,
    objective_parts,
    predict,
)
from .solver import assign_majority, fit, model_bic, select_gamma, select_k

__version__ = "0.1.0"

__all__ = [
    "CoefficientMatrix",
    "ConfigError",
    "Dataset",
    "DimensionError",
    "FitResult",
    "HetregError",
    "Hyperparams",
    "NumericalError",
    "WeightMatrix",
    "assign_majority",
    "evaluate_objective",
    "fit",
    "fusion_penalty",
    "model_bic",
    "objective_parts",
    "predict",
    "select_gamma",
    "select_k",
]

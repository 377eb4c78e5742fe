"""Seeded generators for the benchmark scenarios.

Every scenario returns the generated data together with the ground-truth
coefficient and weight matrices.  Feature rows are i.i.d. multivariate
normal with an AR(1) correlation structure rho^|j-k|, produced by the
exact recursion x_j = rho*x_{j-1} + sqrt(1-rho^2)*z_j so marginal
variances are exactly 1.  All randomness flows through the counter-based
Philox generator keyed by the scenario seed, so generation is
bit-reproducible for a fixed seed.
"""

from dataclasses import dataclass

import numpy as np

from ._rng import TAG_SCENARIO, spawn_rng
from .core import CoefficientMatrix, ConfigError, Dataset, WeightMatrix

SCENARIO_NAMES = (
    "S1",
    "S2",
    "S3",
    "S4",
    "K4",
    "SMALL_OVERLAP",
    "SMALL_DISJOINT",
    "HOMOG",
    "MISSPEC",
    "CCLE_LIKE",
)

# number of subgroups per scenario
SCENARIO_K = {
    "S1": 2, "S2": 2, "S3": 2, "S4": 2, "K4": 4,
    "SMALL_OVERLAP": 2, "SMALL_DISJOINT": 4, "HOMOG": 1, "MISSPEC": 2,
    "CCLE_LIKE": 4,
}

CCLE_PURE_BLOCK = 102  # pure samples per subgroup in the CCLE-like design
CCLE_P = 600


@dataclass(frozen=True)
class Scenario:
    """One simulation configuration."""

    name: str
    n: int
    p: int
    sigma: float
    balance: float = 0.5
    rho: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise ConfigError(f"unknown scenario {self.name!r}; choose from {SCENARIO_NAMES}")
        if self.n <= 0 or self.p <= 0:
            raise ConfigError("n and p must be positive")
        if self.sigma < 0:
            raise ConfigError("noise level must be nonnegative")
        if not 0.0 < self.balance < 1.0:
            raise ConfigError("balance must lie strictly between 0 and 1")
        if not abs(self.rho) < 1:
            raise ConfigError("AR coefficient must satisfy |rho| < 1")

    @property
    def k(self):
        return SCENARIO_K[self.name]


def gen_features(n, p, rho=0.5, seed=0, rng=None):
    """n x p matrix of AR(1)-correlated standard normal features."""
    if not abs(rho) < 1:
        raise ConfigError("AR coefficient must satisfy |rho| < 1")
    if rng is None:
        rng = spawn_rng(seed, TAG_SCENARIO)
    z = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = z[:, 0]
    scale = np.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + scale * z[:, j]
    return x


def _coef_from_blocks(p, columns):
    """Assemble a p x K matrix from {col: {row: value}} specs."""
    k = len(columns)
    need = 1 + max(r for col in columns for r in col)
    if p < need:
        raise ConfigError(f"scenario needs at least {need} features, got p={p}")
    a = np.zeros((p, k))
    for c, col in enumerate(columns):
        for r, val in col.items():
            a[r, c] = val
    return a


def _scenario_coefficients(name, p):
    if name == "S1":
        return _coef_from_blocks(p, [{0: 1, 1: 2, 2: 3}, {3: -4, 4: -5, 5: -6}])
    if name in ("S2", "S3"):
        return _coef_from_blocks(p, [{0: 1, 1: 2, 2: 3}, {0: 1, 1: -2, 2: -3}])
    if name == "S4":
        return _coef_from_blocks(p, [{0: 1, 1: 2, 2: 3}, {3: -1, 4: -2, 5: -3}])
    if name in ("K4", "SMALL_DISJOINT"):
        return _coef_from_blocks(p, [
            {0: 2, 1: 2, 2: 3, 3: 3},
            {4: -2, 5: -2, 6: -3, 7: -3},
            {0: 2, 2: 3, 5: -2, 7: -3},
            {0: 2, 1: 2, 6: -3, 7: -3},
        ])
    if name == "SMALL_OVERLAP":
        return _coef_from_blocks(p, [{0: 1, 1: 1.5, 2: 2}, {3: -1, 4: -1.5, 5: -2}])
    if name == "HOMOG":
        return _coef_from_blocks(p, [{0: 1, 1: 2, 2: 3}])
    if name == "MISSPEC":
        return _coef_from_blocks(p, [{0: 0.3, 1: 1, 2: 2}, {0: 0.3, 1: -1, 2: -2}])
    if name == "CCLE_LIKE":
        if p != CCLE_P:
            raise ConfigError(f"the CCLE-like design is defined for p={CCLE_P}, got {p}")
        return _coef_from_blocks(p, [
            {0: 1.5, 1: -1.5, 2: 1, 3: -1, 4: 0.5, 5: -0.5, 6: 0.3, 7: -0.3},
            {0: 1.5, 7: -1, 8: 0.5, 9: -0.3},
            {7: 1.5, 10: -0.5, 11: 0.3},
            {12: 1, 13: -1, 14: 0.5, 15: -0.5},
        ])
    raise ConfigError(f"unknown scenario {name!r}")


def _overlap2_weights(n, rng):
    if n % 5 != 0:
        raise ConfigError(f"overlapping two-group designs need n divisible by 5, got {n}")
    pure = 2 * n // 5
    mixed = n // 5
    a = rng.uniform(0.0, 1.0, size=mixed)
    u = np.zeros((2, n))
    u[0, :pure] = 1.0
    u[1, pure : 2 * pure] = 1.0
    u[0, 2 * pure :] = a
    u[1, 2 * pure :] = 1.0 - a
    return u


def _disjoint_weights(n, sizes):
    u = np.zeros((len(sizes), n))
    start = 0
    for g, size in enumerate(sizes):
        u[g, start : start + size] = 1.0
        start += size
    return u


def _normalized_uniform(rng, k, count):
    draws = rng.uniform(0.0, 1.0, size=(count, k))
    return (draws / draws.sum(axis=1, keepdims=True)).T


def _k4_weights(n, rng):
    if n % 15 != 0:
        raise ConfigError(f"the four-group overlapping design needs n divisible by 15, got {n}")
    pure = n // 5
    mixed = n // 15
    u = np.zeros((4, n))
    for g in range(4):
        u[g, g * pure : (g + 1) * pure] = 1.0
    start = 4 * pure
    a = rng.uniform(0.0, 1.0, size=mixed)
    u[0, start : start + mixed] = a
    u[1, start : start + mixed] = 1.0 - a
    start += mixed
    a = rng.uniform(0.0, 1.0, size=mixed)
    u[2, start : start + mixed] = a
    u[3, start : start + mixed] = 1.0 - a
    start += mixed
    u[:, start : start + mixed] = _normalized_uniform(rng, 4, mixed)
    return u


def _ccle_weights(n, rng):
    pure_total = 4 * CCLE_PURE_BLOCK
    if n <= pure_total:
        raise ConfigError(
            f"the CCLE-like design needs n > {pure_total} "
            f"({CCLE_PURE_BLOCK} pure samples per subgroup plus mixed ones), got {n}"
        )
    u = np.zeros((4, n))
    for g in range(4):
        u[g, g * CCLE_PURE_BLOCK : (g + 1) * CCLE_PURE_BLOCK] = 1.0
    u[:, pure_total:] = _normalized_uniform(rng, 4, n - pure_total)
    return u


def _scenario_weights(sc, rng):
    name, n = sc.name, sc.n
    if name in ("S1", "S2", "SMALL_OVERLAP", "MISSPEC"):
        return _overlap2_weights(n, rng)
    if name in ("S3", "S4"):
        n1 = int(round(sc.balance * n))
        if n1 <= 0 or n1 >= n:
            raise ConfigError(f"balance {sc.balance} leaves an empty subgroup at n={n}")
        return _disjoint_weights(n, (n1, n - n1))
    if name == "K4":
        return _k4_weights(n, rng)
    if name == "SMALL_DISJOINT":
        if n % 4 != 0:
            raise ConfigError(f"the balanced four-group design needs n divisible by 4, got {n}")
        return _disjoint_weights(n, (n // 4,) * 4)
    if name == "HOMOG":
        return np.ones((1, n))
    if name == "CCLE_LIKE":
        return _ccle_weights(n, rng)
    raise ConfigError(f"unknown scenario {name!r}")


def expected_response(x, a, u, quadratic_first_feature=False):
    """E(y_i) = design_i @ (sum_k u_ki alpha_k), with the first feature
    squared in the misspecified quadratic design."""
    design = x.copy() if quadratic_first_feature else x
    if quadratic_first_feature:
        design[:, 0] = x[:, 0] ** 2
    return np.einsum("nk,kn->n", design @ a, u)


def make_scenario(sc):
    """Generate one dataset plus its ground truth (A, U).

    Draw order is fixed (features, then mixing weights, then noise) so a
    given seed always produces the same dataset.
    """
    rng = spawn_rng(sc.seed, TAG_SCENARIO)
    a = _scenario_coefficients(sc.name, sc.p)
    x = gen_features(sc.n, sc.p, rho=sc.rho, rng=rng)
    u = _scenario_weights(sc, rng)
    ey = expected_response(x, a, u, quadratic_first_feature=sc.name == "MISSPEC")
    y = ey + sc.sigma * rng.standard_normal(sc.n)
    return Dataset(x, y), CoefficientMatrix(a), WeightMatrix(u)

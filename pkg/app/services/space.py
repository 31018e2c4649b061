"""
Hierarchical search spaces: point encoding, activity evaluation and sampling.

Points are handled as encoded float vectors with one entry per dimension:
numeric values as-is, categorical values as level indices. Inactive
dimensions keep their stored values; activity is computed on demand.
"""

from typing import List, Sequence, Union

import numpy as np

from app.core.exceptions import SpaceException
from app.core.logging import get_logger
from app.models.schemas import (
    ActivityRule,
    CategoricalDimension,
    NumericDimension,
    SearchSpace,
)

logger = get_logger("space")

Value = Union[float, str]


def benchmark_space(c: float) -> SearchSpace:
    """
    Two-dimensional unit square where ``x2`` is active iff ``x1 > c``.

    Args:
        c: Activation threshold on ``x1``

    Returns:
        The benchmark search space
    """
    return SearchSpace(
        dimensions=(
            NumericDimension(name="x1", lower=0.0, upper=1.0),
            NumericDimension(name="x2", lower=0.0, upper=1.0),
        ),
        rules=(ActivityRule(target=1, parent=0, operator=">", threshold=c),),
    )


def lower_bounds(space: SearchSpace) -> np.ndarray:
    """Lower box bound per dimension (0 for categorical level codes)."""
    return np.array([
        dim.lower if isinstance(dim, NumericDimension) else 0.0
        for dim in space.dimensions
    ])


def upper_bounds(space: SearchSpace) -> np.ndarray:
    """Upper box bound per dimension (last level code for categorical)."""
    return np.array([
        dim.upper if isinstance(dim, NumericDimension) else float(len(dim.levels) - 1)
        for dim in space.dimensions
    ])


def categorical_mask(space: SearchSpace) -> np.ndarray:
    return np.array([isinstance(dim, CategoricalDimension) for dim in space.dimensions])


def encode(space: SearchSpace, values: Sequence[Value]) -> np.ndarray:
    """
    Encode a readable point (floats and level names) as a numeric row.

    Raises:
        SpaceException: If the point does not match the space
    """
    if len(values) != space.dim:
        raise SpaceException(f"Point has {len(values)} values, space has {space.dim} dimensions")
    row = np.empty(space.dim)
    for i, (dim, value) in enumerate(zip(space.dimensions, values)):
        if isinstance(dim, CategoricalDimension):
            if value not in dim.levels:
                raise SpaceException(f"'{value}' is not a level of '{dim.name}'")
            row[i] = dim.levels.index(value)
        else:
            row[i] = float(value)
    if not contains(space, row):
        raise SpaceException(f"Point {list(values)} lies outside the search space")
    return row


def decode(space: SearchSpace, row: np.ndarray) -> List[Value]:
    """Convert an encoded row back to readable values."""
    values: List[Value] = []
    for dim, value in zip(space.dimensions, row):
        if isinstance(dim, CategoricalDimension):
            values.append(dim.levels[int(value)])
        else:
            values.append(float(value))
    return values


def contains(space: SearchSpace, x: np.ndarray) -> bool:
    """Check the Point invariants for one encoded row."""
    x = np.asarray(x, dtype=float)
    if x.shape != (space.dim,) or not np.all(np.isfinite(x)):
        return False
    for dim, value in zip(space.dimensions, x):
        if isinstance(dim, CategoricalDimension):
            if value != np.round(value) or not 0 <= value < len(dim.levels):
                return False
        elif not dim.lower <= value <= dim.upper:
            return False
    return True


def snap(space: SearchSpace, X: np.ndarray) -> np.ndarray:
    """Clip rows into the box and round categorical coordinates to level codes."""
    X = np.clip(np.atleast_2d(np.asarray(X, dtype=float)), lower_bounds(space), upper_bounds(space))
    mask = categorical_mask(space)
    if mask.any():
        X[:, mask] = np.round(X[:, mask])
    return X


def _rule_holds(space: SearchSpace, rule: ActivityRule, parent_values: np.ndarray) -> np.ndarray:
    if rule.is_numeric:
        threshold = rule.threshold
        if rule.operator == ">":
            return parent_values > threshold
        if rule.operator == ">=":
            return parent_values >= threshold
        if rule.operator == "<":
            return parent_values < threshold
        return parent_values <= threshold
    parent_dim = space.dimensions[rule.parent]
    codes = [parent_dim.levels.index(level) for level in rule.levels]
    return np.isin(parent_values, codes)


def activity_matrix(space: SearchSpace, X: np.ndarray) -> np.ndarray:
    """
    Vectorized activity for a batch of encoded rows.

    Args:
        space: The search space
        X: Array of shape (n, d)

    Returns:
        Boolean array of shape (n, d); dimensions without a rule are always active
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    active = np.ones(X.shape, dtype=bool)
    for rule in space.rules:
        active[:, rule.target] = _rule_holds(space, rule, X[:, rule.parent])
    return active


def activity(space: SearchSpace, x: np.ndarray) -> np.ndarray:
    """Activity vector of a single encoded point."""
    return activity_matrix(space, np.asarray(x, dtype=float)[None, :])[0]


def sample_uniform(space: SearchSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw ``n`` points uniformly: numeric coordinates i.i.d. on their bounds,
    categorical coordinates uniform over levels.

    Returns:
        Array of shape (n, d) of encoded points
    """
    if n < 1:
        raise SpaceException(f"Sample size must be at least 1, got {n}")
    X = np.empty((n, space.dim))
    for i, dim in enumerate(space.dimensions):
        if isinstance(dim, CategoricalDimension):
            X[:, i] = rng.integers(0, len(dim.levels), size=n)
        else:
            X[:, i] = rng.uniform(dim.lower, dim.upper, size=n)
    return X


def sample_lhs(space: SearchSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Latin Hypercube sample: each numeric dimension has exactly one point in
    each of ``n`` equal-width strata. Categorical dimensions are drawn uniformly.

    Returns:
        Array of shape (n, d) of encoded points
    """
    if n < 1:
        raise SpaceException(f"Sample size must be at least 1, got {n}")
    X = np.empty((n, space.dim))
    for i, dim in enumerate(space.dimensions):
        if isinstance(dim, CategoricalDimension):
            X[:, i] = rng.integers(0, len(dim.levels), size=n)
            continue
        cells = (rng.permutation(n) + rng.random(n)) / n
        # Stay inside the closed box even when the jitter rounds up.
        X[:, i] = np.clip(dim.lower + cells * dim.width, dim.lower, dim.upper)
    return X

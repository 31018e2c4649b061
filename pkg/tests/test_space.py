"""
Tests for search spaces, activity and sampling.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import SpaceException
from app.models.schemas import ActivityRule, CategoricalDimension, NumericDimension, SearchSpace
from app.services.space import (
    activity,
    activity_matrix,
    benchmark_space,
    contains,
    decode,
    encode,
    lower_bounds,
    sample_lhs,
    sample_uniform,
    snap,
    upper_bounds,
)


def test_benchmark_activity(bench_space):
    """x2 is active exactly when x1 exceeds the threshold."""
    assert activity(bench_space, np.array([0.7, 0.5])).tolist() == [True, True]
    assert activity(bench_space, np.array([0.2, 0.5])).tolist() == [True, False]
    assert activity(bench_space, np.array([0.4, 0.5])).tolist() == [True, False]


def test_activity_without_rules(line_space):
    assert activity(line_space, np.array([0.3])).tolist() == [True]
    two_d = SearchSpace(dimensions=(
        NumericDimension(name="a", lower=0, upper=1),
        NumericDimension(name="b", lower=-1, upper=1),
    ))
    assert activity_matrix(two_d, np.zeros((5, 2))).all()


def test_activity_changes_only_across_threshold():
    space = benchmark_space(0.6)
    x1 = np.linspace(0.0, 1.0, 101)
    X = np.column_stack([x1, np.full_like(x1, 0.3)])
    active = activity_matrix(space, X)[:, 1]
    assert np.array_equal(active, x1 > 0.6)


def test_activity_is_pure(bench_space):
    x = np.array([0.55, 0.1])
    assert np.array_equal(activity(bench_space, x), activity(bench_space, x.copy()))


def test_membership_and_threshold_rules(mixed_space):
    first = encode(mixed_space, [1.5, "adam", "cosine", 0.3])
    second = encode(mixed_space, [0.5, "lbfgs", "constant", 0.2])
    assert first.tolist() == [1.5, 1.0, 1.0, 0.3]
    assert activity(mixed_space, first).tolist() == [True, True, True, True]
    assert activity(mixed_space, second).tolist() == [True, True, False, False]


def test_encode_decode(mixed_space):
    row = encode(mixed_space, [0.25, "lbfgs", "constant", 1.0])
    assert decode(mixed_space, row) == [0.25, "lbfgs", "constant", 1.0]


def test_encode_rejects_invalid_points(mixed_space):
    with pytest.raises(SpaceException):
        encode(mixed_space, [0.25, "rmsprop", "constant", 1.0])
    with pytest.raises(SpaceException):
        encode(mixed_space, [2.5, "sgd", "constant", 1.0])
    with pytest.raises(SpaceException):
        encode(mixed_space, [0.25, "sgd"])


def test_contains(mixed_space):
    assert contains(mixed_space, np.array([2.0, 2.0, 0.0, 0.0]))
    assert not contains(mixed_space, np.array([2.0, 1.5, 0.0, 0.0]))
    assert not contains(mixed_space, np.array([2.0, 3.0, 0.0, 0.0]))
    assert not contains(mixed_space, np.array([np.nan, 0.0, 0.0, 0.0]))


def test_box_bounds_and_snap(mixed_space):
    assert lower_bounds(mixed_space).tolist() == [0.0, 0.0, 0.0, 0.0]
    assert upper_bounds(mixed_space).tolist() == [2.0, 2.0, 1.0, 1.0]
    snapped = snap(mixed_space, np.array([[2.4, 1.6, 0.2, -0.1]]))
    assert snapped.tolist() == [[2.0, 2.0, 0.0, 0.0]]


def test_space_validation():
    numeric = NumericDimension(name="a", lower=0, upper=1)
    with pytest.raises(ValidationError):
        NumericDimension(name="a", lower=1, upper=1)
    with pytest.raises(ValidationError):
        CategoricalDimension(name="c", levels=("only",))
    with pytest.raises(ValidationError):
        SearchSpace(dimensions=(numeric, NumericDimension(name="a", lower=0, upper=2)))
    with pytest.raises(ValidationError):
        ActivityRule(target=0, parent=0, operator=">", threshold=0.5)


def test_space_rejects_cycles_and_double_rules():
    dims = (
        NumericDimension(name="a", lower=0, upper=1),
        NumericDimension(name="b", lower=0, upper=1),
    )
    with pytest.raises(ValidationError):
        SearchSpace(dimensions=dims, rules=(
            ActivityRule(target=1, parent=0, operator=">", threshold=0.5),
            ActivityRule(target=0, parent=1, operator=">", threshold=0.5),
        ))
    with pytest.raises(ValidationError):
        SearchSpace(dimensions=dims, rules=(
            ActivityRule(target=1, parent=0, operator=">", threshold=0.5),
            ActivityRule(target=1, parent=0, operator="<", threshold=0.2),
        ))


def test_membership_rule_needs_declared_levels():
    dims = (
        CategoricalDimension(name="kind", levels=("x", "y")),
        NumericDimension(name="value", lower=0, upper=1),
    )
    with pytest.raises(ValidationError):
        SearchSpace(dimensions=dims, rules=(ActivityRule(target=1, parent=0, levels=("z",)),))


def test_sample_uniform_is_deterministic(bench_space):
    first = sample_uniform(bench_space, 3, np.random.default_rng(7))
    second = sample_uniform(bench_space, 3, np.random.default_rng(7))
    assert np.array_equal(first, second)


def test_sample_uniform_within_bounds(bench_space, rng):
    X = sample_uniform(bench_space, 1000, rng)
    assert X.shape == (1000, 2)
    assert np.all((X >= 0.0) & (X <= 1.0))


def test_sample_uniform_mean(line_space, rng):
    X = sample_uniform(line_space, 10_000, rng)
    assert abs(X.mean() - 0.5) < 0.02


def test_sample_uniform_categorical(mixed_space, rng):
    X = sample_uniform(mixed_space, 500, rng)
    assert all(contains(mixed_space, row) for row in X)
    assert set(np.unique(X[:, 1])) == {0.0, 1.0, 2.0}


def test_sample_lhs_stratified(line_space, rng):
    X = sample_lhs(line_space, 4, rng)
    strata = np.floor(np.sort(X[:, 0]) * 4).astype(int)
    assert strata.tolist() == [0, 1, 2, 3]


def test_sample_lhs_single_point(bench_space, rng):
    X = sample_lhs(bench_space, 1, rng)
    assert X.shape == (1, 2)
    assert contains(bench_space, X[0])


def test_sample_lhs_marginals(bench_space, rng):
    X = sample_lhs(bench_space, 10, rng)
    for i in range(2):
        strata = np.sort(np.floor(X[:, i] * 10).astype(int))
        assert strata.tolist() == list(range(10))


def test_sample_size_must_be_positive(bench_space, rng):
    with pytest.raises(SpaceException):
        sample_uniform(bench_space, 0, rng)
    with pytest.raises(SpaceException):
        sample_lhs(bench_space, 0, rng)

"""
Tests for the Friedman test, Nemenyi comparisons and the significance graph.
"""

import math

import numpy as np
import pandas as pd
import pytest
from scipy.stats import friedmanchisquare, norm, studentized_range

from app.core.exceptions import StatisticsException
from app.services.statistics import (
    Edge,
    NemenyiResult,
    RankTable,
    build_rank_table,
    format_edges,
    friedman_test,
    mean_ranks,
    nemenyi_posthoc,
    significance_edges,
    studentized_range_sf,
    to_dot,
)

KERNELS = ["Stan", "Arc", "Ico", "IcoCor", "Imp", "ImpArc"]


@pytest.fixture
def recorded_table():
    """Six kernels over 100 blocks with kernel-specific offsets."""
    rng = np.random.default_rng(20240601)
    offsets = np.array([0.9, 0.3, 0.5, 0.4, 0.0, 0.1])
    metrics = rng.normal(size=(100, 6)) + offsets
    return RankTable.from_metrics(metrics, KERNELS)


def _results_frame(rows):
    return pd.DataFrame(rows, columns=["study", "kernel", "b", "c", "d", "situation", "replication", "metric"])


def test_rank_sums(recorded_table):
    assert np.allclose(recorded_table.ranks.sum(axis=1), 21.0)
    assert recorded_table.ranks.mean() == pytest.approx(3.5)


def test_ties_receive_average_ranks():
    table = RankTable.from_metrics(np.array([[1.0, 1.0, 2.0], [3.0, 2.0, 2.0]]), ["a", "b", "c"])
    assert table.ranks.tolist() == [[1.5, 1.5, 3.0], [3.0, 1.5, 1.5]]


def test_friedman_identical_orderings():
    ranks = np.tile(np.arange(1.0, 7.0), (100, 1))
    result = friedman_test(RankTable.from_ranks(ranks, KERNELS))
    assert result.statistic == pytest.approx(500.0)
    assert result.p_value < 1e-16


def test_friedman_identical_metrics():
    table = RankTable.from_metrics(np.ones((30, 6)), KERNELS)
    assert np.all(table.ranks == 3.5)
    result = friedman_test(table)
    assert result.statistic == 0.0
    assert result.p_value == 1.0


def test_friedman_hand_computed_table():
    """Four treatments in six blocks: rank sums 8, 11, 19, 22 give a statistic of 13."""
    ranks = np.array([
        [1, 2, 3, 4],
        [1, 3, 2, 4],
        [2, 1, 3, 4],
        [1, 2, 4, 3],
        [1, 2, 3, 4],
        [2, 1, 4, 3],
    ], dtype=float)
    result = friedman_test(RankTable.from_metrics(ranks, ["w", "x", "y", "z"]))
    assert result.statistic == pytest.approx(13.0, abs=1e-12)
    # Chi-square tail with 3 degrees of freedom in closed form.
    expected = 2.0 * norm.sf(math.sqrt(13.0)) + math.sqrt(26.0 / math.pi) * math.exp(-6.5)
    assert result.p_value == pytest.approx(expected, abs=1e-6)


def test_friedman_matches_scipy(recorded_table):
    result = friedman_test(recorded_table)
    reference = friedmanchisquare(*recorded_table.metrics.T)
    assert result.statistic == pytest.approx(reference.statistic, abs=1e-6)
    assert result.p_value == pytest.approx(reference.pvalue, abs=1e-6)


def test_friedman_invariant_under_monotone_transform(recorded_table):
    transformed = RankTable.from_metrics(np.exp(3.0 * recorded_table.metrics) - 7.0, KERNELS)
    assert friedman_test(transformed).statistic == friedman_test(recorded_table).statistic


def test_friedman_needs_two_blocks():
    with pytest.raises(StatisticsException):
        friedman_test(RankTable.from_metrics(np.array([[1.0, 2.0]]), ["a", "b"]))


def test_studentized_range_tail_matches_scipy():
    for k in (2, 4, 6):
        for q in (0.5, 1.5, 3.0, 4.5):
            assert studentized_range_sf(q, k) == pytest.approx(studentized_range.sf(q, k, np.inf), abs=1e-6)
    assert studentized_range_sf(0.0, 6) == 1.0


def test_studentized_range_tail_is_decreasing():
    values = [studentized_range_sf(q, 6) for q in (4.0, 6.0, 8.0, 10.0, 12.0)]
    assert all(later < earlier for earlier, later in zip(values, values[1:]))
    assert values[-1] > 0.0


def test_nemenyi_matches_scipy(recorded_table):
    result = nemenyi_posthoc(recorded_table)
    scale = math.sqrt(6 * 7 / (6.0 * 100))
    for i in range(6):
        assert result.p_values[i, i] == 1.0
        for j in range(i + 1, 6):
            q = math.sqrt(2.0) * abs(result.mean_ranks[i] - result.mean_ranks[j]) / scale
            assert result.p_values[i, j] == pytest.approx(studentized_range.sf(q, 6, np.inf), abs=1e-6)
            assert result.p_values[i, j] == result.p_values[j, i]


def test_nemenyi_identical_pair_has_no_edge():
    rng = np.random.default_rng(8)
    metrics = rng.normal(size=(50, 4))
    metrics[:, 1] = metrics[:, 0]
    result = nemenyi_posthoc(RankTable.from_metrics(metrics, ["a", "b", "c", "d"]))
    assert result.p_values[0, 1] == 1.0
    pairs = {(edge.better, edge.worse) for edge in significance_edges(result)}
    assert ("a", "b") not in pairs and ("b", "a") not in pairs


def test_nemenyi_maximal_separation():
    ranks = np.tile(np.arange(1.0, 7.0), (4000, 1))
    result = nemenyi_posthoc(RankTable.from_ranks(ranks, KERNELS))
    edges = significance_edges(result)
    assert Edge("Stan", "ImpArc", 1e-12) in edges


def _three_way(p_ab, p_bc, p_ac):
    p_values = np.array([[1.0, p_ab, p_ac], [p_ab, 1.0, p_bc], [p_ac, p_bc, 1.0]])
    return NemenyiResult(
        treatments=("A", "B", "C"),
        mean_ranks=np.array([1.2, 2.0, 2.8]),
        p_values=p_values,
        levels=(1e-12, 1e-6, 0.01, 0.1),
        n_blocks=100,
    )


def test_significance_edges_levels_and_direction():
    edges = significance_edges(_three_way(1e-3, 0.5, 1e-8))
    assert edges == [Edge("A", "C", 1e-6), Edge("A", "B", 0.01)]


def test_significance_edges_reduce():
    result = _three_way(1e-3, 1e-3, 1e-3)
    assert len(significance_edges(result)) == 3
    assert significance_edges(result, reduce=True) == [Edge("A", "B", 0.01), Edge("B", "C", 0.01)]

    stronger = _three_way(1e-3, 1e-3, 1e-8)
    assert len(significance_edges(stronger, reduce=True)) == 3


def test_format_edges_and_dot():
    edges = [Edge("Imp", "Stan", 1e-6), Edge("Arc", "Stan", 0.1)]
    assert format_edges(edges) == ["Imp -> Stan level=1e-6", "Arc -> Stan level=0.1"]

    ranks = pd.Series({"Imp": 1.5, "Arc": 2.0, "Stan": 2.5})
    dot = to_dot(ranks, edges, name="overall")
    assert dot.startswith('digraph "overall" {')
    assert '"Imp" -> "Stan"' in dot
    assert "style=dashed" in dot
    assert dot.rstrip().endswith("}")


def test_mean_ranks_sorted_best_first(recorded_table):
    ranks = mean_ranks(recorded_table)
    assert list(ranks.values) == sorted(ranks.values)
    assert set(ranks.index) == set(KERNELS)
    assert ranks.mean() == pytest.approx(3.5)


def test_build_rank_table_scopes():
    rows = []
    for replication in range(3):
        for d, situation in ((0.1, "A"), (0.7, "C")):
            rows.append(("smbo", "stan", 0.0, 0.4, d, situation, replication, 2.0))
            rows.append(("smbo", "imp", 0.0, 0.4, d, situation, replication, 1.0))
    frame = _results_frame(rows)

    overall = build_rank_table(frame, "overall")
    assert overall.n_blocks == 6
    assert overall.treatments == ("Stan", "Imp")
    assert np.all(overall.ranks[:, 1] == 1.0)

    only_a = build_rank_table(frame, "A")
    assert only_a.n_blocks == 3
    with pytest.raises(StatisticsException):
        build_rank_table(frame, "E")
    with pytest.raises(StatisticsException):
        build_rank_table(frame, "F")


def test_build_rank_table_drops_incomplete_blocks():
    rows = [
        ("smbo", "stan", 0.0, 0.4, 0.1, "A", 0, 2.0),
        ("smbo", "imp", 0.0, 0.4, 0.1, "A", 0, 1.0),
        ("smbo", "stan", 0.0, 0.4, 0.1, "A", 1, 2.0),
    ]
    assert build_rank_table(_results_frame(rows)).n_blocks == 1


def test_build_rank_table_rejects_mixed_studies_and_duplicates():
    mixed = _results_frame([
        ("smbo", "stan", 0.0, 0.4, 0.1, "A", 0, 2.0),
        ("model_quality", "imp", 0.0, 0.4, 0.1, "A", 0, 1.0),
    ])
    with pytest.raises(StatisticsException):
        build_rank_table(mixed)
    duplicated = _results_frame([
        ("smbo", "stan", 0.0, 0.4, 0.1, "A", 0, 2.0),
        ("smbo", "stan", 0.0, 0.4, 0.1, "A", 0, 1.0),
    ])
    with pytest.raises(StatisticsException):
        build_rank_table(duplicated)

"""
Blocked rank analysis of study results: Friedman test, Nemenyi post-hoc
comparisons and the significance graph.
"""

from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate
from scipy.stats import chi2, norm, rankdata

from app.core.exceptions import StatisticsException
from app.core.logging import get_logger
from app.models.schemas import KernelKind, SCOPES
from app.utils.helpers import format_level

logger = get_logger("statistics")

SIGNIFICANCE_LEVELS: Tuple[float, ...] = (1e-12, 1e-6, 0.01, 0.1)

BLOCK_COLUMNS = ["b", "c", "d", "replication"]


@dataclass(frozen=True)
class RankTable:
    """
    Per-block ranks of k treatments, lower metric = better = rank 1.

    ``ranks`` and ``metrics`` have shape (N, k); ties receive average ranks,
    so every row sums to k(k+1)/2.
    """
    treatments: Tuple[str, ...]
    blocks: Tuple[Tuple, ...]
    ranks: np.ndarray
    metrics: Optional[np.ndarray] = None

    @property
    def n_blocks(self) -> int:
        return self.ranks.shape[0]

    @property
    def k(self) -> int:
        return self.ranks.shape[1]

    @classmethod
    def from_metrics(cls, metrics: np.ndarray, treatments: Sequence[str],
                     blocks: Optional[Sequence[Tuple]] = None) -> "RankTable":
        metrics = np.asarray(metrics, dtype=float)
        if metrics.ndim != 2 or metrics.shape[1] != len(treatments):
            raise StatisticsException(f"Metric table of shape {metrics.shape} does not match {len(treatments)} treatments")
        if not np.all(np.isfinite(metrics)):
            raise StatisticsException("Metric table contains non-finite values")
        blocks = tuple(blocks) if blocks is not None else tuple((i,) for i in range(metrics.shape[0]))
        return cls(
            treatments=tuple(treatments),
            blocks=blocks,
            ranks=rankdata(metrics, method="average", axis=1),
            metrics=metrics,
        )

    @classmethod
    def from_ranks(cls, ranks: np.ndarray, treatments: Sequence[str]) -> "RankTable":
        ranks = np.asarray(ranks, dtype=float)
        k = ranks.shape[1]
        if not np.allclose(ranks.sum(axis=1), k * (k + 1) / 2):
            raise StatisticsException(f"Every block's ranks must sum to {k * (k + 1) / 2:g}")
        return cls(
            treatments=tuple(treatments),
            blocks=tuple((i,) for i in range(ranks.shape[0])),
            ranks=ranks,
        )


class FriedmanResult(NamedTuple):
    statistic: float
    p_value: float
    n_blocks: int
    k: int


@dataclass(frozen=True)
class NemenyiResult:
    """Pairwise p-values (k, k) with unit diagonal, plus mean ranks."""
    treatments: Tuple[str, ...]
    mean_ranks: np.ndarray
    p_values: np.ndarray
    levels: Tuple[float, ...]
    n_blocks: int


class Edge(NamedTuple):
    better: str
    worse: str
    level: float


def build_rank_table(frame: pd.DataFrame, scope: str = "overall") -> RankTable:
    """
    Pivot results into blocks (b, c, d, replication) x kernels and rank them.

    Args:
        frame: Results as returned by ``read_records``
        scope: ``overall`` or a situation label A..E

    Raises:
        StatisticsException: For mixed studies, unknown or empty scopes, or
            when no complete block remains
    """
    if scope not in SCOPES:
        raise StatisticsException(f"Unknown scope '{scope}' (expected one of {', '.join(SCOPES)})")
    studies = frame["study"].unique()
    if len(studies) > 1:
        raise StatisticsException(f"Results mix several studies: {sorted(studies)}")

    subset = frame if scope == "overall" else frame[frame["situation"] == scope]
    if subset.empty:
        raise StatisticsException(f"No records in scope '{scope}'")

    duplicated = subset.duplicated(BLOCK_COLUMNS + ["kernel"])
    if duplicated.any():
        raise StatisticsException(f"{int(duplicated.sum())} duplicate (block, kernel) rows in scope '{scope}'")

    wide = subset.pivot(index=BLOCK_COLUMNS, columns="kernel", values="metric")
    order = [kind.value for kind in KernelKind if kind.value in wide.columns]
    wide = wide[order]
    incomplete = wide.isna().any(axis=1)
    if incomplete.any():
        logger.warning(f"Dropping {int(incomplete.sum())} incomplete blocks in scope '{scope}'")
        wide = wide[~incomplete]
    if wide.empty:
        raise StatisticsException(f"No complete blocks in scope '{scope}'")

    return RankTable.from_metrics(
        wide.to_numpy(),
        treatments=[KernelKind(value).label for value in order],
        blocks=[tuple(index) for index in wide.index],
    )


def mean_ranks(table: RankTable) -> pd.Series:
    """Mean rank per treatment, best first."""
    return pd.Series(table.ranks.mean(axis=0), index=list(table.treatments), name="mean_rank").sort_values(kind="stable")


def _check_table(table: RankTable) -> None:
    if table.n_blocks < 2:
        raise StatisticsException(f"At least 2 blocks are required, got {table.n_blocks}")
    if table.k < 2:
        raise StatisticsException(f"At least 2 treatments are required, got {table.k}")


def friedman_test(table: RankTable) -> FriedmanResult:
    """
    Friedman chi-square statistic ``12N/(k(k+1)) * sum_j (R_j - (k+1)/2)^2``
    on mean ranks, with the p-value from chi-square on k-1 degrees of freedom.
    """
    _check_table(table)
    n, k = table.n_blocks, table.k
    centered = table.ranks.mean(axis=0) - (k + 1) / 2.0
    statistic = 12.0 * n / (k * (k + 1)) * float(np.sum(centered ** 2))
    p_value = float(chi2.sf(statistic, k - 1))
    return FriedmanResult(statistic=statistic, p_value=p_value, n_blocks=n, k=k)


def studentized_range_sf(q: float, k: int) -> float:
    """
    Upper tail of the studentized range with infinite degrees of freedom.

    Integrates ``k * phi(z) * (Phi(z)^(k-1) - (Phi(z) - Phi(z - q))^(k-1))``
    with the difference of powers expanded into a sum of positive terms, so
    that tiny tails keep their relative accuracy. The integrand peaks between
    0 and q/2 and is negligible outside ``[-10, q + 10]``.
    """
    if q <= 0:
        return 1.0
    m = k - 1

    def integrand(z: float) -> float:
        upper = norm.cdf(z)
        lower = norm.sf(q - z)  # Phi(z - q)
        inner = upper - lower
        powers = sum(upper ** (m - 1 - j) * inner ** j for j in range(m))
        return k * norm.pdf(z) * lower * powers

    value, _ = integrate.quad(integrand, -10.0, q + 10.0, points=[0.0, q / 2.0, q],
                              epsabs=1e-300, epsrel=1e-10, limit=400)
    return float(min(max(value, 0.0), 1.0))


def nemenyi_posthoc(table: RankTable, levels: Sequence[float] = SIGNIFICANCE_LEVELS) -> NemenyiResult:
    """
    All-pairs Nemenyi comparison of mean ranks.

    The pair statistic ``sqrt(2) * |R_i - R_j| / sqrt(k(k+1)/(6N))`` is
    referred to the studentized range with k groups and infinite degrees of
    freedom.
    """
    _check_table(table)
    n, k = table.n_blocks, table.k
    ranks = table.ranks.mean(axis=0)
    scale = np.sqrt(k * (k + 1) / (6.0 * n))

    p_values = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            q = np.sqrt(2.0) * abs(ranks[i] - ranks[j]) / scale
            p_values[i, j] = p_values[j, i] = studentized_range_sf(q, k)

    return NemenyiResult(
        treatments=table.treatments,
        mean_ranks=ranks,
        p_values=p_values,
        levels=tuple(sorted(levels)),
        n_blocks=n,
    )


def _has_path(graph: Dict[str, List[str]], start: str, goal: str, skip: Tuple[str, str]) -> bool:
    stack = [start]
    seen = {start}
    while stack:
        node = stack.pop()
        for succ in graph.get(node, []):
            if (node, succ) == skip or succ in seen:
                continue
            if succ == goal:
                return True
            seen.add(succ)
            stack.append(succ)
    return False


def significance_edges(result: NemenyiResult, reduce: bool = False) -> List[Edge]:
    """
    Significant pairs as edges from the better to the worse mean rank.

    Each edge carries the smallest level its p-value falls below. With
    ``reduce`` set, an edge is dropped when a longer path of edges at the same
    or a smaller level already connects its endpoints.
    """
    edges = []
    k = len(result.treatments)
    for i in range(k):
        for j in range(k):
            if result.mean_ranks[i] >= result.mean_ranks[j]:
                continue
            passed = [level for level in result.levels if result.p_values[i, j] < level]
            if passed:
                edges.append(Edge(result.treatments[i], result.treatments[j], min(passed)))

    if reduce:
        kept = []
        for edge in edges:
            graph: Dict[str, List[str]] = {}
            for other in edges:
                if other.level <= edge.level:
                    graph.setdefault(other.better, []).append(other.worse)
            if not _has_path(graph, edge.better, edge.worse, skip=(edge.better, edge.worse)):
                kept.append(edge)
        edges = kept

    order = {name: rank for name, rank in zip(result.treatments, result.mean_ranks)}
    return sorted(edges, key=lambda e: (e.level, order[e.better], order[e.worse]))


def format_edges(edges: Sequence[Edge]) -> List[str]:
    return [f"{edge.better} -> {edge.worse} level={format_level(edge.level)}" for edge in edges]


_DOT_STYLES = {
    1e-12: 'style=bold, penwidth=3',
    1e-6: 'style=solid, penwidth=2',
    0.01: 'style=solid',
    0.1: 'style=dashed',
}


def to_dot(ranks: pd.Series, edges: Sequence[Edge], name: str = "ranking") -> str:
    """Render mean ranks and significance edges as a DOT digraph."""
    lines = [f'digraph "{name}" {{', "  rankdir=TB;", "  node [shape=box];"]
    for treatment, value in ranks.items():
        lines.append(f'  "{treatment}" [label="{treatment}\\n{value:.2f}"];')
    for edge in edges:
        style = _DOT_STYLES.get(edge.level, "style=dotted")
        lines.append(f'  "{edge.better}" -> "{edge.worse}" [label="{format_level(edge.level)}", {style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"

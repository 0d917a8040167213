"""Ranking metrics: Kendall τ, Spearman ρ (distinct-rank forms) and average percentile rank."""
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from services.errors import RankingMismatchError
from services.evaluators import BenchmarkTable
from services.search_space import Architecture


@dataclass(frozen=True)
class Ranking:
    """items: (id, score) pairs; ranks: id → rank, a permutation of 1..n (1 = best)."""

    items: tuple[tuple[str, float], ...]
    ranks: Mapping[str, int]

    @classmethod
    def from_scores(cls, scores: Mapping[str, float]) -> "Ranking":
        """Descending score; ties broken by ascending id."""
        ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(
            items=tuple((k, float(v)) for k, v in ordered),
            ranks={k: i + 1 for i, (k, _) in enumerate(ordered)},
        )

    @classmethod
    def from_ranks(cls, ranks: Mapping[str, int]) -> "Ranking":
        n = len(ranks)
        if sorted(ranks.values()) != list(range(1, n + 1)):
            raise ValueError("ranks must be a permutation of 1..n")
        ordered = sorted(ranks.items(), key=lambda kv: kv[1])
        # score = −rank keeps from_scores(items) consistent with the given ranks
        return cls(items=tuple((k, float(-r)) for k, r in ordered), ranks=dict(ranks))

    def __len__(self) -> int:
        return len(self.ranks)


def _aligned(r: Ranking, s: Ranking) -> tuple[np.ndarray, np.ndarray]:
    if r.ranks.keys() != s.ranks.keys():
        only_r = sorted(r.ranks.keys() - s.ranks.keys())[:3]
        only_s = sorted(s.ranks.keys() - r.ranks.keys())[:3]
        raise RankingMismatchError(f"rankings cover different items (only in first: {only_r}, only in second: {only_s})")
    if len(r) < 2:
        raise ValueError("rank correlation needs at least 2 items")
    ids = sorted(r.ranks)
    return (
        np.array([r.ranks[i] for i in ids], dtype=np.int64),
        np.array([s.ranks[i] for i in ids], dtype=np.int64),
    )


def kendall_tau(r: Ranking, s: Ranking) -> float:
    """2/(n(n−1)) · Σ_{i<j} sign(r_i − r_j)·sign(s_i − s_j)."""
    a, b = _aligned(r, s)
    n = len(a)
    # row by row keeps memory linear for whole-benchmark rankings
    total = 0
    for i in range(n - 1):
        total += int((np.sign(a[i] - a[i + 1:]) * np.sign(b[i] - b[i + 1:])).sum())
    return 2.0 * total / (n * (n - 1))


def spearman_rho(r: Ranking, s: Ranking) -> float:
    """1 − 6·Σ d_i² / (n(n² − 1))."""
    a, b = _aligned(r, s)
    n = len(a)
    d2 = int(((a - b) ** 2).sum())
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


TABLE_COLUMNS = ("mean_acc", "flops", "params")


def rank_table(table: BenchmarkTable, key: str = "mean_acc") -> Ranking:
    """Benchmark classes ranked by `key`, largest first (rank 1 = most accurate, or most FLOPs / params)."""
    if key not in TABLE_COLUMNS:
        raise ValueError(f"cannot rank a benchmark by {key!r}; expected one of {', '.join(TABLE_COLUMNS)}")
    return Ranking.from_scores({k: float(getattr(e, key)) for k, e in table.items()})


def cost_correlations(table: BenchmarkTable) -> dict[str, dict[str, float]]:
    """Kendall τ and Spearman ρ of FLOPs and of params against mean accuracy over the whole table."""
    acc = rank_table(table)
    out = {}
    for key in ("flops", "params"):
        cost = rank_table(table, key)
        out[key] = {"kendall_tau": kendall_tau(cost, acc), "spearman_rho": spearman_rho(cost, acc)}
    return out


def avg_percentile_rank(searched: Iterable[Architecture], table: BenchmarkTable, ranking: Ranking | None = None) -> float:
    """Mean of rank(arch) / |table| over `searched`; lower is better."""
    ranking = rank_table(table) if ranking is None else ranking
    fractions = []
    for arch in searched:
        key = table.key(arch)
        if key not in ranking.ranks:
            raise KeyError(f"architecture {key} not in benchmark")
        fractions.append(ranking.ranks[key] / len(ranking))
    if not fractions:
        raise ValueError("avg_percentile_rank needs at least one architecture")
    return float(np.mean(fractions))

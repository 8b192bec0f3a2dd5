"""Recall@K, SumR and SumR per moment-to-video ratio bucket."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DataError

RECALL_KS = (1, 5, 10, 100)
BUCKETS = (("(0,0.2]", 0.0, 0.2), ("(0.2,0.4]", 0.2, 0.4), ("(0.4,1]", 0.4, 1.0))


@dataclass
class QueryResult:
    query_id: int
    ranking: Sequence[int]
    truth: int
    mv_ratio: float = 1.0

    @property
    def rank(self) -> int:
        """1-based position of the ground truth in ``ranking``."""
        hits = [pos for pos, vid in enumerate(self.ranking) if vid == self.truth]
        if len(hits) != 1:
            raise DataError(f"query {self.query_id}: ground truth appears {len(hits)} times in ranking")
        return hits[0] + 1


def rank_candidates(scores: np.ndarray, ids: Sequence[int] | None = None) -> list[int]:
    """Candidate ids by descending score; ties go to the smaller id."""
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.arange(len(scores)) if ids is None else np.asarray(ids)
    return [int(i) for i in ids[np.lexsort((ids, -scores))]]


def results_from_scores(sim: np.ndarray, truth: Sequence[int], mv_ratio: Sequence[float] | None = None) -> list[QueryResult]:
    """One :class:`QueryResult` per row of a query x candidate score matrix."""
    sim = np.asarray(sim, dtype=np.float64)
    mv = np.ones(len(sim)) if mv_ratio is None else np.asarray(mv_ratio, dtype=np.float64)
    return [QueryResult(q, rank_candidates(row), int(t), float(r)) for q, (row, t, r) in enumerate(zip(sim, truth, mv))]


def ranks_from_scores(sim: np.ndarray, truth: Sequence[int]) -> np.ndarray:
    """Ground-truth ranks straight from scores; same tie rule as :func:`rank_candidates`."""
    return kernels.ground_truth_ranks(np.ascontiguousarray(sim, dtype=np.float64), np.ascontiguousarray(truth, dtype=np.int64))


def _ranks(results) -> np.ndarray:
    if isinstance(results, np.ndarray):
        return results
    return np.array([r.rank for r in results], dtype=np.int64)


def recall_at_k(results, k: int) -> float:
    """Percentage of queries whose ground truth ranks within the top ``k``.

    ``results`` is a list of :class:`QueryResult` or an array of 1-based ranks.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranks = _ranks(results)
    if ranks.size == 0:
        raise DataError("recall of an empty result set")
    return 100.0 * int((ranks <= k).sum()) / ranks.size


def sum_r(r1: float, r5: float, r10: float, r100: float) -> float:
    return r1 + r5 + r10 + r100


def bucket_of(ratio: float) -> str:
    if not 0.0 < ratio <= 1.0:
        raise DataError(f"moment-to-video ratio {ratio} outside (0, 1]")
    for label, lo, hi in BUCKETS:
        if lo < ratio <= hi:
            return label
    raise AssertionError("unreachable")


def recalls(results) -> dict[int, float]:
    return {k: recall_at_k(results, k) for k in RECALL_KS}


def bucketed_sum_r(results: Sequence[QueryResult]) -> dict[str, float | None]:
    """SumR for each M/V bucket; an empty bucket maps to ``None``."""
    groups: dict[str, list[QueryResult]] = {label: [] for label, _, _ in BUCKETS}
    for r in results:
        groups[bucket_of(r.mv_ratio)].append(r)
    return {label: (sum_r(*recalls(g).values()) if g else None) for label, g in groups.items()}


@dataclass
class RetrievalReport:
    recall: dict[int, float]
    sumr: float
    buckets: dict[str, float | None] = field(default_factory=dict)
    queries: int = 0

    @classmethod
    def from_results(cls, results: Sequence[QueryResult]) -> "RetrievalReport":
        rec = recalls(results)
        return cls(rec, sum_r(*rec.values()), bucketed_sum_r(results), len(results))

    def to_text(self) -> str:
        """Flat ``key = value`` record."""
        lines = [f"queries = {self.queries}"]
        lines += [f"R@{k} = {v:.4f}" for k, v in self.recall.items()]
        lines.append(f"SumR = {self.sumr:.4f}")
        for label, value in self.buckets.items():
            lines.append(f"SumR{label} = {'absent' if value is None else f'{value:.4f}'}")
        return "\n".join(lines) + "\n"

    def header(self) -> str:
        cols = [f"R@{k}" for k in self.recall] + ["SumR"] + [f"SumR{label}" for label in self.buckets]
        return "\t".join(cols)

    def row(self) -> str:
        """Tab-separated table row matching :meth:`header`."""
        vals = [f"{v:.4f}" for v in self.recall.values()] + [f"{self.sumr:.4f}"]
        vals += ["absent" if v is None else f"{v:.4f}" for v in self.buckets.values()]
        return "\t".join(vals)

"""Ranking function and link-prediction metrics (MRR, Hit@k)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

HIT_KS = (1, 3, 10)


class TiePolicy(str, enum.Enum):
    """How candidates with equal scores share rank positions."""

    AVERAGE = "average"
    OPTIMISTIC = "optimistic"
    PESSIMISTIC = "pessimistic"

    def __str__(self) -> str:
        return self.value


_RANKDATA_METHOD = {
    TiePolicy.AVERAGE: "average",
    TiePolicy.OPTIMISTIC: "min",
    TiePolicy.PESSIMISTIC: "max",
}


def rank_scores(scores, policy: TiePolicy = TiePolicy.AVERAGE) -> np.ndarray:
    """Rank a score vector; the highest score gets rank 1.

    >>> rank_scores([0.9, 0.1, 0.5]).tolist()
    [1.0, 3.0, 2.0]
    >>> rank_scores([0.5, 0.5, 0.2]).tolist()
    [1.5, 1.5, 3.0]
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty vector")
    return rankdata(-s, method=_RANKDATA_METHOD[TiePolicy(policy)]).astype(float)


def rank_matrix(scores: np.ndarray, policy: TiePolicy = TiePolicy.AVERAGE) -> np.ndarray:
    """Row-wise :func:`rank_scores` for a ``(Q, C)`` array.

    ``-inf`` entries (padding) rank after every finite score, so they never
    shift the ranks of real candidates.
    """
    s = np.asarray(scores, dtype=float)
    if s.shape[0] == 0:
        return np.zeros(s.shape)
    return rankdata(-s, method=_RANKDATA_METHOD[TiePolicy(policy)], axis=1).astype(float)


def true_rank_from_counts(better, tied, policy: TiePolicy) -> np.ndarray:
    """Rank of the true entity given how many candidates beat it and tie with it."""
    better = np.asarray(better, dtype=float)
    tied = np.asarray(tied, dtype=float)
    policy = TiePolicy(policy)
    if policy is TiePolicy.AVERAGE:
        return 1.0 + better + tied / 2.0
    if policy is TiePolicy.OPTIMISTIC:
        return 1.0 + better
    return 1.0 + better + tied


def reciprocal_rank(rank_of_true: float) -> float:
    if not rank_of_true >= 1:
        raise ValueError(f"rank must be >= 1, got {rank_of_true}")
    return 1.0 / rank_of_true


@dataclass
class EvalReport:
    mrr: float
    hits: dict[int, float]
    n_queries: int
    per_relation: dict[int, "EvalReport"] = field(default_factory=dict)

    def to_dict(self, relation_names: Sequence[str] | None = None) -> dict:
        out = _summary(self)
        if self.per_relation:
            name = (lambda r: relation_names[r]) if relation_names is not None else str
            out["per_relation"] = {
                name(r): _summary(rep) for r, rep in sorted(self.per_relation.items())
            }
        return out


def _summary(rep: EvalReport) -> dict:
    return {
        "mrr": rep.mrr,
        "hit1": rep.hits[1],
        "hit3": rep.hits[3],
        "hit10": rep.hits[10],
        "n": rep.n_queries,
    }


def mean_reciprocal_rank(ranks: np.ndarray) -> float:
    """Correctly rounded mean of ``1/rank``, independent of query order."""
    return math.fsum((1.0 / np.asarray(ranks, dtype=float)).tolist()) / len(ranks)


def _aggregate(ranks: np.ndarray, ks: Iterable[int]) -> EvalReport:
    n = len(ranks)
    if n == 0:
        raise ValueError("no data: cannot evaluate an empty query set")
    if np.any(ranks < 1):
        raise ValueError("ranks must be >= 1")
    mrr = mean_reciprocal_rank(ranks)
    hits = {k: int(np.count_nonzero(ranks <= k)) / n for k in ks}
    return EvalReport(mrr=mrr, hits=hits, n_queries=n)


def evaluate(
    ranks_of_true,
    relations=None,
    ks: Iterable[int] = HIT_KS,
) -> EvalReport:
    """MRR and Hit@k over one rank per query.

    When ``relations`` is given, a per-relation breakdown is attached.

    >>> evaluate([1, 2]).mrr
    0.75
    """
    ranks = np.asarray(ranks_of_true, dtype=float).ravel()
    ks = tuple(sorted(set(ks) | set(HIT_KS)))
    report = _aggregate(ranks, ks)
    if relations is not None:
        rel = np.asarray(relations).ravel()
        if rel.shape != ranks.shape:
            raise ValueError("relations and ranks differ in length")
        for r in np.unique(rel):
            report.per_relation[int(r)] = _aggregate(ranks[rel == r], ks)
    return report


def merge_reports(reports: Mapping[int, EvalReport] | Sequence[EvalReport]) -> float:
    """Size-weighted mean MRR of reports over disjoint query sets."""
    items = list(reports.values()) if isinstance(reports, Mapping) else list(reports)
    total = sum(r.n_queries for r in items)
    return math.fsum(r.mrr * r.n_queries for r in items) / total

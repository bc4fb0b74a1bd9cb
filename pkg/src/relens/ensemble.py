"""Rank-level ensembles: relation-wise weight tables and how they score queries.

A query of relation ``r`` gets the combined score ``-sum_i alpha[i, r] * rank_i``
where ``rank_i`` is model ``i``'s rank list for the query's candidates.

For evaluation each weight column is snapped to integers relative to its
maximum (see :func:`integer_weights`). Combined scores then become exact
integers, so ties are detected exactly and rescaling a column cannot change
any ranking through float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .metrics import EvalReport, TiePolicy, evaluate, mean_reciprocal_rank, true_rank_from_counts
from .search import SearchResult, SearchSpace
from .types import Dataset

WEIGHT_BITS = 24
RATIO_DENOMINATOR = 1000
PROVENANCES = ("mean", "mrr-mean", "simple", "basic", "dsc", "stacking-free")
_CHUNK_CELLS = 1 << 22


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Nonnegative ``(N, R)`` matrix of per-model, per-relation weights."""

    alpha: np.ndarray
    provenance: str = "basic"

    def __post_init__(self) -> None:
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 2 or 0 in alpha.shape:
            raise ValueError(f"weight table must be a non-empty (N, R) matrix, got shape {alpha.shape}")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("weights must be finite")
        if np.any(alpha < 0):
            raise ValueError("weights must be nonnegative")
        dead = np.flatnonzero(~np.any(alpha > 0, axis=0))
        if dead.size:
            raise ValueError(f"all-zero weight column for relation(s) {dead.tolist()}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def n_models(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_relations(self) -> int:
        return self.alpha.shape[1]

    def column(self, r: int) -> np.ndarray:
        return self.alpha[:, r]

    def with_column(self, r: int, values, provenance: str | None = None) -> "WeightTable":
        alpha = self.alpha.copy()
        alpha[:, r] = values
        return WeightTable(alpha, provenance or self.provenance)

    def is_flat(self) -> bool:
        return bool(np.all(self.alpha == self.alpha[:, :1]))

    @classmethod
    def broadcast(cls, vector, n_relations: int, provenance: str = "simple") -> "WeightTable":
        v = np.asarray(vector, dtype=float).reshape(-1, 1)
        return cls(np.repeat(v, n_relations, axis=1), provenance)


def combine(rank_vectors, weights) -> np.ndarray:
    """Combined scores ``-sum_i w_i * ranks_i``; higher means higher priority.

    >>> combine([[1, 2, 3], [3, 1, 2]], [0.5, 0.5]).tolist()
    [-2.0, -1.5, -2.5]
    """
    ranks = np.asarray(rank_vectors, dtype=float)
    w = np.asarray(weights, dtype=float)
    if ranks.ndim != 2 or ranks.shape[0] != w.shape[0]:
        raise ValueError(f"{w.shape[0]} weights for {ranks.shape[0]} rank vectors")
    return -(w[:, None] * ranks).sum(axis=0)


def _integer_column(ratios: np.ndarray) -> np.ndarray:
    # exact small rationals (e.g. lattice points) keep their ties exact
    fracs = [Fraction(float(v)).limit_denominator(RATIO_DENOMINATOR) for v in ratios]
    if all(abs(float(f) - v) <= 1e-12 for f, v in zip(fracs, ratios)):
        scale = math.lcm(*(f.denominator for f in fracs))
        if scale <= 1 << WEIGHT_BITS:
            return np.array([f.numerator * (scale // f.denominator) for f in fracs], dtype=np.int64)
    return np.rint(ratios * (1 << WEIGHT_BITS)).astype(np.int64)


def integer_weights(alpha) -> np.ndarray:
    """Column-normalized integer form of a weight matrix (or a single vector).

    Columns whose ratios to their maximum are fractions with denominators up
    to ``RATIO_DENOMINATOR`` are scaled to exact integers; others are
    quantized to ``2**-WEIGHT_BITS`` of the maximum.
    """
    a = np.asarray(alpha, dtype=float)
    top = a.max(axis=0, keepdims=True)
    if np.any(top <= 0):
        raise ValueError("every weight column needs a positive entry")
    ratios = a / top
    if ratios.ndim == 1:
        return _integer_column(ratios)
    return np.stack([_integer_column(ratios[:, r]) for r in range(ratios.shape[1])], axis=1)


def true_ranks(
    doubled_ranks: np.ndarray,
    mask: np.ndarray,
    true_index: np.ndarray,
    query_weights: np.ndarray,
    policy: TiePolicy = TiePolicy.AVERAGE,
) -> np.ndarray:
    """Rank of each query's true entity under the combined ensemble score.

    ``doubled_ranks`` is ``(N, Q, C)`` (twice the base ranks), ``query_weights``
    is ``(Q, N)`` integer weights. Smaller weighted rank sums win.
    """
    n_models, n_q, n_c = doubled_ranks.shape
    out = np.empty(n_q)
    step = max(1, _CHUNK_CELLS // max(n_c, 1))
    for start in range(0, n_q, step):
        sl = slice(start, min(start + step, n_q))
        combined = np.zeros((sl.stop - sl.start, n_c), dtype=np.int64)
        for i in range(n_models):
            combined += query_weights[sl, i, None] * doubled_ranks[i, sl]
        truth = np.take_along_axis(combined, true_index[sl, None], axis=1)
        valid = mask[sl]
        better = np.count_nonzero((combined < truth) & valid, axis=1)
        tied = np.count_nonzero((combined == truth) & valid, axis=1) - 1
        out[sl] = true_rank_from_counts(better, tied, policy)
    return out


def ranks_under_table(dataset: Dataset, table: WeightTable, policy: TiePolicy = TiePolicy.AVERAGE) -> np.ndarray:
    if table.n_models != dataset.n_models or table.n_relations != dataset.n_relations:
        raise ValueError(
            f"table is {table.n_models}x{table.n_relations}, dataset has "
            f"{dataset.n_models} models and {dataset.n_relations} relations"
        )
    w = integer_weights(table.alpha).T[dataset.relation]
    return true_ranks(dataset.doubled_ranks(policy), dataset.mask, dataset.true_index, w, policy)


def evaluate_weights(dataset: Dataset, table: WeightTable, policy: TiePolicy = TiePolicy.AVERAGE) -> EvalReport:
    """Overall and per-relation report of the ensemble defined by ``table``."""
    return evaluate(ranks_under_table(dataset, table, policy), dataset.relation)


def base_model_ranks(dataset: Dataset, model: int, policy: TiePolicy = TiePolicy.AVERAGE) -> np.ndarray:
    doubled = dataset.doubled_ranks(policy)[model]
    return np.take_along_axis(doubled, dataset.true_index[:, None], axis=1)[:, 0] / 2.0


def base_model_reports(dataset: Dataset, policy: TiePolicy = TiePolicy.AVERAGE) -> list[EvalReport]:
    return [evaluate(base_model_ranks(dataset, i, policy), dataset.relation) for i in range(dataset.n_models)]


def mean_weights(n_models: int, n_relations: int) -> WeightTable:
    if n_models < 1:
        raise ValueError("need at least one model")
    return WeightTable(np.full((n_models, n_relations), 1.0 / n_models), "mean")


def mrr_mean_weights(per_model_mrr: Sequence[float], n_relations: int) -> WeightTable:
    """Relation-independent weights proportional to each model's validation MRR."""
    m = np.asarray(per_model_mrr, dtype=float)
    if m.ndim != 1 or m.size == 0 or np.any(m <= 0) or np.any(m > 1):
        raise ValueError("per-model MRRs must lie in (0, 1]")
    return WeightTable.broadcast(m / m.sum(), n_relations, "mrr-mean")


class WeightObjective:
    """Validation MRR as a function of a flat weight vector.

    ``layout="shared"``: ``x`` holds one length-N vector used for every query.
    ``layout="table"``: ``x`` holds R consecutive length-N columns.

    An all-zero column is infeasible and scores 0.0 without scoring any query.
    ``n_scored`` counts query scorings, the unit of search cost.
    """

    def __init__(self, dataset: Dataset, policy: TiePolicy = TiePolicy.AVERAGE, layout: str = "shared") -> None:
        if len(dataset) == 0:
            raise ValueError("no data: objective over an empty dataset")
        if layout not in ("shared", "table"):
            raise ValueError(f"unknown layout {layout!r}")
        self.layout = layout
        self.policy = TiePolicy(policy)
        self.doubled = dataset.doubled_ranks(self.policy)
        self.mask = dataset.mask
        self.true_index = dataset.true_index
        self.relation = dataset.relation
        self.n_models = dataset.n_models
        self.n_relations = dataset.n_relations
        self.n_scored = 0

    @property
    def dim(self) -> int:
        return self.n_models * (self.n_relations if self.layout == "table" else 1)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.layout == "shared":
            if not np.any(x > 0):
                return 0.0
            w = np.broadcast_to(integer_weights(x), (len(self.true_index), self.n_models))
        else:
            alpha = x.reshape(self.n_relations, self.n_models).T
            if not np.all(np.any(alpha > 0, axis=0)):
                return 0.0
            w = integer_weights(alpha).T[self.relation]
        ranks = true_ranks(self.doubled, self.mask, self.true_index, w, self.policy)
        self.n_scored += len(ranks)
        return mean_reciprocal_rank(ranks)


def simple_ens_search(
    val: Dataset,
    optimizer,
    budget: int,
    seed: int | None = 0,
    policy: TiePolicy = TiePolicy.AVERAGE,
) -> tuple[WeightTable, SearchResult, int]:
    """Search one weight vector shared by all relations.

    Returns the broadcast table, the search result and the number of query
    scorings spent.
    """
    if budget is not None and budget < 1:
        raise ValueError("budget must be >= 1")
    objective = WeightObjective(val, policy, layout="shared")
    space = SearchSpace.for_weights(val.n_models)
    result = optimizer.optimize(objective, space, budget, seed)
    table = WeightTable.broadcast(result.x_best, val.n_relations, "simple")
    return table, result, objective.n_scored

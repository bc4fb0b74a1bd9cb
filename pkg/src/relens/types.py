"""Domain types shared by every module: queries, per-model predictions, datasets."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class Direction(str, enum.Enum):
    TAIL = "tail"
    HEAD = "head"


@dataclass(frozen=True)
class Triplet:
    h: int
    r: int
    t: int


@dataclass(frozen=True)
class Query:
    """One ranking task: the true entity must be ranked among ``candidates``."""

    id: int
    triplet: Triplet
    direction: Direction
    candidates: tuple[int, ...]
    true_index: int

    def __post_init__(self) -> None:
        if len(self.candidates) < 1:
            raise ValueError(f"query {self.id}: empty candidate list")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError(f"query {self.id}: duplicate candidates")
        if not 0 <= self.true_index < len(self.candidates):
            raise ValueError(
                f"query {self.id}: true_index {self.true_index} outside [0, {len(self.candidates)})"
            )

    @property
    def relation(self) -> int:
        return self.triplet.r

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class PredictionSet:
    """Scores of one model, one vector per query, aligned with the query's candidates."""

    model: int
    scores: tuple[np.ndarray, ...]


class Dataset:
    """Queries of one split plus the scores every base model gave them.

    Scores are stored padded as an ``(N, Q, C_max)`` array; ``mask`` marks the
    real candidates. The object is treated as immutable after construction.
    """

    def __init__(
        self,
        queries: Sequence[Query],
        predictions: Sequence[PredictionSet],
        n_entities: int,
        n_relations: int,
        split: str = "valid",
    ) -> None:
        if not predictions:
            raise ValueError("at least one model is required")
        self.queries: tuple[Query, ...] = tuple(queries)
        self.n_entities = int(n_entities)
        self.n_relations = int(n_relations)
        self.n_models = len(predictions)
        self.split = split

        n_q = len(self.queries)
        c_max = max((q.n_candidates for q in self.queries), default=1)
        scores = np.full((self.n_models, n_q, c_max), -np.inf)
        mask = np.zeros((n_q, c_max), dtype=bool)
        for j, q in enumerate(self.queries):
            mask[j, : q.n_candidates] = True
            if not 0 <= q.relation < self.n_relations:
                raise ValueError(f"query {q.id}: relation {q.relation} outside [0, {self.n_relations})")
        for i, pred in enumerate(predictions):
            if pred.model != i:
                raise ValueError(f"prediction sets must be ordered by model id, got {pred.model} at {i}")
            if len(pred.scores) != n_q:
                raise ValueError(f"model {i}: {len(pred.scores)} score vectors for {n_q} queries")
            for j, (q, s) in enumerate(zip(self.queries, pred.scores)):
                s = np.asarray(s, dtype=float)
                if s.shape != (q.n_candidates,):
                    raise ValueError(
                        f"model {i}, query {q.id}: {s.size} scores for {q.n_candidates} candidates"
                    )
                if not np.all(np.isfinite(s)):
                    raise ValueError(f"model {i}, query {q.id}: non-finite score")
                scores[i, j, : q.n_candidates] = s

        self.scores = scores
        self.mask = mask
        self.true_index = np.array([q.true_index for q in self.queries], dtype=np.int64)
        self.relation = np.array([q.relation for q in self.queries], dtype=np.int64)
        self._rank_cache: dict = {}
        for arr in (self.scores, self.mask, self.true_index, self.relation):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.queries)

    def __repr__(self) -> str:
        return (
            f"Dataset(split={self.split!r}, queries={len(self)}, models={self.n_models}, "
            f"relations={self.n_relations})"
        )

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """View restricted to the given query positions (order preserved)."""
        idx = np.asarray(indices, dtype=np.int64)
        out = object.__new__(Dataset)
        out.queries = tuple(self.queries[k] for k in idx)
        out.n_entities = self.n_entities
        out.n_relations = self.n_relations
        out.n_models = self.n_models
        out.split = self.split
        c_max = int(self.mask[idx].sum(axis=1).max()) if len(idx) else 1
        out.scores = self.scores[:, idx, :c_max]
        out.mask = self.mask[idx, :c_max]
        out.true_index = self.true_index[idx]
        out.relation = self.relation[idx]
        out._rank_cache = {
            key: ranks[:, idx, :c_max] for key, ranks in self._rank_cache.items()
        }
        for arr in (out.scores, out.mask, out.true_index, out.relation):
            arr.setflags(write=False)
        return out

    def model_scores(self, model: int, position: int) -> np.ndarray:
        """Unpadded score vector of one model for the query at ``position``."""
        return self.scores[model, position, self.mask[position]]

    def doubled_ranks(self, policy) -> np.ndarray:
        """Base-model ranks times two, as int32 ``(N, Q, C_max)``; padding is 0.

        Doubling keeps average-tie ranks integral so downstream comparisons are exact.
        """
        from .metrics import rank_matrix

        key = str(policy)
        if key not in self._rank_cache:
            ranks = np.zeros(self.scores.shape, dtype=np.int32)
            for i in range(self.n_models):
                r = rank_matrix(self.scores[i], policy)
                ranks[i] = np.where(self.mask, np.rint(2 * r), 0).astype(np.int32)
            ranks.setflags(write=False)
            self._rank_cache[key] = ranks
        return self._rank_cache[key]


def partition_by_relation(dataset: Dataset) -> dict[int, Dataset]:
    """Split a dataset into one sub-dataset per relation id in ``[0, R)``.

    Relations without queries map to empty datasets.
    """
    buckets: dict[int, Dataset] = {}
    for r in range(dataset.n_relations):
        buckets[r] = dataset.subset(np.flatnonzero(dataset.relation == r))
    return buckets

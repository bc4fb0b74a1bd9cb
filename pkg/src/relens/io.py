"""On-disk formats: queries, per-model predictions, weight tables, reports.

Loading validates everything before any array is built. Two error classes
map onto CLI exit codes: :class:`FormatError` (1) for files that do not parse
into the expected shape, :class:`ConsistencyError` (2) for parseable files
that disagree with each other or break a data invariant.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .ensemble import PROVENANCES, WeightTable
from .types import Dataset, Direction, PredictionSet, Query, Triplet

PathLike = str | os.PathLike


class InputError(Exception):
    exit_code = 1


class FormatError(InputError):
    exit_code = 1


class ConsistencyError(InputError):
    exit_code = 2


def _where(path, lineno: int | None) -> str:
    return f"{path}:{lineno}" if lineno is not None else str(path)


def read_jsonl(path: PathLike) -> Iterator[tuple[int, object]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def read_json(path: PathLike) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise FormatError(f"{path}: cannot open ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from None


def write_json(path: PathLike, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def write_jsonl(path: PathLike, objs: Iterable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, allow_nan=False) + "\n")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


# -- queries -----------------------------------------------------------------


@dataclass(frozen=True)
class QueryRecord:
    qid: str
    h: str
    r: str
    t: str
    dir: str
    cands: tuple[str, ...]
    true_idx: int

    @property
    def answer(self) -> str:
        return self.t if self.dir == "tail" else self.h

    def to_json(self) -> dict:
        return {
            "qid": self.qid,
            "h": self.h,
            "r": self.r,
            "t": self.t,
            "dir": self.dir,
            "cands": list(self.cands),
            "true_idx": self.true_idx,
        }


def parse_query(obj, where: str = "<query>") -> QueryRecord:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected a JSON object")
    for key in ("qid", "h", "r", "t", "dir", "cands", "true_idx"):
        if key not in obj:
            raise FormatError(f"{where}: missing field {key!r}")
    for key in ("qid", "h", "r", "t"):
        if not isinstance(obj[key], str):
            raise FormatError(f"{where}: field {key!r} must be a string")
    if obj["dir"] not in ("head", "tail"):
        raise FormatError(f"{where}: dir must be 'head' or 'tail'")
    cands = obj["cands"]
    if not isinstance(cands, list) or not all(isinstance(c, str) for c in cands):
        raise FormatError(f"{where}: cands must be a list of strings")
    if not _is_int(obj["true_idx"]):
        raise FormatError(f"{where}: true_idx must be an integer")
    rec = QueryRecord(obj["qid"], obj["h"], obj["r"], obj["t"], obj["dir"], tuple(cands), obj["true_idx"])
    if not cands:
        raise ConsistencyError(f"{where}: query {rec.qid!r} has no candidates")
    if len(set(cands)) != len(cands):
        raise ConsistencyError(f"{where}: query {rec.qid!r} has duplicate candidates")
    if not 0 <= rec.true_idx < len(cands):
        raise ConsistencyError(f"{where}: query {rec.qid!r}: true_idx {rec.true_idx} out of range")
    if cands[rec.true_idx] != rec.answer:
        raise ConsistencyError(
            f"{where}: query {rec.qid!r}: cands[true_idx] is {cands[rec.true_idx]!r}, "
            f"expected the {rec.dir} entity {rec.answer!r}"
        )
    return rec


def load_queries(path: PathLike) -> list[QueryRecord]:
    records: list[QueryRecord] = []
    seen: dict[str, int] = {}
    for lineno, obj in read_jsonl(path):
        rec = parse_query(obj, _where(path, lineno))
        if rec.qid in seen:
            raise ConsistencyError(f"{path}:{lineno}: duplicate qid {rec.qid!r} (first on line {seen[rec.qid]})")
        seen[rec.qid] = lineno
        records.append(rec)
    return records


def save_queries(path: PathLike, records: Iterable[QueryRecord]) -> None:
    write_jsonl(path, (r.to_json() for r in records))


# -- predictions -------------------------------------------------------------


def load_predictions(path: PathLike, queries: Sequence[QueryRecord]) -> list[np.ndarray]:
    """Score vectors of one model, returned in the order of ``queries``."""
    n_cands = {q.qid: len(q.cands) for q in queries}
    found: dict[str, np.ndarray] = {}
    first_line: dict[str, int] = {}
    for lineno, obj in read_jsonl(path):
        where = _where(path, lineno)
        if not isinstance(obj, dict) or "qid" not in obj or "scores" not in obj:
            raise FormatError(f"{where}: expected an object with 'qid' and 'scores'")
        qid, scores = obj["qid"], obj["scores"]
        if not isinstance(qid, str):
            raise FormatError(f"{where}: qid must be a string")
        if not isinstance(scores, list) or not all(_is_number(s) for s in scores):
            raise FormatError(f"{where}: scores must be a list of numbers")
        if qid in found:
            raise ConsistencyError(f"{where}: duplicate qid {qid!r} (first on line {first_line[qid]})")
        if qid not in n_cands:
            raise ConsistencyError(f"{where}: qid {qid!r} is not in the queries file")
        if len(scores) != n_cands[qid]:
            raise ConsistencyError(
                f"{where}: qid {qid!r} has {len(scores)} scores for {n_cands[qid]} candidates"
            )
        arr = np.array(scores, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ConsistencyError(f"{where}: qid {qid!r} has non-finite scores")
        found[qid] = arr
        first_line[qid] = lineno
    missing = [q.qid for q in queries if q.qid not in found]
    if missing:
        raise ConsistencyError(f"{path}: no scores for {len(missing)} queries, e.g. {missing[0]!r}")
    return [found[q.qid] for q in queries]


def save_predictions(path: PathLike, queries: Sequence[QueryRecord], scores: Sequence) -> None:
    write_jsonl(
        path,
        ({"qid": q.qid, "scores": [float(v) for v in s]} for q, s in zip(queries, scores)),
    )


# -- vocabulary and datasets ------------------------------------------------


@dataclass
class Vocabulary:
    """Dense integer ids for entity and relation strings, in first-seen order."""

    entities: list[str] = field(default_factory=list)
    relations: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._ent = {e: k for k, e in enumerate(self.entities)}
        self._rel = {r: k for k, r in enumerate(self.relations)}

    def entity(self, name: str) -> int:
        if name not in self._ent:
            self._ent[name] = len(self.entities)
            self.entities.append(name)
        return self._ent[name]

    def relation(self, name: str) -> int:
        if name not in self._rel:
            self._rel[name] = len(self.relations)
            self.relations.append(name)
        return self._rel[name]

    def add(self, records: Iterable[QueryRecord]) -> "Vocabulary":
        for rec in records:
            self.relation(rec.r)
            self.entity(rec.h)
            self.entity(rec.t)
            for c in rec.cands:
                self.entity(c)
        return self

    def to_dict(self) -> dict:
        return {"entities": list(self.entities), "relations": list(self.relations)}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(list(d["entities"]), list(d["relations"]))


def build_dataset(
    records: Sequence[QueryRecord],
    model_scores: Sequence[Sequence[np.ndarray]],
    vocab: Vocabulary,
    split: str = "valid",
) -> Dataset:
    queries = []
    for k, rec in enumerate(records):
        triplet = Triplet(vocab.entity(rec.h), vocab.relation(rec.r), vocab.entity(rec.t))
        cands = tuple(vocab.entity(c) for c in rec.cands)
        queries.append(Query(k, triplet, Direction(rec.dir), cands, rec.true_idx))
    preds = [PredictionSet(i, tuple(s)) for i, s in enumerate(model_scores)]
    return Dataset(queries, preds, len(vocab.entities), len(vocab.relations), split)


# -- weights -----------------------------------------------------------------


@dataclass
class WeightsDoc:
    models: list[str]
    relations: dict[str, list[float]]
    provenance: str
    seed: int | None = None

    @property
    def n_models(self) -> int:
        return len(self.models)

    def to_json(self) -> dict:
        return {
            "n_models": self.n_models,
            "models": list(self.models),
            "relations": {r: list(v) for r, v in self.relations.items()},
            "provenance": self.provenance,
            "seed": self.seed,
        }

    def to_table(self, relation_names: Sequence[str]) -> WeightTable:
        missing = [r for r in relation_names if r not in self.relations]
        if missing:
            raise ConsistencyError(f"weights file has no column for relation {missing[0]!r}")
        alpha = np.array([self.relations[r] for r in relation_names], dtype=float).T
        return WeightTable(alpha.reshape(self.n_models, len(relation_names)), self.provenance)

    @classmethod
    def from_table(cls, table: WeightTable, models: Sequence[str], relation_names: Sequence[str], seed=None):
        rel = {name: table.column(r).tolist() for r, name in enumerate(relation_names)}
        return cls(list(models), rel, table.provenance, seed)


def parse_weights(obj, where: str = "<weights>") -> WeightsDoc:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected a JSON object")
    for key in ("n_models", "models", "relations", "provenance"):
        if key not in obj:
            raise FormatError(f"{where}: missing field {key!r}")
    n, models, rels = obj["n_models"], obj["models"], obj["relations"]
    if not _is_int(n) or not isinstance(models, list) or not all(isinstance(m, str) for m in models):
        raise FormatError(f"{where}: n_models must be an integer and models a list of strings")
    if not isinstance(rels, dict) or not all(
        isinstance(v, list) and all(_is_number(a) for a in v) for v in rels.values()
    ):
        raise FormatError(f"{where}: relations must map names to lists of numbers")
    if not isinstance(obj["provenance"], str):
        raise FormatError(f"{where}: provenance must be a string")
    seed = obj.get("seed")
    if seed is not None and not _is_int(seed):
        raise FormatError(f"{where}: seed must be an integer or null")
    if n != len(models) or n < 1:
        raise ConsistencyError(f"{where}: n_models={n} but {len(models)} model names")
    if len(set(models)) != len(models):
        raise ConsistencyError(f"{where}: duplicate model names")
    if obj["provenance"] not in PROVENANCES:
        raise ConsistencyError(f"{where}: unknown provenance {obj['provenance']!r}")
    for name, col in rels.items():
        if len(col) != n:
            raise ConsistencyError(f"{where}: relation {name!r} has {len(col)} weights for {n} models")
        if any(not math.isfinite(a) or a < 0 for a in col):
            raise ConsistencyError(f"{where}: relation {name!r} has a negative or non-finite weight")
        if not any(a > 0 for a in col):
            raise ConsistencyError(f"{where}: relation {name!r} has only zero weights")
    return WeightsDoc(list(models), {k: [float(a) for a in v] for k, v in rels.items()}, obj["provenance"], seed)


def load_weights(path: PathLike) -> WeightsDoc:
    return parse_weights(read_json(path), str(path))


def save_weights(path: PathLike, doc: WeightsDoc) -> None:
    write_json(path, doc.to_json())


def model_names_from_paths(paths: Sequence[PathLike]) -> list[str]:
    """``m0.p.jsonl`` -> ``m0``; repeated stems get a numeric suffix."""
    names: list[str] = []
    for p in paths:
        stem = Path(p).name.split(".")[0] or "model"
        name, k = stem, 1
        while name in names:
            name, k = f"{stem}_{k}", k + 1
        names.append(name)
    return names

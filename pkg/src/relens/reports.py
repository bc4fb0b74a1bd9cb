"""Trial histories, learning curves and weight dumps for plotting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dsc import SearchOutcome
from .io import ConsistencyError, FormatError, read_jsonl, write_jsonl


def history_rows(outcome: SearchOutcome, relation_names: Sequence[str] | None = None) -> list[dict]:
    rows = []
    for key in sorted(outcome.histories, key=lambda k: -1 if k is None else k):
        rel = None if key is None else (relation_names[key] if relation_names else str(key))
        n = outcome.bucket_sizes[key]
        for t in outcome.histories[key]:
            rows.append(
                {
                    "method": outcome.method,
                    "relation": rel,
                    "trial": t.index,
                    "x": list(t.x),
                    "y": t.y,
                    "n": n,
                    "elapsed": t.elapsed,
                }
            )
    return rows


def write_history(path, outcome: SearchOutcome, relation_names: Sequence[str] | None = None) -> None:
    write_jsonl(path, history_rows(outcome, relation_names))


def read_history(path) -> list[dict]:
    rows = []
    for lineno, obj in read_jsonl(path):
        if not isinstance(obj, dict) or not {"method", "trial", "y", "n", "elapsed"} <= obj.keys():
            raise FormatError(f"{path}:{lineno}: not a trial record")
        rows.append(obj)
    return rows


@dataclass(frozen=True)
class CurvePoint:
    method: str
    trial: int
    elapsed: float
    best: float


def learning_curve(rows: Iterable[dict]) -> list[CurvePoint]:
    """Best validation MRR found so far, one point per completed trial.

    Flat searches use the trial's own objective. For relation-wise searches
    the value is the full-validation MRR of the table holding each relation's
    best column so far, and its initial column for relations whose search
    has not produced a trial yet.
    """
    rows = list(rows)
    if not rows:
        raise ConsistencyError("empty trial history")
    methods = {r["method"] for r in rows}
    if len(methods) != 1:
        raise ConsistencyError(f"history mixes methods {sorted(methods)}")
    method = methods.pop()
    if all(r.get("relation") is None for r in rows):
        ordered = sorted(rows, key=lambda r: r["trial"])
        best = -math.inf
        out = []
        for r in ordered:
            best = max(best, r["y"])
            out.append(CurvePoint(method, r["trial"], r["elapsed"], best))
        return out

    by_rel: dict[str, list[dict]] = {}
    for r in rows:
        by_rel.setdefault(r["relation"], []).append(r)
    sizes = {rel: rs[0]["n"] for rel, rs in by_rel.items()}
    total = sum(sizes.values())
    current = {rel: min(rs, key=lambda r: r["trial"])["y"] for rel, rs in by_rel.items()}
    rel_order = {rel: k for k, rel in enumerate(sorted(by_rel))}
    events = sorted(rows, key=lambda r: (r["elapsed"], rel_order[r["relation"]], r["trial"]))
    out = []
    for k, r in enumerate(events):
        current[r["relation"]] = max(current[r["relation"]], r["y"])
        value = math.fsum(sizes[rel] * y for rel, y in current.items()) / total
        out.append(CurvePoint(method, k, r["elapsed"], value))
    return out


def write_curve(path, points: Iterable[CurvePoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "trial", "elapsed", "best_mrr"])
        for p in points:
            w.writerow([p.method, p.trial, repr(p.elapsed), repr(p.best)])


def weight_rows(models: Sequence[str], relations: dict[str, Sequence[float]]) -> list[tuple[str, str, float]]:
    """``(relation, model, alpha)`` rows, each relation's weights normalized to sum 1."""
    rows = []
    for rel, col in relations.items():
        col = np.asarray(col, dtype=float)
        share = col / col.sum()
        rows.extend((rel, m, float(a)) for m, a in zip(models, share))
    return rows


def write_weight_rows(path, rows: Iterable[tuple[str, str, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["relation", "model", "alpha"])
        for rel, m, a in rows:
            w.writerow([rel, m, repr(a)])

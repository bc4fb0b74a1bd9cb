"""Synthetic link-prediction outputs with planted relation specialists.

For a query of relation ``r`` every specialist of ``r`` scores the true
candidate 1 and all others 0, then adds Gaussian noise of scale ``noise`` to
every candidate; with ``noise=0`` specialists rank the truth first and tie
all negatives. Non-specialists score every candidate with i.i.d. standard
normal noise. No single weight vector suits every relation, which is what a
relation-wise ensemble is supposed to exploit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .io import (
    QueryRecord,
    Vocabulary,
    build_dataset,
    save_predictions,
    save_queries,
    write_json,
)
from .types import Dataset


def round_robin(n_models: int, n_relations: int) -> dict[int, tuple[int, ...]]:
    return {i: tuple(r for r in range(n_relations) if r % n_models == i) for i in range(n_models)}


@dataclass
class SynthConfig:
    n_entities: int = 1000
    n_relations: int = 6
    n_models: int = 3
    val_per_relation: int = 200
    test_per_relation: int = 200
    n_candidates: int = 50
    noise: float = 0.0
    seed: int = 0
    # model id -> relations it specializes in; round-robin when None
    specialists: dict[int, tuple[int, ...]] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.specialists is None:
            self.specialists = round_robin(self.n_models, self.n_relations)
        self.specialists = {int(m): tuple(int(r) for r in rs) for m, rs in self.specialists.items()}
        if min(self.n_relations, self.n_models, self.n_candidates) < 1:
            raise ValueError("relations, models and candidates must all be >= 1")
        if self.n_entities < self.n_candidates:
            raise ValueError("need at least as many entities as candidates per query")
        if self.val_per_relation < 0 or self.test_per_relation < 0:
            raise ValueError("query counts must be nonnegative")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if any(not 0 <= m < self.n_models for m in self.specialists):
            raise ValueError("specialist map names an unknown model")
        covered = {r for rs in self.specialists.values() for r in rs}
        if any(not 0 <= r < self.n_relations for r in covered):
            raise ValueError("specialist map names an unknown relation")
        if covered != set(range(self.n_relations)):
            missing = sorted(set(range(self.n_relations)) - covered)
            raise ValueError(f"relations without a specialist: {missing}")

    def specialists_of(self, relation: int) -> set[int]:
        return {m for m, rs in self.specialists.items() if relation in rs}

    def to_json(self) -> dict:
        d = asdict(self)
        d["specialists"] = {str(m): list(rs) for m, rs in self.specialists.items()}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if d.get("specialists") is not None:
            d["specialists"] = {int(m): tuple(rs) for m, rs in d["specialists"].items()}
        return cls(**d)


@dataclass
class SynthSplit:
    queries: list[QueryRecord]
    scores: list[list[np.ndarray]]  # [model][query]


def _split(config: SynthConfig, name: str, per_relation: int, rng: np.random.Generator) -> SynthSplit:
    queries: list[QueryRecord] = []
    scores: list[list[np.ndarray]] = [[] for _ in range(config.n_models)]
    C = config.n_candidates
    for r in range(config.n_relations):
        experts = config.specialists_of(r)
        for k in range(per_relation):
            cands = rng.choice(config.n_entities, size=C, replace=False)
            true_idx = int(rng.integers(C))
            other = int(rng.integers(config.n_entities))
            answer = int(cands[true_idx])
            direction = "tail" if k % 2 == 0 else "head"
            h, t = (other, answer) if direction == "tail" else (answer, other)
            queries.append(
                QueryRecord(
                    qid=f"{name}-r{r}-{k:05d}",
                    h=f"e{h}",
                    r=f"r{r}",
                    t=f"e{t}",
                    dir=direction,
                    cands=tuple(f"e{c}" for c in cands),
                    true_idx=true_idx,
                )
            )
            for m in range(config.n_models):
                if m in experts:
                    s = np.zeros(C)
                    s[true_idx] = 1.0
                    if config.noise > 0:
                        s += rng.normal(0.0, config.noise, size=C)
                else:
                    s = rng.normal(0.0, 1.0, size=C)
                scores[m].append(s)
    return SynthSplit(queries, scores)


def generate_synthetic(config: SynthConfig) -> dict[str, SynthSplit]:
    val_rng, test_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    return {
        "valid": _split(config, "val", config.val_per_relation, val_rng),
        "test": _split(config, "test", config.test_per_relation, test_rng),
    }


def model_names(config: SynthConfig) -> list[str]:
    return [f"m{i}" for i in range(config.n_models)]


def synthetic_datasets(config: SynthConfig) -> tuple[Dataset, Dataset, Vocabulary]:
    """In-memory validation and test datasets sharing one vocabulary."""
    splits = generate_synthetic(config)
    vocab = Vocabulary(relations=[f"r{r}" for r in range(config.n_relations)])
    for s in splits.values():
        vocab.add(s.queries)
    val = build_dataset(splits["valid"].queries, splits["valid"].scores, vocab, "valid")
    test = build_dataset(splits["test"].queries, splits["test"].scores, vocab, "test")
    return val, test, vocab


def write_synthetic(config: SynthConfig, out_dir) -> dict[str, list[Path]]:
    """Write ``{val,test}.q.jsonl`` and ``m<i>.{val,test}.p.jsonl`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, list[Path]] = {}
    splits = generate_synthetic(config)
    for split, prefix in (("valid", "val"), ("test", "test")):
        s = splits[split]
        qpath = out / f"{prefix}.q.jsonl"
        save_queries(qpath, s.queries)
        paths[f"{prefix}_queries"] = [qpath]
        paths[f"{prefix}_preds"] = []
        for m, name in enumerate(model_names(config)):
            ppath = out / f"{name}.{prefix}.p.jsonl"
            save_predictions(ppath, s.queries, s.scores[m])
            paths[f"{prefix}_preds"].append(ppath)
    write_json(out / "config.json", config.to_json())
    return paths

import filecmp

import numpy as np
import pytest

from relens.ensemble import base_model_reports, evaluate_weights, WeightTable
from relens.synth import SynthConfig, round_robin, synthetic_datasets, write_synthetic


SMALL = dict(n_entities=100, n_relations=4, n_models=2, val_per_relation=20, test_per_relation=10, n_candidates=10)


def test_round_robin():
    assert round_robin(3, 6) == {0: (0, 3), 1: (1, 4), 2: (2, 5)}


def test_config_validation():
    with pytest.raises(ValueError, match="without a specialist"):
        SynthConfig(**SMALL, specialists={0: (0, 1), 1: (2,)})
    with pytest.raises(ValueError):
        SynthConfig(**{**SMALL, "n_candidates": 500})
    cfg = SynthConfig(**SMALL, seed=3)
    assert SynthConfig.from_json(cfg.to_json()) == cfg


def test_specialists_are_perfect_without_noise():
    cfg = SynthConfig(**SMALL)
    val, test, vocab = synthetic_datasets(cfg)
    assert len(val) == 80 and len(test) == 40
    for m, rels in cfg.specialists.items():
        rep = base_model_reports(val)[m]
        for r in rels:
            assert rep.per_relation[r].mrr == 1.0
    alpha = np.array([[1.0 if r in cfg.specialists[m] else 0.0 for r in range(4)] for m in range(2)])
    assert evaluate_weights(test, WeightTable(alpha)).mrr == 1.0


def test_same_seed_same_bytes(tmp_path):
    cfg = SynthConfig(**SMALL, noise=0.3, seed=11)
    a = write_synthetic(cfg, tmp_path / "a")
    write_synthetic(cfg, tmp_path / "b")
    files = [p.name for ps in a.values() for p in ps] + ["config.json"]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
    assert not mismatch and not errors and len(match) == len(files)


def test_different_seed_differs():
    a, _, _ = synthetic_datasets(SynthConfig(**SMALL, seed=1))
    b, _, _ = synthetic_datasets(SynthConfig(**SMALL, seed=2))
    assert not np.array_equal(a.scores, b.scores)

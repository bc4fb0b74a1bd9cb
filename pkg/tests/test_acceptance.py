"""End-to-end acceptance checks, one test per criterion.

Each ``test_criterion_<n>_...`` prints a PASS/FAIL line in the terminal summary.
"""

from __future__ import annotations

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import make_dataset
from relens import cli, io
from relens.dsc import fixed_ensemble, relens_basic, relens_dsc, simple_ens
from relens.ensemble import PROVENANCES, WeightTable, base_model_reports, evaluate_weights
from relens.metrics import evaluate, rank_scores
from relens.search import TPE, GridSearch, SearchSpace, TpeConfig, grid_search, random_search, tpe_optimize
from relens.synth import SynthConfig, synthetic_datasets, write_synthetic

# -- exact joint-lattice oracle -----------------------------------------------

LATTICE = [(a, b) for a in range(11) for b in range(11)]  # step 0.1 scaled by 10, lexicographic
RR_SCALE = 720720  # lcm(1..16): 2 / doubled_rank is a multiple of 1/RR_SCALE for C <= 8
INFEASIBLE = -(10**12)


def _doubled_ranks(scores):
    s = np.asarray(scores, dtype=float)
    better = (s[None, :] > s[:, None]).sum(axis=1)
    tied = (s[None, :] == s[:, None]).sum(axis=1) - 1
    return 2 + 2 * better + tied


def _rr_numerators(model_scores, true_index):
    """Exact ``RR_SCALE / rank`` of the truth for every lattice column (zero column is infeasible)."""
    d0, d1 = (_doubled_ranks(s) for s in model_scores)
    out = np.empty(len(LATTICE), dtype=np.int64)
    for k, (a, b) in enumerate(LATTICE):
        if a == b == 0:
            out[k] = INFEASIBLE
            continue
        comb = a * d0 + b * d1
        t = comb[true_index]
        doubled = 2 + 2 * np.count_nonzero(comb < t) + (np.count_nonzero(comb == t) - 1)
        assert (2 * RR_SCALE) % doubled == 0
        out[k] = 2 * RR_SCALE // doubled
    return out


def _tiny_instance(rng, n_relations):
    items = []
    for r in range(n_relations):
        for _ in range(int(rng.integers(1, 11))):
            c = int(rng.integers(2, 9))
            items.append((r, int(rng.integers(c)), rng.integers(0, 4, size=(2, c)).astype(float)))
    return items


def test_criterion_1_joint_lattice_optimum_equals_combined_relation_optima():
    start = time.perf_counter()
    rng = np.random.default_rng(20240)
    n_instances = 0
    for k in range(24):
        n_relations = 2 if k % 2 == 0 else 3
        items = _tiny_instance(rng, n_relations)
        ds = make_dataset(items, n_relations)

        # joint problem: enumerate every (121 ** R) table and sum exact per-query terms
        per_rel = np.zeros((n_relations, len(LATTICE)), dtype=np.int64)
        for r, t, scores in items:
            per_rel[r] += _rr_numerators(scores, t)
        joint = per_rel[0]
        for r in range(1, n_relations):
            joint = np.add.outer(joint, per_rel[r]).ravel()
        joint_best = int(joint.max())
        best_idx = np.unravel_index(int(joint.argmax()), (len(LATTICE),) * n_relations)
        joint_table = WeightTable(np.array([LATTICE[i] for i in best_idx], dtype=float).T / 10)

        # per-relation problems, grid searched separately and combined
        dsc = relens_dsc(ds, optimizer=GridSearch(0.1), budget=None)
        cols = [tuple(int(v) for v in np.rint(dsc.weights.column(r) * 10)) for r in range(n_relations)]
        dsc_exact = sum(int(per_rel[r][LATTICE.index(cols[r])]) for r in range(n_relations))

        assert dsc_exact == joint_best
        assert dsc.val_report.mrr == evaluate_weights(ds, joint_table).mrr
        if n_relations == 2:
            # the package's own joint search over the same lattice
            basic = relens_basic(ds, optimizer=GridSearch(0.1), budget=None)
            assert basic.val_report.mrr == dsc.val_report.mrr
        n_instances += 1
    assert n_instances >= 20
    assert time.perf_counter() - start < 60


# -- metrics ----------------------------------------------------------------


@pytest.mark.parametrize(
    "p_h, p_t, mrr, hits",
    [
        (2, 4, 0.375, {1: 0.0, 3: 0.5, 10: 1.0}),
        (1, 1, 1.0, {1: 1.0, 3: 1.0, 10: 1.0}),
        (1, 3, 2 / 3, {1: 0.5, 3: 1.0, 10: 1.0}),
        (10, 11, (1 / 10 + 1 / 11) / 2, {1: 0.0, 3: 0.0, 10: 0.5}),
        (1.5, 2, (1 / 1.5 + 1 / 2) / 2, {1: 0.0, 3: 1.0, 10: 1.0}),
    ],
)
def test_criterion_2_metric_correctness(p_h, p_t, mrr, hits):
    rep = evaluate([p_h, p_t])
    assert abs(rep.mrr - mrr) <= 1e-12
    assert all(abs(rep.hits[k] - v) <= 1e-12 for k, v in hits.items())
    # ranks coming from tied scores: the truth shares first place with one candidate
    tie_rank = rank_scores([0.5, 0.5, 0.2])[0]
    assert abs(evaluate([tie_rank]).mrr - 2 / 3) <= 1e-12

    rng = np.random.default_rng(7)
    for _ in range(1000):
        ranks = np.round(rng.uniform(1, 60, size=int(rng.integers(1, 40))) * 2) / 2
        ranks = np.maximum(ranks, 1)
        r = evaluate(ranks)
        assert r.hits[1] <= r.mrr <= 1
        assert r.hits[1] <= r.hits[3] <= r.hits[10]


# -- scale invariance -----------------------------------------------------------


def _report_bits(rep):
    def flat(r):
        return (r.mrr.hex(), tuple(sorted((k, v.hex()) for k, v in r.hits.items())), r.n_queries)

    return flat(rep), tuple((k, flat(v)) for k, v in sorted(rep.per_relation.items()))


def test_criterion_3_column_scaling_leaves_report_bitwise_identical():
    rng = np.random.default_rng(33)
    for case in range(100):
        n_models, n_relations = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        items = []
        for r in range(n_relations):
            for _ in range(int(rng.integers(1, 8))):
                c = int(rng.integers(2, 12))
                scores = rng.integers(0, 5, size=(n_models, c)) if case % 2 else rng.normal(size=(n_models, c))
                items.append((r, int(rng.integers(c)), scores))
        ds = make_dataset(items, n_relations)
        if case % 3 == 0:
            alpha = rng.integers(0, 11, size=(n_models, n_relations)) / 10
        else:
            alpha = rng.uniform(0, 1, size=(n_models, n_relations)) * (rng.uniform(size=(n_models, n_relations)) > 0.2)
        alpha[0, ~np.any(alpha > 0, axis=0)] = 0.3
        c = float(10 ** rng.uniform(-6, 6))
        r = int(rng.integers(n_relations))
        scaled = alpha.copy()
        scaled[:, r] *= c
        a = evaluate_weights(ds, WeightTable(alpha))
        b = evaluate_weights(ds, WeightTable(scaled))
        assert a == b
        assert _report_bits(a) == _report_bits(b)


# -- planted specialists ---------------------------------------------------------


@pytest.fixture(scope="module")
def planted():
    val, test, _ = synthetic_datasets(SynthConfig())
    return val, test


def test_criterion_4_planted_specialists_dsc_beats_simple_beats_base(planted):
    start = time.perf_counter()
    val, test = planted
    dsc = relens_dsc(val, test, TPE(), 50, seed=0)
    flat = simple_ens(val, test, TPE(), 100, seed=0)
    best_base = max(rep.mrr for rep in base_model_reports(test))
    print(f"test MRR: dsc {dsc.test_report.mrr:.4f}, simple {flat.test_report.mrr:.4f}, best base {best_base:.4f}")
    assert dsc.test_report.mrr >= 0.99
    assert flat.test_report.mrr < dsc.test_report.mrr
    assert best_base < flat.test_report.mrr
    assert time.perf_counter() - start < 300


def _rounds_to_target(outcome, target):
    """Per-relation trial count after which the table of best-so-far columns reaches ``target``."""
    sizes = outcome.bucket_sizes
    total = sum(sizes.values())
    q_max = max(len(h) for h in outcome.histories.values())
    for q in range(1, q_max + 1):
        value = math.fsum(sizes[r] * max(t.y for t in h[:q]) for r, h in outcome.histories.items()) / total
        if value >= target:
            return q
    return math.inf


def _trials_to_target(outcome, target):
    for k, best in enumerate(np.maximum.accumulate([t.y for t in outcome.histories[None]])):
        if best >= target:
            return k + 1
    return math.inf


def test_criterion_5_scoring_parity_and_joint_search_cost(planted):
    val, _ = planted
    q = 50
    dsc = relens_dsc(val, None, TPE(), q, seed=0)
    flat = simple_ens(val, None, TPE(), q, seed=0)
    assert dsc.n_scored == flat.n_scored == q * len(val)

    target = 0.99
    for seed in range(3):
        dsc = relens_dsc(val, None, TPE(), q, seed=seed)
        basic = relens_basic(val, None, TPE(), 400, seed=seed)
        assert basic.n_scored == 400 * len(val)
        dsc_rounds = _rounds_to_target(dsc, target)
        basic_trials = _trials_to_target(basic, target)
        print(f"seed {seed}: dsc rounds {dsc_rounds}, basic trials {basic_trials}")
        assert dsc_rounds <= q
        assert basic_trials >= 4 * dsc_rounds


def test_criterion_6_parallel_determinism_and_speedup():
    val, _, vocab = synthetic_datasets(SynthConfig(n_relations=20, val_per_relation=200, test_per_relation=1))
    val.doubled_ranks("average")
    docs, times = {}, {}
    for parallelism in (1, 4):
        start = time.perf_counter()
        out = relens_dsc(val, None, TPE(), 50, parallelism=parallelism, seed=0)
        times[parallelism] = time.perf_counter() - start
        doc = io.WeightsDoc.from_table(out.weights, [f"m{i}" for i in range(3)], vocab.relations, 0)
        docs[parallelism] = json.dumps(doc.to_json(), indent=2)
    assert docs[1] == docs[4]
    ratio = times[4] / times[1]
    cpus = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    print(f"wall time: 1 worker {times[1]:.2f}s, 4 workers {times[4]:.2f}s, ratio {ratio:.2f}, usable CPUs {cpus}")
    assert ratio <= 0.6


# -- optimizer quality -------------------------------------------------------


def _bowl(x):
    return 1.0 - ((x[0] - 0.3) ** 2 + (x[1] - 0.7) ** 2)


def test_criterion_7_tpe_quality_on_smooth_objective():
    space = SearchSpace(2)
    optimum = grid_search(_bowl, space, 0.02).y_best
    within = wins = 0
    for seed in range(100):
        tpe = tpe_optimize(_bowl, space, 100, TpeConfig(seed=seed)).y_best
        rnd = random_search(_bowl, space, 100, seed=10_000 + seed).y_best
        within += optimum - tpe <= 0.05
        wins += tpe >= rnd
    print(f"within 0.05: {within}/100, beats random: {wins}/100")
    assert within >= 95
    assert wins >= 60


def test_criterion_8_baseline_ordering_on_noisy_instance():
    for seed in range(3):
        cfg = SynthConfig(
            noise=0.5,
            val_per_relation=100,
            test_per_relation=1,
            specialists={0: (0, 1, 2), 1: (3, 4), 2: (5,)},
            seed=seed,
        )
        val, _, _ = synthetic_datasets(cfg)
        dsc = relens_dsc(val, optimizer=GridSearch(0.1), budget=None).val_report.mrr
        flat = simple_ens(val, optimizer=GridSearch(0.1), budget=None).val_report.mrr
        mrr_mean = fixed_ensemble("mrr-mean", val).val_report.mrr
        mean = fixed_ensemble("mean", val).val_report.mrr
        print(f"seed {seed}: dsc {dsc:.4f} >= simple {flat:.4f} >= mrr-mean {mrr_mean:.4f} >= mean {mean:.4f}")
        assert dsc >= flat >= mrr_mean >= mean


# -- formats and validation ---------------------------------------------------

_names = st.text(st.characters(min_codepoint=32, max_codepoint=0x10FF, blacklist_categories=("Cs",)), min_size=1, max_size=10)


@st.composite
def _weights_docs(draw):
    n = draw(st.integers(1, 5))
    models = draw(st.lists(_names, min_size=n, max_size=n, unique=True))
    col = st.lists(st.floats(0, 1e9, allow_nan=False, allow_subnormal=True), min_size=n, max_size=n).filter(
        lambda c: any(v > 0 for v in c)
    )
    relations = draw(st.dictionaries(_names, col, min_size=1, max_size=5))
    seed = draw(st.one_of(st.none(), st.integers(-(2**63), 2**63 - 1)))
    return io.WeightsDoc(models, relations, draw(st.sampled_from(PROVENANCES)), seed)


@st.composite
def _query_files(draw):
    n = draw(st.integers(0, 6))
    qids = draw(st.lists(_names, min_size=n, max_size=n, unique=True))
    records = []
    for qid in qids:
        cands = draw(st.lists(_names, min_size=1, max_size=6, unique=True))
        idx = draw(st.integers(0, len(cands) - 1))
        direction = draw(st.sampled_from(["head", "tail"]))
        other = draw(_names)
        h, t = (other, cands[idx]) if direction == "tail" else (cands[idx], other)
        records.append(io.QueryRecord(qid, h, draw(_names), t, direction, tuple(cands), idx))
    return records


@settings(max_examples=1000)
@given(_weights_docs(), _query_files())
def test_criterion_9_formats_round_trip(tmp_path_factory, doc, records):
    root = tmp_path_factory.mktemp("rt")
    io.save_weights(root / "w.json", doc)
    io.save_queries(root / "q.jsonl", records)
    assert io.load_weights(root / "w.json") == doc
    assert io.load_queries(root / "q.jsonl") == records


def _rewrite(path: Path, dst: Path, edit) -> Path:
    lines = path.read_text().splitlines()
    dst.write_text("\n".join(edit(lines)) + "\n")
    return dst


def _edit_scores(fn):
    def edit(lines):
        obj = json.loads(lines[2])
        obj["scores"] = fn(obj["scores"])
        return lines[:2] + [json.dumps(obj)] + lines[3:]

    return edit


CORRUPTIONS = {
    "too few scores": ("preds", _edit_scores(lambda s: s[:-1])),
    "too many scores": ("preds", _edit_scores(lambda s: s + [0.0])),
    "nan score": ("preds", _edit_scores(lambda s: [float("nan")] + s[1:])),
    "duplicate prediction qid": ("preds", lambda ls: ls + [ls[0]]),
    "missing prediction": ("preds", lambda ls: ls[1:]),
    "unknown prediction qid": ("preds", lambda ls: ls + [ls[0].replace('"qid": "', '"qid": "zz-')]),
    "duplicate query qid": ("queries", lambda ls: ls + [ls[0]]),
    "duplicate candidate": ("queries", lambda ls: [ls[0].replace('"cands": [', '"cands": ["e0", "e0", ', 1)] + ls[1:]),
}


@pytest.fixture
def guarded_core(monkeypatch):
    """Make every numeric entry point fail loudly if reached."""

    def trap(*args, **kwargs):
        raise AssertionError("numeric core reached with invalid input")

    for target in (
        "relens.cli.run_method",
        "relens.cli.stacking_fit",
        "relens.cli.evaluate_weights",
        "relens.cli.evaluate_stacking",
        "relens.io.build_dataset",
    ):
        monkeypatch.setattr(target, trap)


def test_criterion_9_formats_reject_corrupted_inputs(tmp_path, guarded_core):
    paths = write_synthetic(
        SynthConfig(n_entities=50, n_relations=2, n_models=2, val_per_relation=3, test_per_relation=2, n_candidates=5),
        tmp_path / "data",
    )
    queries, preds = paths["val_queries"][0], paths["val_preds"]
    weights = tmp_path / "weights.json"
    io.write_json(weights, {"n_models": 2, "models": ["m0", "m1"], "relations": {"r0": [0.5, 0.5], "r1": [0.5, 0.5]}, "provenance": "dsc", "seed": 0})

    cases = []
    for name, (kind, edit) in CORRUPTIONS.items():
        bad_dir = tmp_path / name.replace(" ", "_")
        bad_dir.mkdir()
        if kind == "preds":
            bad_q, bad_p = queries, [preds[0], _rewrite(preds[1], bad_dir / "m1.p.jsonl", edit)]
        else:
            bad_q, bad_p = _rewrite(queries, bad_dir / "q.jsonl", edit), preds
        cases.append((name, bad_q, bad_p, weights))
    for name, col in (("negative weight", [-0.5, 1.0]), ("all-zero column", [0.0, 0.0])):
        doc = json.loads(weights.read_text())
        doc["relations"]["r1"] = col
        bad = tmp_path / f"{name.replace(' ', '_')}.json"
        io.write_json(bad, doc)
        cases.append((name, queries, preds, bad))

    for name, q, p, w in cases:
        out = tmp_path / "out" / name.replace(" ", "_")
        search = ["search", "--queries", str(q), "--preds", *map(str, p), "--out", str(out)]
        evaluate_cmd = ["eval", "--weights", str(w), "--queries", str(q), "--preds", *map(str, p), "--out", str(out) + ".json"]
        if w is weights:
            assert cli.main(search) == 2, name
            assert not out.exists(), name
        assert cli.main(evaluate_cmd) == 2, name
        assert not Path(str(out) + ".json").exists(), name

"""Command-line interface: ``relens {generate,search,eval,curve,export-weights}``.

Exit codes: 0 success, 1 malformed input, 2 inputs that parse but are
inconsistent (misaligned scores, duplicate qids, model/relation mismatch,
negative weights).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import io
from .dsc import SearchOutcome, fixed_ensemble, relens_basic, relens_dsc, simple_ens
from .ensemble import evaluate_weights
from .metrics import TiePolicy
from .reports import (
    learning_curve,
    read_history,
    weight_rows,
    write_curve,
    write_history,
    write_weight_rows,
)
from .search import TPE, GridSearch, RandomSearch
from .stacking import StackingConfig, StackingModel, evaluate_stacking, stacking_fit
from .synth import SynthConfig, write_synthetic
from .types import Dataset

METHODS = ("mean", "mrr-mean", "stacking", "simple", "basic", "dsc")


@dataclass
class Inputs:
    val: Dataset
    test: Dataset | None
    vocab: io.Vocabulary
    models: list[str]


def load_inputs(queries, preds, test_queries=None, test_preds=None, model_names=None) -> Inputs:
    """Parse and cross-check every input file; nothing numeric runs before this returns."""
    val_records = io.load_queries(queries)
    test_records = io.load_queries(test_queries) if test_queries else None
    if test_records is not None and test_preds is None:
        raise io.ConsistencyError("--test-queries given without --test-preds")
    if test_preds is not None and test_records is None:
        raise io.ConsistencyError("--test-preds given without --test-queries")
    if test_preds is not None and len(test_preds) != len(preds):
        raise io.ConsistencyError(
            f"{len(preds)} validation prediction files but {len(test_preds)} test prediction files"
        )
    models = list(model_names) if model_names else io.model_names_from_paths(preds)
    if len(models) != len(preds):
        raise io.ConsistencyError(f"{len(models)} model names for {len(preds)} prediction files")

    val_scores = [io.load_predictions(p, val_records) for p in preds]
    test_scores = [io.load_predictions(p, test_records) for p in test_preds] if test_preds else None

    vocab = io.Vocabulary().add(val_records)
    if test_records is not None:
        vocab.add(test_records)
    try:
        val = io.build_dataset(val_records, val_scores, vocab, "valid")
        test = io.build_dataset(test_records, test_scores, vocab, "test") if test_records is not None else None
    except ValueError as exc:
        raise io.ConsistencyError(str(exc)) from None
    if len(val) == 0:
        raise io.ConsistencyError(f"{queries}: no queries")
    return Inputs(val, test, vocab, models)


def make_optimizer(args):
    if args.optimizer == "tpe":
        return TPE(gamma=args.gamma, n_startup=args.startup, n_ei_candidates=args.ei_candidates)
    if args.optimizer == "random":
        return RandomSearch()
    return GridSearch(step=args.grid_step)


def resolve_parallelism(requested: int) -> int:
    env = os.environ.get("RELENS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise io.FormatError(f"RELENS_THREADS must be an integer, got {env!r}") from None
    return max(1, requested)


def run_method(args, inputs: Inputs, policy: TiePolicy) -> SearchOutcome:
    optimizer = make_optimizer(args)
    if args.method in ("mean", "mrr-mean"):
        return fixed_ensemble(args.method, inputs.val, inputs.test, policy)
    if args.method == "simple":
        return simple_ens(inputs.val, inputs.test, optimizer, args.trials, args.seed, policy)
    if args.method == "basic":
        return relens_basic(inputs.val, inputs.test, optimizer, args.trials, args.seed, policy)
    return relens_dsc(
        inputs.val,
        inputs.test,
        optimizer,
        args.trials,
        parallelism=resolve_parallelism(args.parallel),
        seed=args.seed,
        policy=policy,
        budget_mode=args.budget_mode,
    )


def cmd_search(args) -> int:
    inputs = load_inputs(args.queries, args.preds, args.test_queries, args.test_preds, args.model_names)
    policy = TiePolicy(args.tie_policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "vocab.json", inputs.vocab.to_dict())
    relations = inputs.vocab.relations
    start = time.perf_counter()

    if args.method == "stacking":
        config = StackingConfig(
            max_iterations=args.stacking_iterations,
            learning_rate=args.stacking_lr,
            negatives_per_query=args.stacking_negatives,
            seed=args.seed,
        )
        model = stacking_fit(inputs.val, config, policy)
        doc = model.to_dict() | {"models": inputs.models}
        io.write_json(out / "stacking.json", doc)
        report = {"method": "stacking", "validation": evaluate_stacking(model, inputs.val, policy).to_dict(relations)}
        if inputs.test is not None:
            report["test"] = evaluate_stacking(model, inputs.test, policy).to_dict(relations)
        io.write_json(out / "report.json", report)
        io.write_json(out / "timing.json", {"wall_time": time.perf_counter() - start})
        return 0

    outcome = run_method(args, inputs, policy)
    doc = io.WeightsDoc.from_table(outcome.weights, inputs.models, relations, args.seed)
    io.save_weights(out / "weights.json", doc)
    report = {
        "method": outcome.method,
        "n_scored": outcome.n_scored,
        "validation": outcome.val_report.to_dict(relations),
    }
    if outcome.test_report is not None:
        report["test"] = outcome.test_report.to_dict(relations)
    io.write_json(out / "report.json", report)
    if outcome.histories:
        write_history(out / "history.jsonl", outcome, relations)
    io.write_json(out / "timing.json", {"wall_time": outcome.wall_time})
    print(
        f"{outcome.method}: val MRR {outcome.val_report.mrr:.4f}"
        + (f", test MRR {outcome.test_report.mrr:.4f}" if outcome.test_report else "")
    )
    return 0


def cmd_eval(args) -> int:
    raw = io.read_json(args.weights)
    stacking = isinstance(raw, dict) and raw.get("kind") == "stacking"
    if stacking:
        try:
            model = StackingModel.from_dict(raw)
        except (KeyError, TypeError, ValueError) as exc:
            raise io.FormatError(f"{args.weights}: malformed stacking model ({exc})") from None
        n_inputs = len(model.coef)
    else:
        doc = io.parse_weights(raw, str(args.weights))
        n_inputs = doc.n_models
    if n_inputs != len(args.preds):
        raise io.ConsistencyError(f"{args.weights}: weights for {n_inputs} models, got {len(args.preds)} prediction files")
    inputs = load_inputs(args.queries, args.preds)
    policy = TiePolicy(args.tie_policy)
    relations = inputs.vocab.relations
    if stacking:
        report = evaluate_stacking(model, inputs.val, policy)
    else:
        report = evaluate_weights(inputs.val, doc.to_table(relations), policy)
    io.write_json(args.out, report.to_dict(relations))
    print(f"MRR {report.mrr:.4f} over {report.n_queries} queries")
    return 0


def cmd_curve(args) -> int:
    points = []
    for path in args.histories:
        points.extend(learning_curve(read_history(path)))
    write_curve(args.out, points)
    return 0


def cmd_export_weights(args) -> int:
    doc = io.load_weights(args.weights)
    write_weight_rows(args.out, weight_rows(doc.models, doc.relations))
    return 0


def _parse_specialist(text: str) -> tuple[int, tuple[int, ...]]:
    model, _, rels = text.partition(":")
    try:
        return int(model), tuple(int(r) for r in rels.split(",") if r)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MODEL:REL[,REL...], got {text!r}") from None


def cmd_generate(args) -> int:
    specialists = dict(args.specialist) if args.specialist else None
    try:
        config = SynthConfig(
            n_entities=args.entities,
            n_relations=args.relations,
            n_models=args.models,
            val_per_relation=args.val_per_relation,
            test_per_relation=args.test_per_relation,
            n_candidates=args.candidates,
            noise=args.noise,
            seed=args.seed,
            specialists=specialists,
        )
    except ValueError as exc:
        raise io.FormatError(f"invalid synthetic config: {exc}") from None
    write_synthetic(config, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_tie_policy(p):
        p.add_argument("--tie-policy", choices=[t.value for t in TiePolicy], default="average")

    s = sub.add_parser("search", help="search ensemble weights on validation, report on test")
    s.add_argument("--method", choices=METHODS, default="dsc")
    s.add_argument("--queries", required=True)
    s.add_argument("--preds", nargs="+", required=True)
    s.add_argument("--test-queries")
    s.add_argument("--test-preds", nargs="+")
    s.add_argument("--model-names", nargs="+")
    s.add_argument("--out", required=True)
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--parallel", type=int, default=1, help="worker count; RELENS_THREADS overrides")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--optimizer", choices=("tpe", "random", "grid"), default="tpe")
    s.add_argument("--grid-step", type=float, default=0.1)
    s.add_argument("--budget-mode", choices=("per-relation", "total"), default="per-relation")
    s.add_argument("--gamma", type=float, default=0.15)
    s.add_argument("--startup", type=int, default=10)
    s.add_argument("--ei-candidates", type=int, default=24)
    s.add_argument("--stacking-iterations", type=int, default=300)
    s.add_argument("--stacking-lr", type=float, default=1.0)
    s.add_argument("--stacking-negatives", type=int, default=50)
    add_tie_policy(s)
    s.set_defaults(func=cmd_search)

    e = sub.add_parser("eval", help="evaluate a weights (or stacking) file")
    e.add_argument("--weights", required=True)
    e.add_argument("--queries", required=True)
    e.add_argument("--preds", nargs="+", required=True)
    e.add_argument("--out", required=True)
    add_tie_policy(e)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("curve", help="best-so-far learning curves from trial histories")
    c.add_argument("histories", nargs="+")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_curve)

    x = sub.add_parser("export-weights", help="relation x model weight table as CSV")
    x.add_argument("weights")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_weights)

    g = sub.add_parser("generate", help="write a synthetic planted-specialist instance")
    g.add_argument("--out", required=True)
    g.add_argument("--entities", type=int, default=1000)
    g.add_argument("--relations", type=int, default=6)
    g.add_argument("--models", type=int, default=3)
    g.add_argument("--val-per-relation", type=int, default=200)
    g.add_argument("--test-per-relation", type=int, default=200)
    g.add_argument("--candidates", type=int, default=50)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--specialist", type=_parse_specialist, action="append", metavar="MODEL:REL[,REL]")
    g.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except io.InputError as exc:
        print(f"relens: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""Compare every ensemble method on a synthetic planted-specialist instance.

Prints one row per method (test MRR, Hit@1/3/10, wall time) and optionally
writes the rows as JSON.

    python scripts/planted_benchmark.py --noise 0.0 --trials 50 --out results.json
"""

from __future__ import annotations

import argparse
import json
import time

from relens.dsc import fixed_ensemble, relens_basic, relens_dsc, simple_ens
from relens.ensemble import base_model_reports
from relens.search import TPE
from relens.stacking import StackingConfig, evaluate_stacking, stacking_fit
from relens.synth import SynthConfig, synthetic_datasets


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--relations", type=int, default=6)
    p.add_argument("--models", type=int, default=3)
    p.add_argument("--per-relation", type=int, default=200)
    p.add_argument("--candidates", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=50, help="trials per relation for dsc, per search otherwise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    args = p.parse_args(argv)

    cfg = SynthConfig(
        n_relations=args.relations,
        n_models=args.models,
        val_per_relation=args.per_relation,
        test_per_relation=args.per_relation,
        n_candidates=args.candidates,
        noise=args.noise,
        seed=args.seed,
    )
    val, test, _ = synthetic_datasets(cfg)
    rows = []

    def add(name, report, seconds):
        rows.append({"method": name, **report.to_dict(), "seconds": seconds})
        rows[-1].pop("per_relation")

    for i, rep in enumerate(base_model_reports(test)):
        add(f"model m{i}", rep, 0.0)
    for method in ("mean", "mrr-mean"):
        out = fixed_ensemble(method, val, test)
        add(method, out.test_report, out.wall_time)
    start = time.perf_counter()
    model = stacking_fit(val, StackingConfig(seed=args.seed))
    add("stacking", evaluate_stacking(model, test), time.perf_counter() - start)
    for name, run in (
        ("simple", lambda: simple_ens(val, test, TPE(), args.trials, args.seed)),
        ("basic", lambda: relens_basic(val, test, TPE(), args.trials, args.seed)),
        ("dsc", lambda: relens_dsc(val, test, TPE(), args.trials, seed=args.seed)),
    ):
        out = run()
        add(name, out.test_report, out.wall_time)

    print(f"{'method':<12}{'MRR':>8}{'H@1':>8}{'H@3':>8}{'H@10':>8}{'sec':>8}")
    for r in rows:
        print(f"{r['method']:<12}{r['mrr']:>8.4f}{r['hit1']:>8.4f}{r['hit3']:>8.4f}{r['hit10']:>8.4f}{r['seconds']:>8.2f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"config": cfg.to_json(), "trials": args.trials, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()

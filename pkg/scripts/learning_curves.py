"""Best-so-far validation MRR against wall time and trial count for the searched methods.

Writes a CSV with columns method, trial, elapsed, best_mrr (one block per
method) suitable for plotting search efficiency side by side.

    python scripts/learning_curves.py --trials 50 --parallel 1 2 --out curves.csv
"""

from __future__ import annotations

import argparse
from dataclasses import replace

from relens.dsc import relens_basic, relens_dsc, simple_ens
from relens.reports import history_rows, learning_curve, write_curve
from relens.search import TPE
from relens.synth import SynthConfig, synthetic_datasets


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--relations", type=int, default=6)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--parallel", type=int, nargs="+", default=[1])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)

    val, _, names = synthetic_datasets(SynthConfig(n_relations=args.relations, noise=args.noise, seed=args.seed))
    points = []
    flat_budget = args.trials * args.relations  # same number of query scorings as one dsc run
    for out in (
        simple_ens(val, None, TPE(), flat_budget, args.seed),
        relens_basic(val, None, TPE(), flat_budget, args.seed),
    ):
        points += learning_curve(history_rows(out))
    for workers in args.parallel:
        out = relens_dsc(val, None, TPE(), args.trials, parallelism=workers, seed=args.seed)
        points += [replace(pt, method=f"dsc-{workers}") for pt in learning_curve(history_rows(out, names.relations))]
    write_curve(args.out, points)

    finals = {}
    for pt in points:
        finals[pt.method] = pt
    for method, pt in finals.items():
        print(f"{method:<10} best val MRR {pt.best:.4f} after {pt.elapsed:.2f}s")


if __name__ == "__main__":
    main()

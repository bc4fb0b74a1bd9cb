"""Divide-search-combine over relations, plus the flat and joint search baselines.

``relens_dsc`` splits the validation queries by relation, searches an
N-dimensional weight column for each relation on its own queries, and stacks
the columns into a weight table. Per-relation searches share nothing, so they
run in worker processes; each one is seeded from ``(seed, relation)`` and the
result does not depend on the number of workers.
"""

from __future__ import annotations

import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ensemble import (
    WeightObjective,
    WeightTable,
    base_model_reports,
    evaluate_weights,
    mean_weights,
    mrr_mean_weights,
    simple_ens_search,
)
from .metrics import EvalReport, TiePolicy
from .search import TPE, SearchResult, SearchSpace, TrialRecord
from .types import Dataset, partition_by_relation

BUDGET_MODES = ("per-relation", "total")


@dataclass
class SearchOutcome:
    method: str
    weights: WeightTable
    val_report: EvalReport
    test_report: EvalReport | None = None
    # keyed by relation id for dsc, by None for flat searches
    histories: dict[int | None, list[TrialRecord]] = field(default_factory=dict)
    bucket_sizes: dict[int | None, int] = field(default_factory=dict)
    wall_time: float = 0.0
    n_scored: int = 0


def relation_seed(seed: int | None, relation: int) -> int:
    """Independent, reproducible seed for the search of one relation."""
    base = 0 if seed is None else seed
    return int(np.random.SeedSequence([base, relation]).generate_state(1)[0])


def allocate_budget(bucket_sizes: dict[int, int], total: int) -> dict[int, int]:
    """Split ``total`` trials across relations in proportion to their query counts.

    Largest-remainder rounding; every nonempty relation gets at least one trial.
    """
    sizes = {r: n for r, n in bucket_sizes.items() if n > 0}
    n_all = sum(sizes.values())
    if not sizes:
        return {}
    raw = {r: total * n / n_all for r, n in sizes.items()}
    alloc = {r: math.floor(v) for r, v in raw.items()}
    leftover = total - sum(alloc.values())
    for r in sorted(sizes, key=lambda r: (-(raw[r] - alloc[r]), r))[:leftover]:
        alloc[r] += 1
    return {r: max(1, q) for r, q in alloc.items()}


def search_relation(
    bucket: Dataset,
    optimizer,
    budget: int | None,
    seed: int | None = 0,
    policy: TiePolicy = TiePolicy.AVERAGE,
    clock_origin: float | None = None,
) -> tuple[np.ndarray, SearchResult, int]:
    """Best weight column for one relation, judged by MRR over its queries only."""
    if len(bucket) == 0:
        raise ValueError("empty relation bucket; apply the fallback column instead")
    objective = WeightObjective(bucket, policy, layout="shared")
    space = SearchSpace.for_weights(bucket.n_models)
    result = optimizer.optimize(objective, space, budget, seed, clock_origin)
    return np.asarray(result.x_best, dtype=float), result, objective.n_scored


def _search_task(task):
    relation, bucket, optimizer, budget, seed, policy, origin = task
    column, result, n_scored = search_relation(bucket, optimizer, budget, seed, policy, origin)
    return relation, column, result, n_scored


def _run_tasks(tasks: list, parallelism: int) -> list:
    if parallelism <= 1 or len(tasks) <= 1:
        return [_search_task(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(parallelism, len(tasks)), mp_context=ctx) as pool:
        return list(pool.map(_search_task, tasks))


def relens_dsc(
    val: Dataset,
    test: Dataset | None = None,
    optimizer=TPE(),
    budget: int | None = 50,
    parallelism: int = 1,
    seed: int | None = 0,
    policy: TiePolicy = TiePolicy.AVERAGE,
    budget_mode: str = "per-relation",
    fallback=None,
) -> SearchOutcome:
    """Relation-wise ensemble searched one relation at a time.

    ``budget`` is the trial count of every relation's search (``per-relation``)
    or the total spread over relations by query count (``total``). Relations
    without validation queries get ``fallback`` (e.g. a searched shared vector)
    or uniform 1/N weights.
    """
    if len(val) == 0:
        raise ValueError("no data: validation set is empty")
    if budget_mode not in BUDGET_MODES:
        raise ValueError(f"budget_mode must be one of {BUDGET_MODES}")
    policy = TiePolicy(policy)
    start = time.perf_counter()
    val.doubled_ranks(policy)  # warm the cache so buckets inherit it
    buckets = partition_by_relation(val)
    sizes = {r: len(b) for r, b in buckets.items()}
    if budget_mode == "total" and budget is not None:
        budgets = allocate_budget(sizes, budget)
    else:
        budgets = {r: budget for r, n in sizes.items() if n > 0}

    tasks = [
        (r, buckets[r], optimizer, budgets[r], relation_seed(seed, r), policy, start)
        for r in sorted(budgets)
    ]
    results = _run_tasks(tasks, parallelism)

    n = val.n_models
    default = np.full(n, 1.0 / n) if fallback is None else np.asarray(fallback, dtype=float)
    alpha = np.repeat(default[:, None], val.n_relations, axis=1)
    histories: dict[int | None, list[TrialRecord]] = {}
    n_scored = 0
    for r, column, result, scored in results:
        alpha[:, r] = column
        histories[r] = result.history
        n_scored += scored
    table = WeightTable(alpha, "dsc")
    wall = time.perf_counter() - start
    return SearchOutcome(
        method="dsc",
        weights=table,
        val_report=evaluate_weights(val, table, policy),
        test_report=evaluate_weights(test, table, policy) if test is not None else None,
        histories=histories,
        bucket_sizes={r: sizes[r] for r in histories},
        wall_time=wall,
        n_scored=n_scored,
    )


def relens_basic(
    val: Dataset,
    test: Dataset | None = None,
    optimizer=TPE(),
    budget: int | None = 50,
    seed: int | None = 0,
    policy: TiePolicy = TiePolicy.AVERAGE,
) -> SearchOutcome:
    """Joint search over all N*R weights with full-validation MRR per trial."""
    if len(val) == 0:
        raise ValueError("no data: validation set is empty")
    start = time.perf_counter()
    objective = WeightObjective(val, policy, layout="table")
    space = SearchSpace.for_weights(val.n_models, val.n_relations)
    result = optimizer.optimize(objective, space, budget, seed, start)
    alpha = np.asarray(result.x_best).reshape(val.n_relations, val.n_models).T
    table = WeightTable(alpha, "basic")
    return _flat_outcome("basic", table, val, test, policy, result, objective.n_scored, start)


def simple_ens(
    val: Dataset,
    test: Dataset | None = None,
    optimizer=TPE(),
    budget: int | None = 50,
    seed: int | None = 0,
    policy: TiePolicy = TiePolicy.AVERAGE,
) -> SearchOutcome:
    start = time.perf_counter()
    table, result, n_scored = simple_ens_search(val, optimizer, budget, seed, policy)
    return _flat_outcome("simple", table, val, test, policy, result, n_scored, start)


def fixed_ensemble(
    method: str,
    val: Dataset,
    test: Dataset | None = None,
    policy: TiePolicy = TiePolicy.AVERAGE,
) -> SearchOutcome:
    """The unsearched baselines: ``mean`` and ``mrr-mean``."""
    start = time.perf_counter()
    if method == "mean":
        table = mean_weights(val.n_models, val.n_relations)
    elif method == "mrr-mean":
        mrrs = [rep.mrr for rep in base_model_reports(val, policy)]
        table = mrr_mean_weights(mrrs, val.n_relations)
    else:
        raise ValueError(f"unknown fixed ensemble {method!r}")
    return _flat_outcome(method, table, val, test, policy, None, 0, start)


def _flat_outcome(method, table, val, test, policy, result, n_scored, start) -> SearchOutcome:
    return SearchOutcome(
        method=method,
        weights=table,
        val_report=evaluate_weights(val, table, policy),
        test_report=evaluate_weights(test, table, policy) if test is not None else None,
        histories={None: result.history} if result is not None else {},
        bucket_sizes={None: len(val)} if result is not None else {},
        wall_time=time.perf_counter() - start,
        n_scored=n_scored,
    )

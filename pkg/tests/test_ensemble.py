import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import make_dataset, random_dataset
from oracle import ensemble_rank, exact_mrr
from relens.ensemble import (
    WeightObjective,
    WeightTable,
    base_model_reports,
    combine,
    evaluate_weights,
    integer_weights,
    mean_weights,
    mrr_mean_weights,
    ranks_under_table,
    simple_ens_search,
)
from relens.metrics import TiePolicy
from relens.search import TPE, GridSearch


def test_combine_example():
    assert combine([[1, 2, 3], [3, 1, 2]], [0.5, 0.5]).tolist() == [-2.0, -1.5, -2.5]


def test_combine_single_model_reverses_ranks():
    assert combine([[2, 1, 3]], [1.0]).tolist() == [-2.0, -1.0, -3.0]


def test_combine_shape_mismatch():
    with pytest.raises(ValueError):
        combine([[1, 2]], [0.5, 0.5])


def test_weight_table_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        WeightTable(np.array([[-0.1], [1.0]]))
    with pytest.raises(ValueError, match="all-zero"):
        WeightTable(np.array([[0.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="finite"):
        WeightTable(np.array([[np.nan], [1.0]]))
    with pytest.raises(ValueError, match="provenance"):
        WeightTable(np.ones((2, 2)), "unknown")


def test_weight_table_broadcast_is_flat():
    t = WeightTable.broadcast([0.2, 0.8], 3)
    assert t.is_flat() and t.alpha.shape == (2, 3)
    assert not t.with_column(1, [1.0, 0.0]).is_flat()


def test_integer_weights_exact_for_small_ratios():
    assert integer_weights([0.3, 0.7]).tolist() == [3, 7]
    assert integer_weights([0.3 * 3.7, 0.7 * 3.7]).tolist() == [3, 7]
    assert integer_weights([1.0, 0.0]).tolist() == [1, 0]


def test_integer_weights_quantizes_irrational_ratios():
    w = integer_weights([1.0, math.pi / 4])
    assert w[0] == 1 << 24
    assert abs(w[1] / w[0] - math.pi / 4) < 2**-24


# three models, two relations: model 0 is right on relation 0, model 1 on relation 1
PLANTED = [
    (0, 0, [[9, 1, 2], [1, 9, 2], [0, 0, 0]]),
    (0, 2, [[1, 2, 9], [9, 2, 1], [0, 0, 0]]),
    (0, 1, [[2, 9, 1], [9, 1, 2], [0, 0, 0]]),
    (1, 1, [[9, 1, 2], [1, 9, 2], [0, 0, 0]]),
    (1, 0, [[1, 9, 2], [9, 1, 2], [0, 0, 0]]),
    (1, 2, [[9, 2, 1], [1, 2, 9], [0, 0, 0]]),
]


def test_planted_instance_matches_oracle():
    ds = make_dataset(PLANTED, n_relations=2)
    table = WeightTable(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
    rep = evaluate_weights(ds, table)
    assert rep.mrr == 1.0
    assert rep.mrr == float(exact_mrr(PLANTED, lambda r: table.column(r)))
    flat = mean_weights(3, 2)
    assert evaluate_weights(ds, flat).mrr == float(exact_mrr(PLANTED, lambda r: [1, 1, 1]))
    assert evaluate_weights(ds, flat).mrr < 1.0


@given(st.integers(0, 2**31 - 1), st.sampled_from(list(TiePolicy)))
def test_ranks_match_exact_oracle(seed, policy):
    rng = np.random.default_rng(seed)
    n_models = int(rng.integers(1, 4))
    items = []
    for _ in range(6):
        c = int(rng.integers(2, 7))
        items.append((int(rng.integers(2)), int(rng.integers(c)), rng.integers(0, 4, size=(n_models, c)).astype(float)))
    ds = make_dataset(items, n_relations=2)
    alpha = rng.integers(0, 11, size=(n_models, 2)) / 10
    alpha[0, alpha.sum(axis=0) == 0] = 0.5
    table = WeightTable(alpha)
    got = ranks_under_table(ds, table, policy)
    want = [float(ensemble_rank(s, t, [Fraction(a).limit_denominator(10) for a in alpha[:, r]], policy.value))
            for r, t, s in items]
    assert got.tolist() == want


def test_mean_weights():
    t = mean_weights(4, 3)
    assert np.allclose(t.alpha, 0.25) and t.provenance == "mean"


def test_mrr_mean_weights_proportional():
    t = mrr_mean_weights([0.2, 0.6], 2)
    assert np.allclose(t.column(0), [0.25, 0.75]) and t.is_flat()
    with pytest.raises(ValueError):
        mrr_mean_weights([0.0, 0.5], 1)


@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
def test_column_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 3, 3, 4, 6)
    alpha = rng.uniform(0.01, 1, size=(3, 3))
    r = int(rng.integers(3))
    scaled = alpha.copy()
    scaled[:, r] *= c
    a = evaluate_weights(ds, WeightTable(alpha))
    b = evaluate_weights(ds, WeightTable(scaled))
    assert a == b


@given(st.integers(0, 2**31 - 1))
def test_single_model_ensemble_is_identity(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 1, 2, 5, 6, integer_scores=False)
    rep = evaluate_weights(ds, WeightTable(np.array([[0.7, 3.0]])))
    assert rep == base_model_reports(ds)[0]


@given(st.integers(0, 2**31 - 1))
def test_flat_table_equals_shared_objective(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 2, 3, 4, 6)
    w = rng.uniform(0.05, 1, size=2)
    shared = WeightObjective(ds, layout="shared")(w)
    table = WeightObjective(ds, layout="table")(np.tile(w, 3))
    assert shared == table == evaluate_weights(ds, WeightTable.broadcast(w, 3)).mrr


def test_objective_counts_scorings_and_zero_columns():
    ds = random_dataset(np.random.default_rng(1), 2, 2, 3, 5)
    obj = WeightObjective(ds, layout="table")
    assert obj([0, 0, 1, 1]) == 0.0 and obj.n_scored == 0
    obj([1, 1, 1, 1])
    assert obj.n_scored == len(ds)


def test_simple_ens_single_trial_is_mean():
    ds = random_dataset(np.random.default_rng(2), 3, 2, 5, 6)
    table, result, n = simple_ens_search(ds, TPE(), 1, seed=0)
    assert np.allclose(table.alpha, 1 / 3)
    assert n == len(ds)
    assert evaluate_weights(ds, table).mrr == evaluate_weights(ds, mean_weights(3, 2)).mrr


def test_simple_ens_grid_equals_exact_brute_force():
    rng = np.random.default_rng(3)
    items = []
    for r in range(2):
        for _ in range(5):
            c = int(rng.integers(2, 7))
            items.append((r, int(rng.integers(c)), rng.integers(0, 4, size=(2, c)).astype(float)))
    ds = make_dataset(items, 2)
    table, result, _ = simple_ens_search(ds, GridSearch(0.1), None)
    best = max(
        exact_mrr(items, lambda r, w=(a, b): w)
        for a in range(11) for b in range(11) if a + b > 0
    )
    assert result.y_best == float(best)

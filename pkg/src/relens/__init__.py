"""Relation-wise rank ensembles for link prediction, searched by divide-search-combine."""

from .dsc import SearchOutcome, fixed_ensemble, relens_basic, relens_dsc, search_relation, simple_ens
from .ensemble import (
    WeightTable,
    combine,
    evaluate_weights,
    mean_weights,
    mrr_mean_weights,
    simple_ens_search,
)
from .metrics import EvalReport, TiePolicy, evaluate, rank_scores, reciprocal_rank
from .search import TPE, GridSearch, RandomSearch, SearchSpace, TpeConfig, grid_search, random_search, tpe_optimize
from .stacking import StackingConfig, stacking_fit, stacking_score
from .types import Dataset, Direction, PredictionSet, Query, Triplet, partition_by_relation

__version__ = "0.1.0"

"""Logistic stacking baseline over base-model rank lists."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .metrics import EvalReport, TiePolicy, evaluate, true_rank_from_counts
from .types import Dataset


@dataclass(frozen=True)
class StackingConfig:
    max_iterations: int = 300
    learning_rate: float = 1.0
    negatives_per_query: int = 50
    seed: int = 0


@dataclass
class StackingModel:
    coef: np.ndarray
    bias: float
    config: StackingConfig = field(default_factory=StackingConfig)
    losses: list[float] = field(default_factory=list)

    def decision(self, features: np.ndarray) -> np.ndarray:
        return features @ self.coef + self.bias

    def score(self, features: np.ndarray) -> np.ndarray:
        return expit(self.decision(features))

    def to_dict(self) -> dict:
        return {
            "kind": "stacking",
            "coef": self.coef.tolist(),
            "bias": self.bias,
            "config": asdict(self.config),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StackingModel":
        return cls(np.asarray(d["coef"], dtype=float), float(d["bias"]), StackingConfig(**d["config"]))


def rank_features(dataset: Dataset, policy: TiePolicy = TiePolicy.AVERAGE) -> np.ndarray:
    """Reciprocal base ranks as a ``(Q, C, N)`` feature tensor (padding is 0)."""
    doubled = dataset.doubled_ranks(policy).astype(float)
    with np.errstate(divide="ignore"):
        feats = np.where(doubled > 0, 2.0 / doubled, 0.0)
    return np.moveaxis(feats, 0, -1)


def _training_set(dataset: Dataset, config: StackingConfig, policy: TiePolicy) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(config.seed)
    feats = rank_features(dataset, policy)
    rows, labels = [], []
    for j in range(len(dataset)):
        n_c = int(dataset.mask[j].sum())
        t = int(dataset.true_index[j])
        negatives = np.delete(np.arange(n_c), t)
        if len(negatives) > config.negatives_per_query:
            negatives = rng.choice(negatives, size=config.negatives_per_query, replace=False)
        rows.append(feats[j, t][None])
        rows.append(feats[j, negatives])
        labels.append(np.ones(1))
        labels.append(np.zeros(len(negatives)))
    return np.concatenate(rows), np.concatenate(labels)


def _bce(p: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def stacking_fit(
    val: Dataset,
    config: StackingConfig = StackingConfig(),
    policy: TiePolicy = TiePolicy.AVERAGE,
) -> StackingModel:
    """Full-batch gradient descent on binary cross-entropy.

    Each training row is one candidate: the true entity (label 1) or one of
    up to ``negatives_per_query`` sampled negatives (label 0).
    """
    if len(val) == 0:
        raise ValueError("no data: cannot fit stacking on an empty dataset")
    X, y = _training_set(val, config, policy)
    if y.min() == y.max():
        raise ValueError("stacking needs both positive and negative examples")
    coef = np.zeros(X.shape[1])
    bias = 0.0
    losses = [_bce(expit(X @ coef + bias), y)]
    for _ in range(config.max_iterations):
        p = expit(X @ coef + bias)
        err = p - y
        coef = coef - config.learning_rate * (X.T @ err) / len(y)
        bias = bias - config.learning_rate * float(err.mean())
        losses.append(_bce(expit(X @ coef + bias), y))
    return StackingModel(coef, bias, config, losses)


def stacking_score(model: StackingModel, rank_vectors) -> np.ndarray:
    """Meta-model scores for one query given its ``(N, C)`` base rank lists."""
    ranks = np.asarray(rank_vectors, dtype=float)
    return model.score((1.0 / ranks).T)


def stacking_ranks(model: StackingModel, dataset: Dataset, policy: TiePolicy = TiePolicy.AVERAGE) -> np.ndarray:
    feats = rank_features(dataset, policy)
    # rank on the logit: same order as the sigmoid, without saturation ties
    scores = np.where(dataset.mask, model.decision(feats), -np.inf)
    truth = np.take_along_axis(scores, dataset.true_index[:, None], axis=1)
    better = np.count_nonzero((scores > truth) & dataset.mask, axis=1)
    tied = np.count_nonzero((scores == truth) & dataset.mask, axis=1) - 1
    return true_rank_from_counts(better, tied, policy)


def evaluate_stacking(model: StackingModel, dataset: Dataset, policy: TiePolicy = TiePolicy.AVERAGE) -> EvalReport:
    return evaluate(stacking_ranks(model, dataset, policy), dataset.relation)


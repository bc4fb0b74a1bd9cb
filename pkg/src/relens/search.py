"""Black-box maximizers for non-differentiable objectives.

Three optimizers share one calling convention,
``optimizer.optimize(objective, space, budget, seed) -> SearchResult``:

* :class:`TPE` - Tree-structured Parzen Estimator with axis-factorized,
  bound-truncated Gaussian kernels.
* :class:`RandomSearch` - uniform sampling.
* :class:`GridSearch` - exhaustive lattice, used as a brute-force oracle.

TPE and random search spend their first trial on the space's initial point.
All three keep the earliest trial on equal objective values.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

Objective = Callable[[np.ndarray], float]

GRID_POINT_LIMIT = 10**7
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class SearchSpace:
    dim: int
    lo: float = 0.0
    hi: float = 1.0
    initial: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.lo < self.hi:
            raise ValueError(f"empty bounds [{self.lo}, {self.hi}]")
        if self.initial is None:
            start = min(max(1.0 / self.dim, self.lo), self.hi)
            object.__setattr__(self, "initial", (start,) * self.dim)
        if len(self.initial) != self.dim:
            raise ValueError("initial point has wrong dimension")
        if any(not self.lo <= v <= self.hi for v in self.initial):
            raise ValueError("initial point outside bounds")

    @classmethod
    def for_weights(cls, n_models: int, n_blocks: int = 1) -> "SearchSpace":
        """``n_blocks`` weight vectors of length ``n_models`` in [0, 1], started at 1/N."""
        return cls(dim=n_models * n_blocks, initial=(1.0 / n_models,) * (n_models * n_blocks))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == (self.dim,) and bool(np.all((x >= self.lo) & (x <= self.hi)))


@dataclass(frozen=True)
class TrialRecord:
    index: int
    x: tuple[float, ...]
    y: float
    elapsed: float = 0.0


@dataclass
class SearchResult:
    x_best: np.ndarray
    y_best: float
    history: list[TrialRecord] = field(default_factory=list)

    def best_so_far(self) -> list[float]:
        return list(itertools.accumulate((t.y for t in self.history), max))


class _Recorder:
    """Evaluates trials, times them, and tracks the first best."""

    def __init__(self, objective: Objective, clock_origin: float | None = None) -> None:
        self.objective = objective
        self.origin = time.perf_counter() if clock_origin is None else clock_origin
        self.history: list[TrialRecord] = []
        self.best: TrialRecord | None = None

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        y = float(self.objective(x))
        rec = TrialRecord(len(self.history), tuple(x.tolist()), y, time.perf_counter() - self.origin)
        self.history.append(rec)
        if self.best is None or y > self.best.y:
            self.best = rec
        return y

    def result(self) -> SearchResult:
        return SearchResult(np.array(self.best.x), self.best.y, self.history)


def _lattice_axis(space: SearchSpace, step: float) -> np.ndarray:
    n = int(math.floor(space.width / step + 1e-9))
    # rounding keeps lattice values like 0.3 instead of 0.30000000000000004
    return np.round(space.lo + step * np.arange(n + 1), 12)


def grid_search(
    objective: Objective,
    space: SearchSpace,
    step: float,
    clock_origin: float | None = None,
) -> SearchResult:
    """Evaluate every lattice point; the first maximizer in lexicographic order wins."""
    if not step > 0:
        raise ValueError("step must be positive")
    axis = _lattice_axis(space, step)
    n_points = len(axis) ** space.dim
    if n_points > GRID_POINT_LIMIT:
        raise ValueError(f"lattice has {n_points} points, limit is {GRID_POINT_LIMIT}")
    rec = _Recorder(objective, clock_origin)
    for point in itertools.product(axis, repeat=space.dim):
        rec(np.array(point))
    return rec.result()


def random_search(
    objective: Objective,
    space: SearchSpace,
    budget: int,
    seed: int | None = 0,
    clock_origin: float | None = None,
) -> SearchResult:
    """Initial point, then ``budget - 1`` uniform samples: exactly ``budget`` calls."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    rec = _Recorder(objective, clock_origin)
    rec(np.array(space.initial))
    for _ in range(budget - 1):
        rec(rng.uniform(space.lo, space.hi, size=space.dim))
    return rec.result()


@dataclass(frozen=True)
class TpeConfig:
    gamma: float = 0.15
    n_startup: int = 10
    n_ei_candidates: int = 24
    seed: int | None = 0

    def __post_init__(self) -> None:
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.n_startup < 1 or self.n_ei_candidates < 1:
            raise ValueError("n_startup and n_ei_candidates must be >= 1")


class ParzenEstimator:
    """Per-dimension mixture of Gaussians truncated to ``[lo, hi]``.

    One kernel per observation plus a wide prior kernel (centre of the bounds,
    bandwidth ``hi - lo``), all equally weighted. An observation's bandwidth is
    the larger gap to its sorted neighbours, the bounds acting as outer
    neighbours, clipped to ``[(hi - lo) / min(100, n + 1), hi - lo]``.
    """

    def __init__(self, points: np.ndarray, lo: float, hi: float) -> None:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError("need a non-empty (n, dim) array of observations")
        self.lo, self.hi = lo, hi
        n, dim = points.shape
        width = hi - lo
        floor = width / min(100, n + 1)
        sigma = np.empty_like(points)
        for d in range(dim):
            order = np.argsort(points[:, d], kind="stable")
            s = points[order, d]
            padded = np.concatenate(([lo], s, [hi]))
            gap = np.maximum(padded[1:-1] - padded[:-2], padded[2:] - padded[1:-1])
            sigma[order, d] = np.clip(gap, floor, width)
        self.mu = np.vstack([points, np.full((1, dim), 0.5 * (lo + hi))])
        self.sigma = np.vstack([sigma, np.full((1, dim), width)])
        a = (lo - self.mu) / self.sigma
        b = (hi - self.mu) / self.sigma
        self._log_mass = np.log(ndtr(b) - ndtr(a))

    @property
    def n_kernels(self) -> int:
        return self.mu.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        n_k, dim = self.mu.shape
        k = rng.integers(0, n_k, size=(n, dim))
        mu = np.take_along_axis(self.mu, k, axis=0)
        sigma = np.take_along_axis(self.sigma, k, axis=0)
        cdf_lo = ndtr((self.lo - mu) / sigma)
        cdf_hi = ndtr((self.hi - mu) / sigma)
        u = rng.uniform(size=(n, dim))
        x = mu + sigma * ndtri(cdf_lo + u * (cdf_hi - cdf_lo))
        return np.clip(x, self.lo, self.hi)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """Per-dimension log density, shape ``(n, dim)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = (x[:, None, :] - self.mu[None]) / self.sigma[None]
        log_k = -0.5 * z**2 - _LOG_SQRT_2PI - np.log(self.sigma)[None] - self._log_mass[None]
        return logsumexp(log_k, axis=1) - math.log(self.n_kernels)


class UniformDensity:
    def __init__(self, lo: float, hi: float) -> None:
        self.lo, self.hi = lo, hi

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(x.shape, -math.log(self.hi - self.lo))


def split_history(history: Sequence[TrialRecord], gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Good / bad observation arrays for a maximization problem.

    The good set holds the top ``ceil(gamma * n)`` trials plus anything tied
    with the worst of them.
    """
    x = np.array([t.x for t in history], dtype=float)
    y = np.array([t.y for t in history], dtype=float)
    n_good = max(1, math.ceil(gamma * len(y)))
    threshold = np.sort(y)[::-1][n_good - 1]
    good = y >= threshold
    return x[good], x[~good]


def tpe_suggest(
    history: Sequence[TrialRecord],
    space: SearchSpace,
    config: TpeConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    if len(history) < config.n_startup:
        return rng.uniform(space.lo, space.hi, size=space.dim)
    good, bad = split_history(history, config.gamma)
    l_density = ParzenEstimator(good, space.lo, space.hi)
    # everything tied into the good set: compare against the uniform prior
    g_density = ParzenEstimator(bad, space.lo, space.hi) if len(bad) else UniformDensity(space.lo, space.hi)
    candidates = l_density.sample(config.n_ei_candidates, rng)
    score = (l_density.log_pdf(candidates) - g_density.log_pdf(candidates)).sum(axis=1)
    return candidates[int(np.argmax(score))]


def tpe_optimize(
    objective: Objective,
    space: SearchSpace,
    budget: int,
    config: TpeConfig = TpeConfig(),
    clock_origin: float | None = None,
) -> SearchResult:
    """Initial point plus ``budget - 1`` TPE suggestions: exactly ``budget`` calls."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(config.seed)
    rec = _Recorder(objective, clock_origin)
    rec(np.array(space.initial))
    for _ in range(budget - 1):
        rec(tpe_suggest(rec.history, space, config, rng))
    return rec.result()


@dataclass(frozen=True)
class TPE:
    gamma: float = 0.15
    n_startup: int = 10
    n_ei_candidates: int = 24

    name = "tpe"

    def optimize(self, objective, space, budget, seed=0, clock_origin=None) -> SearchResult:
        config = TpeConfig(self.gamma, self.n_startup, self.n_ei_candidates, seed)
        return tpe_optimize(objective, space, budget, config, clock_origin)


@dataclass(frozen=True)
class RandomSearch:
    name = "random"

    def optimize(self, objective, space, budget, seed=0, clock_origin=None) -> SearchResult:
        return random_search(objective, space, budget, seed, clock_origin)


@dataclass(frozen=True)
class GridSearch:
    """Exhaustive lattice search; the trial budget is ignored."""

    step: float = 0.1

    name = "grid"

    def optimize(self, objective, space, budget=None, seed=0, clock_origin=None) -> SearchResult:
        return grid_search(objective, space, self.step, clock_origin)

"""Calibrated forecasting with the quadratic score.

One exponential-weights learner per grid point (its "source"); the played
distribution is the fixed point of the matrix whose rows are those learners'
distributions, so swapping any forecast for another never helps in hindsight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .game import Prior, as_prior
from .lp import simplex_grid

XI = 2.0  # strong convexity modulus of the quadratic score


def quadratic_score(forecast, outcome: int) -> float:
    p = as_prior(forecast).p
    if not 0 <= int(outcome) < p.size:
        raise IndexError(f"unknown state index {outcome}")
    return float(2.0 * p[int(outcome)] - p @ p)


def score_table(points: np.ndarray) -> np.ndarray:
    """S[j, y] for every grid point j and outcome y."""
    return 2.0 * points - (points ** 2).sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ForecastGrid:
    delta_F: float
    points: np.ndarray  # (n_points, n_states)

    @classmethod
    def lattice(cls, n_states: int, delta_F: float) -> "ForecastGrid":
        pts = simplex_grid(n_states, delta_F)
        pts.setflags(write=False)
        return cls(float(delta_F), pts)

    @classmethod
    def single(cls, prior) -> "ForecastGrid":
        pts = as_prior(prior).p[None, :].copy()
        pts.setflags(write=False)
        return cls(1.0, pts)

    def __len__(self):
        return len(self.points)

    @property
    def n_states(self) -> int:
        return self.points.shape[1]

    def prior(self, i: int) -> Prior:
        return Prior(tuple(self.points[i]))

    def cell(self, forecast) -> int:
        d = np.abs(self.points - as_prior(forecast).p).max(axis=1)
        return int(np.flatnonzero(d <= d.min() + 1e-12)[0])


def stationary_distribution(Q, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """p with p Q = p.

    Power iteration from the uniform vector. The iterate after k squarings
    equals u Q^(2^k), so max_iter is reached after about log2(max_iter)
    matrix products; an exact linear solve is the fallback.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if Q.ndim != 2 or Q.shape != (n, n) or Q.min() < -1e-12 or np.abs(Q.sum(axis=1) - 1).max() > 1e-9:
        raise ValueError("Q must be a square row-stochastic matrix")
    p = np.full(n, 1.0 / n)
    if np.abs(p @ Q - p).sum() <= tol:
        return p
    M = Q.copy()
    done = 1
    while done < max_iter:
        p = p @ M
        p /= p.sum()
        if np.abs(p @ Q - p).sum() <= tol:
            return p
        M = M @ M
        done *= 2
    A = np.vstack([Q.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    p = np.linalg.lstsq(A, b, rcond=None)[0]
    p = np.maximum(p, 0.0)
    return p / p.sum()


@dataclass(eq=False)
class ForecasterState:
    grid: ForecastGrid
    learning_rate: float
    rng_seed: int
    log_weights: np.ndarray = field(init=False)
    round: int = field(default=0, init=False)
    _played: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        n = len(self.grid)
        self.log_weights = np.zeros((n, n))
        self._rng = np.random.default_rng(self.rng_seed)
        self._scores = score_table(np.asarray(self.grid.points))

    @classmethod
    def fresh(cls, grid: ForecastGrid, horizon: int, seed: int) -> "ForecasterState":
        n = len(grid)
        eta = math.sqrt(8.0 * math.log(n) / horizon) if n > 1 else 1.0
        return cls(grid, eta, int(seed))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def distribution(self) -> np.ndarray:
        w = self.weights
        return stationary_distribution(w / w.sum(axis=1, keepdims=True))

    def predict(self):
        """Returns (played distribution, index of the sampled forecast)."""
        p = self.distribution()
        self._played = p
        k = int(np.searchsorted(np.cumsum(p), self._rng.random() * p.sum(), side="right"))
        return p, min(k, len(p) - 1)

    def update(self, outcome: int) -> "ForecasterState":
        if self._played is None:
            raise RuntimeError("update called without a preceding predict")
        loss = -self._scores[:, int(outcome)]
        scaled = self._played[:, None] * loss[None, :]
        self.log_weights -= self.learning_rate * scaled
        self.log_weights -= self.log_weights.max(axis=1, keepdims=True)
        self._played = None
        self.round += 1
        return self


def predict(state: ForecasterState, grid: ForecastGrid | None = None):
    return state.predict()


def update(state: ForecasterState, outcome: int) -> ForecasterState:
    return state.update(outcome)


class ContextualForecaster:
    """One independent forecaster per context key, created on first use.

    The first context gets `seed` itself, so with a single context this
    behaves exactly like a plain forecaster with that seed.
    """

    def __init__(self, grid: ForecastGrid, horizon: int, seed: int):
        self.grid = grid
        self.horizon = horizon
        self.seed = int(seed)
        self.states: dict[Hashable, ForecasterState] = {}

    def get(self, key: Hashable) -> ForecasterState:
        st = self.states.get(key)
        if st is None:
            k = len(self.states)
            seed = self.seed if k == 0 else int(np.random.SeedSequence([self.seed, k]).generate_state(1)[0])
            st = ForecasterState.fresh(self.grid, self.horizon, seed)
            self.states[key] = st
        return st

    __call__ = get


@dataclass
class CalibrationReport:
    kappa: float
    iota: float
    score_gap_l1_bound: float
    apriori_miscalibration_bound: float
    per_cell: list  # (grid index, count, empirical distribution, l1 distance)

    def csv_rows(self):
        yield ["grid_index", "count", "l1_distance", "empirical_probs"]
        for idx, n, emp, d in self.per_cell:
            yield [idx, n, f"{d:.12g}", " ".join(f"{x:.12g}" for x in emp)]


def apriori_miscalibration_bound(n_states: int, n_points: int, delta_F: float, T: int) -> float:
    """A-priori bound on expected miscalibration of the grid forecaster."""
    return math.sqrt(n_states * n_points * math.sqrt(2.0 * math.log(max(n_points, 1)) / T) + 2.0 * n_states * delta_F)


def calibration_report(rows: Sequence[tuple], grid: ForecastGrid) -> CalibrationReport:
    """rows are (forecast grid index, outcome index) pairs."""
    if not rows:
        raise ValueError("calibration_report needs at least one row")
    idx = np.array([r[0] for r in rows], dtype=int)
    ys = np.array([r[1] for r in rows], dtype=int)
    T = len(rows)
    pts = np.asarray(grid.points)
    kappa = iota = 0.0
    cells = []
    for j in np.unique(idx):
        sel = ys[idx == j]
        emp = np.bincount(sel, minlength=grid.n_states) / sel.size
        f = pts[j]
        d = float(np.abs(f - emp).sum())
        iota += sel.size * d
        kappa += sel.size * float(emp @ (score_table(emp[None])[0] - score_table(f[None])[0]))
        cells.append((int(j), int(sel.size), emp, d))
    kappa /= T
    iota /= T
    l1_gap = math.sqrt(2.0 * grid.n_states * kappa / XI) if kappa > 0 else 0.0
    return CalibrationReport(kappa, iota, l1_gap, apriori_miscalibration_bound(grid.n_states, len(grid), grid.delta_F, T), cells)


def internal_regret(rows: Sequence[tuple], grid: ForecastGrid) -> float:
    """Average gain from the best swap of realised forecasts, scored by S."""
    S = score_table(np.asarray(grid.points))
    total = 0.0
    for j in {r[0] for r in rows}:
        ys = [y for i, y in rows if i == j]
        gains = S[:, ys].sum(axis=1)
        total += gains.max() - gains[j]
    return total / len(rows)

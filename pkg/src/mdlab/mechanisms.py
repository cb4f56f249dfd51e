"""Principal strategies. None of them ever sees the agent's responses:
`MechanismInput` carries only states and past policies."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .forecast import ContextualForecaster, ForecastGrid, ForecasterState
from .game import Game
from .info import info_robust_policy
from .game import robust_policy

KINDS = ("Constant", "M1", "M2", "M3")


@dataclass(frozen=True, eq=False)
class MechanismInput:
    state_history: tuple
    policy_history: tuple

    def __post_init__(self):
        if len(self.state_history) != len(self.policy_history):
            raise ValueError("state and policy histories must have equal length")


@dataclass
class MechanismSpec:
    kind: str
    epsilon_bar: float = 0.1
    fixed_policy: int | None = None
    grid: ForecastGrid | None = None
    alternatives: Sequence[int] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mechanism kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "Constant" and not self.epsilon_bar > 0:
            raise ValueError("epsilon_bar must be positive")
        if self.kind == "Constant" and self.fixed_policy is None:
            raise ValueError("Constant mechanism needs fixed_policy")
        if self.kind != "Constant" and self.grid is None:
            raise ValueError(f"{self.kind} needs a forecast grid")


# the oracle maps the current round to a hashable context (one response cell per candidate policy)
InformationOracle = Callable[[], tuple]


class Mechanism:
    uses_oracle = False

    def __init__(self, game: Game, spec: MechanismSpec, horizon: int):
        self.game = game
        self.spec = spec
        self.horizon = horizon
        self._seen = 0

    def choose_policy(self, inp: MechanismInput, oracle: InformationOracle | None = None):
        """Returns (policy index, published forecast grid index or None)."""
        if self.uses_oracle and oracle is None:
            raise ValueError(f"{self.spec.kind} requires an information oracle")
        if not self.uses_oracle and oracle is not None:
            raise ValueError(f"{self.spec.kind} must not receive an information oracle")
        while self._seen < len(inp.state_history):
            self._absorb(int(inp.state_history[self._seen]))
            self._seen += 1
        return self._choose(inp, oracle)

    def _absorb(self, y: int) -> None:
        pass

    def _choose(self, inp, oracle):
        raise NotImplementedError


class Constant(Mechanism):
    """Always the same policy. If a grid is given, an idle forecaster still
    publishes forecasts (so forecast-driven agents can play)."""

    def __init__(self, game, spec, horizon):
        super().__init__(game, spec, horizon)
        self.policy = game.policy_index(spec.fixed_policy)
        self.forecaster = ForecasterState.fresh(spec.grid, horizon, spec.seed) if spec.grid is not None else None

    def _absorb(self, y):
        if self.forecaster is not None:
            self.forecaster.update(y)

    def _choose(self, inp, oracle):
        if self.forecaster is None:
            return self.policy, None
        return self.policy, self.forecaster.predict()[1]


class _Forecasting(Mechanism):
    def __init__(self, game, spec, horizon):
        super().__init__(game, spec, horizon)
        self._cache: dict[int, int] = {}
        self._last: ForecasterState | None = None

    def robust(self, idx: int) -> int:
        p = self._cache.get(idx)
        if p is None:
            p = self._cache[idx] = self._solve(self.spec.grid.prior(idx))
        return p

    def _solve(self, prior) -> int:
        return robust_policy(self.game, prior, self.spec.epsilon_bar)[0]

    def _absorb(self, y):
        self._last.update(y)

    def _forecaster(self, oracle) -> ForecasterState:
        raise NotImplementedError

    def _choose(self, inp, oracle):
        st = self._forecaster(oracle)
        _, idx = st.predict()
        self._last = st
        return self.robust(idx), idx


class M2(_Forecasting):
    """Single forecaster; plays the robust policy for the forecast."""

    def __init__(self, game, spec, horizon):
        super().__init__(game, spec, horizon)
        self.forecaster = ForecasterState.fresh(spec.grid, horizon, spec.seed)

    def _forecaster(self, oracle):
        return self.forecaster


class M3(M2):
    """As M2, but robust to unknown private agent information."""

    def _solve(self, prior) -> int:
        return info_robust_policy(self.game, prior, self.spec.epsilon_bar)[0]


class M1(_Forecasting):
    """One forecaster per information-oracle context."""

    uses_oracle = True

    def __init__(self, game, spec, horizon):
        super().__init__(game, spec, horizon)
        self.forecasters = ContextualForecaster(spec.grid, horizon, spec.seed)
        self.last_context = None

    def _forecaster(self, oracle):
        self.last_context = oracle()
        return self.forecasters.get(self.last_context)


def make_mechanism(game: Game, spec: MechanismSpec, horizon: int) -> Mechanism:
    return {"Constant": Constant, "M1": M1, "M2": M2, "M3": M3}[spec.kind](game, spec, horizon)

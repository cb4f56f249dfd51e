"""Agent learners.

A learner maps what it has seen so far plus the current policy (and any
published forecast) to a distribution over responses. Learners here are
deterministic given their inputs; the engine draws the realised response
with common random numbers, so a clone fed a different policy history is a
proper counterfactual of the same agent.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .game import Game, Prior, argmax_lowest, as_prior

KINDS = ("CFL", "ExpWeightsPerContext", "FixedPriorBayes", "SelectiveSuperefficiency", "SelectiveSuperinefficiency")


@dataclass
class LearnerInput:
    state_history: Sequence[int]
    response_history: Sequence[int]
    policy_history: Sequence[int]
    current_policy: int
    published_forecast: Prior | np.ndarray | None = None

    def __post_init__(self):
        n = len(self.state_history)
        if len(self.response_history) != n or len(self.policy_history) != n:
            raise ValueError("state, response and policy histories must have equal length")

    @property
    def t(self) -> int:
        """1-based index of the round being played."""
        return len(self.state_history) + 1


@dataclass
class LearnerSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.kind.startswith("Selective") and "script" not in self.params:
            raise ValueError(f"{self.kind} needs a scripted state sequence")


def point_mass(n: int, i: int) -> np.ndarray:
    mu = np.zeros(n)
    mu[i] = 1.0
    return mu


class Learner:
    def __init__(self, game: Game, seed: int = 0):
        self.game = game
        self.seed = int(seed)
        self.round = 0
        self._pending: tuple | None = None

    def respond(self, inp: LearnerInput) -> np.ndarray:
        mu = self._respond(inp)
        self._pending = (inp.current_policy,)
        return mu

    def observe(self, outcome: int, response: int | None = None) -> "Learner":
        if self._pending is None:
            raise RuntimeError("observe called before respond")
        (policy,) = self._pending
        self._observe(policy, int(outcome), response)
        self._pending = None
        self.round += 1
        return self

    def clone(self) -> "Learner":
        return copy.deepcopy(self, memo={id(self.game): self.game})

    def _respond(self, inp: LearnerInput) -> np.ndarray:
        raise NotImplementedError

    def _observe(self, policy: int, outcome: int, response) -> None:
        pass


def best_response(game: Game, policy: int, prior) -> int:
    return argmax_lowest(game.U[:, policy, :] @ as_prior(prior).p, tol=1e-12)


class CFL(Learner):
    """Best-responds to the principal's published forecast."""

    def _respond(self, inp):
        if inp.published_forecast is None:
            raise ValueError("CFL needs a published forecast")
        r = best_response(self.game, inp.current_policy, inp.published_forecast)
        return point_mass(self.game.n_responses, r)


class FixedPriorBayes(Learner):
    def __init__(self, game, prior, seed=0):
        super().__init__(game, seed)
        self.prior = as_prior(prior)

    def _respond(self, inp):
        return point_mass(self.game.n_responses, best_response(self.game, inp.current_policy, self.prior))


class ExpWeightsPerContext(Learner):
    """Full-information exponential weights, one weight vector per policy."""

    def __init__(self, game, eta: float | None = None, horizon: int | None = None, seed=0):
        super().__init__(game, seed)
        if eta is None:
            eta = math.sqrt(8.0 * math.log(max(game.n_responses, 2)) / max(horizon or 1000, 1))
        self.eta = float(eta)
        self.log_w = np.zeros((game.n_policies, game.n_responses))

    def weights(self, policy: int) -> np.ndarray:
        return np.exp(self.log_w[policy])

    def _respond(self, inp):
        w = np.exp(self.log_w[inp.current_policy] - self.log_w[inp.current_policy].max())
        return w / w.sum()

    def _observe(self, policy, outcome, response):
        self.log_w[policy] += self.eta * self.game.U[:, policy, outcome]


class _Scripted(Learner):
    """Shared machinery for the learners that know the state sequence in advance.

    Trigger sets: `trigger_policies` (policy indices) and `trigger_states`
    (state indices). The case is fixed in round 1 by whether the first
    scripted state and the first policy fall in the trigger sets. When both
    or neither do, the learner plays the best fixed response in hindsight for
    the current policy; otherwise it plays round by round.
    """

    def __init__(self, game, script, trigger_policies, trigger_states, fallback: bool = False, seed=0):
        super().__init__(game, seed)
        self.script = np.asarray(script, dtype=int)
        if self.script.size == 0:
            raise ValueError("empty script")
        self.trigger_policies = frozenset(int(p) for p in trigger_policies)
        self.trigger_states = frozenset(int(y) for y in trigger_states)
        self.fallback = fallback
        self.case: int | None = None
        self._hindsight: dict[int, int] = {}
        self._fallback_learner = ExpWeightsPerContext(game, horizon=len(self.script), seed=seed) if fallback else None
        self._off_script = False

    def hindsight_response(self, policy: int) -> int:
        r = self._hindsight.get(policy)
        if r is None:
            totals = self.game.U[:, policy, :][:, self.script].sum(axis=1)
            r = self._hindsight[policy] = argmax_lowest(totals, tol=1e-12)
        return r

    def scripted_state(self, t: int) -> int:
        return int(self.script[min(t, len(self.script)) - 1])

    def _case(self, inp) -> int:
        if self.case is None:
            first_policy = inp.policy_history[0] if len(inp.policy_history) else inp.current_policy
            y_in = int(self.script[0]) in self.trigger_states
            p_in = int(first_policy) in self.trigger_policies
            self.case = {(True, True): 1, (True, False): 2, (False, True): 3, (False, False): 4}[(y_in, p_in)]
        return self.case

    def _respond(self, inp):
        if self._off_script:
            return self._fallback_learner._respond(inp)
        if self._case(inp) in (1, 4):
            return point_mass(self.game.n_responses, self.hindsight_response(inp.current_policy))
        return self._superefficient(inp)

    def _superefficient(self, inp):
        y = self.scripted_state(inp.t)
        return point_mass(self.game.n_responses, argmax_lowest(self.game.U[:, inp.current_policy, y], tol=1e-12))

    def _observe(self, policy, outcome, response):
        if self._fallback_learner is not None:
            self._fallback_learner._observe(policy, outcome, response)
            if not self._off_script and (self.round >= len(self.script) or outcome != self.script[self.round]):
                self._off_script = True


class SelectiveSuperefficiency(_Scripted):
    """Superefficient only when exactly one of the two triggers fires."""


class SelectiveSuperinefficiency(_Scripted):
    """Like SelectiveSuperefficiency, but in the superefficient cases it mixes
    the per-round optimum with the per-round pessimum, with a weight q chosen
    so that external regret on the script is zero."""

    def __init__(self, game, script, trigger_policies, trigger_states, q: dict | float | None = None, seed=0):
        super().__init__(game, script, trigger_policies, trigger_states, fallback=False, seed=seed)
        self._q = {} if q is None else (dict(q) if isinstance(q, dict) else None)
        self._q_const = None if q is None or isinstance(q, dict) else float(q)

    def q(self, policy: int) -> float:
        if self._q_const is not None:
            return self._q_const
        if policy not in self._q:
            self._q[policy] = calibrate_mixing_weight(self.game, self.script, policy)
        return self._q[policy]

    def _superefficient(self, inp):
        p = inp.current_policy
        u = self.game.U[:, p, self.scripted_state(inp.t)]
        best = argmax_lowest(u, tol=1e-12)
        worst = argmax_lowest(-u, tol=1e-12)
        q = self.q(p)
        mu = np.zeros(self.game.n_responses)
        mu[best] += q
        mu[worst] += 1.0 - q
        return mu


def _mixing_regret_fn(game: Game, script, policy: int):
    script = np.asarray(script, dtype=int)
    U = game.U[:, policy, :][:, script]  # (R, T)
    hind = U.sum(axis=1).max()
    best = U.max(axis=0)
    worst = U.min(axis=0)
    r_star = argmax_lowest(U.sum(axis=1), tol=1e-12)
    T = script.size

    def regret(q: float) -> float:
        return float((hind - (q * best + (1 - q) * worst).sum()) / T)

    return regret, worst, U[r_star]


def calibrate_mixing_weight(game: Game, script, policy: int, tol: float = 1e-6) -> float:
    """Mixing weight q in [0,1] at which the expected external regret on the script is zero."""
    regret, worst, hind_row = _mixing_regret_fn(game, script, int(policy))
    if not np.all(worst < hind_row):
        raise ValueError("the per-round pessimum must strictly underperform the best fixed response in every round")
    lo, hi = 0.0, 1.0
    f_lo, f_hi = regret(lo), regret(hi)
    if f_lo * f_hi > 0:
        raise ValueError("no q in [0,1] gives zero external regret")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = regret(mid)
        if abs(f) <= tol * 1e-3:
            return mid
        if (f > 0) == (f_lo > 0):
            lo, f_lo = mid, f
        else:
            hi = mid
    return 0.5 * (lo + hi)


def make_learner(game: Game, spec: LearnerSpec, horizon: int | None = None) -> Learner:
    p = spec.params
    if spec.kind == "CFL":
        return CFL(game, spec.seed)
    if spec.kind == "FixedPriorBayes":
        return FixedPriorBayes(game, p["prior"], spec.seed)
    if spec.kind == "ExpWeightsPerContext":
        return ExpWeightsPerContext(game, p.get("eta"), horizon, spec.seed)
    idx = {
        "script": p["script"],
        "trigger_policies": [game.policy_index(x) for x in p.get("trigger_policies", [])],
        "trigger_states": [game.state_index(x) for x in p.get("trigger_states", [])],
    }
    if spec.kind == "SelectiveSuperefficiency":
        return SelectiveSuperefficiency(game, fallback=bool(p.get("fallback", False)), seed=spec.seed, **idx)
    return SelectiveSuperinefficiency(game, q=p.get("q"), seed=spec.seed, **idx)

"""Stage game with a private agent signal.

Known signal kernels are handled with one response distribution per signal.
Unknown kernels are optimised in recommendation form: a joint psi(r, y) with
state marginal pi, where each recommendation's obedience slack is bounded by
z_r and the slacks share a total budget epsilon.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import Game, GameError, RobustValue, argmax_lowest, as_prior
from .lp import LinearProgram, solve


@dataclass(frozen=True, eq=False)
class InfoStructure:
    """kernel[i, y] = probability of signal i in state y."""

    signals: tuple
    kernel: np.ndarray

    def __post_init__(self):
        k = np.array(self.kernel, dtype=float)
        if k.ndim != 2 or k.shape[0] != len(self.signals):
            raise GameError("kernel must be (signals, states)")
        if k.min() < -1e-12 or np.abs(k.sum(axis=0) - 1.0).max() > 1e-12:
            raise GameError("each kernel column must be a distribution over signals")
        k = np.clip(k, 0.0, 1.0)
        k.setflags(write=False)
        object.__setattr__(self, "signals", tuple(self.signals))
        object.__setattr__(self, "kernel", k)

    @classmethod
    def uninformative(cls, n_states: int) -> "InfoStructure":
        return cls(("none",), np.ones((1, n_states)))

    @classmethod
    def revealing(cls, states) -> "InfoStructure":
        return cls(tuple(states), np.eye(len(states)))


@dataclass(frozen=True, eq=False)
class DirectInfoStructure:
    """joint[r, y] = mass of recommendation r in state y."""

    joint: np.ndarray
    prior: tuple

    def __post_init__(self):
        j = np.array(self.joint, dtype=float)
        pi = as_prior(self.prior).p
        if j.ndim != 2 or j.shape[1] != pi.size:
            raise GameError("joint must be (responses, states)")
        if j.min() < -1e-9 or np.abs(j.sum(axis=0) - pi).max() > 1e-9:
            raise GameError("joint state marginal does not match the prior")
        j = np.maximum(j, 0.0)
        j.setflags(write=False)
        object.__setattr__(self, "joint", j)
        object.__setattr__(self, "prior", tuple(pi))

    def as_info_structure(self) -> InfoStructure:
        """Signal kernel that recommends r with probability psi(r, y) / pi(y)."""
        pi = np.array(self.prior)
        k = np.divide(self.joint, pi, out=np.zeros_like(self.joint), where=pi > 0)
        k[:, pi == 0] = 1.0 / k.shape[0]
        return InfoStructure(tuple(range(k.shape[0])), k)


def _signal_program(game: Game, policy, prior, gamma: InfoStructure, epsilon: float, sense: str):
    if epsilon < 0:
        raise GameError("epsilon must be non-negative")
    p = game.policy_index(policy)
    pi = as_prior(prior).p
    if gamma.kernel.shape[1] != pi.size:
        raise GameError("info structure and prior disagree on the number of states")
    w = gamma.kernel * pi  # w[i, y] = P(signal i, state y)
    u = w @ game.U[:, p, :].T  # u[i, r]
    v = w @ game.V[:, p, :].T
    n_sig, n_r = u.shape
    cons = []
    for i in range(n_sig):
        row = np.zeros(n_sig * n_r)
        row[i * n_r:(i + 1) * n_r] = 1.0
        cons.append((row, "=", 1.0))
    cons.append((u.ravel(), ">=", float(u.max(axis=1).sum()) - epsilon))
    sol = solve(LinearProgram(v.ravel(), cons, sense=sense))
    if not sol.optimal:
        raise RuntimeError(f"signal program unexpectedly {sol.status}")
    mu = sol.witness.reshape(n_sig, n_r)
    return RobustValue(float((v * mu).sum()), mu)


def alpha_info(game: Game, policy, prior, gamma: InfoStructure, epsilon: float) -> RobustValue:
    """Worst principal value when the agent also sees a signal from gamma. Witness is (signals, responses)."""
    return _signal_program(game, policy, prior, gamma, epsilon, "min")


def beta_info(game: Game, policy, prior, gamma: InfoStructure, epsilon: float) -> RobustValue:
    return _signal_program(game, policy, prior, gamma, epsilon, "max")


def _direct_program(game: Game, policy, prior, epsilon: float, sense: str):
    if epsilon < 0:
        raise GameError("epsilon must be non-negative")
    p = game.policy_index(policy)
    prior = as_prior(prior)
    pi = prior.p
    if pi.size != game.n_states:
        raise GameError(f"prior has {pi.size} entries, game has {game.n_states} states")
    U, V = game.U[:, p, :], game.V[:, p, :]
    n_r, n_y = U.shape
    n_psi = n_r * n_y
    n = n_psi + n_r  # psi(r, y) row-major, then z_r

    def psi(r, y):
        return r * n_y + y

    cons = []
    for y in range(n_y):
        row = np.zeros(n)
        row[[psi(r, y) for r in range(n_r)]] = 1.0
        cons.append((row, "=", pi[y]))
    for r in range(n_r):
        for r2 in range(n_r):
            if r2 == r:
                continue
            row = np.zeros(n)
            row[r * n_y:(r + 1) * n_y] = U[r2] - U[r]
            row[n_psi + r] = -1.0
            cons.append((row, "<=", 0.0))
    budget = np.zeros(n)
    budget[n_psi:] = 1.0
    cons.append((budget, "<=", epsilon))
    obj = np.concatenate([V.ravel(), np.zeros(n_r)])
    sol = solve(LinearProgram(obj, cons, sense=sense))
    if not sol.optimal:
        raise RuntimeError(f"direct program unexpectedly {sol.status}")
    joint = sol.witness[:n_psi].reshape(n_r, n_y)
    joint = joint * np.divide(pi, joint.sum(axis=0), out=np.zeros(n_y), where=joint.sum(axis=0) > 0)
    return float((V * joint).sum()), DirectInfoStructure(joint, prior.probabilities)


def worst_case_alpha(game: Game, policy, prior, epsilon: float):
    """inf over all signal kernels of alpha_info, with the minimising joint."""
    return _direct_program(game, policy, prior, epsilon, "min")


def best_case_beta(game: Game, policy, prior, epsilon: float):
    return _direct_program(game, policy, prior, epsilon, "max")


def info_robust_policy(game: Game, prior, epsilon: float):
    vals = [worst_case_alpha(game, p, prior, epsilon)[0] for p in range(game.n_policies)]
    best = argmax_lowest(vals)
    return best, vals[best]


def cost_of_info_robustness(game: Game, prior, epsilon: float = 0.0) -> float:
    top = max(best_case_beta(game, p, prior, epsilon)[0] for p in range(game.n_policies))
    _, floor = info_robust_policy(game, prior, epsilon)
    return float(top - floor)

"""Built-in games: judge-prosecutor persuasion (and its drug-approval relabeling) and the work/shirk contract."""
from __future__ import annotations

import numpy as np

from .game import Game, Prior

# a response is a map message -> action, listed as (action on message 0, action on message 1)
_STRATEGIES = ((0, 0), (0, 1), (1, 0), (1, 1))
_JUDGE_LABELS = {
    "states": ("innocent", "guilty"),
    "actions": ("acquit", "convict"),
    "strategy_names": ("always_acquit", "follow", "contrarian", "always_convict"),
}
_DRUG_LABELS = {
    "states": ("low_quality", "high_quality"),
    "actions": ("reject", "approve"),
    "strategy_names": ("always_reject", "follow", "contrarian", "always_approve"),
}


def policy_grid(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"policy step must divide 1, got {step}")
    return np.arange(n + 1) / n


def judge_prosecutor(policy_step: float = 0.05, labels: dict | None = None) -> Game:
    """Binary persuasion game.

    A policy sends the high message always in state 1 and with probability q
    in state 0. The receiver earns 1 for matching action to state; the sender
    earns 1 whenever the high action is taken. q = 0 is full transparency.
    """
    labels = labels or _JUDGE_LABELS
    qs = policy_grid(policy_step)
    # kernel[p, y, m] = probability of message m in state y
    kernel = np.zeros((len(qs), 2, 2))
    kernel[:, 0, 1] = qs
    kernel[:, 0, 0] = 1.0 - qs
    kernel[:, 1, 1] = 1.0
    act = np.array(_STRATEGIES)  # [r, m]
    u_act = np.array([[1.0, 0.0], [0.0, 1.0]])  # [action, state]
    U = np.einsum("pym,rmy->rpy", kernel, u_act[act])
    V = np.einsum("pym,rm->rpy", kernel, act.astype(float))
    flat = kernel.reshape(len(qs), -1)
    dP = np.abs(flat[:, None, :] - flat[None, :, :]).sum(axis=2)
    return Game(
        states=labels["states"],
        responses=labels["strategy_names"],
        policies=tuple(f"q={q:.4g}" for q in qs),
        U=U,
        V=V,
        response_metric="discrete",
        policy_metric=dP,
        lipschitz=(1.0, 1.0, 1.0, 1.0),
        cover_radii=(0.0, float(policy_step)),
    )


def drug_approval(policy_step: float = 0.05) -> Game:
    return judge_prosecutor(policy_step, _DRUG_LABELS)


def judge_prior(guilty: float) -> Prior:
    return Prior((1.0 - guilty, guilty))


def judge_policy(game: Game, q: float) -> int:
    """Index of the policy whose innocent-state convict probability is nearest q."""
    qs = np.array([float(name.split("=")[1]) for name in game.policies])
    return int(np.argmin(np.abs(qs - q)))


CONTRACT_STATES = ("trivial", "moderate", "impossible")
CONTRACT_ACTIONS = ("work", "shirk")


def contract_task(
    costs: dict | None = None,
    benefits: dict | None = None,
    p_bar: float = 4.0,
    payment_step: float = 0.1,
) -> Game:
    """Moral-hazard contract game, utilities affinely rescaled into [0, 1].

    The task succeeds in the trivial state, fails in the impossible state, and
    succeeds in the moderate state only if the agent works. A policy pays s on
    success and nothing on failure, with s on a grid over [0, p_bar].
    Use `contract_scales` to convert raw utility gaps into table units.
    """
    costs = {"work": 1.0, "shirk": 0.0, **(costs or {})}
    benefits = {"success": 2.0, "failure": 0.0, **(benefits or {})}
    n = int(round(p_bar / payment_step))
    if n < 1 or abs(n * payment_step - p_bar) > 1e-9:
        raise ValueError("payment_step must divide p_bar")
    pay = np.arange(n + 1) * payment_step
    success = np.array([[1, 1, 0], [1, 0, 0]], dtype=float)  # [r, y]
    c = np.array([costs["work"], costs["shirk"]])
    u_raw = pay[None, :, None] * success[:, None, :] - c[:, None, None]
    v_raw = (
        benefits["success"] * success[:, None, :]
        + benefits["failure"] * (1 - success[:, None, :])
        - pay[None, :, None] * success[:, None, :]
    )
    u_lo, u_hi, v_lo, v_hi = _contract_ranges(costs, benefits, p_bar)
    U = (u_raw - u_lo) / (u_hi - u_lo)
    V = (v_raw - v_lo) / (v_hi - v_lo)
    dP = np.abs(pay[:, None] - pay[None, :]) / p_bar
    return Game(
        states=CONTRACT_STATES,
        responses=CONTRACT_ACTIONS,
        policies=tuple(f"pay={s:.4g}" for s in pay),
        U=U,
        V=V,
        response_metric="discrete",
        policy_metric=dP,
        lipschitz=(1.0, p_bar / (u_hi - u_lo), 1.0, p_bar / (v_hi - v_lo)),
        cover_radii=(0.0, payment_step / (2 * p_bar)),
    )


def _contract_ranges(costs, benefits, p_bar):
    c = [costs["work"], costs["shirk"]]
    b = [benefits["success"], benefits["failure"]]
    return -max(c), p_bar - min(c), min(b) - p_bar, max(b)


def contract_scales(costs: dict | None = None, benefits: dict | None = None, p_bar: float = 4.0):
    """Raw-currency width of the U and V ranges used for normalisation."""
    costs = {"work": 1.0, "shirk": 0.0, **(costs or {})}
    benefits = {"success": 2.0, "failure": 0.0, **(benefits or {})}
    u_lo, u_hi, v_lo, v_hi = _contract_ranges(costs, benefits, p_bar)
    return u_hi - u_lo, v_hi - v_lo


BUILDERS = {
    "judge_prosecutor": judge_prosecutor,
    "drug_approval": drug_approval,
    "contract_task": contract_task,
}

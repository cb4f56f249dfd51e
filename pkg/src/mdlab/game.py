"""Finite stage games, priors, and the epsilon-robust worst/best case programs."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .lp import LinearProgram, simplex_grid, solve

TIE_TOL = 1e-9
BR_TOL = 1e-12


class GameError(ValueError):
    pass


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _metric(m, size: int, what: str) -> np.ndarray:
    if m is None or (isinstance(m, str) and m == "discrete"):
        return _readonly(1.0 - np.eye(size))
    m = np.asarray(m, dtype=float)
    if m.shape != (size, size):
        raise GameError(f"{what} must be {size}x{size}")
    if (m < 0).any() or not np.allclose(m, m.T, atol=1e-12, rtol=0) or np.abs(np.diag(m)).max() > 0:
        raise GameError(f"{what} must be symmetric, non-negative and zero on the diagonal")
    return _readonly(m)


@dataclass(frozen=True, eq=False)
class Game:
    """U and V are indexed [response, policy, state]."""

    states: tuple
    responses: tuple
    policies: tuple
    U: np.ndarray
    V: np.ndarray
    response_metric: np.ndarray | str | None = None
    policy_metric: np.ndarray | str | None = None
    lipschitz: tuple = (1.0, 1.0, 1.0, 1.0)
    cover_radii: tuple = (0.0, 0.0)

    def __post_init__(self):
        put = object.__setattr__
        put(self, "states", tuple(str(s) for s in self.states))
        put(self, "responses", tuple(str(s) for s in self.responses))
        put(self, "policies", tuple(str(s) for s in self.policies))
        shape = (len(self.responses), len(self.policies), len(self.states))
        if min(shape) == 0:
            raise GameError("states, responses and policies must be non-empty")
        for name in ("U", "V"):
            try:
                t = np.array(getattr(self, name), dtype=float)
            except ValueError:
                raise GameError(f"{name} table is ragged") from None
            if t.shape != shape:
                raise GameError(f"{name} has shape {t.shape}, expected {shape} (responses, policies, states)")
            if not np.isfinite(t).all() or t.min() < -1e-12 or t.max() > 1 + 1e-12:
                raise GameError(f"{name} entries must lie in [0, 1]")
            put(self, name, _readonly(np.clip(t, 0.0, 1.0)))
        put(self, "response_metric", _metric(self.response_metric, shape[0], "response_metric"))
        put(self, "policy_metric", _metric(self.policy_metric, shape[1], "policy_metric"))
        lip = tuple(float(k) for k in self.lipschitz)
        radii = tuple(float(d) for d in self.cover_radii)
        if len(lip) != 4 or min(lip) < 0 or len(radii) != 2 or min(radii) < 0:
            raise GameError("lipschitz needs 4 and cover_radii 2 non-negative numbers")
        put(self, "lipschitz", lip)
        put(self, "cover_radii", radii)
        self._check_lipschitz()

    def _check_lipschitz(self):
        dR, dP = self.response_metric, self.policy_metric
        kur, kup, kvr, kvp = self.lipschitz
        for name, kr, kp in (("U", kur, kup), ("V", kvr, kvp)):
            t = getattr(self, name)
            diff = np.abs(t[:, :, None, None, :] - t[None, None, :, :, :])
            # diff[r, p, r2, p2, y]
            bound = kr * dR[:, None, :, None] + kp * dP[None, :, None, :]
            excess = diff - bound[..., None]
            if excess.max() > 1e-12:
                r, p, r2, p2, y = np.unravel_index(int(np.argmax(excess)), excess.shape)
                raise GameError(
                    f"declared Lipschitz constants for {name} are violated at "
                    f"({self.responses[r]},{self.policies[p]}) vs ({self.responses[r2]},{self.policies[p2]}) "
                    f"in state {self.states[y]}"
                )

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_responses(self) -> int:
        return len(self.responses)

    @property
    def n_policies(self) -> int:
        return len(self.policies)

    def policy_index(self, policy) -> int:
        return _lookup(policy, self.policies, "policy")

    def response_index(self, response) -> int:
        return _lookup(response, self.responses, "response")

    def state_index(self, state) -> int:
        return _lookup(state, self.states, "state")

    def to_dict(self) -> dict:
        kur, kup, kvr, kvp = self.lipschitz
        return {
            "states": list(self.states),
            "responses": list(self.responses),
            "policies": list(self.policies),
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "response_metric": self.response_metric.tolist(),
            "policy_metric": self.policy_metric.tolist(),
            "lipschitz": {"KU_R": kur, "KU_P": kup, "KV_R": kvr, "KV_P": kvp},
            "cover_radii": {"delta_R": self.cover_radii[0], "delta_P": self.cover_radii[1]},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Game":
        try:
            lip = d.get("lipschitz", {})
            radii = d.get("cover_radii", {})
            return cls(
                states=d["states"],
                responses=d["responses"],
                policies=d["policies"],
                U=d["U"],
                V=d["V"],
                response_metric=d.get("response_metric"),
                policy_metric=d.get("policy_metric"),
                lipschitz=(lip.get("KU_R", 1.0), lip.get("KU_P", 1.0), lip.get("KV_R", 1.0), lip.get("KV_P", 1.0)),
                cover_radii=(radii.get("delta_R", 0.0), radii.get("delta_P", 0.0)),
            )
        except KeyError as exc:
            raise GameError(f"game document is missing field {exc.args[0]!r}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Game":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _lookup(x, names: Sequence[str], what: str) -> int:
    if isinstance(x, (int, np.integer)):
        if not 0 <= int(x) < len(names):
            raise GameError(f"{what} index {x} out of range")
        return int(x)
    try:
        return names.index(str(x))
    except ValueError:
        raise GameError(f"unknown {what} {x!r}") from None


@dataclass(frozen=True)
class Prior:
    probabilities: tuple

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).ravel()
        if p.size == 0 or not np.isfinite(p).all():
            raise GameError("prior must be a non-empty finite vector")
        if p.min() < -1e-12 or p.max() > 1 + 1e-12 or abs(p.sum() - 1.0) > 1e-12:
            raise GameError(f"prior entries must lie in [0,1] and sum to 1, got {p.tolist()}")
        object.__setattr__(self, "probabilities", tuple(float(x) for x in np.clip(p, 0.0, 1.0)))

    @property
    def p(self) -> np.ndarray:
        return np.array(self.probabilities)

    def __len__(self):
        return len(self.probabilities)

    def l1(self, other) -> float:
        return float(np.abs(self.p - as_prior(other).p).sum())

    @classmethod
    def uniform(cls, n: int) -> "Prior":
        return cls(tuple([1.0 / n] * n))

    @classmethod
    def point_mass(cls, n: int, i: int) -> "Prior":
        p = [0.0] * n
        p[i] = 1.0
        return cls(tuple(p))

    @classmethod
    def normalized(cls, w) -> "Prior":
        w = np.asarray(w, dtype=float)
        return cls(tuple(w / w.sum()))


def as_prior(x) -> Prior:
    if isinstance(x, Prior):
        return x
    p = np.asarray(x, dtype=float)
    s = p.sum()
    if abs(s - 1.0) <= 1e-9 and s > 0:
        p = p / s
    return Prior(tuple(p))


@dataclass(frozen=True)
class PriorGrid:
    grid_step: float
    points: tuple

    @classmethod
    def lattice(cls, n_states: int, step: float) -> "PriorGrid":
        """Simplex lattice with coordinate step `step`; l1 cover radius n_states*step."""
        pts = tuple(Prior(tuple(row)) for row in simplex_grid(n_states, step))
        return cls(n_states * step, pts)

    def as_array(self) -> np.ndarray:
        return np.array([q.probabilities for q in self.points])


def discretize(point, grid: PriorGrid) -> Prior:
    return grid.points[discretize_index(point, grid)]


def discretize_index(point, grid: PriorGrid) -> int:
    if not grid.points:
        raise GameError("empty prior grid")
    d = np.abs(grid.as_array() - as_prior(point).p).sum(axis=1)
    return int(np.flatnonzero(d <= d.min() + 1e-12)[0])


@dataclass(frozen=True)
class RobustValue:
    value: float
    witness: np.ndarray


def expected_utilities(game: Game, policy, prior):
    """Per-response expected (U, V) under the prior."""
    p = game.policy_index(policy)
    pi = as_prior(prior).p
    if pi.size != game.n_states:
        raise GameError(f"prior has {pi.size} entries, game has {game.n_states} states")
    return game.U[:, p, :] @ pi, game.V[:, p, :] @ pi


def best_response_value(game: Game, policy, prior):
    u, _ = expected_utilities(game, policy, prior)
    best = float(u.max())
    return best, tuple(int(r) for r in np.flatnonzero(u >= best - BR_TOL))


def _slack_program(u: np.ndarray, v: np.ndarray, epsilon: float, sense: str) -> RobustValue:
    if epsilon < 0:
        raise GameError("epsilon must be non-negative")
    n = u.size
    lp = LinearProgram(
        objective=v,
        constraints=[(np.ones(n), "=", 1.0), (u, ">=", float(u.max()) - epsilon)],
        sense=sense,
    )
    sol = solve(lp)
    if not sol.optimal:
        raise RuntimeError(f"robust program unexpectedly {sol.status}")
    mu = sol.witness
    return RobustValue(float(v @ mu), mu)


def alpha(game: Game, policy, prior, epsilon: float) -> RobustValue:
    """Worst principal value over agent mixtures within epsilon of the agent optimum."""
    u, v = expected_utilities(game, policy, prior)
    return _slack_program(u, v, epsilon, "min")


def beta(game: Game, policy, prior, epsilon: float) -> RobustValue:
    u, v = expected_utilities(game, policy, prior)
    return _slack_program(u, v, epsilon, "max")


def argmax_lowest(values: Iterable[float], tol: float = TIE_TOL) -> int:
    values = np.asarray(list(values), dtype=float)
    return int(np.flatnonzero(values >= values.max() - tol)[0])


def robust_policy(game: Game, prior, epsilon: float):
    vals = [alpha(game, p, prior, epsilon) for p in range(game.n_policies)]
    best = argmax_lowest(v.value for v in vals)
    return best, vals[best]


def cost_of_robustness(game: Game, prior, epsilon: float) -> float:
    top = max(beta(game, p, prior, epsilon).value for p in range(game.n_policies))
    _, rv = robust_policy(game, prior, epsilon)
    return float(top - rv.value)


def robustness_sweep(game: Game, prior, epsilons: Sequence[float], growth: float = 2.5):
    """Diagnostic only: cost of robustness along an epsilon sweep.

    Flags consecutive pairs where doubling-type growth exceeds `growth` times the
    ratio of epsilons, which would suggest the cost is not linear in epsilon.
    """
    eps = sorted(float(e) for e in epsilons)
    rows = []
    for e in eps:
        p, rv = robust_policy(game, prior, e)
        rows.append({"epsilon": e, "delta": cost_of_robustness(game, prior, e), "policy": p, "alpha": rv.value})
    flags = []
    for a, b in zip(rows, rows[1:]):
        ratio = b["epsilon"] / a["epsilon"] if a["epsilon"] > 0 else np.inf
        if b["delta"] > growth * ratio / 2.0 * a["delta"] + 1e-9:
            flags.append((a["epsilon"], b["epsilon"]))
    return rows, flags

"""Experiment configuration: JSON documents checked against a published schema."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .forecast import ForecastGrid
from .game import Game, GameError
from .learners import LearnerSpec
from .mechanisms import MechanismSpec
from .scenarios import BUILDERS

SEED_ENV = "MDLAB_SEED"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"config error at {path}: {message}")
        self.path = path


def schema() -> dict:
    return json.loads(resources.files("mdlab").joinpath("schemas/config.schema.json").read_text(encoding="utf-8"))


@dataclass
class ExperimentConfig:
    game: dict
    mechanism: dict
    learner: dict
    states: dict
    T: int
    seeds: list = field(default_factory=lambda: [0])
    checkpoints: list = field(default_factory=list)
    bound_params: dict = field(default_factory=dict)
    base_dir: str = "."

    def to_dict(self) -> dict:
        d = {
            "game": self.game,
            "mechanism": self.mechanism,
            "learner": self.learner,
            "states": self.states,
            "T": self.T,
            "seeds": self.seeds,
            "checkpoints": self.checkpoints,
        }
        if self.bound_params:
            d["bound_params"] = self.bound_params
        return copy.deepcopy(d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # ---- derived objects

    def build_game(self) -> Game:
        g = self.game
        try:
            if "builder" in g:
                return BUILDERS[g["builder"]](**g.get("params", {}))
            if "file" in g:
                return Game.load(Path(self.base_dir) / g["file"])
            return Game.from_dict(g["inline"])
        except (GameError, TypeError, ValueError, OSError) as exc:
            raise ConfigError("game", str(exc)) from None

    def mechanism_spec(self, game: Game) -> MechanismSpec:
        m = self.mechanism
        try:
            grid = ForecastGrid.lattice(game.n_states, m.get("grid_step", 0.1))
            fixed = game.policy_index(m["fixed_policy"]) if "fixed_policy" in m else None
            alts = [game.policy_index(p) for p in m["alternatives"]] if "alternatives" in m else None
            return MechanismSpec(m["kind"], m.get("epsilon_bar", 0.1), fixed, grid, alts, m.get("seed", 0))
        except (GameError, ValueError) as exc:
            raise ConfigError("mechanism", str(exc)) from None

    def learner_spec(self, game: Game, states: np.ndarray) -> LearnerSpec:
        spec = self.learner
        params = dict(spec.get("params", {}))
        if params.get("script") == "states":
            params["script"] = [int(y) for y in states]
        elif "script" in params:
            params["script"] = [game.state_index(y) for y in params["script"]]
        try:
            return LearnerSpec(spec["kind"], params, spec.get("seed", 0))
        except ValueError as exc:
            raise ConfigError("learner", str(exc)) from None

    def state_sequence(self, game: Game, seed: int) -> np.ndarray:
        """States y_1..y_T for one seed; checkpoints use prefixes of this sequence."""
        s = self.states
        kind = s["kind"]
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 17]))
        if kind == "iid":
            p = np.asarray(s["probabilities"], dtype=float)
            return rng.choice(game.n_states, size=self.T, p=p)
        if kind == "markov":
            P = np.asarray(s["transition"], dtype=float)
            init = np.asarray(s.get("initial", np.full(game.n_states, 1.0 / game.n_states)), dtype=float)
            out = np.zeros(self.T, dtype=int)
            y = rng.choice(game.n_states, p=init)
            for t in range(self.T):
                out[t] = y
                y = rng.choice(game.n_states, p=P[y])
            return out
        if kind == "scripted":
            seq = [game.state_index(y) for y in s["sequence"]]
        else:
            text = (Path(self.base_dir) / s["path"]).read_text(encoding="utf-8")
            seq = [game.state_index(int(tok) if tok.isdigit() else tok) for tok in text.replace(",", " ").split()]
        if len(seq) < self.T:
            raise ConfigError("states", f"script has {len(seq)} states but T = {self.T}")
        return np.asarray(seq[: self.T], dtype=int)

    def run_checkpoints(self) -> list:
        return sorted(set(self.checkpoints) | {self.T}) if self.checkpoints else [self.T]


def _field(err: jsonschema.ValidationError) -> str:
    path = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        path.append(missing)
    if err.validator == "additionalProperties" and "'" in err.message:
        path.append(err.message.split("'")[1])
    return ".".join(path) or "(root)"


def parse_config(doc: dict, base_dir: str = ".") -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise ConfigError(_field(err), err.message)
    cfg = ExperimentConfig(
        game=copy.deepcopy(doc["game"]),
        mechanism=copy.deepcopy(doc["mechanism"]),
        learner=copy.deepcopy(doc["learner"]),
        states=copy.deepcopy(doc["states"]),
        T=int(doc["T"]),
        seeds=list(doc.get("seeds", [0])),
        checkpoints=list(doc.get("checkpoints", [])),
        bound_params=copy.deepcopy(doc.get("bound_params", {})),
        base_dir=str(base_dir),
    )
    bad = [c for c in cfg.checkpoints if c > cfg.T]
    if bad:
        raise ConfigError("checkpoints", f"{bad} exceed T = {cfg.T}")
    s = cfg.states
    needs = {"iid": "probabilities", "scripted": "sequence", "markov": "transition", "script_file": "path"}[s["kind"]]
    if needs not in s:
        raise ConfigError(f"states.{needs}", f"required for kind {s['kind']!r}")
    if s["kind"] == "iid" and abs(sum(s["probabilities"]) - 1.0) > 1e-9:
        raise ConfigError("states.probabilities", "must sum to 1")
    if s["kind"] == "markov":
        P = np.asarray(s["transition"], dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or np.abs(P.sum(axis=1) - 1).max() > 1e-9:
            raise ConfigError("states.transition", "must be a square row-stochastic matrix")
    m = cfg.mechanism
    if m["kind"] == "Constant" and "fixed_policy" not in m:
        raise ConfigError("mechanism.fixed_policy", "required for a Constant mechanism")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("(file)", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("(file)", f"invalid JSON: {exc}") from None
    return parse_config(doc, base_dir=str(path.parent))


def seeds_from_env(seeds: list) -> list:
    raw = os.environ.get(SEED_ENV)
    if not raw:
        return seeds
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("seeds", f"{SEED_ENV}={raw!r} is not a comma-separated list of integers") from None

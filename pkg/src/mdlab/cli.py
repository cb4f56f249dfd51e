"""Command line: run experiments, solve stage-game programs, reproduce the impossibility constructions."""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, seeds_from_env
from .game import Game, GameError, Prior, alpha, beta, cost_of_robustness, robust_policy
from .harness import IMPOSSIBILITY_KINDS, impossibility, impossibility_csv, run_experiment, strict_violations
from .info import best_case_beta, cost_of_info_robustness, info_robust_policy, worst_case_alpha
from .scenarios import BUILDERS

EXIT_OK, EXIT_CONFIG, EXIT_STRICT = 0, 2, 3
MODES = ("robust", "info-robust", "alpha", "beta", "worst-alpha", "best-beta", "nabla", "delta")
DIGITS = 6


def _round(x):
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_round(v) for v in x]
    if isinstance(x, (float, np.floating)):
        v = round(float(x), DIGITS)
        return 0.0 if v == 0 else v
    if isinstance(x, np.integer):
        return int(x)
    return x


def load_game(ref: str) -> Game:
    if ref in BUILDERS:
        return BUILDERS[ref]()
    return Game.load(ref)


def parse_prior(text: str, n_states: int) -> Prior:
    try:
        vals = [float(Fraction(tok.strip())) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"prior must be a comma-separated list of numbers, got {text!r}") from None
    if len(vals) != n_states:
        raise ValueError(f"prior has {len(vals)} entries, game has {n_states} states")
    return Prior.normalized(vals) if abs(sum(vals) - 1.0) < 1e-6 else Prior(tuple(vals))


def solve_command(game: Game, prior: Prior, epsilon: float, mode: str, policy=None) -> dict:
    out = {"mode": mode, "epsilon": epsilon, "prior": list(prior.p)}
    needs_policy = mode in ("alpha", "beta", "worst-alpha", "best-beta")
    if needs_policy and policy is None:
        raise ValueError(f"mode {mode} needs --policy")
    if needs_policy:
        p = game.policy_index(int(policy) if str(policy).isdigit() else policy)
        out["policy"] = game.policies[p]
        if mode in ("alpha", "beta"):
            rv = (alpha if mode == "alpha" else beta)(game, p, prior, epsilon)
            out.update(value=rv.value, witness=dict(zip(game.responses, rv.witness)))
        else:
            fn = worst_case_alpha if mode == "worst-alpha" else best_case_beta
            value, direct = fn(game, p, prior, epsilon)
            out.update(value=value, witness={r: dict(zip(game.states, row)) for r, row in zip(game.responses, direct.joint)})
    elif mode == "robust":
        p, rv = robust_policy(game, prior, epsilon)
        out.update(policy=game.policies[p], value=rv.value, witness=dict(zip(game.responses, rv.witness)))
    elif mode == "info-robust":
        p, value = info_robust_policy(game, prior, epsilon)
        _, direct = worst_case_alpha(game, p, prior, epsilon)
        out.update(policy=game.policies[p], value=value,
                   witness={r: dict(zip(game.states, row)) for r, row in zip(game.responses, direct.joint)})
    elif mode == "nabla":
        p, _ = info_robust_policy(game, prior, epsilon)
        out.update(policy=game.policies[p], value=cost_of_info_robustness(game, prior, epsilon))
    elif mode == "delta":
        p, _ = robust_policy(game, prior, epsilon)
        out.update(policy=game.policies[p], value=cost_of_robustness(game, prior, epsilon))
    else:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return _round(out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--strict", action="store_true", help="exit 3 if a run exceeds its bound with checked premises")

    s = sub.add_parser("solve", help="solve one stage-game program")
    s.add_argument("--game", required=True, help="builtin name or game JSON path")
    s.add_argument("--prior", required=True, help="comma-separated state probabilities, e.g. 2/3,1/3")
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--mode", required=True, choices=MODES)
    s.add_argument("--policy", help="policy name or index (alpha, beta, worst-alpha, best-beta)")

    i = sub.add_parser("impossibility", help="principal regret against a scripted learner")
    i.add_argument("--scenario", required=True, choices=sorted(IMPOSSIBILITY_KINDS))
    i.add_argument("--T", type=int, required=True)
    i.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.jobs < 1:
                raise ConfigError("--jobs", "must be at least 1")
            cfg = load_config(args.config)
            results = run_experiment(cfg, args.out, jobs=args.jobs, seeds=seeds_from_env(cfg.seeds))
            bad = strict_violations(results)
            print(f"{len(results)} runs written to {Path(args.out)}")
            if args.strict and bad:
                print("bound exceeded: " + ", ".join(bad), file=sys.stderr)
                return EXIT_STRICT
            return EXIT_OK
        if args.command == "solve":
            game = load_game(args.game)
            prior = parse_prior(args.prior, game.n_states)
            if args.epsilon < 0:
                raise ValueError("epsilon must be non-negative")
            print(json.dumps(solve_command(game, prior, args.epsilon, args.mode, args.policy), indent=2))
            return EXIT_OK
        rows = impossibility(args.scenario, args.T, args.seed)
        sys.stdout.write(impossibility_csv(rows))
        return EXIT_OK
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (GameError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Repeated-game executor with counterfactual replay, regret accounting and
the explicit-constant principal regret bounds."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .forecast import ForecastGrid, apriori_miscalibration_bound
from .game import Game, Prior, cost_of_robustness
from .info import InfoStructure, cost_of_info_robustness
from .learners import LearnerInput, LearnerSpec, make_learner
from .mechanisms import MechanismInput, MechanismSpec, make_mechanism

NOTIONS = ("ER", "IR", "CIR", "FER", "FCIR")


def _child_seed(master: int, tag: int, extra: int = 0) -> int:
    return int(np.random.SeedSequence([int(master), int(extra), tag]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def sample_index(mu: np.ndarray, u: float) -> int:
    c = np.cumsum(mu)
    return min(int(np.searchsorted(c, u * c[-1], side="right")), len(mu) - 1)


@dataclass(eq=False)
class Transcript:
    game: Game
    mechanism: MechanismSpec
    learner: LearnerSpec
    master_seed: int
    states: np.ndarray  # (T,)
    forecast_cells: np.ndarray  # (T,), -1 when nothing was published
    forecasts: np.ndarray  # (T, Y), nan rows when nothing was published
    policies: np.ndarray  # (T,)
    mu: np.ndarray  # (T, R)
    responses: np.ndarray  # (T,)
    alternatives: tuple
    cf_mu: np.ndarray  # (A, T, R)
    cf_responses: np.ndarray  # (A, T)
    contexts: list = field(default_factory=list)  # oracle contexts, M1 only

    @property
    def T(self) -> int:
        return len(self.states)

    def trajectory(self, which=None):
        """(policies, mu, responses) of the realised run or of a constant-policy counterfactual."""
        if which is None:
            return self.policies, self.mu, self.responses
        a = self.alternatives.index(int(which))
        return np.full(self.T, int(which)), self.cf_mu[a], self.cf_responses[a]

    def info_bins(self) -> list:
        """I_t = (policy cell, response cell, counterfactual response cells)."""
        cf = self.cf_responses.T
        return [(int(p), int(r)) + tuple(int(x) for x in cf[t]) for t, (p, r) in enumerate(zip(self.policies, self.responses))]

    def contexts_for(self, notion: str, which=None) -> list:
        pol, _, resp = self.trajectory(which)
        if notion == "ER":
            return [(int(p),) for p in pol]
        if notion == "IR":
            return [(int(p), int(r)) for p, r in zip(pol, resp)]
        if notion == "CIR":
            return self.info_bins()
        if notion == "FER":
            return [(int(f),) for f in self.forecast_cells]
        if notion == "FCIR":
            return [(int(f),) + b for f, b in zip(self.forecast_cells, self.info_bins())]
        raise ValueError(f"unknown regret notion {notion!r}")

    def truncated(self, T: int) -> "Transcript":
        return Transcript(
            self.game, self.mechanism, self.learner, self.master_seed,
            self.states[:T], self.forecast_cells[:T], self.forecasts[:T], self.policies[:T],
            self.mu[:T], self.responses[:T], self.alternatives, self.cf_mu[:, :T], self.cf_responses[:, :T],
            self.contexts[:T],
        )


def run(
    game: Game,
    mechanism_spec: MechanismSpec,
    learner_spec: LearnerSpec,
    states: Sequence[int],
    master_seed: int,
    alternatives: Sequence[int] | None = None,
) -> Transcript:
    states = np.asarray(states, dtype=int)
    T = len(states)
    if T < 1:
        raise ValueError("need at least one round")
    if states.min() < 0 or states.max() >= game.n_states:
        raise ValueError("state index out of range")
    if alternatives is None:
        alternatives = mechanism_spec.alternatives
    if alternatives is None:
        alternatives = range(game.n_policies)
    alts = tuple(game.policy_index(p) for p in alternatives)

    mech_spec = MechanismSpec(**{**mechanism_spec.__dict__, "seed": _child_seed(master_seed, 0, mechanism_spec.seed)})
    mech = make_mechanism(game, mech_spec, T)
    lspec = LearnerSpec(learner_spec.kind, learner_spec.params, _child_seed(master_seed, 1, learner_spec.seed))
    learner = make_learner(game, lspec, T)
    cf_learners = [make_learner(game, lspec, T) for _ in alts]
    crn = np.random.default_rng(_child_seed(master_seed, 2))
    grid = mechanism_spec.grid

    R, Y, A = game.n_responses, game.n_states, len(alts)
    policies = np.zeros(T, dtype=int)
    responses = np.zeros(T, dtype=int)
    fcells = np.full(T, -1, dtype=int)
    forecasts = np.full((T, Y), np.nan)
    mu_all = np.zeros((T, R))
    cf_mu = np.zeros((A, T, R))
    cf_resp = np.zeros((A, T), dtype=int)
    cf_pol = [np.full(T, p, dtype=int) for p in alts]
    contexts = []
    last_forecast = np.full(Y, 1.0 / Y)

    for t in range(T):
        u = float(crn.random())
        oracle = None
        if mech.uses_oracle:
            hist = (states[:t], responses[:t], policies[:t])

            def oracle(hist=hist, u=u, fc=last_forecast):
                out = []
                for p in range(game.n_policies):
                    mu_p = learner.clone().respond(LearnerInput(*hist, p, fc))
                    out.append(sample_index(mu_p, u))
                return tuple(out)

        p_t, f_idx = mech.choose_policy(MechanismInput(states[:t], policies[:t]), oracle)
        if mech.uses_oracle:
            contexts.append(mech.last_context)
        forecast = None
        if f_idx is not None:
            forecast = np.asarray(grid.points[f_idx])
            fcells[t] = f_idx
            forecasts[t] = forecast
            last_forecast = forecast
        mu = learner.respond(LearnerInput(states[:t], responses[:t], policies[:t], p_t, forecast))
        policies[t] = p_t
        mu_all[t] = mu
        responses[t] = sample_index(mu, u)
        for a, p in enumerate(alts):
            m = cf_learners[a].respond(LearnerInput(states[:t], cf_resp[a, :t], cf_pol[a][:t], p, forecast))
            cf_mu[a, t] = m
            cf_resp[a, t] = sample_index(m, u)
        y = int(states[t])
        learner.observe(y, int(responses[t]))
        for a in range(A):
            cf_learners[a].observe(y, int(cf_resp[a, t]))

    return Transcript(game, mechanism_spec, learner_spec, int(master_seed), states, fcells, forecasts,
                      policies, mu_all, responses, alts, cf_mu, cf_resp, contexts)


# ------------------------------------------------------------------ regrets


def principal_regret(game: Game, tr: Transcript, alternatives: Sequence[int] | None = None, per_alternative=False):
    """sup over constant alternatives of the average expected principal gain from switching."""
    alts = tr.alternatives if alternatives is None else tuple(game.policy_index(p) for p in alternatives)
    missing = [p for p in alts if p not in tr.alternatives]
    if missing:
        raise ValueError(f"transcript has no counterfactual for policies {missing}")
    y = tr.states
    base = (tr.mu * game.V[:, tr.policies, y].T).sum(axis=1)
    gaps = {}
    for p in alts:
        a = tr.alternatives.index(p)
        alt = (tr.cf_mu[a] * game.V[:, p, y].T).sum(axis=1)
        gaps[p] = float((alt - base).mean())
    pr = max(gaps.values())
    return (pr, gaps) if per_alternative else pr


@dataclass
class BinStats:
    count: int
    empirical: np.ndarray
    regret: float  # average regret inside the bin


def agent_regret(game: Game, tr: Transcript, notion: str, which=None, expected: bool = False):
    """Best modification rule per context bin, found by enumerating responses.

    `which` selects a counterfactual trajectory (a constant alternative policy);
    `expected` scores the agent's own play by its mixed response instead of the draw.
    Returns (total, {bin: BinStats}).
    """
    ctx = tr.contexts_for(notion, which)
    pol, mu, resp = tr.trajectory(which)
    y = tr.states
    cols = game.U[:, pol, y]  # (R, T)
    own = (mu * cols.T).sum(axis=1) if expected else cols[resp, np.arange(tr.T)]
    groups = defaultdict(list)
    for t, c in enumerate(ctx):
        groups[c].append(t)
    total = 0.0
    table = {}
    for c, ts in groups.items():
        ts = np.array(ts)
        gain = cols[:, ts].sum(axis=1).max() - own[ts].sum()
        total += gain
        emp = np.bincount(y[ts], minlength=game.n_states) / len(ts)
        table[c] = BinStats(len(ts), emp, float(gain / len(ts)))
    return float(total / tr.T), table


def regret_report(game: Game, tr: Transcript, expected: bool = False) -> dict:
    out = {"pr": principal_regret(game, tr)}
    for n in NOTIONS:
        if n in ("FER", "FCIR") and (tr.forecast_cells < 0).any():
            out[n.lower()] = float("nan")
            continue
        out[n.lower()] = agent_regret(game, tr, n, expected=expected and n in ("ER", "FER"))[0]
    return out


def empirical_structures(tr: Transcript, bins: list | None = None):
    """Per policy cell P: (pi_hat_P, gamma_hat_P over the bins inside P); per bin: (n_I, pi_hat_I).

    Bins default to the information bins, whose first component is the policy cell.
    """
    bins = tr.info_bins() if bins is None else bins
    Y = tr.game.n_states
    count = defaultdict(lambda: np.zeros(Y))
    for b, y in zip(bins, tr.states):
        count[b][y] += 1
    per_bin = {b: (int(c.sum()), c / c.sum()) for b, c in count.items()}
    per_cell = {}
    for P in sorted({b[0] for b in count}):
        inside = sorted(b for b in count if b[0] == P)
        mass = np.array([count[b] for b in inside])  # n_I * pi_hat_I(y)
        col = mass.sum(axis=0)  # n_P * pi_hat_P(y)
        kernel = np.divide(mass, col, out=np.zeros_like(mass), where=col > 0)
        kernel[:, col == 0] = 0.0
        kernel[0, col == 0] = 1.0  # no mass to apportion: keep the column a distribution
        per_cell[P] = (col / col.sum(), InfoStructure(tuple(inside), kernel), inside)
    return per_cell, per_bin


def miscalibration(tr: Transcript, bins: list) -> float:
    """(1/T) sum_t d1(pi_t, pi_hat of the bin of t)."""
    if (tr.forecast_cells < 0).any():
        raise ValueError("miscalibration needs published forecasts")
    Y = tr.game.n_states
    acc = defaultdict(lambda: np.zeros(Y))
    for b, y in zip(bins, tr.states):
        acc[b][y] += 1
    emp = {b: c / c.sum() for b, c in acc.items()}
    return float(np.mean([np.abs(tr.forecasts[t] - emp[b]).sum() for t, b in enumerate(bins)]))


# ------------------------------------------------------------------- bounds

INFORMED_PRINCIPAL = "informed_principal"
UNINFORMED_AGENT = "uninformed_agent"
INFORMED_AGENT = "informed_agent"
# bound family by name or by the mechanism kind it applies to
BOUND_FAMILIES = {
    INFORMED_PRINCIPAL: INFORMED_PRINCIPAL, "M1": INFORMED_PRINCIPAL,
    UNINFORMED_AGENT: UNINFORMED_AGENT, "M2": UNINFORMED_AGENT,
    INFORMED_AGENT: INFORMED_AGENT, "M3": INFORMED_AGENT,
}


@dataclass
class BoundReport:
    family: str
    value: float  # with measured miscalibration
    apriori: float  # with the a-priori miscalibration bound
    terms: dict


def measured_assumptions(game: Game, tr: Transcript) -> dict:
    """Agent-side constants measured on the run: the largest (F)CIR and the most negative (F)ER
    over the realised trajectory and every counterfactual one."""
    which = [None] + list(tr.alternatives)
    has_f = not (tr.forecast_cells < 0).any()
    out = {"CIR": max(agent_regret(game, tr, "CIR", w)[0] for w in which)}
    out["ER_floor"] = max(0.0, -min(agent_regret(game, tr, "ER", w, expected=True)[0] for w in which))
    if has_f:
        out["FCIR"] = max(agent_regret(game, tr, "FCIR", w)[0] for w in which)
        out["FER_floor"] = max(0.0, -min(agent_regret(game, tr, "FER", w, expected=True)[0] for w in which))
    return out


def _weighted(fn, table: dict, T: int) -> float:
    cache = {}
    total = 0.0
    for n, emp in table.values():
        key = tuple(np.round(emp, 12))
        if key not in cache:
            cache[key] = fn(Prior.normalized(emp))
        total += n * cache[key]
    return total / T


def regret_bound(
    game: Game,
    tr: Transcript,
    which: str,
    epsilon: float | None = None,
    epsilon_tilde: float | None = None,
    M1: float | None = None,
    M2: float | None = None,
    iota: float | None = None,
) -> BoundReport:
    """Right-hand side of the explicit principal-regret bound for the run's mechanism.

    `which` is a bound family name or a mechanism kind (M1, M2, M3).
    `iota` overrides the measured miscalibration.
    """
    fam = BOUND_FAMILIES.get(which)
    if fam is None:
        raise ValueError(f"unknown bound {which!r}")
    need = {INFORMED_PRINCIPAL: ("epsilon",), UNINFORMED_AGENT: ("epsilon", "epsilon_tilde", "M1", "M2"),
            INFORMED_AGENT: ("epsilon",)}[fam]
    given = {"epsilon": epsilon, "epsilon_tilde": epsilon_tilde, "M1": M1, "M2": M2}
    missing = [k for k in need if given[k] is None]
    if missing:
        raise ValueError(f"{fam} bound needs {', '.join(missing)}")
    eb = tr.mechanism.epsilon_bar
    kur, kup, kvr, kvp = game.lipschitz
    dR, dP = game.cover_radii
    grid: ForecastGrid = tr.mechanism.grid
    T, Y, nF = tr.T, game.n_states, len(grid)
    dF = grid.delta_F

    if fam == INFORMED_PRINCIPAL:
        # information bins carry the forecast cell, so forecasts are constant inside a bin
        bins = tr.contexts_for("FCIR")
    else:
        bins = [(int(f),) for f in tr.forecast_cells]
    _, per_bin = empirical_structures(tr, bins)
    table = {b: v for b, v in per_bin.items()}
    iota_meas = miscalibration(tr, bins) if iota is None else float(iota)
    if fam == INFORMED_PRINCIPAL:
        n_ctx = max(len(set(tr.contexts)), 1)
        iota_prior = (n_ctx / T) ** 0.25 * math.sqrt(Y * nF * math.sqrt(2 * math.log(max(nF, 2)))) + math.sqrt(2 * Y * dF)
    else:
        iota_prior = apriori_miscalibration_bound(Y, nF, dF, T)

    if fam == INFORMED_AGENT:
        lead = _weighted(lambda q: cost_of_info_robustness(game, q, eb), table, T)
    else:
        lead = _weighted(lambda q: cost_of_robustness(game, q, eb), table, T)

    def rhs(io):
        if fam == UNINFORMED_AGENT:
            e, et = epsilon, epsilon_tilde
            terms = {
                "lead": lead,
                "robustness": (2 * e + 6 * io + 2 * kur * dR + 2 * kup * dP) / eb,
                "alignment": M1 * (2 * e + 2 * et + 2 * io + 2 * kup * dP) + 2 * M2,
                "discretization": 3 * io + 2 * kvr * dR + kvp * dP,
            }
        else:
            terms = {
                "lead": lead,
                "robustness": 2 * (epsilon + 2 * io + kur * dR + kup * dP) / eb,
                "discretization": 2 * io + 2 * kvr * dR + kvp * dP,
            }
        return sum(terms.values()), terms

    value, terms = rhs(iota_meas)
    apriori, _ = rhs(iota_prior)
    terms = {**terms, "iota": iota_meas, "iota_apriori": iota_prior, "epsilon_bar": eb}
    return BoundReport(fam, float(value), float(apriori), terms)

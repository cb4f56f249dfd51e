import numpy as np
import pytest

from mdlab.game import Game
from mdlab.learners import (
    CFL,
    ExpWeightsPerContext,
    FixedPriorBayes,
    LearnerInput,
    LearnerSpec,
    SelectiveSuperefficiency,
    SelectiveSuperinefficiency,
    calibrate_mixing_weight,
    make_learner,
)
from mdlab.scenarios import judge_policy, judge_prior, judge_prosecutor


@pytest.fixture(scope="module")
def judge():
    return judge_prosecutor()


def mixing_game():
    # r0 good in state 0, r1 good in state 1, r2 worst everywhere
    U = np.array([[1.0, 0.2], [0.2, 1.0], [0.0, 0.0]])[:, None, :]
    return Game(("a", "b"), ("r0", "r1", "r2"), ("p",), U, np.zeros_like(U))


def first_round(policy, forecast=None):
    return LearnerInput((), (), (), policy, forecast)


def test_learner_input_validation():
    with pytest.raises(ValueError):
        LearnerInput((0,), (), (0,), 0)
    assert LearnerInput((0, 1), (0, 0), (2, 2), 3).t == 3


def test_spec_validation():
    with pytest.raises(ValueError):
        LearnerSpec("Oracle")
    with pytest.raises(ValueError):
        LearnerSpec("SelectiveSuperefficiency")


def test_cfl_follows_transparent_signal(judge):
    cfl = CFL(judge)
    mu = cfl.respond(first_round(judge.policy_index("q=0"), judge_prior(1 / 3).p))
    assert mu.tolist() == [0, 1, 0, 0]
    with pytest.raises(ValueError):
        CFL(judge).respond(first_round(0))


def test_bayes_equals_cfl_under_constant_forecast(judge):
    prior = judge_prior(0.4)
    bayes, cfl = FixedPriorBayes(judge, prior), CFL(judge)
    for p in range(judge.n_policies):
        np.testing.assert_array_equal(bayes.respond(first_round(p)), cfl.respond(first_round(p, prior.p)))


def test_observe_before_respond(judge):
    with pytest.raises(RuntimeError):
        CFL(judge).observe(0)


def test_exp_weights_update(judge):
    ew = ExpWeightsPerContext(judge, eta=0.5)
    np.testing.assert_allclose(ew.respond(first_round(3)), np.full(4, 0.25))
    ew.observe(1)
    np.testing.assert_allclose(ew.log_w[3], 0.5 * judge.U[:, 3, 1])
    assert not ew.log_w[[0, 1, 2, 4]].any()
    mu = ew.respond(LearnerInput((1,), (0,), (3,), 3))
    w = np.exp(0.5 * judge.U[:, 3, 1])
    np.testing.assert_allclose(mu, w / w.sum())


def test_clone_is_independent(judge):
    ew = ExpWeightsPerContext(judge, eta=0.5)
    ew.respond(first_round(0))
    twin = ew.clone()
    ew.observe(1)
    assert twin.game is judge and not twin.log_w.any()


# ---- scripted learners


@pytest.mark.parametrize("first_state,first_policy,case", [
    (1, "q=0.7", 1),  # both triggers
    (1, "q=0.65", 2),  # state only
    (0, "q=0.7", 3),  # policy only
    (0, "q=0.65", 4),  # neither
])
def test_selective_cases(judge, first_state, first_policy, case):
    script = [first_state, 1, 0, 1, 1, 0]
    p = judge.policy_index(first_policy)
    ln = SelectiveSuperefficiency(judge, script, [judge_policy(judge, 0.7)], [1])
    mu = ln.respond(first_round(p))
    assert ln.case == case
    if case in (1, 4):
        assert mu.argmax() == ln.hindsight_response(p)
    else:
        # per-round optimum for the scripted state, lowest index on ties
        assert judge.responses[int(mu.argmax())] == ("follow" if first_state == 1 else "always_acquit")


def test_superefficient_beats_hindsight(judge):
    script = [0, 1, 0, 1, 0, 0, 1, 0]
    p = judge.policy_index("q=0.7")
    ln = SelectiveSuperefficiency(judge, script, [p], [1])
    total = 0.0
    for t, y in enumerate(script):
        mu = ln.respond(LearnerInput(script[:t], [0] * t, [p] * t, p))
        total += mu @ judge.U[:, p, y]
        ln.observe(y)
    hind = judge.U[:, p, script].sum(axis=1).max()
    assert total == pytest.approx(len(script)) and total > hind


def test_fallback_switches_off_script(judge):
    ln = SelectiveSuperefficiency(judge, [0, 1, 1], [5], [1], fallback=True)
    ln.respond(first_round(5))
    ln.observe(1)  # the script said 0
    mu = ln.respond(LearnerInput((1,), (0,), (5,), 5))
    np.testing.assert_allclose(mu.sum(), 1)
    assert (mu > 0).all()


def test_calibrate_mixing_weight_example():
    g = mixing_game()
    # hindsight total 3.4, per-round best total 5, pessimum 0: 3.4 = 5 q
    assert calibrate_mixing_weight(g, [0, 0, 0, 1, 1], 0) == pytest.approx(0.68, abs=1e-6)


def test_calibrate_mixing_weight_degenerate(judge):
    g = Game(("a", "b"), ("r",), ("p",), np.ones((1, 1, 2)), np.ones((1, 1, 2)))
    with pytest.raises(ValueError):
        calibrate_mixing_weight(g, [0, 1], 0)


def test_superinefficient_has_zero_external_regret(rng):
    g = mixing_game()
    script = rng.integers(0, 2, 200)
    script[0] = 1
    ln = SelectiveSuperinefficiency(g, script, [0], [0])  # policy in, state out: case 3
    total = 0.0
    for t, y in enumerate(script):
        mu = ln.respond(LearnerInput(script[:t], [0] * t, [0] * t, 0))
        total += mu @ g.U[:, 0, y]
        ln.observe(int(y))
    assert ln.case == 3
    hind = g.U[:, 0, script].sum(axis=1).max()
    assert abs(hind - total) / len(script) <= 1e-6


def test_make_learner_by_name(judge):
    spec = LearnerSpec("SelectiveSuperinefficiency", {"script": [1, 0], "trigger_policies": ["q=0.7"],
                                                       "trigger_states": ["guilty"], "q": 0.5})
    ln = make_learner(judge, spec, 2)
    assert isinstance(ln, SelectiveSuperinefficiency)
    assert ln.trigger_policies == {judge.policy_index("q=0.7")} and ln.trigger_states == {1}
    assert ln.q(0) == 0.5
    assert isinstance(make_learner(judge, LearnerSpec("FixedPriorBayes", {"prior": [0.5, 0.5]})), FixedPriorBayes)
    assert make_learner(judge, LearnerSpec("ExpWeightsPerContext"), 100).eta == pytest.approx(np.sqrt(8 * np.log(4) / 100))

"""Checker tests: frozen reference values, invariants, and random-model
equivalence against the brute-force oracle."""

import numpy as np
import pytest

import oracle as O
from models import build_toy3, re_initial, snapshot_from_weights

from agentguard import checker as C
from agentguard.errors import EmptyModel, UnknownRewardStructure
from agentguard.checker import CheckSettings, check, qualitative_precompute
from agentguard.model import LearnedMdp
from agentguard.pctl import Label, parse_property


@pytest.fixture(scope="module")
def toy3():
    return build_toy3().snapshot()


def q(snap, text, **settings):
    s = CheckSettings(**settings) if settings else CheckSettings()
    return check(snap, parse_property(text), s)


# -- qualitative precomputation ------------------------------------------------


def test_precompute_goal_in_prob1(toy3):
    prob0, prob1 = qualitative_precompute(toy3, ["goal"], "max")
    assert toy3.state_index("goal") in prob1
    assert toy3.state_index("fail") in prob0


def test_precompute_direction_split(toy3):
    s0 = toy3.state_index("s0")
    _, prob1_max = qualitative_precompute(toy3, ["goal"], "max")
    _, prob1_min = qualitative_precompute(toy3, ["goal"], "min")
    assert s0 in prob1_max
    assert s0 not in prob1_min


def test_precompute_unreachable_in_prob0():
    # two disconnected islands: goal unreachable from s0's side
    snap = snapshot_from_weights(
        4, {(0, "a"): {1: 1}, (1, "a"): {0: 1}, (2, "a"): {3: 1}}, goal={3}
    )
    prob0, _ = qualitative_precompute(snap, [3], "max")
    assert {0, 1} <= set(prob0)


# -- reachability ---------------------------------------------------------------


def test_toy3_reachability(toy3):
    assert q(toy3, 'Pmax=? [ F "goal" ]').value == 1.0
    assert q(toy3, 'Pmin=? [ F "goal" ]').value == 0.5


def test_toy3_bounded(toy3):
    r = q(toy3, 'Pmax=? [ F<=2 "goal" ]')
    assert r.value == pytest.approx(0.55, abs=1e-12)
    assert r.iterations == 2


def test_goal_at_initial_is_one(toy3):
    assert q(toy3, 'Pmax=? [ F "s0" ]').value == 1.0
    assert q(toy3, 'Pmin=? [ F "s0" ]').value == 1.0


# -- globally --------------------------------------------------------------------


def test_toy3_globally_duality(toy3):
    assert q(toy3, 'Pmax=? [ G !"fail" ]').value == 1.0


def test_globally_trivia(toy3):
    assert q(toy3, "Pmin=? [ G true ]").value == 1.0
    assert q(toy3, "Pmax=? [ G false ]").value == 0.0


# -- expected rewards --------------------------------------------------------------


def test_toy3_expected_steps(toy3):
    r = q(toy3, 'Rmin=? [ F "goal" ]')
    assert r.value == pytest.approx(10.0, abs=1e-6)
    assert q(toy3, 'R{"steps"}min=? [ F "goal" ]').value == pytest.approx(
        10.0, abs=1e-6
    )


def test_reward_zero_at_goal(toy3):
    assert q(toy3, 'Rmin=? [ F "s0" ]').value == 0.0


def test_toy3_rmax_infinite(toy3):
    r = q(toy3, 'Rmax=? [ F "goal" ]')
    assert r.value == float("inf")
    assert r.converged


def test_unknown_structure(toy3):
    with pytest.raises(UnknownRewardStructure):
        q(toy3, 'R{"bogus"}min=? [ F "goal" ]')


def test_discounted_reward(toy3):
    # under gamma the b-loop fixpoint is y = 1 + 0.5 * 0.9 * y
    r = q(toy3, 'Rmin=? [ F "goal" ]', gamma=0.5)
    assert r.value == pytest.approx(1 / 0.55, abs=1e-6)


# -- policy mode --------------------------------------------------------------------


def test_toy3_policy_values(toy3):
    # chain from s0: 0.45 stay, 0.3 goal, 0.25 fail; x = 0.3 / 0.55
    assert q(toy3, 'P=? [ F "goal" ]').value == pytest.approx(6 / 11, abs=1e-8)
    assert q(toy3, 'R=? [ F "goal" ]').value == float("inf")


# -- check() dispatch -----------------------------------------------------------------


def test_bound_inclusive_vs_strict(toy3):
    inclusive = q(toy3, 'Pmin>=0.5 [ F "goal" ]')
    assert (inclusive.value, inclusive.satisfied) == (0.5, True)
    strict = q(toy3, 'Pmin>0.5 [ F "goal" ]')
    assert (strict.value, strict.satisfied) == (0.5, False)


def test_quantity_has_no_satisfied(toy3):
    r = q(toy3, 'Pmax=? [ F "goal" ]')
    assert r.satisfied is None
    assert "satisfied" not in r.to_json_dict()


def test_result_json(toy3):
    doc = q(toy3, 'Rmax=? [ F "goal" ]').to_json_dict()
    assert doc["value"] == "inf"
    assert doc["converged"] is True
    assert doc["revision"] == toy3.revision
    assert doc["micros"] >= 0


def test_empty_model():
    declared = LearnedMdp(states=["s0", "s1"], actions=["a"], initial="s0", mode="strict")
    with pytest.raises(EmptyModel):
        q(declared.snapshot(), 'Pmax=? [ F "s1" ]')
    with pytest.raises(EmptyModel):
        q(LearnedMdp().snapshot(), "Pmax=? [ F true ]")


def test_nonconvergence_is_a_result_not_an_error(toy3):
    r = q(toy3, 'Pmin=? [ F "goal" ]', max_iterations=3)
    assert not r.converged
    assert r.iterations == 3
    assert 0.0 <= r.value < 0.5


def test_until(toy3):
    # staying off the b-loop: only one step of a is allowed before leaving s0
    r = q(toy3, 'Pmax=? [ !"s0" U "goal" ]')
    assert r.value == pytest.approx(0.0, abs=1e-12)
    r2 = q(toy3, 'Pmax=? [ true U "goal" ]')
    assert r2.value == 1.0


# -- invariants on random models ---------------------------------------------------


def _models(count, seed=20260814):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield O.random_weighted_mdp(rng)


def test_oracle_equivalence_random_models():
    for n, weights, goal in _models(60):
        snap = snapshot_from_weights(n, weights, goal=goal)
        mdp = O.OracleMdp.from_weights(weights, n=n)
        settings = CheckSettings(epsilon=1e-12, max_iterations=1_000_000)
        goal_f = Label("goal")

        for opt in ("max", "min"):
            got = C.reachability_probability(snap, goal_f, opt, None, settings)
            want = O.reach_probability(mdp, goal, opt, 0)
            assert got.value == pytest.approx(want, abs=1e-6), (n, weights, goal, opt)

        got = C.reachability_probability(snap, goal_f, "max", 3, settings)
        want = O.bounded_reach_probability(mdp, goal, "max", 3, 0)
        assert got.value == pytest.approx(want, abs=1e-9)

        for opt in ("min", "max"):
            got = C.expected_reward(snap, "steps", goal_f, opt, settings)
            want = O.expected_reward(mdp, goal, opt, 0)
            if want == float("inf"):
                assert got.value == float("inf"), (n, weights, goal, opt)
            else:
                assert got.value == pytest.approx(want, abs=1e-6)


def test_policy_mode_matches_chain_oracle():
    for n, weights, goal in _models(40, seed=7):
        snap = snapshot_from_weights(n, weights, goal=goal)
        chain = O.policy_chain_oracle(n, weights)
        settings = CheckSettings(epsilon=1e-12, max_iterations=1_000_000)
        got = C.reachability_probability(snap, Label("goal"), "policy", None, settings)
        want = O.reach_probability(chain, goal, "max", 0)
        assert got.value == pytest.approx(want, abs=1e-6)


def test_until_matches_masked_oracle():
    rng = np.random.default_rng(99)
    for n, weights, goal in _models(40, seed=99):
        keep_size = int(rng.integers(1, n + 1))
        keep = {int(s) for s in rng.choice(n, size=keep_size, replace=False)}
        snap = snapshot_from_weights(n, weights, goal=goal)
        # the left operand as an explicit state-name disjunction
        left_text = " | ".join(f'"s{s}"' for s in sorted(keep))
        r = check(
            snap,
            parse_property(f'Pmax=? [ ({left_text}) U "goal" ]'),
            CheckSettings(epsilon=1e-12, max_iterations=1_000_000),
        )
        want = O.reach_probability(O.masked(O.OracleMdp.from_weights(weights, n=n), keep, goal), goal, "max", 0)
        assert r.value == pytest.approx(want, abs=1e-6), (n, weights, goal, keep)


def test_ordering_invariant():
    for n, weights, goal in _models(40, seed=13):
        snap = snapshot_from_weights(n, weights, goal=goal)
        settings = CheckSettings(epsilon=1e-12, max_iterations=1_000_000)
        goal_f = Label("goal")
        pmin = C.reachability_probability(snap, goal_f, "min", None, settings).value
        pmax = C.reachability_probability(snap, goal_f, "max", None, settings).value
        ppol = C.reachability_probability(snap, goal_f, "policy", None, settings).value
        assert pmin <= ppol + 1e-9
        assert ppol <= pmax + 1e-9


def test_duality_invariant_against_oracle():
    for n, weights, goal in _models(40, seed=5):
        snap = snapshot_from_weights(n, weights, goal=goal)
        settings = CheckSettings(epsilon=1e-12, max_iterations=1_000_000)
        mdp = O.OracleMdp.from_weights(weights, n=n)
        # G "safe" where safe = not goal; dual of min-reach into goal
        got = C.globally_probability(snap, parse_property('Pmax=? [ G !"goal" ]').path.operand, "max", None, settings)
        want = 1.0 - O.reach_probability(mdp, goal, "min", 0)
        assert got.value == pytest.approx(want, abs=1e-9)


def test_bounded_monotone_and_converging(toy3):
    values = [q(toy3, f'Pmax=? [ F<={k} "goal" ]').value for k in range(1, 25)]
    assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))
    unbounded = q(toy3, 'Pmax=? [ F "goal" ]').value
    assert q(toy3, 'Pmax=? [ F<=300 "goal" ]').value == pytest.approx(
        unbounded, abs=1e-8
    )


def test_iterates_monotone_from_zero(toy3):
    arena = C._Arena(toy3)
    goal = toy3.resolve_label("goal")
    prob1 = arena.prob1(goal, "max")
    prob0 = arena.prob0(goal, "max")
    x = np.zeros(arena.n)
    for s in prob1:
        x[s] = 1.0
    for _ in range(50):
        z = arena.step(x, "max")
        for s in prob1:
            z[s] = 1.0
        for s in prob0:
            z[s] = 0.0
        assert np.all(z >= x - 1e-15)
        x = z


def test_precomputation_soundness_random_models():
    for n, weights, goal in _models(30, seed=3):
        snap = snapshot_from_weights(n, weights, goal=goal)
        settings = CheckSettings(epsilon=1e-10, max_iterations=1_000_000)
        for opt in ("max", "min"):
            prob0, prob1 = qualitative_precompute(snap, sorted(goal), opt)
            for s in range(n):
                snap_s = re_initial(snap, f"s{s}")
                try:
                    value = C.reachability_probability(
                        snap_s, Label("goal"), opt, None, settings
                    ).value
                except EmptyModel:
                    continue  # isolated state, nothing to assert
                if s in prob0:
                    assert value == 0.0
                if s in prob1:
                    assert value == 1.0

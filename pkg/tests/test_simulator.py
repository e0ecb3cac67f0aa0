"""Scenario loading and trace generation."""

import json

import numpy as np
import pytest

from agentguard.errors import InvalidScenario, TerminalState
from agentguard.simulator import generate_trace, load_scenario, step

BRANCHING_SC = """
states: [hypothesis, collect, fixed]
actions: [search, guess]
policy:
  hypothesis: {search: 0.75, guess: 0.25}
  collect: {guess: 1.0}
dynamics:
  hypothesis:
    search: {collect: 1.0}
    guess: {hypothesis: 0.5, fixed: 0.5}
  collect:
    guess: {fixed: 1.0}
episode:
  initial: hypothesis
  terminals: [fixed]
  max_steps: 10
seed: 7
"""

# Frozen output of the branching scenario at seed 7. The generator's byte
# stream is part of the package contract; a change here is a breaking change.
FROZEN_LINES = [
    '{"declared_state": "hypothesis", "kind": "state_decl", "ts": 0.0}',
    '{"kind": "tool_call", "tool": "search", "ts": 1.0}',
    '{"kind": "tool_result", "outcome": "collect", "tool": "search", "ts": 2.0}',
    '{"kind": "tool_call", "tool": "guess", "ts": 3.0}',
    '{"kind": "tool_result", "outcome": "fixed", "tool": "guess", "ts": 4.0}',
    '{"declared_state": "hypothesis", "kind": "state_decl", "ts": 5.0}',
    '{"kind": "tool_call", "tool": "guess", "ts": 6.0}',
    '{"kind": "tool_result", "outcome": "hypothesis", "tool": "guess", "ts": 7.0}',
    '{"kind": "tool_call", "tool": "search", "ts": 8.0}',
    '{"kind": "tool_result", "outcome": "collect", "tool": "search", "ts": 9.0}',
    '{"kind": "tool_call", "tool": "guess", "ts": 10.0}',
    '{"kind": "tool_result", "outcome": "fixed", "tool": "guess", "ts": 11.0}',
    '{"declared_state": "hypothesis", "kind": "state_decl", "ts": 12.0}',
    '{"kind": "tool_call", "tool": "search", "ts": 13.0}',
    '{"kind": "tool_result", "outcome": "collect", "tool": "search", "ts": 14.0}',
]


def lines(events):
    return [json.dumps(ev.to_json_dict(), sort_keys=True) for ev in events]


def test_frozen_stream():
    sc = load_scenario(BRANCHING_SC)
    assert lines(generate_trace(sc, 6)) == FROZEN_LINES


def test_same_seed_identical_different_seed_not():
    sc = load_scenario(BRANCHING_SC)
    a = lines(generate_trace(sc, 200))
    b = lines(generate_trace(sc, 200))
    assert a == b
    other = load_scenario(BRANCHING_SC.replace("seed: 7", "seed: 8"))
    assert lines(generate_trace(other, 200)) != a


def test_zero_events_empty_stream():
    sc = load_scenario(BRANCHING_SC)
    assert list(generate_trace(sc, 0)) == []
    with pytest.raises(InvalidScenario):
        list(generate_trace(sc, -1))


DETERMINISTIC_SC = """
states: [s0, s1, done]
actions: [go]
policy:
  s0: {go: 1.0}
  s1: {go: 1.0}
dynamics:
  s0: {go: {s1: 1.0}}
  s1: {go: {done: 1.0}}
episode: {initial: s0, terminals: [done]}
"""


def test_deterministic_scenario_unique_walk():
    sc = load_scenario(DETERMINISTIC_SC)
    evs = list(generate_trace(sc, 4))
    kinds = [ev.kind for ev in evs]
    assert kinds == [
        "state_decl", "tool_call", "tool_result", "tool_call", "tool_result",
        "state_decl", "tool_call", "tool_result", "tool_call", "tool_result",
    ]
    outcomes = [ev.outcome for ev in evs if ev.kind == "tool_result"]
    assert outcomes == ["s1", "done", "s1", "done"]


def test_step_deterministic_and_terminal():
    sc = load_scenario(DETERMINISTIC_SC)
    rng = np.random.default_rng(0)
    ev, rng = step(sc, rng, "s0")
    assert (ev.state, ev.action, ev.next_state) == ("s0", "go", "s1")
    assert ev.reward is None
    with pytest.raises(TerminalState):
        step(sc, rng, "done")


COIN_SC = """
states: [s, heads, tails]
actions: [flip]
policy:
  s: {flip: 1.0}
dynamics:
  s:
    flip: {heads: 0.5, tails: 0.5}
episode: {initial: s, terminals: [heads, tails]}
seed: 3
"""


def test_step_split_within_three_sigma():
    sc = load_scenario(COIN_SC)
    rng = np.random.default_rng(12345)
    n = 1000
    heads = 0
    for _ in range(n):
        ev, rng = step(sc, rng, "s")
        heads += ev.next_state == "heads"
    # binomial: 3 * sqrt(0.25 / 1000) = 0.047
    assert abs(heads / n - 0.5) <= 0.047


FREQ_SC = """
states: [hypothesis]
actions: [search_code_base, find_similar_api_calls]
policy:
  hypothesis: {search_code_base: 0.75, find_similar_api_calls: 0.25}
dynamics:
  hypothesis:
    search_code_base: {hypothesis: 1.0}
    find_similar_api_calls: {hypothesis: 1.0}
episode: {initial: hypothesis, max_steps: 1000000}
seed: 42
"""


def test_action_frequency_within_three_sigma():
    sc = load_scenario(FREQ_SC)
    calls = [ev for ev in generate_trace(sc, 10_000) if ev.kind == "tool_call"]
    assert len(calls) == 10_000
    freq = sum(ev.tool == "search_code_base" for ev in calls) / len(calls)
    # 3 * sqrt(0.75 * 0.25 / 10000) = 0.013
    assert 0.737 <= freq <= 0.763


def test_max_steps_truncates_episodes():
    sc = load_scenario(
        FREQ_SC.replace("max_steps: 1000000", "max_steps: 2")
    )
    evs = list(generate_trace(sc, 4))
    kinds = [ev.kind for ev in evs]
    assert kinds == [
        "state_decl", "tool_call", "tool_result", "tool_call", "tool_result",
        "state_decl", "tool_call", "tool_result", "tool_call", "tool_result",
    ]


DRIFT_SC = """
states: [s]
actions: [a, b]
policy:
  s: {a: 1.0}
dynamics:
  s:
    a: {s: 1.0}
    b: {s: 1.0}
episode: {initial: s, max_steps: 100000}
drift:
  - after_events: 3
    patch:
      policy:
        s: {b: 1.0}
"""


def test_drift_switches_policy_at_event_index():
    sc = load_scenario(DRIFT_SC)
    calls = [ev.tool for ev in generate_trace(sc, 8) if ev.kind == "tool_call"]
    assert calls == ["a", "a", "a", "b", "b", "b", "b", "b"]


def test_drift_applies_mid_episode_and_across_episodes():
    sc = load_scenario(
        DRIFT_SC.replace("max_steps: 100000", "max_steps: 2")
    )
    calls = [ev.tool for ev in generate_trace(sc, 6) if ev.kind == "tool_call"]
    assert calls == ["a", "a", "a", "b", "b", "b"]


def err(text):
    with pytest.raises(InvalidScenario) as exc:
        load_scenario(text)
    return exc.value


def test_scenario_validation_paths():
    assert err("actions: [a]\n").path == "states"
    assert err(BRANCHING_SC.replace("search: 0.75", "search: 0.7")).path == (
        "policy.hypothesis"
    )
    assert err(BRANCHING_SC.replace("guess: 0.25", "guess: 0.25, fly: 0.0")).path in (
        "policy.hypothesis.fly",
    )
    assert err(BRANCHING_SC.replace("{collect: 1.0}", "{mars: 1.0}")).path == (
        "dynamics.hypothesis.search.mars"
    )
    assert err(BRANCHING_SC.replace("seed: 7", "seed: -1")).path == "seed"
    assert err(BRANCHING_SC + "unknown_section: 1\n").path == "unknown_section"
    assert err(BRANCHING_SC.replace("episode:", "episodee:")).path in (
        "episodee", "episode"
    )


def test_zero_probability_rejected():
    e = err(BRANCHING_SC.replace("search: 0.75", "search: 0.75, fly: 0.0"))
    assert e.path == "policy.hypothesis.fly"


def test_initial_cannot_be_terminal():
    e = err(BRANCHING_SC.replace("terminals: [fixed]", "terminals: [hypothesis]"))
    assert e.path == "episode.initial"


def test_reachable_state_needs_policy():
    text = BRANCHING_SC.replace("  collect: {guess: 1.0}\n", "")
    e = err(text)
    assert e.path == "policy"
    assert "collect" in str(e)


def test_policy_action_needs_dynamics():
    text = DETERMINISTIC_SC.replace("  s1: {go: {done: 1.0}}\n", "")
    e = err(text)
    assert e.path == "dynamics"
    assert "s1" in str(e)


def test_drift_points_strictly_increasing():
    text = DRIFT_SC + "  - after_events: 3\n    patch: {}\n"
    assert err(text).path == "drift[1].after_events"


def test_drift_patch_must_keep_closure():
    # patched policy starts using an action with no successor distribution
    text = DRIFT_SC.replace("    b: {s: 1.0}\n", "")
    e = err(text)
    assert e.path == "dynamics"
    assert "'b'" in str(e)


def test_rewards_attach_to_step():
    sc = load_scenario(
        DETERMINISTIC_SC
        + "rewards:\n"
        + "  - {action: go, next_state: done, value: 3}\n"
        + "  - {next_state: s1, value: -5}\n"
    )
    rng = np.random.default_rng(0)
    ev, rng = step(sc, rng, "s0")
    assert ev.reward == -5.0
    ev, rng = step(sc, rng, "s1")
    assert ev.reward == 3.0


def test_rewards_validation():
    assert err(DETERMINISTIC_SC + "rewards:\n  - {value: .inf}\n").path == (
        "rewards[0].value"
    )
    assert err(
        DETERMINISTIC_SC + "rewards:\n  - {action: dig, value: 1}\n"
    ).path == "rewards[0].action"

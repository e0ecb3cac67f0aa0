"""Raw-event abstraction: pairing, outcome mapping, drops, labeling."""

import json

import pytest

from agentguard.abstraction import (
    Abstractor,
    RawEvent,
    label_states,
    read_trace,
    write_trace,
)
from agentguard.config import load_config
from agentguard.errors import TraceFormatError
from agentguard.model import GOTO_ACTION

import textwrap

CFG_YAML = textwrap.dedent(
    """
    states:
      - understand_bug
      - hypothesis
      - collect_information
      - try_to_fix
      - wrote_fix
      - {name: fix_success, labels: [done]}
      - {name: fix_failed, labels: [done]}
    actions:
      - express_hypothesis
      - search_code_base
      - write_fix
      - run_tests
    initial: understand_bug
    terminal: [fix_success, fix_failed]
    action_labels:
      write_fix: write_fix
    outcomes:
      failed: fix_failed
    tool_outcomes:
      express_hypothesis: {ok: hypothesis}
      search_code_base: {found: collect_information, nothing: hypothesis}
      write_fix: {ok: wrote_fix}
      run_tests: {passed: fix_success, failed: try_to_fix}
    """
)


def call(tool, ts=None):
    return RawEvent(kind="tool_call", tool=tool, ts=ts)


def result(tool, outcome, ts=None):
    return RawEvent(kind="tool_result", tool=tool, outcome=outcome, ts=ts)


def decl(state, ts=None):
    return RawEvent(kind="state_decl", declared_state=state, ts=ts)


@pytest.fixture()
def cfg():
    return load_config(CFG_YAML)


@pytest.fixture()
def cfg_open():
    return load_config(CFG_YAML + "learner: {mode: open}\n")


def feed_all(abstractor, events):
    out = []
    for raw in events:
        ev = abstractor.feed(raw)
        if ev is not None:
            out.append(ev)
    return out


def test_call_result_pairs_into_transition(cfg):
    ab = Abstractor(cfg)
    assert ab.feed(call("express_hypothesis", ts=1.0)) is None
    ev = ab.feed(result("express_hypothesis", "ok", ts=2.0))
    assert ev.state == "understand_bug"
    assert ev.action == "express_hypothesis"
    assert ev.next_state == "hypothesis"
    assert ev.timestamp == 2.0
    assert ab.current_state == "hypothesis"
    assert ab.metrics.transitions == 1
    assert ab.metrics.dropped == 0


def test_outcome_mapping_precedence(cfg):
    ab = Abstractor(cfg)
    # per-tool mapping beats the generic one
    feed_all(ab, [call("run_tests"), ])
    ev = ab.feed(result("run_tests", "failed"))
    assert ev.next_state == "try_to_fix"
    # generic mapping applies to tools without their own entry... via a tool
    # that reaches it: write_fix has no entry for "failed"
    ab2 = Abstractor(cfg)
    ab2.feed(call("write_fix"))
    ev2 = ab2.feed(result("write_fix", "failed"))
    assert ev2.next_state == "fix_failed"
    # an outcome that names a state directly maps to itself
    ab3 = Abstractor(cfg)
    ab3.feed(call("search_code_base"))
    ev3 = ab3.feed(result("search_code_base", "try_to_fix"))
    assert ev3.next_state == "try_to_fix"


def test_state_decl_moves_via_goto(cfg):
    ab = Abstractor(cfg)
    ev = ab.feed(decl("collect_information", ts=4.5))
    assert ev.state == "understand_bug"
    assert ev.action == GOTO_ACTION
    assert ev.next_state == "collect_information"
    assert ab.current_state == "collect_information"


def test_state_decl_of_current_state_is_noop(cfg):
    ab = Abstractor(cfg)
    assert ab.feed(decl("understand_bug")) is None
    assert ab.metrics.dropped == 0
    assert ab.metrics.transitions == 0


def test_orphan_result_dropped_and_logged(cfg, caplog):
    ab = Abstractor(cfg)
    with caplog.at_level("WARNING", logger="agentguard.abstraction"):
        assert ab.feed(result("run_tests", "passed")) is None
    assert ab.metrics.orphan_results == 1
    assert ab.metrics.dropped == 1
    assert ab.metrics.transitions == 0
    assert any("no pending call" in rec.getMessage() for rec in caplog.records)


def test_mismatched_result_tool_dropped(cfg):
    ab = Abstractor(cfg)
    ab.feed(call("write_fix"))
    assert ab.feed(result("run_tests", "passed")) is None
    assert ab.metrics.orphan_results == 1
    assert ab.metrics.unpaired_calls == 1
    # the pending slot was cleared; a fresh pair still works
    ab.feed(call("run_tests"))
    assert ab.feed(result("run_tests", "passed")) is not None


def test_superseded_call_dropped(cfg):
    ab = Abstractor(cfg)
    ab.feed(call("write_fix"))
    ab.feed(call("run_tests"))
    assert ab.metrics.unpaired_calls == 1
    assert ab.metrics.dropped == 1
    ev = ab.feed(result("run_tests", "failed"))
    assert ev.state == "understand_bug"
    assert ev.action == "run_tests"


def test_unknown_outcome_strict_dropped(cfg):
    ab = Abstractor(cfg)
    ab.feed(call("search_code_base"))
    assert ab.feed(result("search_code_base", "exploded")) is None
    assert ab.metrics.unknown_names == 1
    assert ab.metrics.dropped == 1
    assert ab.current_state == "understand_bug"
    assert ab.pending is None


def test_unknown_outcome_open_goes_to_sink(cfg_open):
    ab = Abstractor(cfg_open)
    ab.feed(call("search_code_base"))
    ev = ab.feed(result("search_code_base", "exploded"))
    assert ev.next_state == "__other__"
    assert ab.current_state == "__other__"


def test_unknown_tool_strict_dropped(cfg):
    ab = Abstractor(cfg)
    assert ab.feed(call("dance")) is None
    assert ab.metrics.unknown_names == 1
    # the following result is an orphan, not a transition
    assert ab.feed(result("dance", "ok")) is None
    assert ab.metrics.orphan_results == 1


def test_unknown_tool_open_allowed(cfg_open):
    ab = Abstractor(cfg_open)
    ab.feed(call("dance"))
    ev = ab.feed(result("dance", "failed"))
    assert ev.action == "dance"
    assert ev.next_state == "fix_failed"


def test_unknown_state_decl(cfg, cfg_open):
    ab = Abstractor(cfg)
    assert ab.feed(decl("limbo")) is None
    assert ab.metrics.unknown_names == 1
    ab_open = Abstractor(cfg_open)
    ev = ab_open.feed(decl("limbo"))
    assert ev.next_state == "limbo"


def test_terminal_entry_resets_episode(cfg):
    ab = Abstractor(cfg)
    ab.feed(call("run_tests"))
    ev = ab.feed(result("run_tests", "passed"))
    assert ev.next_state == "fix_success"
    assert ab.current_state == "understand_bug"
    assert ab.metrics.episodes == 2
    # episode markers at the initial state do not fabricate transitions
    assert ab.feed(decl("understand_bug")) is None
    ab.feed(call("express_hypothesis"))
    ev2 = ab.feed(result("express_hypothesis", "ok"))
    assert ev2.state == "understand_bug"


def test_terminal_reset_via_state_decl(cfg):
    ab = Abstractor(cfg)
    ev = ab.feed(decl("fix_failed"))
    assert ev.next_state == "fix_failed"
    assert ab.current_state == "understand_bug"


def test_raw_event_validation():
    with pytest.raises(ValueError):
        RawEvent(kind="banana")
    with pytest.raises(ValueError):
        RawEvent(kind="tool_call")
    with pytest.raises(ValueError):
        RawEvent(kind="tool_result", tool="t")
    with pytest.raises(ValueError):
        RawEvent(kind="state_decl")
    with pytest.raises(ValueError):
        RawEvent.from_json_dict({"kind": "tool_call", "tool": "t", "extra": 1})
    with pytest.raises(ValueError):
        RawEvent.from_json_dict({"kind": "tool_call", "tool": "t", "ts": True})
    with pytest.raises(ValueError):
        RawEvent.from_json_dict(["not", "an", "object"])


def test_raw_event_json_round_trip():
    events = [
        call("run_tests", ts=1.0),
        result("run_tests", "passed", ts=2.0),
        decl("try_to_fix", ts=3.0),
        RawEvent(kind="tool_call", tool="t", payload={"arg": 7}),
    ]
    for ev in events:
        assert RawEvent.from_json_dict(json.loads(json.dumps(ev.to_json_dict()))) == ev


def test_trace_file_round_trip(tmp_path):
    path = tmp_path / "trace.jsonl"
    events = [call("run_tests", ts=0.0), result("run_tests", "failed", ts=1.0)]
    write_trace(str(path), events)
    write_trace(str(path), [decl("try_to_fix", ts=2.0)])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    assert read_trace(lines) == events + [decl("try_to_fix", ts=2.0)]


def test_trace_format_errors():
    with pytest.raises(TraceFormatError) as exc:
        read_trace(['{"kind": "state_decl", "declared_state": "x"}', "{nope"])
    assert exc.value.line == 2
    with pytest.raises(TraceFormatError) as exc:
        read_trace(["", '{"kind": "wat"}'])
    assert exc.value.line == 2
    assert read_trace(["", "   "]) == []


def episode_events():
    return [
        call("express_hypothesis"),
        result("express_hypothesis", "ok"),
        call("search_code_base"),
        result("search_code_base", "found"),
        decl("try_to_fix"),
        call("write_fix"),
        result("write_fix", "ok"),
        call("run_tests"),
        result("run_tests", "passed"),
    ]


def test_end_to_end_learning(cfg):
    ab = Abstractor(cfg)
    learner = cfg.make_learner()
    for ev in feed_all(ab, episode_events()):
        learner.record(ev)
    snap = learner.snapshot()
    assert snap.transition_probability("hypothesis", "search_code_base",
                                       "collect_information") == 1.0
    assert snap.transition_probability("wrote_fix", "run_tests", "fix_success") == 1.0
    assert GOTO_ACTION in snap.enabled_actions("collect_information")
    assert snap.enabled_actions("fix_success") == set()


def test_label_states_merges_all_sources(cfg):
    ab = Abstractor(cfg)
    learner = cfg.make_learner()
    for ev in feed_all(ab, episode_events()):
        learner.record(ev)
    snap = learner.snapshot()
    assert "write_fix" not in snap.labels
    labels = label_states(cfg, snap)
    assert labels["write_fix"] == frozenset({"wrote_fix"})
    assert labels["done"] == frozenset({"fix_success", "fix_failed"})
    # snapshots built with action labels already agree
    snap2 = learner.snapshot(action_labels=cfg.action_labels)
    assert label_states(cfg, snap2) == labels


def test_replay_determinism(cfg):
    def run():
        ab = Abstractor(cfg)
        learner = cfg.make_learner()
        for ev in feed_all(ab, episode_events() + [result("run_tests", "passed")]):
            learner.record(ev)
        return learner.snapshot().to_json()

    assert run() == run()

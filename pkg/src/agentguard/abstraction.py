"""Mapping raw instrumentation events onto model transitions.

Raw events arrive as tool calls, tool results and explicit state
declarations. The abstractor pairs each tool_call with the next
tool_result in the same session, translating the pair into a single
(state, action, next_state) transition; state declarations move the
tracked state directly. Events that cannot be mapped are dropped and
counted, never raised, so a live trace cannot kill the analysis loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .config import GuardConfig
from .model import GOTO_ACTION, ModelSnapshot, TransitionEvent

log = logging.getLogger("agentguard.abstraction")

EVENT_KINDS = ("tool_call", "tool_result", "state_decl")


@dataclass(frozen=True)
class RawEvent:
    """One line of an instrumentation trace.

    ``tool`` is set for tool_call/tool_result, ``outcome`` for tool_result,
    ``declared_state`` for state_decl. ``payload`` is carried through
    untouched and never interpreted.
    """

    kind: str
    tool: str | None = None
    outcome: str | None = None
    declared_state: str | None = None
    payload: object | None = None
    ts: float | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {self.kind!r}")
        if self.kind in ("tool_call", "tool_result") and not self.tool:
            raise ValueError(f"{self.kind} requires a tool name")
        if self.kind == "tool_result" and self.outcome is None:
            raise ValueError("tool_result requires an outcome")
        if self.kind == "state_decl" and not self.declared_state:
            raise ValueError("state_decl requires a declared_state")

    def to_json_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.tool is not None:
            out["tool"] = self.tool
        if self.outcome is not None:
            out["outcome"] = self.outcome
        if self.declared_state is not None:
            out["declared_state"] = self.declared_state
        if self.payload is not None:
            out["payload"] = self.payload
        if self.ts is not None:
            out["ts"] = self.ts
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RawEvent":
        if not isinstance(doc, dict):
            raise ValueError(f"expected an event object, got {type(doc).__name__}")
        known = {"kind", "tool", "outcome", "declared_state", "payload", "ts"}
        for key in doc:
            if key not in known:
                raise ValueError(f"unknown event field: {key!r}")
        kind = doc.get("kind")
        if not isinstance(kind, str):
            raise ValueError("missing event kind")
        for key in ("tool", "outcome", "declared_state"):
            value = doc.get(key)
            if value is not None and not isinstance(value, str):
                raise ValueError(f"{key} must be a string, got {value!r}")
        ts = doc.get("ts")
        if ts is not None and (isinstance(ts, bool) or not isinstance(ts, (int, float))):
            raise ValueError(f"ts must be a number, got {ts!r}")
        return cls(
            kind=kind,
            tool=doc.get("tool"),
            outcome=doc.get("outcome"),
            declared_state=doc.get("declared_state"),
            payload=doc.get("payload"),
            ts=None if ts is None else float(ts),
        )


@dataclass
class AbstractionMetrics:
    events: int = 0
    transitions: int = 0
    dropped: int = 0
    orphan_results: int = 0
    unpaired_calls: int = 0
    unknown_names: int = 0
    episodes: int = 1

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class _Pending:
    tool: str
    state: str
    ts: float | None


class Abstractor:
    """Per-session translator from raw events to transitions.

    Tracks the current abstract state (starting at the configured initial
    state) and at most one outstanding tool call. Entering a terminal state
    closes the episode: the tracked state resets to the initial state, so
    terminal states never acquire outgoing transitions.
    """

    def __init__(self, cfg: GuardConfig):
        self.cfg = cfg
        self.current_state = cfg.initial
        self.pending: _Pending | None = None
        self.metrics = AbstractionMetrics()
        self._strict = cfg.learner.mode == "strict"
        self._states = set(cfg.states)
        self._actions = set(cfg.actions)

    # -- helpers -----------------------------------------------------------

    def _drop(self, raw: RawEvent, why: str) -> None:
        self.metrics.dropped += 1
        log.warning("dropped %s event: %s", raw.kind, why)

    def _map_outcome(self, tool: str, outcome: str) -> str | None:
        per_tool = self.cfg.tool_outcomes.get(tool, {})
        if outcome in per_tool:
            return per_tool[outcome]
        if outcome in self.cfg.outcomes:
            return self.cfg.outcomes[outcome]
        if outcome in self._states:
            return outcome
        return None

    def _enter(self, state: str) -> None:
        if state in self.cfg.terminal:
            self.current_state = self.cfg.initial
            self.metrics.episodes += 1
        else:
            self.current_state = state

    # -- the single entry point ---------------------------------------------

    def feed(self, raw: RawEvent) -> TransitionEvent | None:
        """Consume one raw event; returns the transition it completes, if any."""
        self.metrics.events += 1
        if raw.kind == "tool_call":
            return self._feed_call(raw)
        if raw.kind == "tool_result":
            return self._feed_result(raw)
        return self._feed_decl(raw)

    def _feed_call(self, raw: RawEvent) -> None:
        if self._strict and raw.tool not in self._actions:
            self.metrics.unknown_names += 1
            self._drop(raw, f"undeclared tool {raw.tool!r}")
            return None
        if self.pending is not None:
            # the earlier call never produced a result; it cannot become a
            # transition anymore
            self.metrics.unpaired_calls += 1
            self.metrics.dropped += 1
            log.warning(
                "tool_call %r superseded pending call %r without a result",
                raw.tool,
                self.pending.tool,
            )
        self.pending = _Pending(tool=raw.tool, state=self.current_state, ts=raw.ts)
        return None

    def _feed_result(self, raw: RawEvent) -> TransitionEvent | None:
        if self.pending is None:
            self.metrics.orphan_results += 1
            self._drop(raw, f"result for {raw.tool!r} with no pending call")
            return None
        call = self.pending
        self.pending = None
        if raw.tool != call.tool:
            # both halves are lost: the call has no result, the result no call
            self.metrics.orphan_results += 1
            self.metrics.unpaired_calls += 1
            self._drop(
                raw, f"result tool {raw.tool!r} does not match pending call {call.tool!r}"
            )
            return None
        target = self._map_outcome(call.tool, raw.outcome)
        if target is None:
            if self._strict:
                self.metrics.unknown_names += 1
                self._drop(raw, f"unmapped outcome {raw.outcome!r} for {call.tool!r}")
                return None
            target = self.cfg.other_state
        event = TransitionEvent(
            state=call.state, action=call.tool, next_state=target, timestamp=raw.ts
        )
        self._enter(target)
        self.metrics.transitions += 1
        return event

    def _feed_decl(self, raw: RawEvent) -> TransitionEvent | None:
        target = raw.declared_state
        if self._strict and target not in self._states:
            self.metrics.unknown_names += 1
            self._drop(raw, f"undeclared state {target!r}")
            return None
        if target == self.current_state:
            # confirmation of where we already are, not a move
            return None
        event = TransitionEvent(
            state=self.current_state,
            action=GOTO_ACTION,
            next_state=target,
            timestamp=raw.ts,
        )
        self._enter(target)
        self.metrics.transitions += 1
        return event


def label_states(cfg: GuardConfig, snap: ModelSnapshot) -> dict[str, frozenset[str]]:
    """Full labeling of a snapshot under a config: labels already present on
    the snapshot, per-state labels declared in the config, and action labels
    (each labeled action marks every state it has been observed to enter)."""
    out: dict[str, set[str]] = {name: set(members) for name, members in snap.labels.items()}
    for state, names in cfg.state_labels.items():
        if state in snap.states:
            for label in names:
                out.setdefault(label, set()).add(state)
    if cfg.action_labels:
        wanted = {}
        for action, label in cfg.action_labels.items():
            if action in snap.actions:
                wanted[snap.action_index(action)] = label
        for si, ai, row in snap.raw_rows():
            label = wanted.get(ai)
            if label is None:
                continue
            for ti, w in row:
                if w > 0:
                    out.setdefault(label, set()).add(snap.states[ti])
    return {name: frozenset(members) for name, members in out.items()}


def read_trace(lines) -> list[RawEvent]:
    """Decode an iterable of JSONL lines into events; blank lines are
    skipped. Raises TraceFormatError with a 1-based line number."""
    import json

    from .errors import TraceFormatError

    out = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            doc = json.loads(text)
            out.append(RawEvent.from_json_dict(doc))
        except (ValueError, TypeError) as err:
            raise TraceFormatError(lineno, str(err)) from None
    return out


def write_trace(path: str, events) -> None:
    """Append events to a JSONL trace file, one object per line."""
    import json

    with open(path, "a", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_json_dict(), sort_keys=True) + "\n")

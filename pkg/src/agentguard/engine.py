"""The live verification loop.

Producers log transitions (or raw tool events, which run through a
per-session abstractor) into a bounded queue. A single analyzer applies
them to the learner in arrival order, writes the persistent trace, and
every ``analysis.every_events`` applied events takes a snapshot, checks
every configured property, evaluates alert thresholds and notifies
sinks. Checker failures and callback crashes become recorded data, not
loop exits.

Alerts are edge-triggered: a property alerts when its threshold check
moves from passing to failing, stays silent while the failure persists,
re-arms when the check passes again, and also re-arms when a human
acknowledges the alert.

Timestamps on trace records default to the wall clock but are taken
verbatim from the caller when provided, so replaying a persisted trace
is fully deterministic: same model, same results, same exported text.
"""

from __future__ import annotations

import json
import logging
import operator
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .abstraction import Abstractor, RawEvent
from .checker import VerificationResult, check
from .config import GuardConfig, PropertySpec
from .errors import (
    AgentGuardError,
    EngineNotRunning,
    QueueFull,
    TraceFormatError,
    UnknownAction,
    UnknownCommand,
    UnknownState,
)
from .model import ModelSnapshot

log = logging.getLogger("agentguard.engine")

BUILTIN_COMMANDS = ("pause", "resume", "terminate", "acknowledge")
COMMAND_SOURCES = ("human", "auto")
# callbacks slower than this are logged; they run on the analyzer thread
CALLBACK_BUDGET_SECONDS = 0.1
# retained alert/audit history; older entries fall off the ring
HISTORY_LIMIT = 10_000

_OPS = {">=": operator.ge, ">": operator.gt, "<=": operator.le, "<": operator.lt}


@dataclass(frozen=True)
class TraceRecord:
    """Persisted form of one accepted transition."""

    seq: int
    session: str
    ts: float
    state: str
    action: str
    next_state: str
    reward: float | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "seq": self.seq,
            "session": self.session,
            "ts": self.ts,
            "state": self.state,
            "action": self.action,
            "next_state": self.next_state,
        }
        if self.reward is not None:
            doc["reward"] = self.reward
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TraceRecord":
        if not isinstance(doc, dict):
            raise ValueError(f"expected a record object, got {type(doc).__name__}")
        known = {"seq", "session", "ts", "state", "action", "next_state", "reward"}
        for key in doc:
            if key not in known:
                raise ValueError(f"unknown record field: {key!r}")
        for key in ("state", "action", "next_state"):
            if not isinstance(doc.get(key), str):
                raise ValueError(f"missing or non-string {key}")
        reward = doc.get("reward")
        if reward is not None and (
            isinstance(reward, bool) or not isinstance(reward, (int, float))
        ):
            raise ValueError(f"reward must be a number, got {reward!r}")
        return cls(
            seq=int(doc.get("seq", 0)),
            session=str(doc.get("session", "default")),
            ts=float(doc.get("ts", 0.0)),
            state=doc["state"],
            action=doc["action"],
            next_state=doc["next_state"],
            reward=None if reward is None else float(reward),
        )


@dataclass
class Alert:
    id: int
    property: str
    severity: str
    value: float | None
    threshold_op: str
    threshold_value: float
    revision: int
    cycle: int
    timestamp: float
    acknowledged: bool = False
    callback_error: str | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "id": self.id,
            "property": self.property,
            "severity": self.severity,
            "value": self.value,
            "threshold": {"op": self.threshold_op, "value": self.threshold_value},
            "revision": self.revision,
            "cycle": self.cycle,
            "timestamp": self.timestamp,
            "acknowledged": self.acknowledged,
        }
        if self.callback_error is not None:
            doc["callback_error"] = self.callback_error
        return doc


@dataclass(frozen=True)
class ActuatorCommand:
    command: str
    source: str = "human"
    name: str | None = None
    alert_id: int | None = None

    def __post_init__(self):
        if self.command != "custom" and self.command not in BUILTIN_COMMANDS:
            raise ValueError(f"unknown command kind: {self.command!r}")
        if self.command == "custom" and not self.name:
            raise ValueError("custom commands need a name")
        if self.source not in COMMAND_SOURCES:
            raise ValueError(f"unknown command source: {self.source!r}")

    @property
    def effective_name(self) -> str:
        return self.name if self.command == "custom" else self.command


@dataclass(frozen=True)
class AuditEntry:
    id: int
    command: str
    name: str | None
    source: str
    alert_id: int | None
    timestamp: float
    ok: bool
    detail: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "command": self.command,
            "name": self.name,
            "source": self.source,
            "alert_id": self.alert_id,
            "timestamp": self.timestamp,
            "ok": self.ok,
            "detail": self.detail,
        }


@dataclass
class EngineMetrics:
    accepted: int = 0
    applied: int = 0
    rejected: int = 0
    dropped_queue: int = 0
    dropped_name_errors: int = 0
    raw_events: int = 0
    cycles: int = 0
    decays: int = 0
    alerts: int = 0

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


class BoundedQueue:
    """FIFO with a hard capacity and a configurable overflow policy."""

    def __init__(self, capacity: int, policy: str):
        self._items: deque = deque()
        self._capacity = capacity
        self._policy = policy
        self._cond = threading.Condition()
        self._closed = False

    def put(self, item) -> int:
        """Enqueue; returns how many queued items were evicted to make room.
        Raises QueueFull (reject policy) or EngineNotRunning (closed)."""
        with self._cond:
            while True:
                if self._closed:
                    raise EngineNotRunning("queue is closed")
                if len(self._items) < self._capacity:
                    self._items.append(item)
                    self._cond.notify_all()
                    return 0
                if self._policy == "reject":
                    raise QueueFull(f"queue at capacity {self._capacity}")
                if self._policy == "drop_oldest":
                    self._items.popleft()
                    self._items.append(item)
                    self._cond.notify_all()
                    return 1
                self._cond.wait(0.05)

    def get(self, timeout: float | None = None):
        with self._cond:
            if not self._items and timeout:
                self._cond.wait(timeout)
            if self._items:
                item = self._items.popleft()
                self._cond.notify_all()
                return item
            return None

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def __len__(self):
        with self._cond:
            return len(self._items)


class AgentGuard:
    """One running verification engine bound to a config.

    In the default threaded mode a background analyzer owns the learner;
    ``synchronous=True`` applies every event inline on the caller's
    thread (used for replay and deterministic tests).
    """

    def __init__(
        self,
        cfg: GuardConfig,
        trace_log: str | None = None,
        synchronous: bool = False,
        clock=time.time,
    ):
        self.cfg = cfg
        self.synchronous = synchronous
        self.clock = clock
        self.metrics = EngineMetrics()
        self.paused = False
        self.terminated = False

        self._learner = cfg.make_learner()
        self._queue = BoundedQueue(cfg.queue.capacity, cfg.queue.policy)
        self._abstractors: dict[str, Abstractor] = {}
        self._actuators: dict[str, object] = {}
        self._sinks: list = []
        self._trace_path = trace_log
        self._trace_fh = None

        self._snapshot: ModelSnapshot | None = None
        self._results: dict[str, VerificationResult] = {}
        self._alerts: deque = deque(maxlen=HISTORY_LIMIT)
        self._audit: deque = deque(maxlen=HISTORY_LIMIT)
        self._errors: deque = deque(maxlen=1000)
        self._armed: dict[str, bool] = {
            p.name: True for p in cfg.properties if p.has_threshold
        }
        self._violating: set[str] = set()
        self._cycle = 0
        self._since_cycle = 0
        self._since_decay = 0
        self._next_seq = 1
        self._next_alert_id = 1
        self._next_audit_id = 1

        self._running = False
        self._thread: threading.Thread | None = None
        self._lock = threading.RLock()
        self._ingest_lock = threading.Lock()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "AgentGuard":
        if self._running:
            return self
        if self._trace_path:
            self._trace_fh = open(self._trace_path, "a", encoding="utf-8")
        self._running = True
        if not self.synchronous:
            self._thread = threading.Thread(
                target=self._analyze_loop, name="agentguard-analyzer", daemon=True
            )
            self._thread.start()
        return self

    def stop(self):
        """Stop accepting events, drain what was accepted, finish with a
        final partial cycle so no applied event goes unchecked."""
        if not self._running:
            return
        self._running = False
        self._queue.close()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        while True:
            rec = self._queue.get()
            if rec is None:
                break
            self._apply(rec)
        if self._since_cycle > 0:
            self.run_analysis_cycle()
        if self._trace_fh is not None:
            self._trace_fh.close()
            self._trace_fh = None

    def __enter__(self) -> "AgentGuard":
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # -- ingestion ------------------------------------------------------------

    def log_transition(
        self,
        state: str,
        action: str,
        next_state: str,
        reward: float | None = None,
        session: str = "default",
        ts: float | None = None,
    ) -> int:
        """Queue one observed transition; returns its sequence number.

        Raises EngineNotRunning before start/after stop and QueueFull when
        the queue is at capacity under the reject policy."""
        if not self._running:
            raise EngineNotRunning("engine is not running")
        with self._ingest_lock:
            seq = self._next_seq
            self._next_seq += 1
        rec = TraceRecord(
            seq=seq,
            session=session,
            ts=self.clock() if ts is None else ts,
            state=state,
            action=action,
            next_state=next_state,
            reward=reward,
        )
        if self.synchronous:
            self.metrics.accepted += 1
            self._apply(rec)
            return seq
        try:
            evicted = self._queue.put(rec)
        except QueueFull:
            self.metrics.rejected += 1
            raise
        self.metrics.accepted += 1
        self.metrics.dropped_queue += evicted
        return seq

    def ingest_raw(self, raw: RawEvent, session: str = "default") -> int | None:
        """Feed one raw instrumentation event through the session's
        abstractor; returns the sequence number of the transition it
        completed, or None."""
        if not self._running:
            raise EngineNotRunning("engine is not running")
        with self._ingest_lock:
            ab = self._abstractors.get(session)
            if ab is None:
                ab = self._abstractors[session] = Abstractor(self.cfg)
            self.metrics.raw_events += 1
            ev = ab.feed(raw)
        if ev is None:
            return None
        return self.log_transition(
            ev.state,
            ev.action,
            ev.next_state,
            reward=ev.reward,
            session=session,
            ts=ev.timestamp,
        )

    def abstraction_metrics(self, session: str = "default"):
        with self._ingest_lock:
            ab = self._abstractors.get(session)
            return None if ab is None else ab.metrics

    # -- analyzer ------------------------------------------------------------

    def _analyze_loop(self):
        period = self.cfg.analysis.also_every_ms
        next_tick = None if period is None else time.monotonic() + period / 1000.0
        while self._running:
            if next_tick is None:
                timeout = 0.05
            else:
                timeout = min(0.05, max(0.0, next_tick - time.monotonic()))
            rec = self._queue.get(timeout=timeout)
            if rec is not None:
                self._apply(rec)
            if next_tick is not None and time.monotonic() >= next_tick:
                if self._since_cycle > 0:
                    self.run_analysis_cycle()
                next_tick = time.monotonic() + period / 1000.0

    def _apply(self, rec: TraceRecord):
        if self._trace_fh is not None:
            self._trace_fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
        try:
            self._learner.record_transition(
                rec.state, rec.action, rec.next_state, rec.reward
            )
            self.metrics.applied += 1
        except (UnknownState, UnknownAction) as err:
            self.metrics.dropped_name_errors += 1
            self._errors.append({"seq": rec.seq, "error": str(err)})
            log.warning("dropped transition seq=%d: %s", rec.seq, err)
        decay = self.cfg.learner.decay
        if decay is not None:
            self._since_decay += 1
            if self._since_decay >= decay.every:
                self._learner.apply_forgetting(decay.lam)
                self._since_decay = 0
                self.metrics.decays += 1
        self._since_cycle += 1
        if self._since_cycle >= self.cfg.analysis.every_events:
            self.run_analysis_cycle()

    def run_analysis_cycle(self) -> list[VerificationResult]:
        """Snapshot, check every property, evaluate thresholds, notify sinks."""
        self._since_cycle = 0
        snap = self._learner.snapshot(action_labels=self.cfg.action_labels)
        cycle = self._cycle + 1
        pairs: list[tuple[PropertySpec, VerificationResult]] = []
        for spec in self.cfg.properties:
            start = time.perf_counter()
            try:
                result = check(snap, spec.property, self.cfg.checker)
            except AgentGuardError as err:
                result = VerificationResult(
                    property=spec.name,
                    value=None,
                    satisfied=None,
                    iterations=0,
                    converged=False,
                    revision=snap.revision,
                    micros=int((time.perf_counter() - start) * 1e6),
                    error=str(err),
                )
            pairs.append((spec, result))
            log.info(
                "cycle=%d %s value=%s converged=%s",
                cycle,
                spec.name,
                result.value,
                result.converged,
            )
        alerts = self._evaluate_thresholds(pairs, snap.revision, cycle)

        with self._lock:
            self._snapshot = snap
            self._results = {spec.name: result for spec, result in pairs}
            self._alerts.extend(alerts)
            self._cycle = cycle
        self.metrics.cycles += 1
        self.metrics.alerts += len(alerts)

        frames = [
            {
                "kind": "model_delta",
                "cycle": cycle,
                "payload": {
                    "revision": snap.revision,
                    "states": len(snap.states),
                    "actions": len(snap.actions),
                    "total_weight": snap.total_weight,
                    "applied": self.metrics.applied,
                },
            }
        ]
        frames.extend(
            {"kind": "result", "cycle": cycle, "payload": result.to_json_dict()}
            for _, result in pairs
        )
        frames.extend(
            {"kind": "alert", "cycle": cycle, "payload": alert.to_json_dict()}
            for alert in alerts
        )
        for frame in frames:
            for sink in list(self._sinks):
                try:
                    sink(frame)
                except Exception:
                    log.exception("stream sink failed")
        return [result for _, result in pairs]

    # -- thresholds and alerts -------------------------------------------------

    @staticmethod
    def _threshold_ok(spec: PropertySpec, result: VerificationResult) -> bool | None:
        if spec.property.is_bound:
            return result.satisfied
        if result.value is None:
            return None
        return _OPS[spec.threshold_op](result.value, spec.threshold_value)

    def _evaluate_thresholds(self, pairs, revision: int, cycle: int) -> list[Alert]:
        alerts = []
        for spec, result in pairs:
            if not spec.has_threshold:
                continue
            ok = self._threshold_ok(spec, result)
            if ok is None:
                continue
            if ok:
                self._armed[spec.name] = True
                self._violating.discard(spec.name)
                continue
            self._violating.add(spec.name)
            if not self._armed.get(spec.name, True):
                continue
            self._armed[spec.name] = False
            if spec.property.is_bound:
                op, bound = spec.property.op, spec.property.threshold
            else:
                op, bound = spec.threshold_op, spec.threshold_value
            alert = Alert(
                id=self._next_alert_id,
                property=spec.name,
                severity=spec.severity,
                value=result.value,
                threshold_op=op,
                threshold_value=bound,
                revision=revision,
                cycle=cycle,
                timestamp=self.clock(),
            )
            self._next_alert_id += 1
            log.warning(
                "alert %s: %s = %s violates %s %s",
                alert.id, spec.name, result.value, op, bound,
            )
            if spec.on_violation:
                self._auto_dispatch(spec.on_violation, alert)
            alerts.append(alert)
        return alerts

    def _auto_dispatch(self, name: str, alert: Alert):
        if name in BUILTIN_COMMANDS:
            cmd = ActuatorCommand(command=name, source="auto", alert_id=alert.id)
        else:
            cmd = ActuatorCommand(
                command="custom", name=name, source="auto", alert_id=alert.id
            )
        try:
            self.dispatch(cmd, alert=alert)
        except AgentGuardError as err:
            alert.callback_error = str(err)
            log.error("on_violation %r failed: %s", name, err)

    # -- actuators --------------------------------------------------------------

    def register_actuator(self, name: str, callback) -> None:
        """Attach a callback to a builtin command name or a custom one.
        Callbacks receive (command, alert-or-None) and must be quick; the
        watchdog logs anything beyond 100 ms."""
        self._actuators[name] = callback

    def dispatch(self, cmd: ActuatorCommand, alert: Alert | None = None) -> AuditEntry:
        """Route a command: apply its engine effect, run the registered
        callback, append an audit entry."""
        detail = None
        ok = True
        callback = self._actuators.get(cmd.effective_name)
        if cmd.command == "custom" and callback is None:
            self._append_audit(cmd, ok=False, detail="unregistered")
            raise UnknownCommand(cmd.effective_name)

        if cmd.command == "pause":
            self.paused = True
        elif cmd.command == "resume":
            self.paused = False
        elif cmd.command == "terminate":
            self.terminated = True
        elif cmd.command == "acknowledge":
            alert = self._acknowledge(cmd, alert)

        if callback is not None:
            started = time.perf_counter()
            try:
                callback(cmd, alert)
            except Exception as err:  # a broken actuator must not kill the loop
                ok = False
                detail = f"callback error: {err}"
                log.exception("actuator %r failed", cmd.effective_name)
            elapsed = time.perf_counter() - started
            if elapsed > CALLBACK_BUDGET_SECONDS:
                log.warning(
                    "actuator %r took %.0f ms (callbacks must be non-blocking)",
                    cmd.effective_name,
                    elapsed * 1000,
                )
        return self._append_audit(cmd, ok=ok, detail=detail)

    def _acknowledge(self, cmd: ActuatorCommand, alert: Alert | None) -> Alert:
        with self._lock:
            if alert is None:
                if cmd.alert_id is None:
                    raise ValueError("acknowledge needs an alert_id")
                for candidate in self._alerts:
                    if candidate.id == cmd.alert_id:
                        alert = candidate
                        break
                else:
                    raise ValueError(f"unknown alert id {cmd.alert_id}")
            alert.acknowledged = True
            # a fresh failure after acknowledgment should alert again
            self._armed[alert.property] = True
        return alert

    def _append_audit(self, cmd, ok: bool, detail: str | None) -> AuditEntry:
        with self._lock:
            entry = AuditEntry(
                id=self._next_audit_id,
                command=cmd.command,
                name=cmd.name,
                source=cmd.source,
                alert_id=cmd.alert_id,
                timestamp=self.clock(),
                ok=ok,
                detail=detail,
            )
            self._next_audit_id += 1
            self._audit.append(entry)
        return entry

    # -- read access --------------------------------------------------------------

    @property
    def running(self) -> bool:
        return self._running

    @property
    def cycle(self) -> int:
        with self._lock:
            return self._cycle

    @property
    def revision(self) -> int | None:
        with self._lock:
            return None if self._snapshot is None else self._snapshot.revision

    def snapshot(self) -> ModelSnapshot | None:
        with self._lock:
            return self._snapshot

    def results(self) -> dict[str, VerificationResult]:
        with self._lock:
            return dict(self._results)

    def alerts(self, newest_first: bool = True) -> list[Alert]:
        with self._lock:
            out = list(self._alerts)
        return list(reversed(out)) if newest_first else out

    def audit_log(self) -> list[AuditEntry]:
        with self._lock:
            return list(self._audit)

    def errors(self) -> list[dict]:
        return list(self._errors)

    def active_violations(self) -> list[str]:
        with self._lock:
            return sorted(self._violating)

    def pending(self) -> int:
        return len(self._queue)

    def add_sink(self, callback) -> None:
        self._sinks.append(callback)

    def remove_sink(self, callback) -> None:
        if callback in self._sinks:
            self._sinks.remove(callback)

    def export_model(self) -> str:
        from .prism import export_prism

        snap = self.snapshot()
        if snap is None:
            snap = self._learner.snapshot(action_labels=self.cfg.action_labels)
        return export_prism(snap)


# -- replay ----------------------------------------------------------------------


def replay_trace(
    cfg: GuardConfig,
    lines,
    trace_log: str | None = None,
    strict: bool = True,
) -> AgentGuard:
    """Reprocess a persisted trace synchronously and return the finished
    engine. Accepts both record lines ({seq, session, ts, state, action,
    next_state, reward?}) and raw instrumentation lines ({kind, ...});
    malformed lines raise TraceFormatError in strict mode and are skipped
    otherwise."""
    guard = AgentGuard(cfg, trace_log=trace_log, synchronous=True).start()
    skipped = 0
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            doc = json.loads(text)
            if isinstance(doc, dict) and "kind" in doc:
                guard.ingest_raw(RawEvent.from_json_dict(doc))
            else:
                rec = TraceRecord.from_json_dict(doc)
                guard.log_transition(
                    rec.state,
                    rec.action,
                    rec.next_state,
                    reward=rec.reward,
                    session=rec.session,
                    ts=rec.ts,
                )
        except (ValueError, TypeError) as err:
            if strict:
                guard.stop()
                raise TraceFormatError(lineno, str(err)) from None
            skipped += 1
            log.warning("skipped trace line %d: %s", lineno, err)
    guard.stop()
    return guard

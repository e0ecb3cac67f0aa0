"""HTTP facade over a running engine.

Every response body is an envelope: ``{"ok": true, "data": ...,
"revision": R}`` on success, ``{"ok": false, "error": {"code",
"message"}, "revision": R}`` on failure, where R is the revision of the
snapshot published by the last analysis cycle (null before the first).

Request bodies are parsed by hand rather than through the framework's
validation layer so malformed input yields a 400 envelope instead of a
framework-shaped 422. Read endpoints never mutate engine state; between
two analysis cycles they return byte-identical bodies.

The stream endpoint speaks server-sent events. Each connection first
receives a snapshot of current state (model_delta, then one result frame
per property, then any unacknowledged alerts), then live frames as
cycles complete, with heartbeats when nothing else flows. Frames are
handed off from the analyzer thread through a per-client queue.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .engine import ActuatorCommand, AgentGuard
from .errors import EngineNotRunning, QueueFull, UnknownCommand
from .model import RESERVED_ACTIONS

log = logging.getLogger("agentguard.api")

MAX_STREAM_CLIENTS = 16
HEARTBEAT_SECONDS = 15.0


def _json_safe(value):
    """Strict JSON cannot carry non-finite numbers; send them as strings
    ("inf", "-inf", "NaN", matching the result serialization) so browser
    clients can parse every payload."""
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "NaN"
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _envelope(guard: AgentGuard, data) -> dict:
    return {"ok": True, "data": _json_safe(data), "revision": guard.revision}


def _error(guard: AgentGuard, status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={
            "ok": False,
            "error": {"code": code, "message": message},
            "revision": guard.revision,
        },
    )


def _parse_transition(doc, index: int) -> dict:
    if not isinstance(doc, dict):
        raise ValueError(f"transitions[{index}]: expected an object")
    known = {"state", "action", "next_state", "reward", "session", "ts"}
    for key in doc:
        if key not in known:
            raise ValueError(f"transitions[{index}]: unknown field {key!r}")
    for key in ("state", "action", "next_state"):
        if not isinstance(doc.get(key), str) or not doc[key]:
            raise ValueError(f"transitions[{index}]: missing or non-string {key}")
    reward = doc.get("reward")
    if reward is not None and (
        isinstance(reward, bool) or not isinstance(reward, (int, float))
    ):
        raise ValueError(f"transitions[{index}]: reward must be a number")
    session = doc.get("session", "default")
    if not isinstance(session, str) or not session:
        raise ValueError(f"transitions[{index}]: session must be a non-empty string")
    ts = doc.get("ts")
    if ts is not None and (isinstance(ts, bool) or not isinstance(ts, (int, float))):
        raise ValueError(f"transitions[{index}]: ts must be a number")
    return {
        "state": doc["state"],
        "action": doc["action"],
        "next_state": doc["next_state"],
        "reward": None if reward is None else float(reward),
        "session": session,
        "ts": None if ts is None else float(ts),
    }


def _sse(frame: dict) -> str:
    body = json.dumps(_json_safe(frame), sort_keys=True, allow_nan=False)
    return f"event: {frame['kind']}\ndata: {body}\n\n"


def create_app(
    guard: AgentGuard,
    heartbeat_seconds: float = HEARTBEAT_SECONDS,
    max_stream_clients: int = MAX_STREAM_CLIENTS,
) -> FastAPI:
    """Build the application serving one engine instance."""
    app = FastAPI(title="agentguard", docs_url=None, redoc_url=None)
    app.state.guard = guard
    app.state.stream_clients = 0

    @app.post("/api/v1/transitions")
    async def post_transitions(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(guard, 400, "bad_request", "body is not valid JSON")
        docs = body if isinstance(body, list) else [body]
        try:
            records = [_parse_transition(doc, i) for i, doc in enumerate(docs)]
        except ValueError as err:
            return _error(guard, 400, "bad_request", str(err))

        # in strict mode reject unknown names up front so a bad batch is
        # refused whole instead of half-applied
        if guard.cfg.learner.mode == "strict":
            states = set(guard.cfg.states)
            actions = set(guard.cfg.actions) | set(RESERVED_ACTIONS)
            for i, rec in enumerate(records):
                for key in ("state", "next_state"):
                    if rec[key] not in states:
                        return _error(
                            guard, 409, "unknown_name",
                            f"transitions[{i}]: unknown state {rec[key]!r}",
                        )
                if rec["action"] not in actions:
                    return _error(
                        guard, 409, "unknown_name",
                        f"transitions[{i}]: unknown action {rec['action']!r}",
                    )

        accepted = 0
        for rec in records:
            try:
                guard.log_transition(
                    rec["state"],
                    rec["action"],
                    rec["next_state"],
                    reward=rec["reward"],
                    session=rec["session"],
                    ts=rec["ts"],
                )
            except QueueFull:
                return _error(
                    guard, 429, "queue_full",
                    f"event queue is full ({accepted} of {len(records)} accepted)",
                )
            except EngineNotRunning:
                return _error(guard, 503, "not_running", "engine is not running")
            accepted += 1
        return JSONResponse(
            status_code=202, content=_envelope(guard, {"accepted": accepted})
        )

    @app.get("/api/v1/model")
    def get_model():
        snap = guard.snapshot()
        if snap is None:
            return _error(
                guard, 503, "no_model", "no analysis cycle has completed yet"
            )
        response = JSONResponse(content=_envelope(guard, snap.to_json_dict()))
        response.headers["X-Model-Revision"] = str(snap.revision)
        return response

    @app.get("/api/v1/results")
    def get_results():
        cycle = guard.cycle
        results = guard.results()
        data = {
            name: {**result.to_json_dict(), "cycle": cycle}
            for name, result in results.items()
        }
        return _envelope(guard, data)

    @app.get("/api/v1/alerts")
    def get_alerts():
        return _envelope(guard, [a.to_json_dict() for a in guard.alerts()])

    @app.get("/api/v1/metrics")
    def get_metrics():
        data = guard.metrics.to_json_dict()
        data["cycle"] = guard.cycle
        data["pending"] = guard.pending()
        data["active_violations"] = guard.active_violations()
        data["paused"] = guard.paused
        data["terminated"] = guard.terminated
        return _envelope(guard, data)

    @app.post("/api/v1/control")
    async def post_control(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(guard, 400, "bad_request", "body is not valid JSON")
        if not isinstance(body, dict) or not isinstance(body.get("command"), str):
            return _error(guard, 400, "bad_request", "missing command")
        known = {"command", "name", "alert_id"}
        unknown = set(body) - known
        if unknown:
            return _error(
                guard, 400, "bad_request", f"unknown field {sorted(unknown)[0]!r}"
            )
        try:
            cmd = ActuatorCommand(
                command=body["command"],
                source="human",
                name=body.get("name"),
                alert_id=body.get("alert_id"),
            )
            entry = guard.dispatch(cmd)
        except UnknownCommand as err:
            return _error(guard, 404, "unknown_command", str(err))
        except ValueError as err:
            return _error(guard, 400, "bad_request", str(err))
        return _envelope(guard, entry.to_json_dict())

    @app.get("/api/v1/stream")
    def get_stream():
        if app.state.stream_clients >= max_stream_clients:
            return _error(
                guard, 503, "too_many_clients",
                f"stream limit of {max_stream_clients} clients reached",
            )
        app.state.stream_clients += 1
        inbox: queue.Queue = queue.Queue()

        def generate():
            guard.add_sink(inbox.put)
            try:
                cycle = guard.cycle
                snap = guard.snapshot()
                if snap is not None:
                    yield _sse(
                        {
                            "kind": "model_delta",
                            "cycle": cycle,
                            "payload": {
                                "revision": snap.revision,
                                "states": len(snap.states),
                                "actions": len(snap.actions),
                                "total_weight": snap.total_weight,
                                "applied": guard.metrics.applied,
                            },
                        }
                    )
                for result in guard.results().values():
                    yield _sse(
                        {
                            "kind": "result",
                            "cycle": cycle,
                            "payload": result.to_json_dict(),
                        }
                    )
                for alert in guard.alerts(newest_first=False):
                    if not alert.acknowledged:
                        yield _sse(
                            {
                                "kind": "alert",
                                "cycle": alert.cycle,
                                "payload": alert.to_json_dict(),
                            }
                        )
                last = time.monotonic()
                while True:
                    wait = heartbeat_seconds - (time.monotonic() - last)
                    if wait <= 0:
                        yield _sse(
                            {
                                "kind": "heartbeat",
                                "cycle": guard.cycle,
                                "payload": {"ts": time.time()},
                            }
                        )
                        last = time.monotonic()
                        continue
                    try:
                        frame = inbox.get(timeout=wait)
                    except queue.Empty:
                        continue
                    yield _sse(frame)
                    last = time.monotonic()
            finally:
                guard.remove_sink(inbox.put)
                app.state.stream_clients -= 1

        return StreamingResponse(generate(), media_type="text/event-stream")

    return app

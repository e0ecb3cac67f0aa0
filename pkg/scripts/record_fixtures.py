#!/usr/bin/env python3
"""Record real API responses as fixtures for the dashboard contract tests.

Drives a guard through a healthy phase and a failing phase, captures each
endpoint's exact JSON, and captures a genuine SSE stream (snapshot prelude
plus one live cycle) from a real server. Output goes to frontend/fixtures.
"""

import json
import os
import sys
import threading
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import httpx
import uvicorn
from fastapi.testclient import TestClient

from agentguard.api import create_app
from agentguard.config import load_config_file
from agentguard.engine import AgentGuard

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "..", "configs", "repairagent.yaml")
OUT = os.path.join(HERE, "..", "frontend", "fixtures")

EPISODE = [
    ("understand_bug", "express_hypothesis", "collect_information"),
    ("collect_information", "search_code_base", "try_to_fix"),
    ("try_to_fix", "write_fix", "try_to_fix"),
    ("try_to_fix", "run_tests", "fix_success"),
]
FAILURE = ("try_to_fix", "run_tests", "fix_failed")


def save(name: str, doc) -> None:
    path = os.path.join(OUT, name)
    with open(path, "w", encoding="utf-8") as fh:
        if isinstance(doc, str):
            fh.write(doc)
        else:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"wrote {os.path.relpath(path)}")


def capture_stream(guard) -> str:
    """Read the snapshot prelude and one live cycle from a real server."""
    app = create_app(guard, heartbeat_seconds=30.0)
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]

    chunks = []
    with httpx.Client(timeout=10) as http:
        url = f"http://127.0.0.1:{port}/api/v1/stream"
        with http.stream("GET", url) as resp:
            lines = resp.iter_lines()
            frames = 0
            fed = False
            for line in lines:
                chunks.append(line + "\n")
                if line.startswith("data: "):
                    frames += 1
                # prelude: model_delta + 3 results + 1 alert = 5 frames
                if frames == 5 and not fed:
                    fed = True
                    for _ in range(25):
                        guard.log_transition(*FAILURE)
                # one live cycle: 1 model_delta + 3 results = 4 more;
                # stop on the blank terminator so the capture ends "\\n\\n"
                if frames >= 9 and line == "":
                    break
    server.should_exit = True
    thread.join(timeout=10)
    return "".join(chunks)


def main() -> None:
    os.makedirs(OUT, exist_ok=True)

    # a guard that has never completed a cycle: the unavailable envelope
    cold = AgentGuard(load_config_file(CONFIG), synchronous=True).start()
    with TestClient(create_app(cold)) as client:
        resp = client.get("/api/v1/model")
        assert resp.status_code == 503
        save("model_unavailable.json", resp.json())
    cold.stop()

    guard = AgentGuard(load_config_file(CONFIG), synchronous=True).start()
    with TestClient(create_app(guard)) as client:
        # healthy phase: repeated successful episodes
        for _ in range(10):
            for state, action, next_state in EPISODE:
                guard.log_transition(state, action, next_state)
        save("model.json", client.get("/api/v1/model").json())
        save("results_healthy.json", client.get("/api/v1/results").json())

        # failing phase: only regressions until the threshold breaks
        for _ in range(85):
            guard.log_transition(*FAILURE)
        assert guard.alerts(), "expected the failing phase to raise an alert"
        save("results_violated.json", client.get("/api/v1/results").json())
        save("alerts.json", client.get("/api/v1/alerts").json())

        save("stream.sse", capture_stream(guard))

        alert_id = guard.alerts()[0].id
        resp = client.post(
            "/api/v1/control", json={"command": "acknowledge", "alert_id": alert_id}
        )
        assert resp.status_code == 200
        save("control_ack.json", resp.json())
        save("alerts_acked.json", client.get("/api/v1/alerts").json())

        resp = client.post("/api/v1/control", json={"command": "reboot"})
        assert resp.status_code == 400
        save("control_error.json", resp.json())
    guard.stop()


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Drift demo: watch the learned success probability collapse.

Simulates a repair agent that stops being able to fix anything after
transition 300, feeds the trace through a live guard, and prints the
per-cycle verification values until the alert fires.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from agentguard.config import load_config_file
from agentguard.engine import AgentGuard
from agentguard.simulator import generate_trace, load_scenario_file

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(HERE, "..", "configs")


def main() -> int:
    cfg = load_config_file(os.path.join(CONFIGS, "drift_demo.yaml"))
    scenario = load_scenario_file(os.path.join(CONFIGS, "drift_sim.yaml"))

    guard = AgentGuard(cfg, synchronous=True)
    guard.register_actuator(
        "halt_agent",
        lambda cmd, alert: print(f"  >> actuator: halting agent (alert {alert.id})"),
    )
    guard.add_sink(
        lambda frame: print(
            f"  cycle {frame['cycle']:3d}  "
            f"{frame['payload']['property']} = {frame['payload']['value']:.6f}"
        )
        if frame["kind"] == "result"
        else None
    )

    print("feeding 400 transitions, drift at 300 ...")
    with guard:
        for event in generate_trace(scenario, 400):
            guard.ingest_raw(event)

    print()
    for alert in guard.alerts(newest_first=False):
        print(
            f"alert {alert.id}: {alert.property} = {alert.value:.6f} "
            f"violates {alert.threshold_op} {alert.threshold_value} "
            f"(cycle {alert.cycle}, severity {alert.severity})"
        )
    print(f"active violations at exit: {guard.active_violations()}")
    return 4 if guard.active_violations() else 0


if __name__ == "__main__":
    sys.exit(main())

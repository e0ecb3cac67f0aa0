"""Command line entry points.

Exit codes: 0 success, 1 usage error, 2 invalid config or formula,
3 runtime failure, 4 a property threshold was violated at exit.

Environment: AGENTGUARD_LOG sets the log level (default INFO),
AGENTGUARD_LISTEN overrides --listen for the run command.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .checker import CheckSettings, check
from .config import load_config_file
from .engine import AgentGuard, replay_trace
from .errors import (
    AgentGuardError,
    BoundError,
    ConfigError,
    InvalidScenario,
    ModeMismatch,
    PropertySyntaxError,
    ThresholdError,
    UnknownLabel,
    UnknownRewardStructure,
)
from .model import ModelSnapshot
from .pctl import parse_property, validate_names
from .prism import import_prism
from .simulator import generate_trace, load_scenario_file

log = logging.getLogger("agentguard.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_VIOLATION = 4

DEFAULT_LISTEN = "127.0.0.1:8000"

_FORMULA_ERRORS = (
    PropertySyntaxError,
    BoundError,
    ThresholdError,
    UnknownLabel,
    UnknownRewardStructure,
    ModeMismatch,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage problems exit 1, not argparse's default 2."""

    def error(self, message):
        raise _UsageError(message)


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _nonnegative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("events must be >= 0")
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="agentguard", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="observe a live agent and serve the API")
    run.add_argument("--config", required=True, help="guard config yaml")
    run.add_argument("--listen", default=None, help="addr:port (default loopback)")
    run.add_argument("--trace-log", default=None, help="append accepted events here")

    replay = sub.add_parser("replay", help="rebuild a model from a recorded trace")
    replay.add_argument("--config", required=True, help="guard config yaml")
    replay.add_argument("--trace", required=True, help="jsonl trace to reprocess")
    replay.add_argument("--emit-prism", default=None, help="write the model here")

    chk = sub.add_parser("check", help="check one property against a saved model")
    chk.add_argument("--model", required=True, help="snapshot json or prism file")
    chk.add_argument("--property", required=True, help="formula to evaluate")
    chk.add_argument("--epsilon", type=float, default=None, help="convergence bound")

    sim = sub.add_parser("simulate", help="emit synthetic raw events as jsonl")
    sim.add_argument("--scenario", required=True, help="scenario yaml")
    sim.add_argument("--events", required=True, type=_nonnegative)
    sim.add_argument("--seed", type=_u64, default=None, help="override scenario seed")
    return parser


def _parse_listen(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise _UsageError(f"listen address must be host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise _UsageError(f"invalid port in {text!r}") from None


def _load_model(path: str) -> ModelSnapshot:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".prism"):
        return import_prism(text)
    doc = json.loads(text)
    if isinstance(doc, dict) and "ok" in doc and "data" in doc:
        doc = doc["data"]  # accept a saved /api/v1/model response as-is
    return ModelSnapshot.from_json_dict(doc)


def cmd_run(args) -> int:
    import uvicorn

    from .api import create_app

    cfg = load_config_file(args.config)
    listen = os.environ.get("AGENTGUARD_LISTEN") or args.listen or DEFAULT_LISTEN
    host, port = _parse_listen(listen)
    guard = AgentGuard(cfg, trace_log=args.trace_log).start()
    try:
        app = create_app(guard)
        server = uvicorn.Server(
            uvicorn.Config(app, host=host, port=port, log_level="warning")
        )
        log.info("listening on http://%s:%d", host, port)
        try:
            server.run()
        except KeyboardInterrupt:
            pass  # the server re-raises the signal after a graceful stop
    finally:
        guard.stop()
    if guard.active_violations():
        log.warning("violations at exit: %s", ", ".join(guard.active_violations()))
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = load_config_file(args.config)
    with open(args.trace, encoding="utf-8") as fh:
        guard = replay_trace(cfg, fh)
    m = guard.metrics
    print(
        f"applied {m.applied} events in {m.cycles} cycles"
        f" ({m.dropped_name_errors} dropped, revision {guard.revision})"
    )
    for name, result in guard.results().items():
        line = f"{name}: value={result.value}"
        if result.satisfied is not None:
            line += f" satisfied={result.satisfied}"
        if result.error is not None:
            line += f" error={result.error!r}"
        print(line)
    violations = guard.active_violations()
    print(f"alerts: {len(guard.alerts())} active violations: {len(violations)}")
    if args.emit_prism:
        with open(args.emit_prism, "w", encoding="utf-8") as fh:
            fh.write(guard.export_model())
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_check(args) -> int:
    prop = parse_property(args.property)
    snap = _load_model(args.model)
    labels = set(snap.labels) | set(snap.states)
    structures = set(snap.reward_structures) | {"steps"}
    validate_names(prop, labels=labels, structures=structures)
    try:
        settings = (
            CheckSettings()
            if args.epsilon is None
            else CheckSettings(epsilon=args.epsilon)
        )
    except ValueError as err:
        raise _UsageError(str(err)) from None
    result = check(snap, prop, settings)
    print(json.dumps(result.to_json_dict(), indent=2, sort_keys=True))
    if result.satisfied is False:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario_file(args.scenario)
    if args.seed is not None:
        import dataclasses

        scenario = dataclasses.replace(scenario, seed=args.seed)
    for event in generate_trace(scenario, args.events):
        print(json.dumps(event.to_json_dict(), sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("AGENTGUARD_LOG", "INFO").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "run": cmd_run,
            "replay": cmd_replay,
            "check": cmd_check,
            "simulate": cmd_simulate,
        }[args.command]
        return handler(args)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InvalidScenario) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except _FORMULA_ERRORS as err:
        print(f"property error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_OK
    except (OSError, ValueError, AgentGuardError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Synthetic trace generation from a ground-truth model.

A scenario fixes the true MDP (policy plus dynamics), an episode shape
and a seed; the generator walks it and emits the raw event stream the
engine ingests. Every sampled transition becomes a tool_call/tool_result
pair whose outcome names the successor state; each episode opens with a
state_decl of the initial state. Event counts refer to sampled
transitions, not raw lines.

Randomness: PCG64, seeded per episode with SeedSequence((seed, episode
index)), consumed only through Generator.random() with inverse-CDF
sampling over distributions in declaration order. The byte stream for a
given (scenario, seed) is frozen in the test fixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from .abstraction import RawEvent
from .errors import InvalidScenario, TerminalState
from .model import NAME_RE, RESERVED_ACTIONS, RewardStructure, TransitionEvent

# distribution = tuple of (outcome, probability), declaration order
Distribution = tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class DriftPoint:
    after_events: int
    policy: dict[str, Distribution]
    dynamics: dict[str, dict[str, Distribution]]


@dataclass(frozen=True)
class Scenario:
    states: tuple[str, ...]
    actions: tuple[str, ...]
    policy: dict[str, Distribution]
    dynamics: dict[str, dict[str, Distribution]]
    initial: str
    terminals: frozenset[str]
    max_steps: int = 1000
    seed: int = 0
    drift: tuple[DriftPoint, ...] = ()
    rewards: RewardStructure | None = None

    def reward_for(self, state: str, action: str, next_state: str) -> float | None:
        if self.rewards is None:
            return None
        return self.rewards.value_for(state, action, next_state)


# -- validation ---------------------------------------------------------------


def _fail(path: str, message: str):
    raise InvalidScenario(path, message)


def _name(value, path, kind="name") -> str:
    if not isinstance(value, str) or not NAME_RE.match(value):
        _fail(path, f"invalid {kind}: {value!r}")
    return value


def _names(doc, path, kind) -> list[str]:
    if not isinstance(doc, list) or not doc:
        _fail(path, "expected a non-empty list")
    out = []
    for i, entry in enumerate(doc):
        if isinstance(entry, dict):
            entry = entry.get("name")
        name = _name(entry, f"{path}[{i}]", kind)
        if name in out:
            _fail(f"{path}[{i}]", f"duplicate {kind} {name!r}")
        out.append(name)
    return out


def _distribution(doc, path, universe, what) -> Distribution:
    if not isinstance(doc, dict) or not doc:
        _fail(path, "expected a non-empty {outcome: probability} mapping")
    items = []
    total = 0.0
    for key, p in doc.items():
        kpath = f"{path}.{key}"
        if key not in universe:
            _fail(kpath, f"undeclared {what} {key!r}")
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            _fail(kpath, f"expected a probability, got {p!r}")
        if not 0.0 < p <= 1.0:
            _fail(kpath, f"probability must be in (0, 1], got {p!r}")
        items.append((key, float(p)))
        total += float(p)
    if abs(total - 1.0) > 1e-12:
        _fail(path, f"probabilities sum to {total!r}, not 1")
    return tuple(items)


def _policy_block(doc, path, states, actions) -> dict[str, Distribution]:
    if not isinstance(doc, dict):
        _fail(path, "expected a {state: distribution} mapping")
    out = {}
    for state, dist in doc.items():
        if state not in states:
            _fail(f"{path}.{state}", f"undeclared state {state!r}")
        out[state] = _distribution(dist, f"{path}.{state}", actions, "action")
    return out


def _dynamics_block(doc, path, states, actions) -> dict[str, dict[str, Distribution]]:
    if not isinstance(doc, dict):
        _fail(path, "expected a {state: {action: distribution}} mapping")
    out: dict[str, dict[str, Distribution]] = {}
    for state, by_action in doc.items():
        spath = f"{path}.{state}"
        if state not in states:
            _fail(spath, f"undeclared state {state!r}")
        if not isinstance(by_action, dict) or not by_action:
            _fail(spath, "expected a non-empty {action: distribution} mapping")
        row = {}
        for action, dist in by_action.items():
            apath = f"{spath}.{action}"
            if action not in actions:
                _fail(apath, f"undeclared action {action!r}")
            row[action] = _distribution(dist, apath, states, "state")
        out[state] = row
    return out


def _check_closure(policy, dynamics, initial, terminals):
    """Every state the walk can reach must either be terminal or fully
    specified, so generation can never strand mid-episode."""
    seen = set()
    frontier = [initial]
    while frontier:
        state = frontier.pop()
        if state in seen or state in terminals:
            continue
        seen.add(state)
        if state not in policy:
            _fail("policy", f"reachable state {state!r} has no action distribution")
        for action, _ in policy[state]:
            if action not in dynamics.get(state, {}):
                _fail(
                    "dynamics",
                    f"policy uses ({state!r}, {action!r}) but no successor "
                    "distribution is declared",
                )
            for succ, _ in dynamics[state][action]:
                if succ not in seen:
                    frontier.append(succ)


def load_scenario(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise InvalidScenario("<document>", f"not valid YAML: {err}") from None
    if not isinstance(doc, dict):
        _fail("<document>", "expected a mapping")
    known = {"states", "actions", "policy", "dynamics", "episode", "seed", "drift", "rewards"}
    for key in doc:
        if key not in known:
            _fail(str(key), "unknown key")

    states = _names(doc.get("states"), "states", "state name")
    actions = _names(doc.get("actions"), "actions", "action name")
    for i, a in enumerate(actions):
        if a in RESERVED_ACTIONS:
            _fail(f"actions[{i}]", f"{a!r} is reserved")
    state_set, action_set = set(states), set(actions)

    policy = _policy_block(doc.get("policy", {}), "policy", state_set, action_set)
    dynamics = _dynamics_block(doc.get("dynamics", {}), "dynamics", state_set, action_set)

    episode = doc.get("episode")
    if not isinstance(episode, dict):
        _fail("episode", "expected an {initial, terminals, max_steps} mapping")
    for key in episode:
        if key not in {"initial", "terminals", "max_steps"}:
            _fail(f"episode.{key}", "unknown key")
    initial = episode.get("initial")
    if initial not in state_set:
        _fail("episode.initial", f"undeclared state {initial!r}")
    terminals = set()
    for i, t in enumerate(episode.get("terminals", []) or []):
        if t not in state_set:
            _fail(f"episode.terminals[{i}]", f"undeclared state {t!r}")
        terminals.add(t)
    if initial in terminals:
        _fail("episode.initial", "initial state cannot be terminal")
    max_steps = episode.get("max_steps", 1000)
    if isinstance(max_steps, bool) or not isinstance(max_steps, int) or max_steps < 1:
        _fail("episode.max_steps", f"expected a positive integer, got {max_steps!r}")

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        _fail("seed", f"expected an unsigned 64-bit integer, got {seed!r}")

    drift = []
    last = 0
    for i, entry in enumerate(doc.get("drift", []) or []):
        path = f"drift[{i}]"
        if not isinstance(entry, dict) or set(entry) - {"after_events", "patch"}:
            _fail(path, "expected an {after_events, patch} mapping")
        after = entry.get("after_events")
        if isinstance(after, bool) or not isinstance(after, int) or after < 1:
            _fail(f"{path}.after_events", f"expected a positive integer, got {after!r}")
        if after <= last:
            _fail(f"{path}.after_events", "drift points must be strictly increasing")
        last = after
        patch = entry.get("patch") or {}
        if not isinstance(patch, dict) or set(patch) - {"policy", "dynamics"}:
            _fail(f"{path}.patch", "expected a {policy, dynamics} mapping")
        drift.append(
            DriftPoint(
                after_events=after,
                policy=_policy_block(
                    patch.get("policy", {}), f"{path}.patch.policy", state_set, action_set
                ),
                dynamics=_dynamics_block(
                    patch.get("dynamics", {}), f"{path}.patch.dynamics", state_set, action_set
                ),
            )
        )

    rewards = None
    if "rewards" in doc:
        overrides = []
        entries = doc["rewards"]
        if not isinstance(entries, list):
            _fail("rewards", "expected a list of override patterns")
        for i, o in enumerate(entries):
            path = f"rewards[{i}]"
            if not isinstance(o, dict) or set(o) - {"state", "action", "next_state", "value"}:
                _fail(path, "expected a {state?, action?, next_state?, value} mapping")
            pattern = []
            for key, pool in (("state", state_set), ("action", action_set),
                              ("next_state", state_set)):
                value = o.get(key)
                if value is not None and value not in pool:
                    _fail(f"{path}.{key}", f"undeclared {key} {value!r}")
                pattern.append(value)
            v = o.get("value")
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                _fail(f"{path}.value", f"expected a finite number, got {v!r}")
            overrides.append((tuple(pattern), float(v)))
        try:
            rewards = RewardStructure("observed", 0.0, tuple(overrides))
        except ValueError as err:
            _fail("rewards", str(err))

    scenario = Scenario(
        states=tuple(states),
        actions=tuple(actions),
        policy=policy,
        dynamics=dynamics,
        initial=initial,
        terminals=frozenset(terminals),
        max_steps=max_steps,
        seed=seed,
        drift=tuple(drift),
        rewards=rewards,
    )
    # the undrifted tables must cover the walk; each patch must keep it so
    _check_closure(policy, dynamics, initial, scenario.terminals)
    current_p, current_d = policy, dynamics
    for point in scenario.drift:
        current_p, current_d = _patched(current_p, current_d, point)
        _check_closure(current_p, current_d, initial, scenario.terminals)
    return scenario


def load_scenario_file(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise InvalidScenario(str(path), f"cannot read scenario: {err}") from None
    return load_scenario(text)


# -- sampling -----------------------------------------------------------------


def _sample(rng, dist: Distribution) -> str:
    u = rng.random()
    acc = 0.0
    for key, p in dist:
        acc += p
        if u < acc:
            return key
    return dist[-1][0]


def _patched(policy, dynamics, point: DriftPoint):
    new_policy = {**policy, **point.policy}
    new_dynamics = dict(dynamics)
    for state, row in point.dynamics.items():
        new_dynamics[state] = {**new_dynamics.get(state, {}), **row}
    return new_policy, new_dynamics


def _episode_rng(seed: int, episode: int):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, episode))))


def step(sc: Scenario, rng, current: str, policy=None, dynamics=None):
    """Sample one transition from ``current``; returns (event, rng) with the
    generator advanced. ``policy``/``dynamics`` default to the undrifted
    tables."""
    if current in sc.terminals:
        raise TerminalState(current)
    policy = sc.policy if policy is None else policy
    dynamics = sc.dynamics if dynamics is None else dynamics
    action = _sample(rng, policy[current])
    succ = _sample(rng, dynamics[current][action])
    event = TransitionEvent(
        state=current,
        action=action,
        next_state=succ,
        reward=sc.reward_for(current, action, succ),
    )
    return event, rng


def generate_trace(sc: Scenario, n_events: int):
    """Yield the raw event stream for ``n_events`` sampled transitions.

    Episodes restart at the initial state after a terminal or after
    max_steps; each restart emits a state_decl marker and moves to the
    next per-episode random stream. Drift patches activate before the
    first transition whose index reaches their after_events."""
    if n_events < 0:
        raise InvalidScenario("n_events", f"must be >= 0, got {n_events}")
    emitted = 0
    line = 0
    episode = 0
    policy, dynamics = sc.policy, sc.dynamics
    pending_drift = list(sc.drift)
    while emitted < n_events:
        rng = _episode_rng(sc.seed, episode)
        current = sc.initial
        steps = 0
        yield RawEvent(kind="state_decl", declared_state=current, ts=float(line))
        line += 1
        while emitted < n_events and current not in sc.terminals and steps < sc.max_steps:
            while pending_drift and pending_drift[0].after_events <= emitted:
                policy, dynamics = _patched(policy, dynamics, pending_drift.pop(0))
            ev, rng = step(sc, rng, current, policy, dynamics)
            yield RawEvent(kind="tool_call", tool=ev.action, ts=float(line))
            line += 1
            yield RawEvent(
                kind="tool_result", tool=ev.action, outcome=ev.next_state, ts=float(line)
            )
            line += 1
            current = ev.next_state
            emitted += 1
            steps += 1
        episode += 1

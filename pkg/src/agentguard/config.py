"""Configuration loading and validation.

A config file declares the discrete state model (states, actions, labels),
how raw instrumentation maps onto it (outcomes, action labels, terminal
states), the reward structures, the properties to watch with optional
alert thresholds, and learner/checker/engine settings. Validation errors
carry the YAML path of the offending entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .checker import CheckSettings
from .errors import (
    BoundError,
    ConfigError,
    ModeMismatch,
    PropertySyntaxError,
    ThresholdError,
    UnknownLabel,
    UnknownRewardStructure,
)
from .model import NAME_RE, RESERVED_ACTIONS, RewardStructure
from .pctl import DEFAULT_REWARD_STRUCTURE, Property, parse_property, validate_names

SEVERITIES = ("info", "warn", "critical")
QUEUE_POLICIES = ("block", "drop_oldest", "reject")
THRESHOLD_OPS = (">=", ">", "<=", "<")

# Structures that exist without being declared: "steps" counts transitions,
# "observed" aggregates rewards carried on events.
BUILTIN_STRUCTURES = (DEFAULT_REWARD_STRUCTURE, "observed")


@dataclass(frozen=True)
class PropertySpec:
    name: str
    property: Property
    threshold_op: str | None = None
    threshold_value: float | None = None
    on_violation: str | None = None
    severity: str = "warn"

    @property
    def formula(self) -> str:
        return str(self.property)

    @property
    def has_threshold(self) -> bool:
        return self.threshold_op is not None or self.property.is_bound


@dataclass(frozen=True)
class DecaySettings:
    lam: float
    every: int


@dataclass(frozen=True)
class LearnerSettings:
    mode: str = "strict"
    smoothing_alpha: float = 0.0
    decay: DecaySettings | None = None
    prune_epsilon: float = 1e-9


@dataclass(frozen=True)
class AnalysisSettings:
    every_events: int = 25
    also_every_ms: int | None = None


@dataclass(frozen=True)
class QueueSettings:
    capacity: int = 10_000
    policy: str = "block"


@dataclass(frozen=True)
class GuardConfig:
    states: tuple[str, ...]
    actions: tuple[str, ...]
    initial: str
    state_labels: dict[str, tuple[str, ...]] = field(default_factory=dict)
    terminal: frozenset[str] = frozenset()
    action_labels: dict[str, str] = field(default_factory=dict)
    rewards: tuple[RewardStructure, ...] = ()
    properties: tuple[PropertySpec, ...] = ()
    learner: LearnerSettings = LearnerSettings()
    checker: CheckSettings = CheckSettings()
    checker_mode: str = "both"
    analysis: AnalysisSettings = AnalysisSettings()
    queue: QueueSettings = QueueSettings()
    outcomes: dict[str, str] = field(default_factory=dict)
    tool_outcomes: dict[str, dict[str, str]] = field(default_factory=dict)
    other_state: str = "__other__"

    @property
    def label_names(self) -> set[str]:
        names = set(self.states)
        for labels in self.state_labels.values():
            names.update(labels)
        names.update(self.action_labels.values())
        return names

    def make_learner(self):
        from .model import LearnedMdp

        labels: dict[str, set[str]] = {}
        for state, names in self.state_labels.items():
            for label in names:
                labels.setdefault(label, set()).add(state)
        structures = list(self.rewards)
        if not any(rs.name == DEFAULT_REWARD_STRUCTURE for rs in structures):
            structures.append(RewardStructure(DEFAULT_REWARD_STRUCTURE, per_step=1.0))
        return LearnedMdp(
            states=self.states,
            actions=self.actions,
            initial=self.initial,
            labels=labels,
            reward_structures=structures,
            mode=self.learner.mode,
            smoothing_alpha=self.learner.smoothing_alpha,
            prune_epsilon=self.learner.prune_epsilon,
        )


# -- validation helpers -------------------------------------------------------


def _want(doc, path, types, type_name):
    if not isinstance(doc, types):
        raise ConfigError(path, f"expected {type_name}, got {type(doc).__name__}")
    return doc


def _name(value, path, kind="name") -> str:
    if not isinstance(value, str) or not NAME_RE.match(value):
        raise ConfigError(path, f"invalid {kind}: {value!r}")
    return value


def _number(value, path, lo=None, hi=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(path, f"must be <= {hi}, got {value!r}")
    return int(value) if integer else float(value)


def _choice(value, path, options):
    if value not in options:
        raise ConfigError(path, f"expected one of {', '.join(options)}, got {value!r}")
    return value


def _known_keys(doc, path, keys):
    for key in doc:
        if key not in keys:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")


def _parse_states(doc):
    states: list[str] = []
    state_labels: dict[str, tuple[str, ...]] = {}
    entries = _want(doc, "states", list, "a list")
    if not entries:
        raise ConfigError("states", "at least one state is required")
    for i, entry in enumerate(entries):
        path = f"states[{i}]"
        if isinstance(entry, str):
            name, labels = entry, []
        else:
            _want(entry, path, dict, "a name or {name, labels} mapping")
            _known_keys(entry, path, {"name", "labels"})
            name = entry.get("name")
            labels = entry.get("labels", [])
            _want(labels, f"{path}.labels", list, "a list")
        name = _name(name, f"{path}.name", "state name")
        if name in states:
            raise ConfigError(f"{path}.name", f"duplicate state {name!r}")
        states.append(name)
        if labels:
            state_labels[name] = tuple(
                _name(l, f"{path}.labels[{j}]", "label") for j, l in enumerate(labels)
            )
    return states, state_labels


def _parse_rewards(doc, states, actions, strict):
    out = []
    names = set()
    for i, entry in enumerate(_want(doc, "rewards", list, "a list")):
        path = f"rewards[{i}]"
        _want(entry, path, dict, "a mapping")
        _known_keys(entry, path, {"name", "per_step", "overrides"})
        name = _name(entry.get("name"), f"{path}.name", "reward structure name")
        if name in names:
            raise ConfigError(f"{path}.name", f"duplicate reward structure {name!r}")
        if name == "observed":
            raise ConfigError(f"{path}.name", "'observed' is reserved for event rewards")
        names.add(name)
        per_step = _number(entry.get("per_step", 0.0), f"{path}.per_step")
        overrides = []
        for j, o in enumerate(entry.get("overrides", []) or []):
            opath = f"{path}.overrides[{j}]"
            _want(o, opath, dict, "a mapping")
            _known_keys(o, opath, {"state", "action", "next_state", "value"})
            pattern = []
            for key, pool in (("state", states), ("action", actions), ("next_state", states)):
                value = o.get(key)
                if value is not None:
                    value = _name(value, f"{opath}.{key}", key)
                    if strict and value not in pool:
                        raise ConfigError(f"{opath}.{key}", f"undeclared {key} {value!r}")
                pattern.append(value)
            if "value" not in o:
                raise ConfigError(f"{opath}.value", "missing reward value")
            overrides.append((tuple(pattern), _number(o["value"], f"{opath}.value")))
        try:
            out.append(RewardStructure(name, per_step, tuple(overrides)))
        except ValueError as err:
            raise ConfigError(path, str(err)) from None
    return tuple(out)


def _parse_properties(doc, label_names, structure_names, checker_mode):
    out = []
    names = set()
    for i, entry in enumerate(_want(doc, "properties", list, "a list")):
        path = f"properties[{i}]"
        _want(entry, path, dict, "a mapping")
        _known_keys(
            entry, path, {"name", "formula", "threshold", "on_violation", "severity"}
        )
        name = _name(entry.get("name"), f"{path}.name", "property name")
        if name in names:
            raise ConfigError(f"{path}.name", f"duplicate property {name!r}")
        names.add(name)
        formula = entry.get("formula")
        if not isinstance(formula, str):
            raise ConfigError(f"{path}.formula", "missing formula string")
        try:
            prop = parse_property(formula)
            validate_names(prop, label_names, structure_names, checker_mode)
        except (PropertySyntaxError, BoundError, ThresholdError, UnknownLabel,
                UnknownRewardStructure, ModeMismatch) as err:
            raise ConfigError(f"{path}.formula", str(err)) from None
        prop = prop.named(name)

        threshold_op = threshold_value = None
        if "threshold" in entry:
            tpath = f"{path}.threshold"
            t = _want(entry["threshold"], tpath, dict, "an {op, value} mapping")
            _known_keys(t, tpath, {"op", "value"})
            if prop.is_bound:
                raise ConfigError(
                    tpath, "formula already carries a bound; drop one of the two"
                )
            threshold_op = _choice(t.get("op"), f"{tpath}.op", THRESHOLD_OPS)
            if prop.is_reward:
                threshold_value = _number(t.get("value"), f"{tpath}.value", lo=0.0)
            else:
                threshold_value = _number(
                    t.get("value"), f"{tpath}.value", lo=0.0, hi=1.0
                )
        severity = _choice(entry.get("severity", "warn"), f"{path}.severity", SEVERITIES)
        on_violation = entry.get("on_violation")
        if on_violation is not None:
            on_violation = _name(on_violation, f"{path}.on_violation", "callback name")
        out.append(
            PropertySpec(
                name=name,
                property=prop,
                threshold_op=threshold_op,
                threshold_value=threshold_value,
                on_violation=on_violation,
                severity=severity,
            )
        )
    return tuple(out)


def _parse_outcome_map(doc, path, states, strict):
    out = {}
    _want(doc, path, dict, "a mapping")
    for outcome, state in doc.items():
        opath = f"{path}.{outcome}"
        _name(outcome, opath, "outcome")
        state = _name(state, opath, "state name")
        if strict and state not in states:
            raise ConfigError(opath, f"undeclared state {state!r}")
        out[outcome] = state
    return out


TOP_LEVEL_KEYS = {
    "states", "actions", "initial", "terminal", "action_labels", "rewards",
    "properties", "learner", "checker", "analysis", "queue", "outcomes",
    "tool_outcomes", "other_state",
}


def load_config(text: str) -> GuardConfig:
    """Parse and validate a YAML config; raises ConfigError with the YAML
    path of the first offending entry."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError("<document>", f"not valid YAML: {err}") from None
    if doc is None:
        doc = {}
    _want(doc, "<document>", dict, "a mapping")
    _known_keys(doc, "", TOP_LEVEL_KEYS)

    states, state_labels = _parse_states(doc.get("states", []))

    actions = []
    for i, entry in enumerate(_want(doc.get("actions", []), "actions", list, "a list")):
        name = _name(entry, f"actions[{i}]", "action name")
        if name in RESERVED_ACTIONS:
            raise ConfigError(f"actions[{i}]", f"{name!r} is reserved")
        if name in actions:
            raise ConfigError(f"actions[{i}]", f"duplicate action {name!r}")
        actions.append(name)

    initial = doc.get("initial")
    if initial is None:
        raise ConfigError("initial", "missing initial state")
    if initial not in states:
        raise ConfigError("initial", f"undeclared state {initial!r}")

    terminal = set()
    for i, name in enumerate(
        _want(doc.get("terminal", []), "terminal", list, "a list")
    ):
        if name not in states:
            raise ConfigError(f"terminal[{i}]", f"undeclared state {name!r}")
        terminal.add(name)

    action_labels = {}
    for action, label in _want(
        doc.get("action_labels", {}), "action_labels", dict, "a mapping"
    ).items():
        path = f"action_labels.{action}"
        if action not in actions:
            raise ConfigError(path, f"undeclared action {action!r}")
        action_labels[action] = _name(label, path, "label")

    # learner settings come before rewards/outcomes: strictness gates how
    # hard undeclared names fail
    learner_doc = _want(doc.get("learner", {}), "learner", dict, "a mapping")
    _known_keys(learner_doc, "learner", {"mode", "smoothing_alpha", "decay", "prune_epsilon"})
    mode = _choice(learner_doc.get("mode", "strict"), "learner.mode", ("strict", "open"))
    decay = None
    if "decay" in learner_doc and learner_doc["decay"] is not None:
        d = _want(learner_doc["decay"], "learner.decay", dict, "a mapping")
        _known_keys(d, "learner.decay", {"lambda", "every"})
        lam = _number(d.get("lambda"), "learner.decay.lambda", lo=0.0, hi=1.0)
        if lam == 0.0:
            raise ConfigError("learner.decay.lambda", "must be in (0, 1]")
        decay = DecaySettings(
            lam=lam, every=_number(d.get("every", 100), "learner.decay.every", lo=1, integer=True)
        )
    learner = LearnerSettings(
        mode=mode,
        smoothing_alpha=_number(
            learner_doc.get("smoothing_alpha", 0.0), "learner.smoothing_alpha", lo=0.0
        ),
        decay=decay,
        prune_epsilon=_number(
            learner_doc.get("prune_epsilon", 1e-9), "learner.prune_epsilon", lo=0.0
        ),
    )
    strict = learner.mode == "strict"

    rewards = _parse_rewards(doc.get("rewards", []), states, actions, strict)

    checker_doc = _want(doc.get("checker", {}), "checker", dict, "a mapping")
    _known_keys(checker_doc, "checker", {"epsilon", "max_iterations", "gamma", "mode"})
    checker_mode = _choice(
        checker_doc.get("mode", "both"), "checker.mode", ("mdp", "dtmc", "both")
    )
    try:
        checker = CheckSettings(
            epsilon=_number(checker_doc.get("epsilon", 1e-8), "checker.epsilon"),
            max_iterations=_number(
                checker_doc.get("max_iterations", 100_000),
                "checker.max_iterations",
                lo=1,
                integer=True,
            ),
            gamma=_number(checker_doc.get("gamma", 1.0), "checker.gamma"),
        )
    except ValueError as err:
        raise ConfigError("checker", str(err)) from None

    label_names = set(states)
    for labels in state_labels.values():
        label_names.update(labels)
    label_names.update(action_labels.values())
    structure_names = {rs.name for rs in rewards} | set(BUILTIN_STRUCTURES)
    properties = _parse_properties(
        doc.get("properties", []), label_names, structure_names, checker_mode
    )

    analysis_doc = _want(doc.get("analysis", {}), "analysis", dict, "a mapping")
    _known_keys(analysis_doc, "analysis", {"every_events", "also_every_ms"})
    also_every_ms = analysis_doc.get("also_every_ms")
    if also_every_ms is not None:
        also_every_ms = _number(also_every_ms, "analysis.also_every_ms", lo=1, integer=True)
    analysis = AnalysisSettings(
        every_events=_number(
            analysis_doc.get("every_events", 25), "analysis.every_events", lo=1, integer=True
        ),
        also_every_ms=also_every_ms,
    )

    queue_doc = _want(doc.get("queue", {}), "queue", dict, "a mapping")
    _known_keys(queue_doc, "queue", {"capacity", "policy"})
    queue = QueueSettings(
        capacity=_number(queue_doc.get("capacity", 10_000), "queue.capacity", lo=1, integer=True),
        policy=_choice(queue_doc.get("policy", "block"), "queue.policy", QUEUE_POLICIES),
    )

    outcomes = _parse_outcome_map(doc.get("outcomes", {}), "outcomes", states, strict)
    tool_outcomes = {}
    for tool, mapping in _want(
        doc.get("tool_outcomes", {}), "tool_outcomes", dict, "a mapping"
    ).items():
        path = f"tool_outcomes.{tool}"
        if tool not in actions:
            raise ConfigError(path, f"undeclared action {tool!r}")
        tool_outcomes[tool] = _parse_outcome_map(mapping, path, states, strict)

    other_state = _name(
        doc.get("other_state", "__other__"), "other_state", "state name"
    )

    return GuardConfig(
        states=tuple(states),
        actions=tuple(actions),
        initial=initial,
        state_labels=state_labels,
        terminal=frozenset(terminal),
        action_labels=action_labels,
        rewards=rewards,
        properties=properties,
        learner=learner,
        checker=checker,
        checker_mode=checker_mode,
        analysis=analysis,
        queue=queue,
        outcomes=outcomes,
        tool_outcomes=tool_outcomes,
        other_state=other_state,
    )


def load_config_file(path: str) -> GuardConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(str(path), f"cannot read config: {err}") from None
    return load_config(text)

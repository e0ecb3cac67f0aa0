"""Online-learned MDP model and its immutable snapshots.

The learner keeps exact transition counts per (state, action, next_state)
triple. Weights are doubles: with forgetting disabled they stay exact
integers (up to 2**53 events), with forgetting enabled they decay
geometrically. Probabilities are always derived, never stored, so a
snapshot can expose them as exact count ratios.

Concurrency contract: a ``LearnedMdp`` has a single writer (the analyzer
loop). ``ModelSnapshot`` values are immutable and may be read from any
number of threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import (
    InvalidDecay,
    NeverObserved,
    UnknownAction,
    UnknownLabel,
    UnknownState,
)

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# Synthetic action names: __self__ marks absorbing self-loops added at check
# or export time, __goto__ carries declared-state jumps from the abstractor,
# __policy__ is the single action of a policy-induced chain. None of them
# count as real agent choices.
SELF_LOOP_ACTION = "__self__"
GOTO_ACTION = "__goto__"
POLICY_ACTION = "__policy__"
RESERVED_ACTIONS = frozenset({SELF_LOOP_ACTION, GOTO_ACTION, POLICY_ACTION})

OBSERVED_REWARDS = "observed"


def check_name(name: str, kind: str) -> str:
    if not isinstance(name, str) or not NAME_RE.match(name):
        raise (UnknownState if kind == "state" else UnknownAction)(
            f"{name} (not a valid identifier)"
        )
    return name


@dataclass(frozen=True)
class TransitionEvent:
    """One abstracted observation: the agent took ``action`` in ``state``
    and ended up in ``next_state``."""

    state: str
    action: str
    next_state: str
    reward: float | None = None
    timestamp: float | None = None


# An override pattern is (state, action, next_state) with None as wildcard.
Pattern = tuple[str | None, str | None, str | None]


@dataclass(frozen=True)
class RewardStructure:
    """Named reward assignment: ``per_step`` on every transition unless a
    more specific override pattern matches.

    Specificity is the number of bound fields, tie-broken by preferring
    state over action over next_state; two distinct patterns of equal
    specificity can never match the same transition.
    """

    name: str
    per_step: float = 0.0
    overrides: tuple[tuple[Pattern, float], ...] = ()

    def __post_init__(self):
        seen = set()
        for pattern, value in self.overrides:
            if pattern in seen:
                raise ValueError(f"duplicate reward override pattern {pattern}")
            seen.add(pattern)
            if not _finite(value):
                raise ValueError(f"reward override {pattern} is not finite")
        if not _finite(self.per_step):
            raise ValueError("per_step reward is not finite")

    def value_for(self, state: str, action: str, next_state: str) -> float:
        best_score = -1
        best = self.per_step
        for (ps, pa, pt), value in self.overrides:
            if ps is not None and ps != state:
                continue
            if pa is not None and pa != action:
                continue
            if pt is not None and pt != next_state:
                continue
            score = 4 * (ps is not None) + 2 * (pa is not None) + (pt is not None)
            if score > best_score:
                best_score = score
                best = value
        return best


def _finite(x: float) -> bool:
    return x == x and x not in (float("inf"), float("-inf"))


class LearnedMdp:
    """Incrementally learned MDP: states, actions, counts and labels.

    In strict mode every event must reference declared states/actions; in
    open mode unknown names are auto-registered in first-seen order.
    """

    def __init__(
        self,
        states: list[str] | tuple[str, ...] = (),
        actions: list[str] | tuple[str, ...] = (),
        initial: str | None = None,
        labels: dict[str, set[str]] | None = None,
        reward_structures: list[RewardStructure] | tuple[RewardStructure, ...] = (),
        mode: str = "open",
        smoothing_alpha: float = 0.0,
        prune_epsilon: float = 1e-9,
    ):
        if mode not in ("strict", "open"):
            raise ValueError(f"mode must be 'strict' or 'open', got {mode!r}")
        self._states: list[str] = []
        self._state_index: dict[str, int] = {}
        self._actions: list[str] = []
        self._action_index: dict[str, int] = {}
        self.mode = mode
        self.smoothing_alpha = float(smoothing_alpha)
        self.prune_epsilon = float(prune_epsilon)
        self.revision = 0
        # (si, ai, ti) -> weight
        self._counts: dict[tuple[int, int, int], float] = {}
        # (si, ai) -> weight, kept equal to the exact sum of the triples
        self._action_counts: dict[tuple[int, int], float] = {}
        # reward observation accumulators: (si, ai, ti) -> (sum, n)
        self._reward_obs: dict[tuple[int, int, int], tuple[float, int]] = {}
        self._labels: dict[str, set[str]] = {}
        self._structures: dict[str, RewardStructure] = {}

        for name in states:
            self.add_state(name)
        for name in actions:
            self.add_action(name)
        for label, members in (labels or {}).items():
            for s in members:
                self.add_label(label, s)
        for rs in reward_structures:
            self.add_reward_structure(rs)
        self.initial = None
        if initial is not None:
            if initial not in self._state_index:
                raise UnknownState(initial)
            self.initial = initial

    # -- registration -------------------------------------------------

    @property
    def states(self) -> tuple[str, ...]:
        return tuple(self._states)

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(self._actions)

    def add_state(self, name: str) -> int:
        check_name(name, "state")
        if name in self._state_index:
            return self._state_index[name]
        self._states.append(name)
        self._state_index[name] = len(self._states) - 1
        return self._state_index[name]

    def add_action(self, name: str) -> int:
        if name not in RESERVED_ACTIONS:
            check_name(name, "action")
        if name in self._action_index:
            return self._action_index[name]
        self._actions.append(name)
        self._action_index[name] = len(self._actions) - 1
        return self._action_index[name]

    def add_label(self, label: str, state: str) -> None:
        if state not in self._state_index:
            raise UnknownState(state)
        self._labels.setdefault(label, set()).add(state)

    def add_reward_structure(self, rs: RewardStructure) -> None:
        self._structures[rs.name] = rs

    def _resolve_state(self, name: str) -> int:
        idx = self._state_index.get(name)
        if idx is None:
            if self.mode == "strict":
                raise UnknownState(name)
            idx = self.add_state(name)
        return idx

    def _resolve_action(self, name: str) -> int:
        idx = self._action_index.get(name)
        if idx is None:
            if self.mode == "strict" and name not in RESERVED_ACTIONS:
                raise UnknownAction(name)
            idx = self.add_action(name)
        return idx

    # -- learning -----------------------------------------------------

    def record(self, ev: TransitionEvent) -> int:
        """Apply one observation and return the new revision."""
        return self.record_transition(ev.state, ev.action, ev.next_state, ev.reward)

    def record_transition(
        self,
        state: str,
        action: str,
        next_state: str,
        reward: float | None = None,
    ) -> int:
        si = self._resolve_state(state)
        ai = self._resolve_action(action)
        ti = self._resolve_state(next_state)
        key = (si, ai, ti)
        self._counts[key] = self._counts.get(key, 0.0) + 1.0
        sa = (si, ai)
        self._action_counts[sa] = self._action_counts.get(sa, 0.0) + 1.0
        if reward is not None:
            if not _finite(reward):
                raise ValueError(f"reward must be finite, got {reward}")
            total, n = self._reward_obs.get(key, (0.0, 0))
            self._reward_obs[key] = (total + reward, n + 1)
        self.revision += 1
        return self.revision

    def apply_forgetting(self, lam: float) -> int:
        """Multiply every weight by ``lam`` and prune vanished triples.

        ``lam == 1`` is the identity and leaves the revision untouched.
        """
        if not (0.0 < lam <= 1.0):
            raise InvalidDecay(lam)
        if lam == 1.0:
            return self.revision
        decayed = {}
        for key, w in self._counts.items():
            w *= lam
            if w >= self.prune_epsilon:
                decayed[key] = w
        self._counts = decayed
        # Recompute totals from the surviving triples so the sum identity
        # holds exactly, not just up to scaling error.
        totals: dict[tuple[int, int], float] = {}
        for (si, ai, ti), w in decayed.items():
            sa = (si, ai)
            totals[sa] = totals.get(sa, 0.0) + w
        self._action_counts = totals
        self._reward_obs = {k: v for k, v in self._reward_obs.items() if k in decayed}
        self.revision += 1
        return self.revision

    # -- snapshotting -------------------------------------------------

    def snapshot(self, action_labels: dict[str, str] | None = None) -> "ModelSnapshot":
        """Produce an immutable snapshot with derived probabilities.

        ``action_labels`` maps action name -> label; every observed
        post-state of that action carries the label in the snapshot. This
        is how "action was taken" becomes expressible in state formulas.
        """
        counts = dict(self._counts)
        if self.smoothing_alpha > 0:
            alpha = self.smoothing_alpha
            n = len(self._states)
            for (si, ai) in list(self._action_counts):
                for ti in range(n):
                    key = (si, ai, ti)
                    counts[key] = counts.get(key, 0.0) + alpha

        labels = {name: frozenset(members) for name, members in self._labels.items()}
        if action_labels:
            wanted = {
                self._action_index[a]: lbl
                for a, lbl in action_labels.items()
                if a in self._action_index
            }
            extra: dict[str, set[str]] = {}
            for (si, ai, ti), w in counts.items():
                lbl = wanted.get(ai)
                if lbl is not None and w > 0:
                    extra.setdefault(lbl, set()).add(self._states[ti])
            for lbl, members in extra.items():
                labels[lbl] = labels.get(lbl, frozenset()) | frozenset(members)

        structures = dict(self._structures)
        if self._reward_obs:
            overrides = []
            for (si, ai, ti), (total, n) in sorted(self._reward_obs.items()):
                pattern = (self._states[si], self._actions[ai], self._states[ti])
                overrides.append((pattern, total / n))
            structures[OBSERVED_REWARDS] = RewardStructure(
                OBSERVED_REWARDS, 0.0, tuple(overrides)
            )

        return ModelSnapshot(
            states=tuple(self._states),
            actions=tuple(self._actions),
            counts=counts,
            labels=labels,
            initial=self._state_index.get(self.initial) if self.initial else None,
            reward_structures=structures,
            revision=self.revision,
        )


@dataclass(frozen=True, eq=False)
class ModelSnapshot:
    """Immutable view of a learned model plus derived quantities.

    Invariant: for every (s, a) with observations, the successor
    probabilities are the exact ratio counts/total and sum to 1 within
    1e-12 in floating point.
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    counts: dict[tuple[int, int, int], float]
    labels: dict[str, frozenset[str]]
    initial: int | None
    reward_structures: dict[str, RewardStructure]
    revision: int
    _rows: dict = field(default_factory=dict, repr=False)
    _totals: dict = field(default_factory=dict, repr=False)
    _sidx: dict = field(default_factory=dict, repr=False)
    _aidx: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        rows: dict[tuple[int, int], list[tuple[int, float]]] = {}
        totals: dict[tuple[int, int], float] = {}
        for (si, ai, ti), w in self.counts.items():
            if w <= 0:
                continue
            rows.setdefault((si, ai), []).append((ti, w))
            totals[(si, ai)] = totals.get((si, ai), 0.0) + w
        for row in rows.values():
            row.sort()
        object.__setattr__(self, "_rows", rows)
        object.__setattr__(self, "_totals", totals)
        object.__setattr__(self, "_sidx", {s: i for i, s in enumerate(self.states)})
        object.__setattr__(self, "_aidx", {a: i for i, a in enumerate(self.actions)})

    # -- identity helpers ----------------------------------------------

    def state_index(self, state: str | int) -> int:
        if isinstance(state, int):
            if not 0 <= state < len(self.states):
                raise UnknownState(str(state))
            return state
        idx = self._sidx.get(state)
        if idx is None:
            raise UnknownState(state)
        return idx

    def action_index(self, action: str | int) -> int:
        if isinstance(action, int):
            if not 0 <= action < len(self.actions):
                raise UnknownAction(str(action))
            return action
        idx = self._aidx.get(action)
        if idx is None:
            raise UnknownAction(action)
        return idx

    @property
    def exact(self) -> bool:
        """True when every weight is integral, i.e. probabilities are exact
        count ratios expressible as fractions."""
        return all(float(w).is_integer() for w in self.counts.values())

    @property
    def total_weight(self) -> float:
        return sum(self.counts.values())

    # -- derived quantities ---------------------------------------------

    def action_total(self, state: str | int, action: str | int) -> float:
        return self._totals.get((self.state_index(state), self.action_index(action)), 0.0)

    def successors(self, state: str | int, action: str | int) -> list[tuple[int, float]]:
        """Successor distribution of (state, action) as (state index, probability),
        ordered by state index."""
        si = self.state_index(state)
        ai = self.action_index(action)
        row = self._rows.get((si, ai))
        if not row:
            raise NeverObserved(
                f"({self.states[si]}, {self.actions[ai]}) has no observations"
            )
        total = self._totals[(si, ai)]
        return [(ti, w / total) for ti, w in row]

    def transition_probability(
        self, state: str | int, action: str | int, next_state: str | int
    ) -> float:
        si = self.state_index(state)
        ai = self.action_index(action)
        ti = self.state_index(next_state)
        total = self._totals.get((si, ai), 0.0)
        if total <= 0:
            raise NeverObserved(
                f"({self.states[si]}, {self.actions[ai]}) has no observations"
            )
        return self.counts.get((si, ai, ti), 0.0) / total

    def enabled_actions(self, state: str | int) -> set[str]:
        """Actions with at least one observation in ``state``; empty set
        marks a dead end."""
        si = self.state_index(state)
        return {
            self.actions[ai]
            for (s, ai), total in self._totals.items()
            if s == si and total > 0
        }

    def empirical_policy(self, state: str | int) -> dict[str, float]:
        """Observed action frequencies at ``state`` over real agent choices.

        Synthetic actions (self-loops, declared-state jumps) are excluded;
        raises NeverObserved when no real action was ever taken here.
        """
        si = self.state_index(state)
        weights = {}
        for (s, ai), total in self._totals.items():
            if s == si and total > 0 and self.actions[ai] not in RESERVED_ACTIONS:
                weights[self.actions[ai]] = total
        grand = sum(weights.values())
        if grand <= 0:
            raise NeverObserved(f"state {self.states[si]} has no observed actions")
        return {a: w / grand for a, w in weights.items()}

    def induced_chain(self) -> "ModelSnapshot":
        """Markov chain induced by the empirical behavior.

        Chain weights are summed counts over all observed actions (including
        synthetic jumps, which are part of the observed trajectory), so the
        row distributions stay exact count ratios. Rewards are composed as
        the count-weighted mean of the contributing transition rewards.
        """
        chain_counts: dict[tuple[int, int, int], float] = {}
        contrib: dict[tuple[int, int], list[tuple[int, float]]] = {}
        for (si, ai, ti), w in self.counts.items():
            if w <= 0:
                continue
            key = (si, 0, ti)
            chain_counts[key] = chain_counts.get(key, 0.0) + w
            contrib.setdefault((si, ti), []).append((ai, w))

        structures = {}
        for name, rs in self.reward_structures.items():
            overrides = []
            for (si, ti), parts in sorted(contrib.items()):
                values = [
                    self.reward_value(name, si, ai, ti) for ai, _ in parts
                ]
                if all(v == values[0] for v in values):
                    value = values[0]
                else:
                    wsum = sum(w for _, w in parts)
                    value = sum(v * w for v, (_, w) in zip(values, parts)) / wsum
                overrides.append(
                    ((self.states[si], POLICY_ACTION, self.states[ti]), value)
                )
            structures[name] = RewardStructure(name, rs.per_step, tuple(overrides))

        return ModelSnapshot(
            states=self.states,
            actions=(POLICY_ACTION,),
            counts=chain_counts,
            labels=dict(self.labels),
            initial=self.initial,
            reward_structures=structures,
            revision=self.revision,
        )

    def rows(self) -> list[tuple[int, int, list[tuple[int, float]]]]:
        """All observed (state, action) rows as (si, ai, [(ti, prob), ...]),
        sorted by state then action, successors by state index."""
        out = []
        for (si, ai), row in sorted(self._rows.items()):
            total = self._totals[(si, ai)]
            out.append((si, ai, [(ti, w / total) for ti, w in row]))
        return out

    def raw_rows(self) -> list[tuple[int, int, list[tuple[int, float]]]]:
        """Like rows() but with unnormalized weights."""
        return [(si, ai, list(row)) for (si, ai), row in sorted(self._rows.items())]

    # -- labels and rewards ----------------------------------------------

    def resolve_label(self, name: str) -> frozenset[int]:
        """State set named by ``name``: a declared label, or a bare state
        name acting as its own singleton label."""
        if name in self.labels:
            return frozenset(self._sidx[s] for s in self.labels[name])
        if name in self._sidx:
            return frozenset({self._sidx[name]})
        raise UnknownLabel(name)

    def reward_value(
        self, structure: str, state: str | int, action: str | int, next_state: str | int
    ) -> float:
        rs = self.reward_structures.get(structure)
        if rs is None:
            from .errors import UnknownRewardStructure

            raise UnknownRewardStructure(structure)
        return rs.value_for(
            self.states[self.state_index(state)],
            self.actions[self.action_index(action)],
            self.states[self.state_index(next_state)],
        )

    def expected_row_reward(self, structure: str, state: int, action: int) -> float:
        """Expected immediate reward of taking ``action`` in ``state``."""
        row = self._rows.get((state, action))
        if not row:
            return 0.0
        total = self._totals[(state, action)]
        values = [self.reward_value(structure, state, action, ti) for ti, _ in row]
        if all(v == values[0] for v in values):
            return values[0]
        return sum(v * w for v, (_, w) in zip(values, row)) / total

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        quads = [
            [si, ai, ti, w]
            for (si, ai, ti), w in sorted(self.counts.items())
            if w > 0
        ]
        labels = {
            name: sorted(self._sidx[s] for s in members)
            for name, members in self.labels.items()
        }
        structures = {
            name: {
                "per_step": rs.per_step,
                "overrides": sorted(
                    [list(pattern) + [value] for pattern, value in rs.overrides],
                    key=lambda o: [x if x is not None else "" for x in o[:3]],
                ),
            }
            for name, rs in self.reward_structures.items()
        }
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "initial": self.initial,
            "counts": quads,
            "labels": labels,
            "reward_structures": structures,
            "revision": self.revision,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ModelSnapshot":
        states = tuple(doc["states"])
        actions = tuple(doc["actions"])
        counts = {
            (int(si), int(ai), int(ti)): float(w) for si, ai, ti, w in doc["counts"]
        }
        labels = {
            name: frozenset(states[i] for i in members)
            for name, members in doc.get("labels", {}).items()
        }
        structures = {}
        for name, spec in doc.get("reward_structures", {}).items():
            overrides = tuple(
                ((o[0], o[1], o[2]), float(o[3])) for o in spec.get("overrides", [])
            )
            structures[name] = RewardStructure(
                name, float(spec.get("per_step", 0.0)), overrides
            )
        return cls(
            states=states,
            actions=actions,
            counts=counts,
            labels=labels,
            initial=doc.get("initial"),
            reward_structures=structures,
            revision=int(doc.get("revision", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelSnapshot":
        return cls.from_json_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelSnapshot):
            return NotImplemented
        return self.to_json_dict() == other.to_json_dict()

    def __hash__(self):
        return hash((self.states, self.actions, self.revision))

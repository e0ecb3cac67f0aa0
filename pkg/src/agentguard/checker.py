"""Probabilistic model checking over model snapshots.

Pipeline per query: resolve the formula's labels to state sets, assemble
a row-grouped sparse Bellman arena, run graph-based qualitative
precomputation (prob0/prob1), then value-iterate the remaining states.
Globally-properties go through the duality Pmax[G f] = 1 - Pmin[F !f];
until-properties absorb the states outside their left operand.

Non-convergence is reported as a result with converged=False, never an
exception: a live assurance loop must keep serving values, stale and
labeled, rather than crash mid-run.

Known limitation (accepted): plain value iteration with an absolute
stopping criterion can under-approximate slowly converging fixpoints;
prob0/prob1 precomputation removes the common cases. Rmin additionally
assumes no zero-reward cycle inside the certain-reach region.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import EmptyModel, UnknownRewardStructure
from .model import ModelSnapshot, RewardStructure
from .pctl import (
    And,
    Eventually,
    FalseF,
    Globally,
    Label,
    Not,
    Or,
    Property,
    TrueF,
    Until,
    DEFAULT_REWARD_STRUCTURE,
    format_property,
)


@dataclass(frozen=True)
class CheckSettings:
    epsilon: float = 1e-8
    max_iterations: int = 100_000
    gamma: float = 1.0
    dead_end_policy: str = "absorb"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.dead_end_policy != "absorb":
            raise ValueError("only the 'absorb' dead-end policy is supported")


@dataclass(frozen=True)
class VerificationResult:
    property: str
    value: float | None  # None means undefined (check could not run)
    satisfied: bool | None
    iterations: int
    converged: bool
    revision: int
    micros: int
    error: str | None = None

    def to_json_dict(self) -> dict:
        if self.value is None:
            value = "undefined"
        elif self.value == float("inf"):
            value = "inf"
        else:
            value = self.value
        doc = {
            "property": self.property,
            "value": value,
            "iterations": self.iterations,
            "converged": self.converged,
            "revision": self.revision,
            "micros": self.micros,
        }
        if self.satisfied is not None:
            doc["satisfied"] = self.satisfied
        if self.error is not None:
            doc["error"] = self.error
        return doc


# -- formula evaluation --------------------------------------------------


def satisfying_states(snap: ModelSnapshot, f) -> frozenset[int]:
    universe = frozenset(range(len(snap.states)))
    if isinstance(f, TrueF):
        return universe
    if isinstance(f, FalseF):
        return frozenset()
    if isinstance(f, Label):
        return snap.resolve_label(f.name)
    if isinstance(f, Not):
        return universe - satisfying_states(snap, f.operand)
    if isinstance(f, And):
        return satisfying_states(snap, f.left) & satisfying_states(snap, f.right)
    if isinstance(f, Or):
        return satisfying_states(snap, f.left) | satisfying_states(snap, f.right)
    raise TypeError(f"not a state formula: {f!r}")


# -- Bellman arena ----------------------------------------------------------


class _Arena:
    """Rows grouped by state: a CSR matrix over (state, action) rows plus
    the per-state segment starts that reduceat needs. Every state owns at
    least one row; dead ends and masked states get synthetic self-loops."""

    def __init__(
        self,
        snap: ModelSnapshot,
        absorb: frozenset[int] = frozenset(),
        keep_row=None,
    ):
        n = len(snap.states)
        per_state: list[list[tuple[int | None, list[tuple[int, float]]]]] = [
            [] for _ in range(n)
        ]
        for si, ai, succ in snap.rows():
            if si in absorb:
                continue
            if keep_row is not None and not keep_row(si, ai, succ):
                continue
            per_state[si].append((ai, succ))
        for s in range(n):
            if not per_state[s]:
                per_state[s] = [(None, [(s, 1.0)])]

        starts = np.zeros(n, dtype=np.int64)
        row_meta: list[tuple[int, int | None]] = []
        data: list[float] = []
        indices: list[int] = []
        indptr: list[int] = [0]
        succ_sets: list[list[int]] = []
        for s in range(n):
            starts[s] = len(row_meta)
            for ai, succ in per_state[s]:
                row_meta.append((s, ai))
                for ti, p in succ:
                    indices.append(ti)
                    data.append(p)
                indptr.append(len(indices))
                succ_sets.append([ti for ti, _ in succ])

        self.n = n
        self.starts = starts
        self.row_meta = row_meta
        self.succ_sets = succ_sets
        self.matrix = sparse.csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr)),
            shape=(len(row_meta), n),
        )

    def state_rows(self, s: int) -> range:
        end = self.starts[s + 1] if s + 1 < self.n else len(self.row_meta)
        return range(self.starts[s], end)

    def step(self, x: np.ndarray, opt: str) -> np.ndarray:
        y = self.matrix.dot(x)
        ufunc = np.maximum if opt == "max" else np.minimum
        return ufunc.reduceat(y, self.starts)

    def reward_step(self, x: np.ndarray, c: np.ndarray, gamma: float, opt: str) -> np.ndarray:
        y = c + gamma * self.matrix.dot(x)
        ufunc = np.maximum if opt == "max" else np.minimum
        return ufunc.reduceat(y, self.starts)

    # -- graph algorithms (no numerics) ------------------------------------

    def _predecessors(self) -> list[list[tuple[int, int]]]:
        preds: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for r, succ in enumerate(self.succ_sets):
            s = self.row_meta[r][0]
            for t in succ:
                preds[t].append((s, r))
        return preds

    def backward_reach(self, targets: frozenset[int], through=None) -> frozenset[int]:
        """States with some path into ``targets``; intermediate hops (and
        the source itself) must satisfy ``through`` when given."""
        preds = self._predecessors()
        seen = set(targets)
        frontier = list(targets)
        while frontier:
            t = frontier.pop()
            for s, _ in preds[t]:
                if s not in seen and (through is None or through(s)):
                    seen.add(s)
                    frontier.append(s)
        return frozenset(seen)

    def prob0(self, goal: frozenset[int], opt: str) -> frozenset[int]:
        everything = frozenset(range(self.n))
        if opt == "max":
            return everything - self.backward_reach(goal)
        # min: grow the set of states every scheduler pushes toward goal
        # with positive probability; the complement can dodge goal surely
        reached = set(goal)
        changed = True
        while changed:
            changed = False
            for s in range(self.n):
                if s in reached:
                    continue
                rows = list(self.state_rows(s))
                if rows and all(
                    any(t in reached for t in self.succ_sets[r]) for r in rows
                ):
                    reached.add(s)
                    changed = True
        return everything - frozenset(reached)

    def prob1(self, goal: frozenset[int], opt: str) -> frozenset[int]:
        if opt == "max":
            return self._prob1_exists(goal)
        return self._prob1_all(goal)

    def _prob1_exists(self, goal: frozenset[int]) -> frozenset[int]:
        # standard nested fixpoint: greatest Y, least X inside it
        outer = frozenset(range(self.n))
        while True:
            inner = set(goal)
            changed = True
            while changed:
                changed = False
                for s in range(self.n):
                    if s in inner or s not in outer:
                        continue
                    for r in self.state_rows(s):
                        succ = self.succ_sets[r]
                        if all(t in outer for t in succ) and any(
                            t in inner for t in succ
                        ):
                            inner.add(s)
                            changed = True
                            break
            result = frozenset(inner)
            if result == outer:
                return result
            outer = result

    def _prob1_all(self, goal: frozenset[int]) -> frozenset[int]:
        # Pmin < 1 exactly for states that can dodge into the Pmin=0 set
        # without touching goal on the way
        dodge = self.prob0(goal, "min")
        tainted = self.backward_reach(dodge, through=lambda s: s not in goal)
        return frozenset(range(self.n)) - tainted


# -- value iteration ----------------------------------------------------------


def _iterate(x0, apply_step, clamp, epsilon, max_iterations):
    x = x0
    for it in range(1, max_iterations + 1):
        z = apply_step(x)
        clamp(z)
        delta = float(np.max(np.abs(z - x))) if len(x) else 0.0
        x = z
        if delta <= epsilon:
            return x, it, True
    return x, max_iterations, False


def _reach_unbounded(arena, goal, opt, settings):
    prob1 = arena.prob1(goal, opt)
    prob0 = arena.prob0(goal, opt)
    one_mask = np.zeros(arena.n, dtype=bool)
    zero_mask = np.zeros(arena.n, dtype=bool)
    for s in prob1:
        one_mask[s] = True
    for s in prob0:
        zero_mask[s] = True

    def clamp(z):
        z[one_mask] = 1.0
        z[zero_mask] = 0.0

    x0 = np.zeros(arena.n)
    x0[one_mask] = 1.0
    return _iterate(
        x0,
        lambda x: arena.step(x, opt),
        clamp,
        settings.epsilon,
        settings.max_iterations,
    )


def _reach_bounded(arena, goal, opt, k):
    goal_mask = np.zeros(arena.n, dtype=bool)
    for s in goal:
        goal_mask[s] = True
    x = np.zeros(arena.n)
    x[goal_mask] = 1.0
    for _ in range(k):
        x = arena.step(x, opt)
        x[goal_mask] = 1.0
    return x, k, True


# -- core computations -----------------------------------------------------------


def _require_initial(snap: ModelSnapshot) -> int:
    if snap.initial is None:
        raise EmptyModel("model has no initial state")
    init = snap.initial
    for (si, ai, ti), w in snap.counts.items():
        if w > 0 and (si == init or ti == init):
            return init
    raise EmptyModel(f"initial state {snap.states[init]!r} has never been observed")


def _resolve_policy(snap: ModelSnapshot, opt: str) -> tuple[ModelSnapshot, str]:
    if opt == "policy":
        return snap.induced_chain(), "max"
    return snap, opt


def _constrained_reach(snap, allowed, goal, opt, bound, settings):
    universe = frozenset(range(len(snap.states)))
    mask = universe - allowed - goal
    arena = _Arena(snap, absorb=mask)
    if bound is None:
        # masked states have only the self-loop, so they sit in prob0
        # automatically unless they are goal states
        return _reach_unbounded(arena, goal, opt, settings)
    return _reach_bounded(arena, goal, opt, bound)


def _clamp_probability(v: float) -> float:
    return min(1.0, max(0.0, v))


def _resolve_structure(snap: ModelSnapshot, name: str | None) -> RewardStructure:
    wanted = name or DEFAULT_REWARD_STRUCTURE
    rs = snap.reward_structures.get(wanted)
    if rs is None:
        if wanted == DEFAULT_REWARD_STRUCTURE:
            return RewardStructure(DEFAULT_REWARD_STRUCTURE, per_step=1.0)
        raise UnknownRewardStructure(wanted)
    return rs


def _expected_reward_core(snap, rs: RewardStructure, goal, opt, settings):
    init = snap.initial
    base = _Arena(snap)
    if opt == "min":
        # finite only where some scheduler reaches goal almost surely;
        # restrict iteration to that region and to the actions that stay
        # inside it
        region = base._prob1_exists(goal)
        keep = lambda si, ai, succ: si in region and all(
            t in region for t, _ in succ
        )
    else:
        # finite only where every scheduler reaches goal almost surely;
        # that region is closed under all actions, no filtering needed
        region = base._prob1_all(goal)
        keep = lambda si, ai, succ: si in region
    if init not in region:
        return float("inf"), 0, True

    arena = _Arena(snap, keep_row=keep)
    c = np.zeros(len(arena.row_meta))
    for r, (si, ai) in enumerate(arena.row_meta):
        if ai is None or si in goal or si not in region:
            continue  # synthetic loops and clamped states contribute nothing
        row = snap.successors(si, ai)
        values = [rs.value_for(snap.states[si], snap.actions[ai], snap.states[ti]) for ti, _ in row]
        if all(v == values[0] for v in values):
            c[r] = values[0]
        else:
            c[r] = sum(v * p for v, (_, p) in zip(values, row))

    goal_mask = np.zeros(arena.n, dtype=bool)
    for s in goal:
        goal_mask[s] = True
    outside = np.zeros(arena.n, dtype=bool)
    for s in range(arena.n):
        if s not in region:
            outside[s] = True

    def clamp(z):
        z[goal_mask] = 0.0
        z[outside] = 0.0

    x, iterations, converged = _iterate(
        np.zeros(arena.n),
        lambda x: arena.reward_step(x, c, settings.gamma, opt),
        clamp,
        settings.epsilon,
        settings.max_iterations,
    )
    return float(x[init]), iterations, converged


# -- public operations -------------------------------------------------------------


def qualitative_precompute(
    snap: ModelSnapshot, goal, opt: str
) -> tuple[frozenset[int], frozenset[int]]:
    """prob0/prob1 state sets for reaching ``goal`` (names or indices)."""
    goal_set = frozenset(snap.state_index(g) for g in goal)
    arena = _Arena(snap)
    return arena.prob0(goal_set, opt), arena.prob1(goal_set, opt)


def _result(name, value, satisfied, iterations, converged, revision, t0):
    micros = (time.perf_counter_ns() - t0) // 1000
    return VerificationResult(
        property=name,
        value=value,
        satisfied=satisfied,
        iterations=iterations,
        converged=converged,
        revision=revision,
        micros=micros,
    )


def reachability_probability(
    snap: ModelSnapshot,
    goal,
    opt: str = "max",
    bound: int | None = None,
    settings: CheckSettings = CheckSettings(),
    name: str | None = None,
) -> VerificationResult:
    t0 = time.perf_counter_ns()
    init = _require_initial(snap)
    goal_set = satisfying_states(snap, goal)
    work, work_opt = _resolve_policy(snap, opt)
    universe = frozenset(range(len(work.states)))
    x, iterations, converged = _constrained_reach(
        work, universe, goal_set, work_opt, bound, settings
    )
    name = name or format_property(
        Property(kind="prob_quantity", opt=opt, path=Eventually(goal, bound))
    )
    return _result(
        name, _clamp_probability(float(x[init])), None, iterations, converged,
        snap.revision, t0,
    )


def globally_probability(
    snap: ModelSnapshot,
    safe,
    opt: str = "max",
    bound: int | None = None,
    settings: CheckSettings = CheckSettings(),
    name: str | None = None,
) -> VerificationResult:
    t0 = time.perf_counter_ns()
    init = _require_initial(snap)
    unsafe = satisfying_states(snap, Not(safe))
    work, work_opt = _resolve_policy(snap, opt)
    dual = {"max": "min", "min": "max"}[work_opt]
    universe = frozenset(range(len(work.states)))
    x, iterations, converged = _constrained_reach(
        work, universe, unsafe, dual, bound, settings
    )
    name = name or format_property(
        Property(kind="prob_quantity", opt=opt, path=Globally(safe, bound))
    )
    return _result(
        name, _clamp_probability(1.0 - float(x[init])), None, iterations, converged,
        snap.revision, t0,
    )


def until_probability(
    snap: ModelSnapshot,
    left,
    right,
    opt: str = "max",
    bound: int | None = None,
    settings: CheckSettings = CheckSettings(),
    name: str | None = None,
) -> VerificationResult:
    t0 = time.perf_counter_ns()
    init = _require_initial(snap)
    allowed = satisfying_states(snap, left)
    goal_set = satisfying_states(snap, right)
    work, work_opt = _resolve_policy(snap, opt)
    x, iterations, converged = _constrained_reach(
        work, allowed, goal_set, work_opt, bound, settings
    )
    name = name or format_property(
        Property(kind="prob_quantity", opt=opt, path=Until(left, right, bound))
    )
    return _result(
        name, _clamp_probability(float(x[init])), None, iterations, converged,
        snap.revision, t0,
    )


def expected_reward(
    snap: ModelSnapshot,
    structure: str | None,
    goal,
    opt: str = "min",
    settings: CheckSettings = CheckSettings(),
    name: str | None = None,
) -> VerificationResult:
    t0 = time.perf_counter_ns()
    _require_initial(snap)
    rs = _resolve_structure(snap, structure)
    goal_set = satisfying_states(snap, goal)
    work, work_opt = _resolve_policy(snap, opt)
    value, iterations, converged = _expected_reward_core(
        work, rs, goal_set, work_opt, settings
    )
    if value != float("inf"):
        value = max(0.0, value) if value > -1e-9 else value
    name = name or format_property(
        Property(kind="reward_quantity", opt=opt, target=goal, structure=structure)
    )
    return _result(name, value, None, iterations, converged, snap.revision, t0)


_OPS = {
    ">=": lambda v, t: v >= t,
    ">": lambda v, t: v > t,
    "<=": lambda v, t: v <= t,
    "<": lambda v, t: v < t,
}


def check(
    snap: ModelSnapshot, prop: Property, settings: CheckSettings = CheckSettings()
) -> VerificationResult:
    """Evaluate one validated property; bounds compare the converged value
    exactly against the threshold."""
    name = prop.name or format_property(prop)
    if prop.is_reward:
        result = expected_reward(
            snap, prop.structure, prop.target, prop.opt, settings, name=name
        )
    else:
        path = prop.path
        if isinstance(path, Eventually):
            result = reachability_probability(
                snap, path.operand, prop.opt, path.bound, settings, name=name
            )
        elif isinstance(path, Globally):
            result = globally_probability(
                snap, path.operand, prop.opt, path.bound, settings, name=name
            )
        else:
            result = until_probability(
                snap, path.left, path.right, prop.opt, path.bound, settings, name=name
            )
    if prop.is_bound:
        satisfied = _OPS[prop.op](result.value, prop.threshold)
        result = VerificationResult(
            property=result.property,
            value=result.value,
            satisfied=satisfied,
            iterations=result.iterations,
            converged=result.converged,
            revision=result.revision,
            micros=result.micros,
        )
    return result

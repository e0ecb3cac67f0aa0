"""Export to and import from a small PRISM-language subset.

The exporter writes the learned MDP as a single-module PRISM model with
one integer variable. When every weight is integral, probabilities are
written as exact weight fractions, so the text carries the model without
rounding; otherwise they are decimals with 17 significant digits.

The importer accepts exactly the exporter's subset (plus // comments)
and reconstructs a snapshot whose matrix, labels and rewards match the
source. Anything else fails with the offending line number.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction

from .errors import EmptyModel, UnsupportedConstruct
from .model import SELF_LOOP_ACTION, ModelSnapshot, RewardStructure

# Common float weights (decayed counts) stay well below this; beyond it the
# exact integer path would lose precision in the float-backed count store.
_MAX_EXACT_DENOMINATOR = 2**53


def _format_probability(weight: float, total: float, exact: bool) -> str:
    if exact:
        return f"{int(weight)}/{int(total)}"
    return f"{weight / total:.17g}"


def export_prism(snap: ModelSnapshot) -> str:
    """Render a snapshot as deterministic PRISM-language text."""
    if not snap.states or snap.initial is None:
        raise EmptyModel("cannot export an empty model")
    n = len(snap.states)
    exact = snap.exact

    lines = ["mdp", "", "module agent", f"  s : [0..{n - 1}] init {snap.initial};"]
    rows = snap.raw_rows()
    by_state: dict[int, list] = {}
    for si, ai, row in rows:
        by_state.setdefault(si, []).append((ai, row))
    for si in range(n):
        state_rows = by_state.get(si)
        if not state_rows:
            # dead end: absorb with the reserved synthetic action
            lines.append(f"  [{SELF_LOOP_ACTION}] s={si} -> 1/1:(s'={si});")
            continue
        for ai, row in state_rows:
            total = sum(w for _, w in row)
            terms = " + ".join(
                f"{_format_probability(w, total, exact)}:(s'={ti})" for ti, w in row
            )
            lines.append(f"  [{snap.actions[ai]}] s={si} -> {terms};")
    lines.append("endmodule")

    if snap.labels:
        lines.append("")
        for name in sorted(snap.labels):
            members = sorted(snap.state_index(s) for s in snap.labels[name])
            expr = "|".join(f"s={i}" for i in members) if members else "false"
            lines.append(f'label "{name}" = {expr};')

    for name in sorted(snap.reward_structures):
        lines.append("")
        lines.append(f'rewards "{name}"')
        for si, ai, _ in rows:
            if snap.actions[ai] == SELF_LOOP_ACTION:
                continue
            r = snap.expected_row_reward(name, si, ai)
            if r != 0.0:
                lines.append(f"  [{snap.actions[ai]}] s={si} : {r:.17g};")
        lines.append("endrewards")

    return "\n".join(lines) + "\n"


# -- import ------------------------------------------------------------------

_VAR_RE = re.compile(r"s : \[0\.\.(\d+)\] init (\d+);$")
_COMMAND_RE = re.compile(r"\[([A-Za-z_]\w*)\] s=(\d+) -> (.+);$")
_TERM_RE = re.compile(r"(.+):\(s'=(\d+)\)$")
_FRACTION_RE = re.compile(r"(\d+)/(\d+)$")
_LABEL_RE = re.compile(r'label "([A-Za-z_]\w*)" = (false|s=\d+(?:\|s=\d+)*);$')
_REWARDS_RE = re.compile(r'rewards "([A-Za-z_]\w*)"$')
_REWARD_LINE_RE = re.compile(r"\[([A-Za-z_]\w*)\] s=(\d+) : ([^\s;]+);$")


def _fail(lineno: int, message: str):
    raise UnsupportedConstruct(lineno, message)


def _parse_terms(text: str, lineno: int) -> list[tuple[int, Fraction | float]]:
    out = []
    for part in text.split(" + "):
        m = _TERM_RE.match(part.strip())
        if not m:
            _fail(lineno, f"unsupported update term: {part.strip()!r}")
        prob_text, target = m.group(1), int(m.group(2))
        frac = _FRACTION_RE.match(prob_text)
        if frac:
            num, den = int(frac.group(1)), int(frac.group(2))
            if den == 0:
                _fail(lineno, "zero denominator")
            p = Fraction(num, den)
        else:
            try:
                p = float(prob_text)
            except ValueError:
                _fail(lineno, f"unsupported probability: {prob_text!r}")
        if p <= 0 or p > 1:
            _fail(lineno, f"probability {prob_text} outside (0, 1]")
        out.append((target, p))
    return out


def _row_weights(terms, lineno: int) -> list[tuple[int, float]]:
    """Turn parsed (target, probability) terms into stored weights: exact
    integer counts when every term is a fraction, plain floats otherwise."""
    if all(isinstance(p, Fraction) for _, p in terms):
        den = math.lcm(*(p.denominator for _, p in terms))
        if den <= _MAX_EXACT_DENOMINATOR:
            weights = [(t, float(p * den)) for t, p in terms]
            if sum(w for _, w in weights) != den:
                _fail(lineno, "row probabilities do not sum to 1")
            return weights
    weights = [(t, float(p)) for t, p in terms]
    if abs(sum(w for _, w in weights) - 1.0) > 1e-9:
        _fail(lineno, "row probabilities do not sum to 1")
    return weights


def import_prism(text: str) -> ModelSnapshot:
    """Parse exporter-subset PRISM text back into a snapshot.

    States are named by index (s0, s1, ...). Synthetic absorbing commands
    mark dead ends and contribute no counts.
    """
    n = None
    initial = None
    actions: list[str] = []
    action_index: dict[str, int] = {}
    counts: dict[tuple[int, int, int], float] = {}
    seen_rows: set[tuple[int, str]] = set()
    labels: dict[str, frozenset[str]] = {}
    structures: dict[str, RewardStructure] = {}

    state = "header"
    rewards_name = None
    rewards_lines: list[tuple[tuple[str | None, str | None, str | None], float]] = []
    rewards_start = 0

    def check_state_index(si: int, lineno: int) -> int:
        if n is None or si >= n:
            _fail(lineno, f"state index {si} out of range")
        return si

    lineno = 0
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("//", 1)[0].strip()
        if not line:
            continue

        if state == "header":
            if line != "mdp":
                _fail(lineno, f"only mdp models are supported, got {line!r}")
            state = "preamble"
            continue

        if state == "preamble":
            if re.fullmatch(r"module [A-Za-z_]\w*", line):
                state = "module"
                continue
            _fail(lineno, f"expected a module, got {line!r}")

        if state == "module":
            m = _VAR_RE.match(line)
            if m:
                if n is not None:
                    _fail(lineno, "more than one variable declaration")
                n = int(m.group(1)) + 1
                initial = int(m.group(2))
                if initial >= n:
                    _fail(lineno, f"init {initial} out of range")
                continue
            m = _COMMAND_RE.match(line)
            if m:
                if n is None:
                    _fail(lineno, "command before variable declaration")
                action, si = m.group(1), check_state_index(int(m.group(2)), lineno)
                if (si, action) in seen_rows:
                    _fail(lineno, f"duplicate command for [{action}] s={si}")
                seen_rows.add((si, action))
                terms = _parse_terms(m.group(3), lineno)
                targets = [t for t, _ in terms]
                if len(set(targets)) != len(targets):
                    _fail(lineno, "duplicate successor in update")
                for t in targets:
                    check_state_index(t, lineno)
                if action == SELF_LOOP_ACTION:
                    # synthetic absorbing loop, not an observation
                    if terms != [(si, 1.0)]:
                        _fail(lineno, "synthetic self-loop must be 1/1 back to its state")
                    continue
                if action not in action_index:
                    action_index[action] = len(actions)
                    actions.append(action)
                ai = action_index[action]
                for t, w in _row_weights(terms, lineno):
                    counts[(si, ai, t)] = w
                continue
            if line == "endmodule":
                if n is None:
                    _fail(lineno, "module has no variable declaration")
                state = "tail"
                continue
            _fail(lineno, f"unsupported construct: {line!r}")

        if state == "tail":
            m = _LABEL_RE.match(line)
            if m:
                name, expr = m.group(1), m.group(2)
                if name in labels:
                    _fail(lineno, f"duplicate label {name!r}")
                if expr == "false":
                    labels[name] = frozenset()
                else:
                    members = [
                        check_state_index(int(x), lineno)
                        for x in re.findall(r"s=(\d+)", expr)
                    ]
                    labels[name] = frozenset(f"s{i}" for i in members)
                continue
            m = _REWARDS_RE.match(line)
            if m:
                rewards_name = m.group(1)
                if rewards_name in structures:
                    _fail(lineno, f"duplicate rewards block {rewards_name!r}")
                rewards_lines = []
                rewards_start = lineno
                state = "rewards"
                continue
            _fail(lineno, f"unsupported construct: {line!r}")

        if state == "rewards":
            if line == "endrewards":
                try:
                    structures[rewards_name] = RewardStructure(
                        rewards_name, 0.0, tuple(rewards_lines)
                    )
                except ValueError as err:
                    _fail(rewards_start, str(err))
                state = "tail"
                continue
            m = _REWARD_LINE_RE.match(line)
            if m:
                action, si = m.group(1), check_state_index(int(m.group(2)), lineno)
                if (si, action) not in seen_rows or action == SELF_LOOP_ACTION:
                    _fail(lineno, f"reward for unknown command [{action}] s={si}")
                try:
                    value = float(m.group(3))
                except ValueError:
                    _fail(lineno, f"unsupported reward value: {m.group(3)!r}")
                rewards_lines.append(((f"s{si}", action, None), value))
                continue
            _fail(lineno, f"unsupported construct: {line!r}")

    if state != "tail":
        _fail(lineno, "unexpected end of file")

    return ModelSnapshot(
        states=tuple(f"s{i}" for i in range(n)),
        actions=tuple(actions),
        counts=counts,
        labels=labels,
        initial=initial,
        reward_structures=structures,
        revision=0,
    )

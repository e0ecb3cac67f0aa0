"""Shared model fixtures for tests."""

from agentguard.model import LearnedMdp, ModelSnapshot


def build_toy3() -> LearnedMdp:
    """The three-state reference model, learned from integer counts that
    give exactly the intended probabilities and the first-seen state
    order s0, fail, goal.

    s0 --a--> 0.5 goal / 0.5 fail; s0 --b--> 0.9 s0 / 0.1 goal;
    goal and fail are absorbing (never left, so dead ends).
    """
    m = LearnedMdp()
    for _ in range(5):
        m.record_transition("s0", "a", "fail")
    for _ in range(5):
        m.record_transition("s0", "a", "goal")
    for _ in range(9):
        m.record_transition("s0", "b", "s0")
    m.record_transition("s0", "b", "goal")
    m.initial = "s0"
    return m


def snapshot_from_weights(n, weights, goal=(), initial="s0") -> ModelSnapshot:
    """Build a learned snapshot whose probabilities are exactly the
    normalized integer ``weights``: {(state_idx, action): {succ_idx: w}}."""
    actions = sorted({a for _, a in weights})
    m = LearnedMdp(
        states=[f"s{i}" for i in range(n)],
        actions=actions,
        initial=initial,
        mode="strict",
    )
    for (s, a), succ in sorted(weights.items()):
        for t, w in sorted(succ.items()):
            for _ in range(int(w)):
                m.record_transition(f"s{s}", a, f"s{t}")
    for g in goal:
        m.add_label("goal", f"s{g}")
    return m.snapshot()


def re_initial(snap: ModelSnapshot, state: str) -> ModelSnapshot:
    """Same snapshot with a different initial state."""
    doc = snap.to_json_dict()
    doc["initial"] = snap.state_index(state)
    return ModelSnapshot.from_json_dict(doc)

"""PRISM-subset export and import."""

import numpy as np
import pytest

import oracle as O
from models import build_toy3, snapshot_from_weights

from agentguard.errors import EmptyModel, UnsupportedConstruct
from agentguard.model import LearnedMdp, ModelSnapshot, RewardStructure
from agentguard.prism import export_prism, import_prism

TOY3_TEXT = """mdp

module agent
  s : [0..2] init 0;
  [a] s=0 -> 5/10:(s'=1) + 5/10:(s'=2);
  [b] s=0 -> 9/10:(s'=0) + 1/10:(s'=2);
  [__self__] s=1 -> 1/1:(s'=1);
  [__self__] s=2 -> 1/1:(s'=2);
endmodule
"""


def test_toy3_export_is_frozen_text():
    text = export_prism(build_toy3().snapshot())
    assert text == TOY3_TEXT
    assert "[b] s=0 -> 9/10:(s'=0) + 1/10:(s'=2);" in text


def test_single_absorbing_state():
    m = LearnedMdp(states=["only"], initial="only")
    assert export_prism(m.snapshot()) == (
        "mdp\n\nmodule agent\n  s : [0..0] init 0;\n"
        "  [__self__] s=0 -> 1/1:(s'=0);\nendmodule\n"
    )


def test_empty_snapshot_rejected():
    empty = ModelSnapshot(
        states=(), actions=(), counts={}, labels={}, initial=None,
        reward_structures={}, revision=0,
    )
    with pytest.raises(EmptyModel):
        export_prism(empty)


def test_labels_sorted_and_rewards_block():
    m = build_toy3()
    m.add_label("ok", "goal")
    m.add_label("bad", "fail")
    m.add_reward_structure(RewardStructure("cost", per_step=2.0))
    text = export_prism(m.snapshot())
    lines = text.splitlines()
    assert 'label "bad" = s=1;' in lines
    assert 'label "ok" = s=2;' in lines
    assert lines.index('label "bad" = s=1;') < lines.index('label "ok" = s=2;')
    block = text[text.index('rewards "cost"'):]
    assert block == (
        'rewards "cost"\n  [a] s=0 : 2;\n  [b] s=0 : 2;\nendrewards\n'
    )


def test_decimal_export_after_decay():
    m = build_toy3()
    m.apply_forgetting(0.3)
    text = export_prism(m.snapshot())
    assert "/" not in text.split("endmodule")[0].replace("1/1:(s'=", "@")
    assert "0.5:(s'=1)" in text


def test_import_round_trips_toy3():
    snap = build_toy3().snapshot()
    back = import_prism(export_prism(snap))
    assert back.initial == 0
    assert back.states == ("s0", "s1", "s2")
    assert back.actions == ("a", "b")
    assert back.transition_probability(0, "a", 1) == 0.5
    assert back.transition_probability(0, "b", 0) == 0.9
    # dead ends stay dead ends rather than becoming observed self-loops
    assert back.enabled_actions(1) == set()
    assert back.enabled_actions(2) == set()


def test_fraction_and_decimal_agree():
    base = "mdp\nmodule agent\ns : [0..1] init 0;\n[go] s=0 -> %s:(s'=0) + %s:(s'=1);\nendmodule\n"
    a = import_prism(base % ("3/4", "1/4"))
    b = import_prism(base % ("0.75", "0.25"))
    assert a.transition_probability(0, "go", 1) == b.transition_probability(0, "go", 1) == 0.25


def test_import_accepts_comments_and_blanks():
    text = (
        "// learned model\nmdp\n\nmodule m1 // agent\n"
        "s : [0..0] init 0; // one state\n[__self__] s=0 -> 1/1:(s'=0);\n"
        "endmodule\n\n"
    )
    snap = import_prism(text)
    assert snap.states == ("s0",)


def test_import_rejects_other_model_types():
    with pytest.raises(UnsupportedConstruct) as exc:
        import_prism("ctmc\nmodule m\ns : [0..0] init 0;\nendmodule\n")
    assert exc.value.line == 1


def test_import_error_line_numbers():
    cases = [
        ("mdp\nmodule m\ns : [0..1] init 0;\nglobal x : bool;\nendmodule\n", 4),
        ("mdp\nmodule m\ns : [0..1] init 2;\nendmodule\n", 3),
        ("mdp\nmodule m\ns : [0..0] init 0;\n[a] s=0 -> 1/1:(s'=5);\nendmodule\n", 4),
        ("mdp\nmodule m\ns : [0..0] init 0;\n[a] s=0 -> 1/2:(s'=0);\nendmodule\n", 4),
        (
            "mdp\nmodule m\ns : [0..0] init 0;\n[a] s=0 -> 1/1:(s'=0);\n"
            "[a] s=0 -> 1/1:(s'=0);\nendmodule\n",
            5,
        ),
        (
            "mdp\nmodule m\ns : [0..0] init 0;\n"
            "[a] s=0 -> 0.5:(s'=0) + 0.6:(s'=0);\nendmodule\n",
            4,
        ),
        ("mdp\nmodule m\ns : [0..0] init 0;\n", 3),
        ("mdp\nmodule m\ns : [0..0] init 0;\nendmodule\nrewards \"r\"\n", 5),
    ]
    for text, line in cases:
        with pytest.raises(UnsupportedConstruct) as exc:
            import_prism(text)
        assert exc.value.line == line, text


def test_import_rejects_duplicate_successor():
    text = (
        "mdp\nmodule m\ns : [0..1] init 0;\n"
        "[a] s=0 -> 1/2:(s'=1) + 1/2:(s'=1);\nendmodule\n"
    )
    with pytest.raises(UnsupportedConstruct) as exc:
        import_prism(text)
    assert exc.value.line == 4


def test_import_rejects_reward_for_unknown_command():
    text = (
        "mdp\nmodule m\ns : [0..0] init 0;\n[__self__] s=0 -> 1/1:(s'=0);\nendmodule\n"
        'rewards "r"\n[jump] s=0 : 1;\nendrewards\n'
    )
    with pytest.raises(UnsupportedConstruct) as exc:
        import_prism(text)
    assert exc.value.line == 7


def test_import_rejects_duplicate_label():
    text = (
        "mdp\nmodule m\ns : [0..0] init 0;\nendmodule\n"
        'label "x" = s=0;\nlabel "x" = s=0;\n'
    )
    with pytest.raises(UnsupportedConstruct) as exc:
        import_prism(text)
    assert exc.value.line == 6


def test_label_false_round_trip():
    text = (
        "mdp\nmodule m\ns : [0..0] init 0;\nendmodule\n"
        'label "never" = false;\n'
    )
    snap = import_prism(text)
    assert snap.labels == {"never": frozenset()}
    assert 'label "never" = false;' in export_prism(snap)


def _matrices_equal(a: ModelSnapshot, b: ModelSnapshot, tol=0.0) -> bool:
    rows_a = {(si, a.actions[ai]): row for si, ai, row in a.rows()}
    rows_b = {(si, b.actions[ai]): row for si, ai, row in b.rows()}
    if set(rows_a) != set(rows_b):
        return False
    for key, row in rows_a.items():
        other = rows_b[key]
        if [t for t, _ in row] != [t for t, _ in other]:
            return False
        if any(abs(p - q) > tol for (_, p), (_, q) in zip(row, other)):
            return False
    return True


def test_round_trip_random_models():
    rng = np.random.default_rng(20260814)
    for _ in range(100):
        n, weights, goal = O.random_weighted_mdp(rng)
        snap = snapshot_from_weights(n, weights, goal=goal)
        text = export_prism(snap)
        back = import_prism(text)
        assert _matrices_equal(snap, back)
        members = {snap.state_index(s) for s in snap.labels.get("goal", frozenset())}
        members_back = {
            back.state_index(s) for s in back.labels.get("goal", frozenset())
        }
        assert members == members_back
        # canonical form is a fixed point of another round trip
        canon = export_prism(back)
        assert export_prism(import_prism(canon)) == canon


def test_round_trip_rewards_preserved():
    m = build_toy3()
    m.add_reward_structure(
        RewardStructure("cost", 1.0, ((("s0", "a", None), 4.0), ((None, None, "goal"), 7.0)))
    )
    snap = m.snapshot()
    back = import_prism(export_prism(snap))
    for si, ai, _ in snap.raw_rows():
        assert back.expected_row_reward("cost", si, ai) == snap.expected_row_reward(
            "cost", si, ai
        )


def test_round_trip_after_decay_is_close():
    m = build_toy3()
    m.apply_forgetting(0.7)
    snap = m.snapshot()
    back = import_prism(export_prism(snap))
    assert _matrices_equal(snap, back, tol=1e-12)

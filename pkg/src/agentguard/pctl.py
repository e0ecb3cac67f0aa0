"""Property language: parsing, validation and canonical printing.

The language is a PCTL subset over quoted labels:

    Pmax=? [ F "fix_success" ]
    Pmin=? [ G !"write_fix" ]
    P>=0.9 [ "working" U<=50 "done" ]
    R{"steps"}min=? [ F "goal" ]

Quantities (`=?`) return numbers, bounds (`>= > <= <`) return booleans.
`Pmax`/`Pmin`/`Rmax`/`Rmin` optimize over the MDP's nondeterminism; bare
`P`/`R` evaluate the chain induced by the observed policy. Labels are
always quoted; a bare state name in quotes acts as its own label.

Parsers report failures as PropertySyntaxError carrying the byte offset
and the token set that would have been accepted there.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .errors import (
    BoundError,
    ModeMismatch,
    PropertySyntaxError,
    ThresholdError,
    UnknownLabel,
    UnknownRewardStructure,
)

# -- AST ------------------------------------------------------------------


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class FalseF:
    pass


@dataclass(frozen=True)
class Label:
    name: str


@dataclass(frozen=True)
class Not:
    operand: "StateFormula"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Or:
    left: "StateFormula"
    right: "StateFormula"


StateFormula = TrueF | FalseF | Label | Not | And | Or


@dataclass(frozen=True)
class Eventually:
    operand: StateFormula
    bound: int | None = None


@dataclass(frozen=True)
class Globally:
    operand: StateFormula
    bound: int | None = None


@dataclass(frozen=True)
class Until:
    left: StateFormula
    right: StateFormula
    bound: int | None = None


PathFormula = Eventually | Globally | Until

# Optimization directions. "policy" means: evaluate on the Markov chain
# induced by the empirical policy instead of optimizing over actions.
OPTS = ("max", "min", "policy")
OPS = (">=", ">", "<=", "<")


@dataclass(frozen=True)
class Property:
    kind: str  # prob_quantity | prob_bound | reward_quantity | reward_bound
    opt: str  # max | min | policy
    path: PathFormula | None = None
    target: StateFormula | None = None  # reward properties only
    structure: str | None = None  # None selects the default "steps"
    op: str | None = None  # bounds only
    threshold: float | None = None  # bounds only
    name: str | None = None

    @property
    def is_reward(self) -> bool:
        return self.kind.startswith("reward")

    @property
    def is_bound(self) -> bool:
        return self.kind.endswith("bound")

    @property
    def mode_hint(self) -> str:
        return "dtmc" if self.opt == "policy" else "mdp"

    def named(self, name: str) -> "Property":
        return replace(self, name=name)

    def __str__(self) -> str:
        return format_property(self)


# -- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<eqq>=\?)
  | (?P<op>>=|<=|>|<)
  | (?P<punct>[\[\](){}!&|])
  | (?P<string>"[A-Za-z_][A-Za-z0-9_]*")
  | (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # one of: ident string number eof, or the symbol itself
    value: str
    offset: int


def _lex(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            found = text[pos]
            if found == '"':
                raise PropertySyntaxError(pos, {'"label"'}, "unterminated string")
            raise PropertySyntaxError(pos, {"token"}, found)
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        value = m.group()
        if kind == "eqq":
            tokens.append(_Token("=?", value, m.start()))
        elif kind in ("op", "punct"):
            tokens.append(_Token(value, value, m.start()))
        elif kind == "string":
            tokens.append(_Token("string", value[1:-1], m.start()))
        else:
            tokens.append(_Token(kind, value, m.start()))
    tokens.append(_Token("eof", "", len(text)))
    return tokens


# -- parser ------------------------------------------------------------------

_QUANTIFIERS = ("Pmax", "Pmin", "P", "Rmax", "Rmin", "R")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _lex(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def fail(self, expected: set[str]):
        tok = self.peek()
        found = tok.value if tok.kind != "eof" else "end of input"
        raise PropertySyntaxError(tok.offset, expected, found)

    def expect(self, kind: str, expected: set[str] | None = None) -> _Token:
        if self.peek().kind != kind:
            self.fail(expected or {kind})
        return self.advance()

    # property := quantifier selector? suffix? ('=?' | op number) '[' body ']'
    def property(self) -> Property:
        tok = self.peek()
        if tok.kind != "ident" or tok.value not in _QUANTIFIERS:
            self.fail(set(_QUANTIFIERS))
        self.advance()
        word = tok.value
        is_reward = word.startswith("R")
        opt = {"max": "max", "min": "min", "": "policy"}[word[1:]]

        structure = None
        if is_reward and self.peek().kind == "{":
            if word != "R":
                self.fail({"=?"} | set(OPS))
            self.advance()
            structure = self.expect("string", {'"structure"'}).value
            self.expect("}")
            nxt = self.peek()
            if nxt.kind == "ident" and nxt.value in ("max", "min"):
                opt = self.advance().value

        nxt = self.peek()
        if nxt.kind == "=?":
            self.advance()
            op = threshold = None
        elif nxt.kind in OPS:
            op = self.advance().kind
            if opt == "policy":
                # inline bounds without an explicit direction take the
                # optimistic one; policy-chain bounds are configured as
                # thresholds on quantity properties instead
                opt = "max"
            num = self.expect("number", {"number"})
            threshold = float(num.value)
            if not is_reward and not 0.0 <= threshold <= 1.0:
                raise ThresholdError(
                    threshold, "probability threshold must be within [0, 1]"
                )
            if is_reward and threshold < 0.0:
                raise ThresholdError(threshold, "reward threshold must be >= 0")
        else:
            self.fail({"=?"} | set(OPS))

        self.expect("[")
        if is_reward:
            f = self.peek()
            if f.kind != "ident" or f.value != "F":
                self.fail({"F"})
            self.advance()
            target = self.or_expr()
            path = None
        else:
            path = self.path()
            target = None
        self.expect("]")
        if self.peek().kind != "eof":
            self.fail({"end of input"})

        base = "reward" if is_reward else "prob"
        kind = f"{base}_{'bound' if op else 'quantity'}"
        return Property(
            kind=kind,
            opt=opt,
            path=path,
            target=target,
            structure=structure,
            op=op,
            threshold=threshold,
        )

    # path := 'F' bound? sf | 'G' bound? sf | sf 'U' bound? sf
    def path(self) -> PathFormula:
        tok = self.peek()
        if tok.kind == "ident" and tok.value in ("F", "G"):
            self.advance()
            bound = self.bound()
            operand = self.or_expr()
            return (Eventually if tok.value == "F" else Globally)(operand, bound)
        left = self.or_expr()
        u = self.peek()
        if u.kind != "ident" or u.value != "U":
            self.fail({"U"})
        self.advance()
        bound = self.bound()
        right = self.or_expr()
        return Until(left, right, bound)

    def bound(self) -> int | None:
        if self.peek().kind != "<=":
            return None
        self.advance()
        num = self.expect("number", {"integer"})
        if not re.fullmatch(r"\d+", num.value):
            raise PropertySyntaxError(num.offset, {"integer"}, num.value)
        k = int(num.value)
        if k < 1:
            raise BoundError(k)
        return k

    # sf := and_expr ('|' and_expr)*
    def or_expr(self) -> StateFormula:
        node = self.and_expr()
        while self.peek().kind == "|":
            self.advance()
            node = Or(node, self.and_expr())
        return node

    def and_expr(self) -> StateFormula:
        node = self.unary()
        while self.peek().kind == "&":
            self.advance()
            node = And(node, self.unary())
        return node

    def unary(self) -> StateFormula:
        if self.peek().kind == "!":
            self.advance()
            return Not(self.unary())
        return self.atom()

    def atom(self) -> StateFormula:
        tok = self.peek()
        if tok.kind == "string":
            self.advance()
            return Label(tok.value)
        if tok.kind == "ident" and tok.value == "true":
            self.advance()
            return TrueF()
        if tok.kind == "ident" and tok.value == "false":
            self.advance()
            return FalseF()
        if tok.kind == "(":
            self.advance()
            node = self.or_expr()
            self.expect(")")
            return node
        self.fail({"true", "false", '"label"', "!", "("})


def parse_property(text: str) -> Property:
    """Parse one property; raises PropertySyntaxError / BoundError /
    ThresholdError on malformed input."""
    return _Parser(text).property()


# -- formatting ---------------------------------------------------------------

_PREC = {Or: 1, And: 2, Not: 3}


def _fmt_sf(f: StateFormula, parent_prec: int = 0, right_side: bool = False) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Label):
        return f'"{f.name}"'
    if isinstance(f, Not):
        return "!" + _fmt_sf(f.operand, _PREC[Not])
    op = "&" if isinstance(f, And) else "|"
    prec = _PREC[type(f)]
    text = f"{_fmt_sf(f.left, prec)} {op} {_fmt_sf(f.right, prec, right_side=True)}"
    # binary parsing is left-associative, so a right child at equal
    # precedence (and any child at lower precedence) needs parentheses
    if prec < parent_prec or (prec == parent_prec and right_side):
        return f"({text})"
    return text


def _fmt_bound(k: int | None) -> str:
    return "" if k is None else f"<={k}"


def _fmt_path(p: PathFormula) -> str:
    if isinstance(p, Eventually):
        return f"F{_fmt_bound(p.bound)} {_fmt_sf(p.operand)}"
    if isinstance(p, Globally):
        return f"G{_fmt_bound(p.bound)} {_fmt_sf(p.operand)}"
    return f"{_fmt_sf(p.left)} U{_fmt_bound(p.bound)} {_fmt_sf(p.right)}"


def _fmt_number(x: float) -> str:
    return repr(float(x))


def format_property(p: Property) -> str:
    """Canonical text form; parse_property(format_property(p)) == p."""
    head = "R" if p.is_reward else "P"
    if p.structure is not None:
        head += f'{{"{p.structure}"}}'
    head += {"max": "max", "min": "min", "policy": ""}[p.opt]
    head += "=?" if not p.is_bound else f"{p.op}{_fmt_number(p.threshold)}"
    body = f"F {_fmt_sf(p.target)}" if p.is_reward else _fmt_path(p.path)
    return f"{head} [ {body} ]"


# -- validation ----------------------------------------------------------------


def _labels_in(f) -> set[str]:
    if isinstance(f, Label):
        return {f.name}
    if isinstance(f, Not):
        return _labels_in(f.operand)
    if isinstance(f, (And, Or)):
        return _labels_in(f.left) | _labels_in(f.right)
    if isinstance(f, (Eventually, Globally)):
        return _labels_in(f.operand)
    if isinstance(f, Until):
        return _labels_in(f.left) | _labels_in(f.right)
    return set()


DEFAULT_REWARD_STRUCTURE = "steps"


def validate_names(
    p: Property,
    labels: set[str],
    structures: set[str],
    mode: str = "both",
) -> Property:
    """Check that every referenced name resolves and that the optimization
    direction fits the configured checker mode (mdp, dtmc or both).

    ``labels`` must include state names (they act as singleton labels).
    The default structure ``steps`` always resolves; it is synthesized as
    per-step 1 when not declared.
    """
    for name in sorted(_labels_in(p.path if p.path is not None else p.target)):
        if name not in labels:
            raise UnknownLabel(name)
    if p.is_reward:
        structure = p.structure or DEFAULT_REWARD_STRUCTURE
        if structure not in structures and structure != DEFAULT_REWARD_STRUCTURE:
            raise UnknownRewardStructure(structure)
    if p.opt == "policy" and mode not in ("dtmc", "both"):
        raise ModeMismatch(
            f"{format_property(p)} evaluates the observed-policy chain, "
            f"but checker mode is {mode!r}"
        )
    if p.opt != "policy" and mode not in ("mdp", "both"):
        raise ModeMismatch(
            f"{format_property(p)} optimizes over actions, "
            f"but checker mode is {mode!r}"
        )
    return p

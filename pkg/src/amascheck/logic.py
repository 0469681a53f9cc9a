"""Flat strategic formulas: ``<<A>> X p``, ``<<A>> G p``, ``<<A>> F p`` and ``<<A>> p U q``.

State predicates are boolean combinations of location atoms ``Agent@loc``,
comparisons ``Agent.var <= k`` and named propositions bound through a
definitions mapping.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

import numpy as np

from .diagnostics import SpecError, error
from .lexer import TokenStream

_CMP = {
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    "!=": operator.ne,
    ">=": operator.ge,
    ">": operator.gt,
}
TEMPORAL_UNARY = ("X", "G", "F")
TEMPORAL_BINARY = ("U", "R")


class UnresolvedAtom(Exception):
    pass


class UnsupportedFragment(ValueError):
    pass


# -- predicates --------------------------------------------------------------

@dataclass(frozen=True)
class LocationAtom:
    agent: str
    location: str

    def __str__(self) -> str:
        return f"{self.agent}@{self.location}"


@dataclass(frozen=True)
class CompareAtom:
    agent: str
    var: str
    op: str
    value: int

    def __str__(self) -> str:
        return f"{self.agent}.{self.var}{self.op}{self.value}"


@dataclass(frozen=True)
class NamedAtom:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class BoolP:
    value: bool


@dataclass(frozen=True)
class NotP:
    arg: "Pred"


@dataclass(frozen=True)
class AndP:
    args: tuple["Pred", ...]


@dataclass(frozen=True)
class OrP:
    args: tuple["Pred", ...]


@dataclass(frozen=True)
class Implies:
    left: "Pred"
    right: "Pred"


Atom = Union[LocationAtom, CompareAtom, NamedAtom]
Pred = Union[LocationAtom, CompareAtom, NamedAtom, BoolP, NotP, AndP, OrP, Implies]
PTRUE = BoolP(True)


# -- formulas ------------------------------------------------------------------

@dataclass(frozen=True)
class Temporal:
    op: str
    args: tuple[Pred, ...]


@dataclass(frozen=True)
class Strategic:
    coalition: tuple[str, ...]
    path: Temporal


@dataclass(frozen=True)
class FlatFormula:
    """Coalition, operator (X, G or U) and its one or two state predicates."""

    coalition: tuple[str, ...]
    operator: str
    predicates: tuple[Pred, ...]
    source: str = field(default="", compare=False)

    @property
    def goal(self) -> Pred:
        return self.predicates[-1]

    def __str__(self) -> str:
        return format_formula(self)


# -- parsing -------------------------------------------------------------------

class _FormulaParser:
    def __init__(self, text: str):
        self.ts = TokenStream(text)

    def formula(self) -> Strategic:
        ts = self.ts
        ts.expect_kind("COOP_OPEN", "'<<'")
        coalition: list[str] = []
        if not ts.at_kind("COOP_CLOSE"):
            coalition.append(ts.expect_kind("IDENT", "agent name").text)
            while ts.accept(","):
                coalition.append(ts.expect_kind("IDENT", "agent name").text)
        ts.expect_kind("COOP_CLOSE", "'>>'")
        path = self.path()
        if not ts.at_kind("EOF"):
            if ts.at_kind("COOP_OPEN"):
                raise self._nested()
            raise ts.error("unexpected trailing input")
        return Strategic(tuple(coalition), path)

    def _nested(self) -> SpecError:
        return SpecError([error("nested strategic operators unsupported", self.ts.current.pos)])

    def path(self) -> Temporal:
        ts = self.ts
        if ts.at_kind("COOP_OPEN"):
            raise self._nested()
        tok = ts.current
        if tok.kind == "IDENT" and tok.text in TEMPORAL_UNARY and self._starts_operand(1):
            ts.advance()
            return Temporal(tok.text, (self.pred(),))
        if (tok.kind == "IDENT" and self._starts_operand(1) and ts.peek().text not in TEMPORAL_BINARY
                and tok.text not in ("true", "false")):
            raise SpecError([error(f"unknown temporal operator {tok.text!r}", tok.pos)])
        if tok.text == "(":
            mark = ts.i
            try:
                ts.advance()
                inner = self.path()
                ts.expect(")")
                return inner
            except SpecError:
                ts.i = mark
        left = self.pred()
        op = ts.current
        if op.kind == "IDENT" and op.text in TEMPORAL_BINARY:
            ts.advance()
            return Temporal(op.text, (left, self.pred()))
        if ts.at_kind("COOP_OPEN"):
            raise self._nested()
        raise ts.error("expected temporal operator (X, G, F or U)")

    def _starts_operand(self, offset: int) -> bool:
        tok = self.ts.peek(offset)
        return tok.kind in ("IDENT", "COOP_OPEN", "INT") or tok.text in ("(", "!", "~")

    def pred(self) -> Pred:
        left = self.disj()
        if self.ts.accept_kind("IMPLIES"):
            return Implies(left, self.pred())
        return left

    def disj(self) -> Pred:
        args = [self.conj()]
        while self.ts.accept("||", "|"):
            args.append(self.conj())
        return args[0] if len(args) == 1 else OrP(tuple(args))

    def conj(self) -> Pred:
        args = [self.unary()]
        while self.ts.accept("&&", "&"):
            args.append(self.unary())
        return args[0] if len(args) == 1 else AndP(tuple(args))

    def unary(self) -> Pred:
        ts = self.ts
        tok = ts.current
        if ts.at_kind("COOP_OPEN"):
            raise self._nested()
        if ts.accept("!", "~"):
            return NotP(self.unary())
        if ts.accept("("):
            p = self.pred()
            ts.expect(")")
            return p
        if tok.kind != "IDENT":
            raise SpecError([error("malformed atom", tok.pos)])
        if tok.text in ("true", "false"):
            ts.advance()
            return BoolP(tok.text == "true")
        if (tok.text in TEMPORAL_UNARY or tok.text in TEMPORAL_BINARY) and ts.peek().text not in ("@", "."):
            raise SpecError([error("nested temporal operators unsupported", tok.pos)])
        ts.advance()
        if ts.accept("@"):
            if not ts.at_kind("IDENT"):
                raise SpecError([error("malformed atom: expected location after '@'", ts.current.pos)])
            return LocationAtom(tok.text, ts.advance().text)
        if ts.accept("."):
            if not ts.at_kind("IDENT"):
                raise SpecError([error("malformed atom: expected variable after '.'", ts.current.pos)])
            var = ts.advance().text
            if ts.current.text not in _CMP:
                raise SpecError([error("malformed atom: expected comparison", ts.current.pos)])
            op = ts.advance().text
            neg = ts.accept("-") is not None
            if not ts.at_kind("INT"):
                raise SpecError([error("malformed atom: expected integer constant", ts.current.pos)])
            value = int(ts.advance().text)
            return CompareAtom(tok.text, var, op, -value if neg else value)
        return NamedAtom(tok.text)


def parse_formula(text: str) -> Strategic:
    """Parse formula text; raises :class:`SpecError` on malformed or out-of-fragment input."""
    return _FormulaParser(text).formula()


def parse_predicate(text: str) -> Pred:
    parser = _FormulaParser(text)
    p = parser.pred()
    if not parser.ts.at_kind("EOF"):
        raise parser.ts.error("unexpected trailing input")
    return p


def classify(formula: Strategic | FlatFormula, source: str = "") -> FlatFormula:
    """Decompose into (coalition, operator, predicates); ``F p`` becomes ``true U p``."""
    if isinstance(formula, FlatFormula):
        return formula
    op = formula.path.op
    args = formula.path.args
    coalition = tuple(formula.coalition)
    if op in ("X", "G"):
        return FlatFormula(coalition, op, args, source)
    if op == "F":
        return FlatFormula(coalition, "U", (PTRUE, args[0]), source)
    if op == "U":
        return FlatFormula(coalition, "U", args, source)
    raise UnsupportedFragment(f"unsupported fragment: operator {op}")


def parse_flat(text: str) -> FlatFormula:
    return classify(parse_formula(text), text)


# -- formatting --------------------------------------------------------------

def format_pred(p: Pred, top: bool = True) -> str:
    if isinstance(p, (LocationAtom, CompareAtom, NamedAtom)):
        return str(p)
    if isinstance(p, BoolP):
        return "true" if p.value else "false"
    if isinstance(p, NotP):
        return "!" + format_pred(p.arg, top=False)
    if isinstance(p, AndP):
        body = " && ".join(format_pred(a, top=False) for a in p.args)
    elif isinstance(p, OrP):
        body = " || ".join(format_pred(a, top=False) for a in p.args)
    elif isinstance(p, Implies):
        body = f"{format_pred(p.left, top=False)} -> {format_pred(p.right, top=False)}"
    else:
        raise TypeError(p)
    return body if top else f"({body})"


def format_formula(f: FlatFormula | Strategic) -> str:
    if isinstance(f, Strategic):
        coalition, op, args = f.coalition, f.path.op, f.path.args
    else:
        coalition, op, args = f.coalition, f.operator, f.predicates
    head = f"<<{','.join(coalition)}>>"
    if len(args) == 1:
        return f"{head} {op} {format_pred(args[0], top=False)}"
    return f"{head} {format_pred(args[0], top=False)} {op} {format_pred(args[1], top=False)}"


# -- atoms -----------------------------------------------------------------------

def _walk(p: Pred) -> Iterator[Atom]:
    if isinstance(p, (LocationAtom, CompareAtom, NamedAtom)):
        yield p
    elif isinstance(p, NotP):
        yield from _walk(p.arg)
    elif isinstance(p, (AndP, OrP)):
        for a in p.args:
            yield from _walk(a)
    elif isinstance(p, Implies):
        yield from _walk(p.left)
        yield from _walk(p.right)


def atoms_of(formula) -> set[Atom]:
    if isinstance(formula, FlatFormula):
        preds: Iterable[Pred] = formula.predicates
    elif isinstance(formula, Strategic):
        preds = formula.path.args
    else:
        preds = (formula,)
    return {a for p in preds for a in _walk(p)}


# -- evaluation ----------------------------------------------------------------

def _resolve_named(atom: NamedAtom, definitions: Mapping[str, Pred] | None) -> Pred:
    if definitions is None or atom.name not in definitions:
        raise UnresolvedAtom(f"unresolved proposition {atom.name!r}")
    return definitions[atom.name]


def _check_agent(model, agent: str) -> int:
    if agent not in model.agent_index:
        raise UnresolvedAtom(f"unknown agent {agent!r}")
    return model.agent_index[agent]


def sat(model, pred: Pred, definitions: Mapping[str, Pred] | None = None) -> np.ndarray:
    """Boolean vector over all states of ``model`` marking where ``pred`` holds."""
    n = model.num_states
    if isinstance(pred, BoolP):
        return np.full(n, pred.value, dtype=bool)
    if isinstance(pred, LocationAtom):
        i = _check_agent(model, pred.agent)
        locs = model.agents[i].loc_index
        if pred.location not in locs:
            raise UnresolvedAtom(f"unknown location {pred}")
        return model.location_column(i) == locs[pred.location]
    if isinstance(pred, CompareAtom):
        i = _check_agent(model, pred.agent)
        if pred.var not in model.agents[i].var_index:
            raise UnresolvedAtom(f"unknown variable {pred.agent}.{pred.var}")
        return _CMP[pred.op](model.value_column(i, pred.var), pred.value)
    if isinstance(pred, NamedAtom):
        return sat(model, _resolve_named(pred, definitions), definitions)
    if isinstance(pred, NotP):
        return ~sat(model, pred.arg, definitions)
    if isinstance(pred, AndP):
        out = np.ones(n, dtype=bool)
        for a in pred.args:
            out &= sat(model, a, definitions)
        return out
    if isinstance(pred, OrP):
        out = np.zeros(n, dtype=bool)
        for a in pred.args:
            out |= sat(model, a, definitions)
        return out
    if isinstance(pred, Implies):
        return ~sat(model, pred.left, definitions) | sat(model, pred.right, definitions)
    raise TypeError(f"not a predicate: {pred!r}")


def eval_state_pred(model, index: int, pred: Pred, definitions: Mapping[str, Pred] | None = None) -> bool:
    """Truth of ``pred`` in one global state."""
    state = model.state(index)

    def ev(p: Pred) -> bool:
        if isinstance(p, BoolP):
            return p.value
        if isinstance(p, LocationAtom):
            i = _check_agent(model, p.agent)
            if p.location not in model.agents[i].loc_index:
                raise UnresolvedAtom(f"unknown location {p}")
            return state[i].location == p.location
        if isinstance(p, CompareAtom):
            i = _check_agent(model, p.agent)
            try:
                value = state[i].value(p.var)
            except KeyError:
                raise UnresolvedAtom(f"unknown variable {p.agent}.{p.var}") from None
            return _CMP[p.op](value, p.value)
        if isinstance(p, NamedAtom):
            return ev(_resolve_named(p, definitions))
        if isinstance(p, NotP):
            return not ev(p.arg)
        if isinstance(p, AndP):
            return all(ev(a) for a in p.args)
        if isinstance(p, OrP):
            return any(ev(a) for a in p.args)
        if isinstance(p, Implies):
            return (not ev(p.left)) or ev(p.right)
        raise TypeError(f"not a predicate: {p!r}")

    return ev(pred)


def check_coalition(model, formula: FlatFormula) -> tuple[int, ...]:
    return tuple(sorted({_check_agent(model, a) for a in formula.coalition}))

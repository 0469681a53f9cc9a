"""Agent templates, local states and the guarded-update semantics of single agents.

A local state is a ``LocalState(location, valuation)`` pair where the valuation
lists every declared variable of the agent in declaration order.  Inside the
composition engine local states are handled through dense integer ids
(mixed-radix codes over the declared domains); ``ConcreteAgent`` converts
between the two views.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Union

DEFAULT_LOCAL_CAP = 10**6

_CMP = {
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    "!=": operator.ne,
    ">=": operator.ge,
    ">": operator.gt,
}


class ExpansionError(Exception):
    """An agent's candidate local-state space exceeds the configured cap."""


class EvaluationError(Exception):
    """A guard or update referenced a variable missing from the context."""


# -- expressions -----------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: int
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class VarRef:
    agent: str
    name: str
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)

    def __str__(self) -> str:
        return f"{self.agent}.{self.name}"


Operand = Union[Const, VarRef]


@dataclass(frozen=True)
class Compare:
    op: str
    left: Operand
    right: Operand
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class BoolConst:
    value: bool
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class Not:
    arg: "Guard"
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class And:
    args: tuple["Guard", ...]
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class Or:
    args: tuple["Guard", ...]
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)


Guard = Union[Compare, BoolConst, Not, And, Or]

TRUE = BoolConst(True)


def guard_vars(guard: Guard | None) -> Iterator[VarRef]:
    """Yield every variable reference occurring in ``guard``."""
    if guard is None:
        return
    if isinstance(guard, Compare):
        for side in (guard.left, guard.right):
            if isinstance(side, VarRef):
                yield side
    elif isinstance(guard, Not):
        yield from guard_vars(guard.arg)
    elif isinstance(guard, (And, Or)):
        for arg in guard.args:
            yield from guard_vars(arg)


@dataclass(frozen=True)
class Update:
    target: VarRef
    op: str  # "=", "+=", "-="
    value: Operand
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)


# -- templates -------------------------------------------------------------

@dataclass(frozen=True)
class VariableDecl:
    name: str
    lower: int
    upper: int
    initial: int
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)

    @property
    def size(self) -> int:
        return self.upper - self.lower + 1

    def clamp(self, value: int) -> int:
        return min(self.upper, max(self.lower, value))


@dataclass(frozen=True)
class GuardedTransition:
    source: str
    event: str
    target: str
    guard: Guard | None = None
    updates: tuple[Update, ...] = ()
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)

    def reads(self) -> Iterator[VarRef]:
        yield from guard_vars(self.guard)
        for upd in self.updates:
            if isinstance(upd.value, VarRef):
                yield upd.value
            if upd.op != "=":
                yield upd.target


@dataclass(frozen=True)
class AgentTemplate:
    name: str
    initial: str
    variables: tuple[VariableDecl, ...] = ()
    transitions: tuple[GuardedTransition, ...] = ()
    declared_locations: tuple[str, ...] | None = None
    pos: tuple[int, int] = field(default=(1, 1), compare=False, repr=False)

    @property
    def locations(self) -> tuple[str, ...]:
        """Declared locations, or every transition endpoint in order of appearance."""
        seen: dict[str, None] = {}
        if self.declared_locations is not None:
            seen.update(dict.fromkeys(self.declared_locations))
        for t in self.transitions:
            seen.setdefault(t.source)
            seen.setdefault(t.target)
        if self.declared_locations is None and self.initial in seen:
            # keep the initial location first when locations are implicit
            seen = {self.initial: None, **seen}
        return tuple(seen)

    @property
    def events(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(t.event for t in self.transitions))

    def variable(self, name: str) -> VariableDecl:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(f"{self.name} has no variable {name!r}")

    def protocol(self, location: str) -> tuple[str, ...]:
        """Events labelling outgoing transitions of ``location`` (declaration order)."""
        return tuple(dict.fromkeys(t.event for t in self.transitions if t.source == location))

    def outgoing(self, location: str, event: str) -> tuple[GuardedTransition, ...]:
        return tuple(t for t in self.transitions if t.source == location and t.event == event)

    @property
    def initial_valuation(self) -> dict[str, int]:
        return {v.name: v.initial for v in self.variables}


@dataclass(frozen=True)
class SystemSpec:
    agents: tuple[AgentTemplate, ...]
    name: str = "system"

    def agent(self, name: str) -> AgentTemplate:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(f"unknown agent {name!r}")

    @property
    def agent_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.agents)

    def event_agents(self) -> dict[str, tuple[str, ...]]:
        """Map each event to the agents whose alphabet contains it, in agent order."""
        table: dict[str, list[str]] = {}
        for a in self.agents:
            for e in a.events:
                table.setdefault(e, []).append(a.name)
        return {e: tuple(names) for e, names in table.items()}

    @property
    def shared_events(self) -> frozenset[str]:
        return frozenset(e for e, names in self.event_agents().items() if len(names) > 1)


def agents_of(spec, event: str) -> frozenset[str]:
    """Return Agent(event): the agents having ``event`` in their alphabet."""
    system = getattr(spec, "spec", spec)
    owners = system.event_agents().get(event)
    if owners is None:
        raise KeyError(f"unknown event {event!r}")
    return frozenset(owners)


# -- semantics -------------------------------------------------------------

Context = Mapping[str, Mapping[str, int]]


def _operand(value: Operand, context: Context) -> int:
    if isinstance(value, Const):
        return value.value
    try:
        return context[value.agent][value.name]
    except KeyError:
        raise EvaluationError(f"unresolved variable {value}") from None


def eval_guard(guard: Guard | None, context: Context) -> bool:
    """Evaluate ``guard`` against per-agent valuations; a missing guard is true."""
    if guard is None:
        return True
    if isinstance(guard, Compare):
        return _CMP[guard.op](_operand(guard.left, context), _operand(guard.right, context))
    if isinstance(guard, BoolConst):
        return guard.value
    if isinstance(guard, Not):
        return not eval_guard(guard.arg, context)
    if isinstance(guard, And):
        return all(eval_guard(g, context) for g in guard.args)
    if isinstance(guard, Or):
        return any(eval_guard(g, context) for g in guard.args)
    raise TypeError(f"not a guard: {guard!r}")


def apply_updates(updates: Iterable[Update], context: Context, template: AgentTemplate) -> dict[str, int]:
    """Apply ``updates`` left to right to the owner's valuation, saturating at bounds.

    Own variables are read from the running valuation; peer variables are read
    from ``context`` (the pre-state snapshot).
    """
    own = dict(context[template.name])
    view = dict(context)
    view[template.name] = own
    for upd in updates:
        decl = template.variable(upd.target.name)
        rhs = _operand(upd.value, view)
        if upd.op == "=":
            new = rhs
        elif upd.op == "+=":
            new = own[decl.name] + rhs
        elif upd.op == "-=":
            new = own[decl.name] - rhs
        else:
            raise ValueError(f"unknown update operator {upd.op!r}")
        own[decl.name] = decl.clamp(new)
    return own


class LocalState(NamedTuple):
    location: str
    valuation: tuple[tuple[str, int], ...] = ()

    def value(self, name: str) -> int:
        for var, val in self.valuation:
            if var == name:
                return val
        raise KeyError(name)

    def as_dict(self) -> dict[str, int]:
        return dict(self.valuation)

    def __str__(self) -> str:
        if not self.valuation:
            return self.location
        vals = ",".join(f"{k}={v}" for k, v in self.valuation)
        return f"{self.location}[{vals}]"


class ConcreteAgent:
    """Finite local-state space of one agent, addressed by dense integer ids.

    Id layout: ``location_index + L * (v0 + s0 * (v1 + s1 * ...))`` with
    values offset by their lower bounds.
    """

    def __init__(self, template: AgentTemplate, cap: int = DEFAULT_LOCAL_CAP):
        self.template = template
        self.name = template.name
        self.locations = template.locations
        self.loc_index = {loc: i for i, loc in enumerate(self.locations)}
        self.var_names = tuple(v.name for v in template.variables)
        self.var_index = {n: i for i, n in enumerate(self.var_names)}
        self.lows = tuple(v.lower for v in template.variables)
        self.sizes = tuple(v.size for v in template.variables)
        # weight of each variable inside the id
        weights = []
        w = len(self.locations)
        for s in self.sizes:
            weights.append(w)
            w *= s
        self.weights = tuple(weights)
        self.candidate_count = w
        if self.candidate_count > cap:
            raise ExpansionError(
                f"agent {self.name}: {self.candidate_count} candidate local states exceed cap {cap}"
            )
        self.initial = LocalState(
            template.initial, tuple((v.name, v.initial) for v in template.variables)
        )
        self.initial_id = self.encode(self.initial)
        self._protocol = {loc: template.protocol(loc) for loc in self.locations}
        self.dead_locations = tuple(loc for loc in self.locations if not self._protocol[loc])

    def encode(self, state: LocalState) -> int:
        lid = self.loc_index[state.location]
        for (name, value), low, w in zip(state.valuation, self.lows, self.weights):
            lid += (value - low) * w
        return lid

    def encode_values(self, location: str, values: Mapping[str, int]) -> int:
        lid = self.loc_index[location]
        for name, low, w in zip(self.var_names, self.lows, self.weights):
            lid += (values[name] - low) * w
        return lid

    def location_of(self, lid: int) -> str:
        return self.locations[lid % len(self.locations)]

    def values_of(self, lid: int) -> dict[str, int]:
        rest = lid // len(self.locations)
        out = {}
        for name, low, size in zip(self.var_names, self.lows, self.sizes):
            rest, v = divmod(rest, size)
            out[name] = v + low
        return out

    def decode(self, lid: int) -> LocalState:
        vals = self.values_of(lid)
        return LocalState(self.location_of(lid), tuple((n, vals[n]) for n in self.var_names))

    def protocol(self, location: str) -> tuple[str, ...]:
        return self._protocol[location]

    def local_states(self) -> Iterator[LocalState]:
        """All candidate local states (location x full valuation domain)."""
        for lid in range(self.candidate_count):
            yield self.decode(lid)

    @property
    def propositions(self) -> frozenset[str]:
        props = {f"{self.name}@{loc}" for loc in self.locations}
        for v in self.template.variables:
            props.update(f"{self.name}.{v.name}={x}" for x in range(v.lower, v.upper + 1))
        return frozenset(props)

    def labels(self, state: LocalState) -> frozenset[str]:
        """Local valuation V_i: location indicator plus one equality atom per variable."""
        props = {f"{self.name}@{state.location}"}
        props.update(f"{self.name}.{k}={v}" for k, v in state.valuation)
        return frozenset(props)

    def __repr__(self) -> str:
        return f"ConcreteAgent({self.name!r}, candidates={self.candidate_count})"


def expand_template(template: AgentTemplate, cap: int = DEFAULT_LOCAL_CAP) -> ConcreteAgent:
    return ConcreteAgent(template, cap)

"""Parser, validator and pretty-printer for the ``.amas`` agent specification DSL.

Grammar::

    file   := ('system' NAME ';')? agent+
    agent  := 'agent' NAME '{' item* '}'
    item   := 'init' LOC ';'
            | 'var' NAME ':' INT '..' INT ('=' INT)? ';'
            | 'loc' LOC (',' LOC)* ';'
            | LOC '-[' EVENT ('when' GUARD)? ('do' UPDATE (',' UPDATE)*)? ']->' LOC ';'

Guards are boolean combinations (``!``, ``&&``, ``||``, parentheses) of
comparisons between integer constants and variables; ``1 <= x < 2`` chains are
accepted.  Updates are ``v = c``, ``v += c``, ``v -= c`` or ``v = Peer.w``
(the right-hand side may be any variable or constant).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .amas import (
    And,
    AgentTemplate,
    BoolConst,
    Compare,
    Const,
    Guard,
    GuardedTransition,
    Not,
    Or,
    SystemSpec,
    Update,
    VarRef,
    VariableDecl,
    eval_guard,
    guard_vars,
)
from .diagnostics import Diagnostic, SpecError, error, warning
from .lexer import TokenStream

CMP_OPS = ("<", "<=", "==", "!=", ">=", ">")
GUARD_ENUM_LIMIT = 2_000_000


# -- parsing ---------------------------------------------------------------

class _SystemParser:
    def __init__(self, text: str):
        self.ts = TokenStream(text)
        self.owner = ""

    def parse(self) -> SystemSpec:
        ts = self.ts
        name = "system"
        if ts.accept("system"):
            name = ts.expect_kind("IDENT", "system name").text
            ts.expect(";")
        agents = []
        seen: dict[str, tuple[int, int]] = {}
        diags: list[Diagnostic] = []
        while not ts.at_kind("EOF"):
            agent = self.agent()
            if agent.name in seen:
                diags.append(error(f"duplicate agent name {agent.name!r}", agent.pos))
            seen.setdefault(agent.name, agent.pos)
            agents.append(agent)
        if not agents:
            diags.append(error("specification declares no agents", ts.current.pos))
        if diags:
            raise SpecError(diags)
        return SystemSpec(tuple(agents), name)

    def agent(self) -> AgentTemplate:
        ts = self.ts
        start = ts.current
        if not ts.at("agent"):
            raise ts.error("expected 'agent'")
        ts.advance()
        name = ts.expect_kind("IDENT", "agent name").text
        self.owner = name
        ts.expect("{")
        initial = None
        variables: list[VariableDecl] = []
        transitions: list[GuardedTransition] = []
        locations: list[str] | None = None
        while not ts.at("}"):
            tok = ts.current
            if tok.kind == "EOF":
                raise ts.error("expected '}'")
            if ts.at("init") and ts.peek().kind == "IDENT" and ts.peek(2).text == ";":
                if initial is not None:
                    raise ts.error("duplicate init declaration")
                ts.advance()
                initial = ts.advance().text
                ts.expect(";")
            elif ts.at("var") and ts.peek().kind == "IDENT" and ts.peek(2).text == ":":
                variables.append(self.var_decl())
            elif ts.at("loc", "locations") and ts.peek().kind == "IDENT" and ts.peek(2).text in (",", ";"):
                ts.advance()
                locations = list(locations or [])
                locations.append(ts.expect_kind("IDENT", "location name").text)
                while ts.accept(","):
                    locations.append(ts.expect_kind("IDENT", "location name").text)
                ts.expect(";")
            elif tok.kind == "IDENT":
                transitions.append(self.transition())
            else:
                raise ts.error("expected declaration or transition")
        ts.expect("}")
        if initial is None:
            raise SpecError([error(f"agent {name!r} has no init declaration", start.pos)])
        return AgentTemplate(
            name=name,
            initial=initial,
            variables=tuple(variables),
            transitions=tuple(transitions),
            declared_locations=tuple(locations) if locations is not None else None,
            pos=start.pos,
        )

    def integer(self) -> int:
        ts = self.ts
        neg = ts.accept("-") is not None
        tok = ts.expect_kind("INT", "integer")
        return -int(tok.text) if neg else int(tok.text)

    def var_decl(self) -> VariableDecl:
        ts = self.ts
        start = ts.advance()
        name = ts.advance().text
        ts.expect(":")
        lo = self.integer()
        ts.expect("..")
        hi = self.integer()
        init = self.integer() if ts.accept("=") else lo
        ts.expect(";")
        return VariableDecl(name, lo, hi, init, pos=start.pos)

    def transition(self) -> GuardedTransition:
        ts = self.ts
        src = ts.advance()
        ts.expect_kind("ARROW_OPEN", "'-['")
        event = ts.expect_kind("IDENT", "event name").text
        guard = None
        updates: list[Update] = []
        if ts.accept("when"):
            guard = self.guard()
        if ts.accept("do"):
            updates.append(self.update())
            while ts.accept(","):
                updates.append(self.update())
        ts.expect_kind("ARROW_CLOSE", "']->'")
        dst = ts.expect_kind("IDENT", "destination location").text
        ts.expect(";")
        return GuardedTransition(src.text, event, dst, guard, tuple(updates), pos=src.pos)

    def varref(self) -> VarRef:
        ts = self.ts
        tok = ts.expect_kind("IDENT", "variable")
        if ts.at(".") and ts.peek().kind == "IDENT":
            ts.advance()
            name = ts.advance().text
            return VarRef(tok.text, name, pos=tok.pos)
        return VarRef(self.owner, tok.text, pos=tok.pos)

    def operand(self):
        ts = self.ts
        tok = ts.current
        if tok.kind == "INT" or (tok.text == "-" and ts.peek().kind == "INT"):
            return Const(self.integer(), pos=tok.pos)
        if tok.kind == "IDENT" and tok.text not in ("true", "false"):
            return self.varref()
        raise ts.error("expected variable or integer")

    def update(self) -> Update:
        ts = self.ts
        tok = ts.current
        target = self.varref()
        if not ts.at("=", "+=", "-="):
            raise ts.error("expected '=', '+=' or '-='")
        op = ts.advance().text
        return Update(target, op, self.operand(), pos=tok.pos)

    def guard(self) -> Guard:
        ts = self.ts
        tok = ts.current
        args = [self.conj()]
        while ts.accept("||", "|"):
            args.append(self.conj())
        return args[0] if len(args) == 1 else Or(tuple(args), pos=tok.pos)

    def conj(self) -> Guard:
        ts = self.ts
        tok = ts.current
        args = [self.unary()]
        while ts.accept("&&", "&"):
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(tuple(args), pos=tok.pos)

    def unary(self) -> Guard:
        ts = self.ts
        tok = ts.current
        if ts.accept("!", "~"):
            return Not(self.unary(), pos=tok.pos)
        if ts.accept("("):
            g = self.guard()
            ts.expect(")")
            return g
        if ts.accept("true"):
            return BoolConst(True, pos=tok.pos)
        if ts.accept("false"):
            return BoolConst(False, pos=tok.pos)
        left = self.operand()
        if not ts.at(*CMP_OPS):
            raise ts.error("expected comparison operator")
        op = ts.advance().text
        right = self.operand()
        first = Compare(op, left, right, pos=tok.pos)
        if ts.at(*CMP_OPS):
            op2 = ts.advance().text
            third = self.operand()
            return And((first, Compare(op2, right, third, pos=tok.pos)), pos=tok.pos)
        return first


def parse_system(text: str) -> SystemSpec:
    """Parse ``.amas`` source into a :class:`SystemSpec`; raises :class:`SpecError`."""
    return _SystemParser(text).parse()


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class ValidatedSystem:
    spec: SystemSpec
    warnings: tuple[Diagnostic, ...] = ()
    event_map: dict[str, tuple[str, ...]] = field(default_factory=dict, compare=False)

    @property
    def agents(self) -> tuple[AgentTemplate, ...]:
        return self.spec.agents

    @property
    def name(self) -> str:
        return self.spec.name

    def event_agents(self) -> dict[str, tuple[str, ...]]:
        return dict(self.event_map)

    def agent(self, name: str) -> AgentTemplate:
        return self.spec.agent(name)


def _domain(spec: SystemSpec, ref: VarRef) -> range:
    decl = spec.agent(ref.agent).variable(ref.name)
    return range(decl.lower, decl.upper + 1)


def _guards_overlap(spec: SystemSpec, g1: Guard | None, g2: Guard | None) -> bool | None:
    """Exhaustively search the read variables' domains for a joint model; None if too large."""
    refs = list(dict.fromkeys((r.agent, r.name) for r in itertools.chain(guard_vars(g1), guard_vars(g2))))
    domains = [_domain(spec, VarRef(a, n)) for a, n in refs]
    total = 1
    for d in domains:
        total *= len(d)
    if total > GUARD_ENUM_LIMIT:
        return None
    for combo in itertools.product(*domains):
        ctx: dict[str, dict[str, int]] = {}
        for (a, n), v in zip(refs, combo):
            ctx.setdefault(a, {})[n] = v
        if eval_guard(g1, ctx) and eval_guard(g2, ctx):
            return True
    return False


def check_system(spec: SystemSpec) -> list[Diagnostic]:
    """Return every diagnostic (errors and warnings) for ``spec``."""
    diags: list[Diagnostic] = []
    if not spec.agents:
        return [error("specification declares no agents")]
    seen_names: set[str] = set()
    for a in spec.agents:
        if a.name in seen_names:
            diags.append(error(f"duplicate agent name {a.name!r}", a.pos))
        seen_names.add(a.name)
    agents = {a.name: a for a in spec.agents}
    event_map = spec.event_agents()

    for a in spec.agents:
        declared: dict[str, VariableDecl] = {}
        for v in a.variables:
            if v.name in declared:
                diags.append(error(f"duplicate variable {v.name!r} in agent {a.name}", v.pos))
                continue
            declared[v.name] = v
            if v.lower > v.upper:
                diags.append(error(f"empty domain {v.lower}..{v.upper} for {a.name}.{v.name}", v.pos))
            elif not v.lower <= v.initial <= v.upper:
                diags.append(error(
                    f"initial value {v.initial} of {a.name}.{v.name} outside {v.lower}..{v.upper}", v.pos))
        locations = a.locations
        if a.initial not in locations:
            diags.append(error(f"unknown initial location {a.initial!r} in agent {a.name}", a.pos))
        if a.declared_locations is not None:
            for t in a.transitions:
                for loc in (t.source, t.target):
                    if loc not in a.declared_locations:
                        diags.append(error(f"undeclared location {loc!r} in agent {a.name}", t.pos))
        if not a.transitions:
            diags.append(error(f"agent {a.name} has no events", a.pos))

        for t in a.transitions:
            participants = event_map.get(t.event, ())
            for ref in t.reads():
                diags.extend(_check_ref(agents, a, ref, participants, t.event, write=False))
            for upd in t.updates:
                diags.extend(_check_ref(agents, a, upd.target, participants, t.event, write=True))

        for loc in a.locations:
            if not a.protocol(loc):
                diags.append(warning(f"location {loc!r} of agent {a.name} has no outgoing transitions", a.pos))

    if any(d.is_error for d in diags):
        return diags

    for a in spec.agents:
        groups: dict[tuple[str, str], list[GuardedTransition]] = {}
        for t in a.transitions:
            groups.setdefault((t.source, t.event), []).append(t)
        for (loc, evt), ts in groups.items():
            for t1, t2 in itertools.combinations(ts, 2):
                overlap = _guards_overlap(spec, t1.guard, t2.guard)
                if overlap is None:
                    diags.append(warning(f"guard overlap check skipped for ({loc},{evt}): domain too large", t2.pos))
                elif overlap:
                    diags.append(error(f"overlapping guards for ({loc},{evt}) in agent {a.name}", t2.pos))
    return diags


def _check_ref(agents, owner: AgentTemplate, ref: VarRef, participants, event: str, write: bool):
    kind = "write" if write else "read"
    if ref.agent == owner.name:
        if all(v.name != ref.name for v in owner.variables):
            yield error(f"undeclared variable {ref.name!r} in agent {owner.name}", ref.pos)
        return
    if write:
        yield error(f"peer variable write unsupported: {ref} in agent {owner.name}", ref.pos)
        return
    peer = agents.get(ref.agent)
    if peer is None:
        yield error(f"unknown agent {ref.agent!r} in variable {ref}", ref.pos)
    elif all(v.name != ref.name for v in peer.variables):
        yield error(f"undeclared variable {ref}", ref.pos)
    elif ref.agent not in participants:
        yield error(f"peer variable {kind} on non-shared event {event!r}: {ref}", ref.pos)


def validate_system(spec: SystemSpec) -> ValidatedSystem:
    """Validate ``spec``; raises :class:`SpecError` listing every error found."""
    diags = check_system(spec)
    if any(d.is_error for d in diags):
        raise SpecError(diags)
    return ValidatedSystem(spec, tuple(diags), spec.event_agents())


def load_system(text: str) -> ValidatedSystem:
    return validate_system(parse_system(text))


# -- pretty printing ---------------------------------------------------------

def _fmt_operand(x, owner: str) -> str:
    if isinstance(x, Const):
        return str(x.value)
    return x.name if x.agent == owner else f"{x.agent}.{x.name}"


def format_guard(g: Guard, owner: str = "", top: bool = True) -> str:
    if isinstance(g, Compare):
        return f"{_fmt_operand(g.left, owner)} {g.op} {_fmt_operand(g.right, owner)}"
    if isinstance(g, BoolConst):
        return "true" if g.value else "false"
    if isinstance(g, Not):
        return "!" + format_guard(g.arg, owner, top=False)
    if isinstance(g, And):
        body = " && ".join(format_guard(x, owner, top=False) for x in g.args)
    elif isinstance(g, Or):
        body = " || ".join(format_guard(x, owner, top=False) for x in g.args)
    else:
        raise TypeError(g)
    return body if top else f"({body})"


def format_system(spec: SystemSpec) -> str:
    lines = [f"system {spec.name};", ""]
    for a in spec.agents:
        lines.append(f"agent {a.name} {{")
        lines.append(f"  init {a.initial};")
        if a.declared_locations is not None:
            lines.append(f"  loc {', '.join(a.declared_locations)};")
        for v in a.variables:
            lines.append(f"  var {v.name}: {v.lower}..{v.upper} = {v.initial};")
        for t in a.transitions:
            label = t.event
            if t.guard is not None:
                label += " when " + format_guard(t.guard, a.name)
            if t.updates:
                label += " do " + ", ".join(
                    f"{_fmt_operand(u.target, a.name)} {u.op} {_fmt_operand(u.value, a.name)}"
                    for u in t.updates
                )
            lines.append(f"  {t.source} -[{label}]-> {t.target};")
        lines.append("}")
        lines.append("")
    return "\n".join(lines)

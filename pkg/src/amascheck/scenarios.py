"""Generators for gossip-learning ring systems with optional intruders.

Honest agents ``AI1..AIh`` run the gather / learn / share cycle; the ring
passes models from agent ``i`` to agent ``i+1`` (the last closes the ring to
agent 1).  Odd ids receive before sending, even ids send before receiving.
An impersonator replaces the highest id; a man-in-the-middle is an extra
agent that can intercept the sends of agents 1 and 2 and deliver stored
models to their receive steps.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, replace
from typing import Iterator

from .amas import (
    AgentTemplate,
    And,
    Compare,
    Const,
    GuardedTransition,
    SystemSpec,
    Update,
    VarRef,
    VariableDecl,
)
from .logic import (
    AndP,
    CompareAtom,
    FlatFormula,
    Implies,
    LocationAtom,
    OrP,
    format_formula,
)

ATTACKS = ("none", "impersonator", "mitm")
RECEIVE_MODES = ("copy", "max-merge", "accept-reject")
SHARED_READINGS = ("all-at-end", "any-at-end")
FAKE_RANGES = ("full", "low", "high")
QUALITY_SCOPES = ("all", "honest")
END = "q8"

ATTACK_ALIASES = {"imp": "impersonator", "impersonator": "impersonator", "mitm": "mitm", "none": "none"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of a generated system.

    ``agents`` counts every agent including the intruder.  ``quality_scope``
    selects whether the intruder's own quality variable takes part in the
    quality conjunction/disjunction of the round-completion properties.
    The defaults are the combination selected by ``amascheck.calibration``.
    """

    agents: int = 2
    attack: str = "impersonator"
    k: int = 0
    data_bounds: tuple[int, int] = (0, 2)
    info_bounds: tuple[int, int] = (0, 4)
    quality_bounds: tuple[int, int] = (0, 3)
    receive: str = "max-merge"
    shared: str = "all-at-end"
    fake_range: str = "full"
    quality_scope: str = "all"
    mitm_direct_links: bool = True

    def __post_init__(self):
        object.__setattr__(self, "attack", ATTACK_ALIASES.get(self.attack, self.attack))
        if self.attack not in ATTACKS:
            raise ScenarioError(f"unknown attack {self.attack!r}")
        if self.agents < 2:
            raise ScenarioError("at least 2 agents required")
        if self.attack == "mitm" and self.agents < 3:
            raise ScenarioError("man-in-the-middle requires at least 3 agents")
        lo, hi = self.quality_bounds
        if lo > hi or not lo <= self.k <= hi:
            raise ScenarioError(f"k={self.k} outside quality bounds {lo}..{hi}")
        for name, (a, b) in (("data", self.data_bounds), ("info", self.info_bounds)):
            if a > b:
                raise ScenarioError(f"empty {name} bounds {a}..{b}")
        if self.receive not in RECEIVE_MODES:
            raise ScenarioError(f"unknown receive semantics {self.receive!r}")
        if self.shared not in SHARED_READINGS:
            raise ScenarioError(f"unknown shared_p reading {self.shared!r}")
        if self.fake_range not in FAKE_RANGES:
            raise ScenarioError(f"unknown fake range {self.fake_range!r}")
        if self.quality_scope not in QUALITY_SCOPES:
            raise ScenarioError(f"unknown quality scope {self.quality_scope!r}")

    @property
    def honest_count(self) -> int:
        if self.attack == "none":
            return self.agents
        return self.agents - 1

    @property
    def intruder(self) -> str | None:
        return {"impersonator": "Imp", "mitm": "Mim"}.get(self.attack)

    def fake_values(self) -> tuple[int, ...]:
        lo, hi = self.quality_bounds
        return {"low": (lo,), "high": (hi,), "full": tuple(range(lo, hi + 1))}[self.fake_range]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["data_bounds"] = list(self.data_bounds)
        d["info_bounds"] = list(self.info_bounds)
        d["quality_bounds"] = list(self.quality_bounds)
        return d


def honest_name(i: int) -> str:
    return f"AI{i}"


def _ring_name(cfg: ScenarioConfig, ident: int) -> str:
    """Agent name for ring position ``ident`` (1-based)."""
    if cfg.attack == "impersonator" and ident == cfg.agents:
        return "Imp"
    return honest_name(ident)


def _ring_size(cfg: ScenarioConfig) -> int:
    return cfg.agents if cfg.attack == "impersonator" else cfg.honest_count


def _share(src: int | str, dst: int | str) -> str:
    return f"share_{src}_with_{dst}"


def _receive(cfg: ScenarioConfig, me: str, sender: str, src: str, dst: str, event: str,
             mine: bool = True) -> list[GuardedTransition]:
    """Receive step of ``me`` from ``sender`` under the configured semantics."""
    own = VarRef(me, "mqual")
    theirs = VarRef(sender, "mqual")
    if not mine:
        return [GuardedTransition(src, event, dst)]
    if cfg.receive == "copy":
        return [GuardedTransition(src, event, dst, None, (Update(own, "=", theirs),))]
    if cfg.receive == "max-merge":
        return [
            GuardedTransition(src, event, dst, Compare(">", theirs, own), (Update(own, "=", theirs),)),
            GuardedTransition(src, event, dst, Compare("<=", theirs, own)),
        ]
    return [
        GuardedTransition(src, event, dst, Compare(">=", theirs, own), (Update(own, "=", theirs),)),
        GuardedTransition(src, event, dst, Compare("<", theirs, own)),
    ]


def _mim_links(cfg: ScenarioConfig) -> tuple[set[int], set[int], set[tuple[int, int]]]:
    """Ring ids whose sends / receives Mim can take over, and direct links removed."""
    if cfg.attack != "mitm":
        return set(), set(), set()
    senders = {1, 2}
    receivers = {1, 2}
    removed: set[tuple[int, int]] = set()
    if not cfg.mitm_direct_links:
        h = cfg.honest_count
        for a in senders:
            b = a % h + 1
            if b in receivers:
                removed.add((a, b))
    return senders, receivers, removed


def _sharing(cfg: ScenarioConfig, ident: int, name: str, start: str, locs: tuple[str, str, str]) -> list[GuardedTransition]:
    """Receive/send steps of ring member ``ident`` from ``start`` through ``locs``."""
    n = _ring_size(cfg)
    prev = (ident - 2) % n + 1
    nxt = ident % n + 1
    mim_send, mim_recv, removed = _mim_links(cfg)
    receives_value = name != "Imp"

    def recv(src: str, dst: str) -> list[GuardedTransition]:
        out = []
        if (prev, ident) not in removed:
            out += _receive(cfg, name, _ring_name(cfg, prev), src, dst, _share(prev, ident), receives_value)
        if ident in mim_recv:
            out += _receive(cfg, name, "Mim", src, dst, _share("mim", ident), receives_value)
        return out

    def send(src: str, dst: str) -> list[GuardedTransition]:
        out = []
        if (ident, nxt) not in removed:
            out.append(GuardedTransition(src, _share(ident, nxt), dst))
        if ident in mim_send:
            out.append(GuardedTransition(src, _share(ident, "mim"), dst))
        return out

    a, b, c = locs
    if ident % 2 == 1:
        return recv(start, a) + send(a, b) + [GuardedTransition(b, f"{name}_end_sharing", c)]
    return send(start, a) + recv(a, b) + [GuardedTransition(b, f"{name}_end_sharing", c)]


def _v(agent: str, var: str) -> VarRef:
    return VarRef(agent, var)


def _c(x: int) -> Const:
    return Const(x)


def gen_honest_agent(cfg: ScenarioConfig, ident: int) -> AgentTemplate:
    name = honest_name(ident)
    ev = lambda base: f"{name}_{base}"  # noqa: E731
    data, info, comp, mq, ms = (_v(name, x) for x in ("data", "info", "completion", "mqual", "mstatus"))
    qlo, qhi = cfg.quality_bounds
    variables = (
        VariableDecl("data", *cfg.data_bounds, cfg.data_bounds[0]),
        VariableDecl("completion", 0, 3, 0),
        VariableDecl("info", *cfg.info_bounds, cfg.info_bounds[0]),
        VariableDecl("mqual", qlo, qhi, qlo),
        VariableDecl("mstatus", 0, 3, 0),
    )
    T = GuardedTransition
    trs = [
        T("q0", ev("start_gathering"), "q1"),
        T("q1", ev("gather_data"), "q1", Compare("<", data, _c(2)), (Update(data, "+=", _c(1)),)),
    ]
    for guard, completion in (
        (Compare("<", data, _c(1)), 1),
        (And((Compare("<=", _c(1), data), Compare("<", data, _c(2)))), 2),
        (Compare("<=", _c(2), data), 3),
    ):
        trs.append(T("q1", ev("stop_gathering"), "q2", guard,
                     (Update(data, "=", _c(0)), Update(comp, "=", _c(completion)))))
    trs += [
        T("q0", ev("skip_gathering"), "q2"),
        T("q2", ev("start_learning"), "q3"),
        T("q3", ev("keep_learning"), "q3", Compare("<", info, _c(2)), (Update(info, "+=", comp),)),
    ]
    low_info = Compare("<", info, _c(1))
    mid_info = And((Compare("<=", _c(1), info), Compare("<", info, _c(2))))
    high_info = Compare("<=", _c(2), info)
    reset = Update(info, "=", _c(0))
    for info_guard, qual_guard, status, delta in (
        (low_info, Compare(">", mq, _c(0)), 1, "-="),
        (low_info, Compare("<=", mq, _c(0)), 1, None),
        (mid_info, Compare("<", mq, _c(2)), 2, "+="),
        (mid_info, Compare(">=", mq, _c(2)), 2, None),
        (high_info, Compare(">", mq, _c(0)), 3, "-="),
        (high_info, Compare("<=", mq, _c(0)), 3, None),
    ):
        updates = [reset, Update(ms, "=", _c(status))]
        if delta:
            updates.append(Update(mq, delta, _c(1)))
        trs.append(T("q3", ev("stop_learning"), "q4", And((info_guard, qual_guard)), tuple(updates)))
    trs += [
        T("q2", ev("skip_learning"), "q5"),
        T("q4", ev("start_sharing"), "q5"),
    ]
    trs += _sharing(cfg, ident, name, "q5", ("q6", "q7", END))
    trs += [
        T(END, ev("wait"), END),
        T(END, ev("repeat"), "q3"),
    ]
    return AgentTemplate(name, "q0", variables, tuple(trs))


def gen_impersonator(cfg: ScenarioConfig) -> AgentTemplate:
    """Ring member without gathering or learning that advertises a chosen quality."""
    ident = cfg.agents
    name = "Imp"
    qlo, qhi = cfg.quality_bounds
    mq = _v(name, "mqual")
    fakes = [GuardedTransition("", f"{name}_fake_{v}", "", None, (Update(mq, "=", _c(v)),)) for v in cfg.fake_values()]

    def fake_step(src: str, dst: str) -> list[GuardedTransition]:
        return [replace(t, source=src, target=dst) for t in fakes]

    T = GuardedTransition
    n = _ring_size(cfg)
    prev, nxt = (ident - 2) % n + 1, ident % n + 1
    recv = T("q5" if ident % 2 else "q6", _share(prev, ident), "q6" if ident % 2 else "q7")
    if ident % 2 == 1:
        trs = [recv] + fake_step("q6", "f6") + [T("f6", _share(ident, nxt), "q7")]
    else:
        trs = fake_step("q5", "f5") + [T("f5", _share(ident, nxt), "q6"), recv]
    trs += [
        T("q7", f"{name}_end_sharing", END),
        T(END, f"{name}_wait", END),
        T(END, f"{name}_repeat", "q5"),
    ]
    return AgentTemplate(name, "q5", (VariableDecl("mqual", qlo, qhi, qlo),), tuple(trs))


def gen_mim(cfg: ScenarioConfig) -> AgentTemplate:
    qlo, qhi = cfg.quality_bounds
    mq = _v("Mim", "mqual")
    senders, receivers, _ = _mim_links(cfg)
    trs = [
        GuardedTransition("q0", _share(a, "mim"), "q0", None, (Update(mq, "=", _v(honest_name(a), "mqual")),))
        for a in sorted(senders)
    ]
    trs += [GuardedTransition("q0", _share("mim", b), "q0") for b in sorted(receivers)]
    return AgentTemplate("Mim", "q0", (VariableDecl("mqual", qlo, qhi, qlo),), tuple(trs))


def gen_honest(cfg: ScenarioConfig) -> SystemSpec:
    """System of ``cfg.honest_count`` honest agents (plus intruder when configured)."""
    agents = [gen_honest_agent(cfg, i) for i in range(1, cfg.honest_count + 1)]
    if cfg.attack == "impersonator":
        agents.append(gen_impersonator(cfg))
    elif cfg.attack == "mitm":
        agents.append(gen_mim(cfg))
    return SystemSpec(tuple(agents), f"sai_{cfg.attack}_{cfg.agents}")


def gen_attack(cfg: ScenarioConfig) -> SystemSpec:
    if cfg.attack == "none":
        raise ScenarioError("gen_attack requires an attack")
    return gen_honest(cfg)


def generate(cfg: ScenarioConfig) -> SystemSpec:
    return gen_honest(cfg)


# -- properties ---------------------------------------------------------------

def shared_predicate(cfg: ScenarioConfig):
    atoms = tuple(LocationAtom(honest_name(i), END) for i in range(1, cfg.honest_count + 1))
    if len(atoms) == 1:
        return atoms[0]
    return AndP(atoms) if cfg.shared == "all-at-end" else OrP(atoms)


def quality_agents(cfg: ScenarioConfig) -> tuple[str, ...]:
    names = [honest_name(i) for i in range(1, cfg.honest_count + 1)]
    if cfg.quality_scope == "all" and cfg.intruder:
        names.append(cfg.intruder)
    return tuple(names)


def phi(cfg: ScenarioConfig, variant: str = "all") -> FlatFormula:
    """Intruder safety property: whenever the round completes, qualities stay at most k.

    ``variant="all"`` requires it of every agent, ``"any"`` of at least one.
    """
    if cfg.intruder is None:
        raise ScenarioError("property needs an intruder to quantify over")
    atoms = tuple(CompareAtom(a, "mqual", "<=", cfg.k) for a in quality_agents(cfg))
    if len(atoms) == 1:
        body = atoms[0]
    elif variant == "all":
        body = AndP(atoms)
    elif variant == "any":
        body = OrP(atoms)
    else:
        raise ScenarioError(f"unknown variant {variant!r}")
    return FlatFormula((cfg.intruder,), "G", (Implies(shared_predicate(cfg), body),))


def phi_text(cfg: ScenarioConfig, variant: str = "all") -> str:
    return format_formula(phi(cfg, variant))


PHI_VARIANTS = {1: "all", 2: "any"}


# -- calibration grid ------------------------------------------------------------

def calibration_grid(base: ScenarioConfig | None = None) -> Iterator[ScenarioConfig]:
    """Receive semantics x shared reading x k x fake range, in a fixed order."""
    base = base or ScenarioConfig()
    for receive, shared, k, fake in itertools.product(RECEIVE_MODES, SHARED_READINGS, (0, 1, 2), FAKE_RANGES):
        yield replace(base, receive=receive, shared=shared, k=k, fake_range=fake)


CALIBRATION_POINTS = (("impersonator", 2), ("mitm", 3))

# reference state/transition counts for the same scenario family
REFERENCE_COUNTS = {
    "impersonator": {2: (886, 2007), 3: (79806, 273548), 4: (6538103, 29471247), 5: (93581930, 623680431)},
    "mitm": {3: (23966, 67666), 4: (4798302, 20257664), 5: (71529973, 503249452)},
}
EXPECTED_VERDICTS = ("FALSE", "TRUE")

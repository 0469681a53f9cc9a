"""Composition of validated systems into explicit global models.

Global states are stored as mixed-radix integer codes over the agents' local
state ids (agent 0 least significant), transitions in CSR layout grouped by
source state.  States are numbered in breadth-first discovery order; the
successors of each state are visited in global event order (agents in
declaration order, then each agent's events in declaration order).
"""
from __future__ import annotations

import json
import time
from array import array
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .amas import (
    DEFAULT_LOCAL_CAP,
    ConcreteAgent,
    LocalState,
    apply_updates,
    eval_guard,
    expand_template,
)
from .diagnostics import Diagnostic, warning
from .spec_lang import ValidatedSystem

DEFAULT_STATE_CAP = 200_000_000
DUMP_VERSION = 1
_INT64_MAX = 2**63 - 1


class StateCapExceeded(Exception):
    pass


@dataclass(frozen=True)
class ModelStats:
    states: int
    transitions: int
    generation_seconds: float


@dataclass(frozen=True)
class EpistemicClass:
    coalition: tuple[str, ...]
    key: tuple[LocalState, ...]
    members: tuple[int, ...]


class GlobalModel:
    """Reachable global model; immutable once built by :func:`compose`."""

    def __init__(self, system: ValidatedSystem, agents: list[ConcreteAgent], events: list[str],
                 participants: list[tuple[int, ...]], codes: list[int], offsets, tr_event, tr_target,
                 generation_seconds: float, warnings: Sequence[Diagnostic] = ()):
        self.system = system
        self.agents = agents
        self.agent_names = tuple(a.name for a in agents)
        self.agent_index = {a.name: i for i, a in enumerate(agents)}
        self.events = tuple(events)
        self.event_index = {e: i for i, e in enumerate(events)}
        self.participants = tuple(participants)
        self.radices = tuple(a.candidate_count for a in agents)
        weights = [1]
        for r in self.radices:
            weights.append(weights[-1] * r)
        self.weights = tuple(weights[:-1])
        self._fits_int64 = weights[-1] - 1 <= _INT64_MAX
        self.codes = np.asarray(codes, dtype=np.int64) if self._fits_int64 else list(codes)
        self.offsets = np.frombuffer(offsets, dtype=np.int64).copy() if isinstance(offsets, array) else np.asarray(offsets, dtype=np.int64)
        self.tr_event = np.frombuffer(tr_event, dtype=np.int32).copy() if isinstance(tr_event, array) else np.asarray(tr_event, dtype=np.int32)
        self.tr_target = np.frombuffer(tr_target, dtype=np.int32).copy() if isinstance(tr_target, array) else np.asarray(tr_target, dtype=np.int32)
        self.initial = 0
        self.generation_seconds = generation_seconds
        self.warnings = tuple(warnings)
        self._columns: dict[int, np.ndarray] = {}
        self._preds = None
        self._lookup: dict[int, int] | None = None

    # -- sizes
    @property
    def num_states(self) -> int:
        return len(self.codes)

    @property
    def num_transitions(self) -> int:
        return len(self.tr_event)

    # -- decoding
    def local_ids(self, index: int) -> tuple[int, ...]:
        rest = int(self.codes[index])
        out = []
        for r in self.radices:
            rest, lid = divmod(rest, r)
            out.append(lid)
        return tuple(out)

    def state(self, index: int) -> tuple[LocalState, ...]:
        if not 0 <= index < self.num_states:
            raise IndexError(f"state index {index} out of range")
        return tuple(a.decode(lid) for a, lid in zip(self.agents, self.local_ids(index)))

    def local_column(self, agent: int | str) -> np.ndarray:
        """Local-state ids of ``agent`` for every global state."""
        i = self.agent_index[agent] if isinstance(agent, str) else agent
        col = self._columns.get(i)
        if col is None:
            if self._fits_int64:
                col = (self.codes // self.weights[i]) % self.radices[i]
            else:
                col = np.array([(c // self.weights[i]) % self.radices[i] for c in self.codes], dtype=np.int64)
            self._columns[i] = col
        return col

    def location_column(self, agent: int | str) -> np.ndarray:
        i = self.agent_index[agent] if isinstance(agent, str) else agent
        return self.local_column(i) % len(self.agents[i].locations)

    def value_column(self, agent: int | str, var: str) -> np.ndarray:
        i = self.agent_index[agent] if isinstance(agent, str) else agent
        a = self.agents[i]
        k = a.var_index[var]
        return (self.local_column(i) // a.weights[k]) % a.sizes[k] + a.lows[k]

    def index_of(self, state: Sequence[LocalState]) -> int | None:
        """Index of a global state given as local states, or None if unreachable."""
        if self._lookup is None:
            self._lookup = {int(c): i for i, c in enumerate(self.codes)}
        code = sum(a.encode(ls) * w for a, ls, w in zip(self.agents, state, self.weights))
        return self._lookup.get(code)

    # -- transitions
    def out_range(self, index: int) -> range:
        return range(int(self.offsets[index]), int(self.offsets[index + 1]))

    def successors(self, index: int) -> list[tuple[str, int]]:
        if not 0 <= index < self.num_states:
            raise IndexError(f"state index {index} out of range")
        return [(self.events[self.tr_event[t]], int(self.tr_target[t])) for t in self.out_range(index)]

    def transitions(self) -> Iterable[tuple[int, str, int]]:
        ev, dst, off = self.tr_event.tolist(), self.tr_target.tolist(), self.offsets.tolist()
        for s in range(self.num_states):
            for t in range(off[s], off[s + 1]):
                yield s, self.events[ev[t]], dst[t]

    def sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_states, dtype=np.int32), np.diff(self.offsets))

    def predecessors_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(offsets, sources) of the reversed transition relation."""
        if self._preds is None:
            order = np.argsort(self.tr_target, kind="stable")
            src = self.sources()[order]
            counts = np.bincount(self.tr_target, minlength=self.num_states)
            offs = np.zeros(self.num_states + 1, dtype=np.int64)
            np.cumsum(counts, out=offs[1:])
            self._preds = (offs, src)
        return self._preds

    def deadlocks(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.offsets) == 0)

    # -- valuation
    def valuation(self, index: int) -> frozenset[str]:
        out: set[str] = set()
        for a, ls in zip(self.agents, self.state(index)):
            out |= a.labels(ls)
        return frozenset(out)

    def stats(self) -> ModelStats:
        return ModelStats(self.num_states, self.num_transitions, self.generation_seconds)

    def __repr__(self) -> str:
        return f"GlobalModel(agents={self.agent_names}, states={self.num_states}, transitions={self.num_transitions})"


# -- composition -------------------------------------------------------------

def compose(system: ValidatedSystem, *, max_states: int = DEFAULT_STATE_CAP,
            local_cap: int = DEFAULT_LOCAL_CAP) -> GlobalModel:
    """Breadth-first reachability over interleaved private and synchronised shared events."""
    t0 = time.perf_counter()
    spec = system.spec
    agents = [expand_template(t, local_cap) for t in spec.agents]
    n = len(agents)
    name_idx = {a.name: i for i, a in enumerate(agents)}
    events = list(dict.fromkeys(e for t in spec.agents for e in t.events))
    eidx = {e: i for i, e in enumerate(events)}
    event_map = system.event_map or spec.event_agents()
    parts = [tuple(name_idx[a] for a in event_map[e]) for e in events]

    radices = [a.candidate_count for a in agents]
    weights = [1]
    for r in radices[:-1]:
        weights.append(weights[-1] * r)
    nlocs = [len(a.locations) for a in agents]

    # per agent, per location index: private (event, transitions) pairs and shared events
    private_at: list[list[tuple]] = []
    shared_at: list[list[frozenset]] = []
    owned_at: list[list[tuple]] = []
    for i, a in enumerate(agents):
        priv_row, shared_row, owned_row = [], [], []
        for loc in a.locations:
            prot = a.protocol(loc)
            priv_row.append(tuple((eidx[e], a.template.outgoing(loc, e)) for e in prot if len(parts[eidx[e]]) == 1))
            sh = [eidx[e] for e in prot if len(parts[eidx[e]]) > 1]
            shared_row.append(frozenset(sh))
            owned_row.append(tuple(e for e in sh if parts[e][0] == i))
        private_at.append(priv_row)
        shared_at.append(shared_row)
        owned_at.append(owned_row)

    def local_info(i: int, lid: int):
        a = agents[i]
        loc = lid % nlocs[i]
        ctx = {a.name: a.values_of(lid)}
        moves = []
        for e, trs in private_at[i][loc]:
            for t in trs:
                if eval_guard(t.guard, ctx):
                    new = apply_updates(t.updates, ctx, a.template)
                    moves.append((e, a.encode_values(t.target, new)))
                    break
        return tuple(moves), owned_at[i][loc]

    def joint_move(e: int, ps: tuple[int, ...], lids: tuple[int, ...]):
        ctx = {agents[j].name: agents[j].values_of(l) for j, l in zip(ps, lids)}
        out = []
        for j, l in zip(ps, lids):
            a = agents[j]
            for t in a.template.outgoing(a.location_of(l), events[e]):
                if eval_guard(t.guard, ctx):
                    out.append(a.encode_values(t.target, apply_updates(t.updates, ctx, a.template)))
                    break
            else:
                return None
        return tuple(out)

    info_cache: list[dict[int, tuple]] = [dict() for _ in range(n)]
    joint_cache: dict[tuple, tuple | None] = {}
    missing = object()

    code0 = sum(a.initial_id * w for a, w in zip(agents, weights))
    index = {code0: 0}
    codes = [code0]
    offsets = array("q", [0])
    tr_event = array("i")
    tr_target = array("i")
    rng = list(zip(range(n), radices, weights))
    head = 0
    while head < len(codes):
        code = codes[head]
        rest = code
        lids = []
        for r in radices:
            rest, lid = divmod(rest, r)
            lids.append(lid)
        succ = []
        for i, r, w in rng:
            lid = lids[i]
            info = info_cache[i].get(lid)
            if info is None:
                info = info_cache[i][lid] = local_info(i, lid)
            moves, owned = info
            for e, nl in moves:
                succ.append((e, code + (nl - lid) * w))
            for e in owned:
                ps = parts[e]
                for j in ps[1:]:
                    if e not in shared_at[j][lids[j] % nlocs[j]]:
                        break
                else:
                    key_lids = tuple(lids[j] for j in ps)
                    key = (e, key_lids)
                    res = joint_cache.get(key, missing)
                    if res is missing:
                        res = joint_cache[key] = joint_move(e, ps, key_lids)
                    if res is not None:
                        c = code
                        for j, nl, ol in zip(ps, res, key_lids):
                            c += (nl - ol) * weights[j]
                        succ.append((e, c))
        if len(succ) > 1:
            succ.sort()
        for e, c in succ:
            j = index.get(c)
            if j is None:
                j = len(codes)
                index[c] = j
                codes.append(c)
            tr_event.append(e)
            tr_target.append(j)
        offsets.append(len(tr_event))
        head += 1
        if len(codes) > max_states:
            raise StateCapExceeded(f"more than {max_states} reachable global states")
    del index

    warns = list(system.warnings)
    if offsets[1] == 0:
        warns.append(warning("initial global state is deadlocked"))
    return GlobalModel(system, agents, events, parts, codes, offsets, tr_event, tr_target,
                       time.perf_counter() - t0, warns)


# -- queries -------------------------------------------------------------------

def enabled(model: GlobalModel, index: int) -> set[tuple[str, int]]:
    return set(model.successors(index))


def _coalition_indices(model: GlobalModel, coalition: Iterable[str]) -> tuple[int, ...]:
    idx = []
    for name in coalition:
        if name not in model.agent_index:
            raise KeyError(f"unknown agent {name!r} in coalition")
        idx.append(model.agent_index[name])
    return tuple(sorted(set(idx)))


def project(model: GlobalModel, index: int, coalition: Iterable[str]) -> tuple[LocalState, ...]:
    """Observation key: the coalition members' local states in agent order."""
    members = _coalition_indices(model, coalition)
    state = model.state(index)
    return tuple(state[i] for i in members)


def epistemic_partition(model: GlobalModel, coalition: Iterable[str]) -> list[EpistemicClass]:
    members = _coalition_indices(model, coalition)
    names = tuple(model.agent_names[i] for i in members)
    cols = [model.local_column(i).tolist() for i in members]
    groups: dict[tuple[int, ...], list[int]] = {}
    for s in range(model.num_states):
        groups.setdefault(tuple(c[s] for c in cols), []).append(s)
    return [
        EpistemicClass(names, tuple(model.agents[i].decode(l) for i, l in zip(members, key)), tuple(ms))
        for key, ms in groups.items()
    ]


def model_stats(model: GlobalModel) -> ModelStats:
    return model.stats()


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(model: GlobalModel, max_states: int = 500, atoms: Iterable[str] | None = None) -> str:
    """Graphviz digraph of the model; states beyond ``max_states`` collapse into a marker node."""
    wanted = None if atoms is None else set(atoms)
    shown = min(model.num_states, max_states)
    lines = [f"digraph {_dot_quote(model.system.name)} {{", "  node [shape=box];"]
    for s in range(shown):
        labels = sorted(model.valuation(s))
        if wanted is not None:
            labels = [p for p in labels if p in wanted]
        style = ", peripheries=2" if s == model.initial else ""
        lines.append(f"  s{s} [label={_dot_quote(chr(10).join([str(s), *labels]))}{style}];")
    truncated = model.num_states > shown
    if truncated:
        hidden = model.num_states - shown
        lines.append(f"  truncated [shape=note, label={_dot_quote(f'... {hidden} more states')}];")
    for s in range(shown):
        for e, t in model.successors(s):
            dst = f"s{t}" if t < shown else "truncated"
            lines.append(f"  s{s} -> {dst} [label={_dot_quote(e)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def dump_model(model: GlobalModel) -> dict:
    """JSON-serialisable state table and edge list."""
    return {
        "format": "amascheck-model",
        "version": DUMP_VERSION,
        "system": model.system.name,
        "agents": [
            {"name": a.name, "locations": list(a.locations), "variables": list(a.var_names)}
            for a in model.agents
        ],
        "events": list(model.events),
        "initial": model.initial,
        "states": [
            [[ls.location, [v for _, v in ls.valuation]] for ls in model.state(s)]
            for s in range(model.num_states)
        ],
        "transitions": [[s, model.event_index[e], t] for s, e, t in model.transitions()],
    }


def write_dump(model: GlobalModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump_model(model), fh, separators=(",", ":"))
        fh.write("\n")

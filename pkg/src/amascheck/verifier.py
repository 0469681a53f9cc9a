"""Decision procedures for flat strategic formulas under imperfect information.

Three engines share one game view of a :class:`GlobalModel`:

* ``verify_upper``: perfect-information fixpoints (an over-approximation: a
  FALSE answer is final);
* ``verify_lower``: the same fixpoints with per-local-state commitments, so a
  TRUE answer comes with a uniform witness strategy;
* ``verify_exact``: depth-first search over uniform memoryless strategies,
  assigning a choice to a coalition local state when exploration first needs it.

Outcome paths are infinite.  Under the default ``deadlock="reject"`` a strategy
that lets the play reach a state with no retained successor is rejected; under
``deadlock="stutter"`` such a state instead repeats forever.
"""
from __future__ import annotations

import itertools
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .amas import LocalState
from .logic import FlatFormula, Pred, check_coalition, classify, format_formula, parse_formula, sat
from .model import GlobalModel, ModelStats

TRUE, FALSE, INCONCLUSIVE = "TRUE", "FALSE", "INCONCLUSIVE"
DEFAULT_BUDGET = 50_000_000
DEADLOCK_MODES = ("reject", "stutter")


class BudgetExceeded(Exception):
    """The exact search ran out of node budget or wall-clock time."""


class StrategyError(ValueError):
    """A strategy is not uniform, not protocol-respecting, or undefined where needed."""


@dataclass
class UniformStrategy:
    """Per coalition agent, one event for each local state."""

    choices: dict[str, dict[LocalState, str]] = field(default_factory=dict)

    def choice(self, agent: str, local: LocalState) -> str | None:
        return self.choices.get(agent, {}).get(local)

    def size(self) -> int:
        return sum(len(m) for m in self.choices.values())

    def summary(self, limit: int = 20) -> list[str]:
        lines = []
        for agent in sorted(self.choices):
            for local, event in sorted(self.choices[agent].items(), key=lambda kv: (kv[0].location, kv[0].valuation)):
                lines.append(f"{agent}: {local} -> {event}")
        if len(lines) > limit:
            lines = lines[:limit] + [f"... {len(lines) - limit} more choices"]
        return lines

    def to_json(self) -> dict:
        return {
            agent: [
                {"location": ls.location, "valuation": dict(ls.valuation), "event": ev}
                for ls, ev in sorted(m.items(), key=lambda kv: (kv[0].location, kv[0].valuation))
            ]
            for agent, m in sorted(self.choices.items())
        }


@dataclass
class Verdict:
    value: str
    engine: str
    witness: UniformStrategy | None = None
    note: str = ""

    def __bool__(self) -> bool:
        return self.value == TRUE


@dataclass
class VerificationReport:
    formula: str
    verdict: Verdict
    timings: dict[str, float]
    stats: ModelStats


# -- game view -------------------------------------------------------------------

class Game:
    """Transition structure of ``model`` seen from ``coalition`` (agent indices)."""

    def __init__(self, model: GlobalModel, coalition: tuple[int, ...], deadlock: str = "reject"):
        if deadlock not in DEADLOCK_MODES:
            raise ValueError(f"unknown deadlock mode {deadlock!r}")
        self.stutter = deadlock == "stutter"
        self.model = model
        self.coalition = coalition
        self.n = model.num_states
        self.off = model.offsets.tolist()
        self.ev = model.tr_event.tolist()
        self.dst = model.tr_target.tolist()
        cset = set(coalition)
        self.cparts = [tuple(i for i in ps if i in cset) for ps in model.participants]
        self.cols = {i: model.local_column(i).tolist() for i in coalition}
        self.nloc = {i: len(model.agents[i].locations) for i in coalition}
        self.prot = {}
        for i in coalition:
            a = model.agents[i]
            self.prot[i] = [tuple(model.event_index[e] for e in a.protocol(loc)) for loc in a.locations]
        self._preds = None

    def preds(self, s: int) -> list[int]:
        if self._preds is None:
            offs, src = self.model.predecessors_csr()
            self._preds = (offs.tolist(), src.tolist())
        offs, src = self._preds
        return src[offs[s]:offs[s + 1]]

    def protocol_of(self, i: int, lid: int) -> tuple[int, ...]:
        return self.prot[i][lid % self.nloc[i]]

    def controllable(self, s: int, inq, commits: Mapping | None = None):
        """A coalition selection at ``s`` keeping every consistent successor in ``inq``.

        Returns ``{agent: event}`` for the agents whose choice matters at ``s``
        (empty dict when none do), or None if no selection works.  Selections
        consistent with ``commits`` are the only ones considered.
        """
        free_any = False
        cedges = []
        off, ev, dst, cparts = self.off, self.ev, self.dst, self.cparts
        for t in range(off[s], off[s + 1]):
            e = ev[t]
            cp = cparts[e]
            if cp:
                cedges.append((e, dst[t], cp))
            elif not inq[dst[t]]:
                return None
            else:
                free_any = True
        if not cedges:
            return {} if free_any or (self.stutter and inq[s]) else None
        involved = sorted({i for _, _, cp in cedges for i in cp})
        option_lists = []
        for i in involved:
            lid = self.cols[i][s]
            fixed = commits.get((i, lid)) if commits is not None else None
            if fixed is not None:
                option_lists.append((fixed,))
                continue
            relevant = {e for e, _, cp in cedges if i in cp}
            prot = self.protocol_of(i, lid)
            opts = [x for x in prot if x in relevant]
            idle = next((x for x in prot if x not in relevant), None)
            if idle is not None:
                opts.append(idle)
            option_lists.append(opts)
        for combo in itertools.product(*option_lists):
            sel = dict(zip(involved, combo))
            moved = free_any
            for e, d, cp in cedges:
                if all(sel[i] == e for i in cp):
                    if not inq[d]:
                        break
                    moved = True
            else:
                if moved or (self.stutter and inq[s]):
                    return sel
        return None

    def commit(self, s: int, sel: dict, commits: dict) -> None:
        for i, e in sel.items():
            commits.setdefault((i, self.cols[i][s]), e)

    # fixpoints ---------------------------------------------------------------
    def greatest(self, region: list[bool], commits: dict | None = None) -> list[bool]:
        """Largest subset of ``region`` where the coalition can keep the play inside."""
        inq = list(region)
        queue = deque(s for s in range(self.n) if inq[s])
        queued = bytearray(self.n)
        for s in queue:
            queued[s] = 1
        while queue:
            s = queue.popleft()
            queued[s] = 0
            if not inq[s]:
                continue
            sel = self.controllable(s, inq, commits)
            if sel is None:
                inq[s] = False
                for p in self.preds(s):
                    if inq[p] and not queued[p]:
                        queued[p] = 1
                        queue.append(p)
            elif commits is not None:
                self.commit(s, sel, commits)
        return inq

    def least(self, target: list[bool], allowed: list[bool], commits: dict | None = None) -> list[bool]:
        """Smallest superset of ``target`` closed under controllable predecessors within ``allowed``."""
        inq = list(target)
        queue = deque()
        queued = bytearray(self.n)
        for s in range(self.n):
            if inq[s]:
                for p in self.preds(s):
                    if not inq[p] and allowed[p] and not queued[p]:
                        queued[p] = 1
                        queue.append(p)
        while queue:
            s = queue.popleft()
            queued[s] = 0
            if inq[s]:
                continue
            sel = self.controllable(s, inq, commits)
            if sel is None:
                continue
            inq[s] = True
            if commits is not None:
                self.commit(s, sel, commits)
            for p in self.preds(s):
                if not inq[p] and allowed[p] and not queued[p]:
                    queued[p] = 1
                    queue.append(p)
        return inq

    # strategies ---------------------------------------------------------------
    def retained(self, s: int, choice) -> list[int] | None:
        """Successors of ``s`` kept by ``choice(i, lid)``; None if a needed choice is missing."""
        out = []
        off, ev, dst, cparts, cols = self.off, self.ev, self.dst, self.cparts, self.cols
        for t in range(off[s], off[s + 1]):
            e = ev[t]
            keep = True
            for i in cparts[e]:
                c = choice(i, cols[i][s])
                if c is None:
                    return None
                if c != e:
                    keep = False
                    break
            if keep:
                out.append(dst[t])
        return out

    def outcome_ok(self, choice, op: str, p: list[bool], q: list[bool] | None) -> bool:
        """Evaluate the goal on the subgraph retained by a total-enough ``choice``."""
        succ: dict[int, list[int]] = {}
        seen = bytearray(self.n)
        seen[0] = 1
        order = [0]
        for s in order:
            r = self.retained(s, choice)
            if r is None:
                raise StrategyError("strategy undefined on a reachable coalition local state")
            if not r:
                if not self.stutter:
                    return False
                r = [s]
            succ[s] = r
            for d in r:
                if not seen[d]:
                    seen[d] = 1
                    order.append(d)
        if op == "G":
            return all(p[s] for s in order)
        if op == "X":
            return all(p[d] for d in succ[0])
        return _until_ok(succ, p, q)

    def strategy_from(self, lookup: Mapping[tuple[int, int], int]) -> UniformStrategy:
        """Restrict ``lookup`` to coalition local states reachable under it, filling idle choices."""
        model = self.model

        def choice(i, lid):
            c = lookup.get((i, lid))
            if c is None:
                prot = self.protocol_of(i, lid)
                c = prot[0] if prot else None
            return c

        seen = bytearray(self.n)
        seen[0] = 1
        order = [0]
        used: dict[tuple[int, int], int] = {}
        for s in order:
            for i in self.coalition:
                lid = self.cols[i][s]
                c = choice(i, lid)
                if c is not None:
                    used[(i, lid)] = c
            for d in self.retained(s, choice) or ():
                if not seen[d]:
                    seen[d] = 1
                    order.append(d)
        out = UniformStrategy({model.agent_names[i]: {} for i in self.coalition})
        for (i, lid), e in used.items():
            out.choices[model.agent_names[i]][model.agents[i].decode(lid)] = model.events[e]
        return out


def _until_ok(succ: dict[int, list[int]], p: list[bool], q: list[bool]) -> bool:
    """No cycle and no p-violation among states reached from the initial one through not-q states."""
    if q[0]:
        return True
    region = {0}
    stack = [0]
    while stack:
        s = stack.pop()
        if not p[s]:
            return False
        for d in succ[s]:
            if not q[d] and d not in region:
                region.add(d)
                stack.append(d)
    # cycle detection restricted to the region (iterative three-colour DFS)
    colour = dict.fromkeys(region, 0)
    for root in region:
        if colour[root]:
            continue
        colour[root] = 1
        stack2 = [(root, iter(succ[root]))]
        while stack2:
            s, it = stack2[-1]
            for d in it:
                if d not in colour:
                    continue
                if colour[d] == 1:
                    return False
                if colour[d] == 0:
                    colour[d] = 1
                    stack2.append((d, iter(succ[d])))
                    break
            else:
                colour[s] = 2
                stack2.pop()
    return True


# -- formula plumbing ----------------------------------------------------------------

def _as_flat(formula) -> FlatFormula:
    if isinstance(formula, str):
        return classify(parse_formula(formula), formula)
    return classify(formula)


def _goal_sets(model: GlobalModel, f: FlatFormula, definitions) -> tuple[list[bool], list[bool] | None]:
    if f.operator == "U":
        return sat(model, f.predicates[0], definitions).tolist(), sat(model, f.predicates[1], definitions).tolist()
    return sat(model, f.predicates[0], definitions).tolist(), None


def _game(model: GlobalModel, f: FlatFormula, deadlock: str) -> Game:
    return Game(model, check_coalition(model, f), deadlock)


# -- engines ---------------------------------------------------------------------

def pre_perfect(model: GlobalModel, coalition, target, mode: str = "reach",
                deadlock: str = "reject") -> set[int]:
    """States where some selection of one protocol event per coalition agent yields a
    non-empty set of consistent enabled events, all leading into ``target``.

    ``mode`` is accepted for both reachability and safety uses; the one-step
    preimage is the same in either case.
    """
    if mode not in ("reach", "stay"):
        raise ValueError(f"unknown mode {mode!r}")
    idx = tuple(sorted({model.agent_index[a] for a in coalition}))
    game = Game(model, idx, deadlock)
    inq = [False] * model.num_states
    for s in target:
        inq[s] = True
    return {s for s in range(model.num_states) if game.controllable(s, inq) is not None}


def _upper(game: Game, f: FlatFormula, p: list[bool], q: list[bool] | None) -> list[bool]:
    if f.operator == "G":
        return game.greatest(p)
    if f.operator == "U":
        return game.least(q, p)
    res = [False] * game.n
    res[0] = game.controllable(0, p) is not None
    return res


def winning_region(model: GlobalModel, formula, definitions: Mapping[str, Pred] | None = None,
                   deadlock: str = "reject") -> set[int]:
    """States from which the perfect-information fixpoint is won (for X: the initial state only)."""
    f = _as_flat(formula)
    p, q = _goal_sets(model, f, definitions)
    res = _upper(_game(model, f, deadlock), f, p, q)
    return {s for s in range(model.num_states) if res[s]}


def verify_upper(model: GlobalModel, formula, definitions: Mapping[str, Pred] | None = None,
                 deadlock: str = "reject") -> bool:
    """Perfect-information answer; False refutes the formula under imperfect information."""
    f = _as_flat(formula)
    p, q = _goal_sets(model, f, definitions)
    return _upper(_game(model, f, deadlock), f, p, q)[model.initial]


def verify_lower(model: GlobalModel, formula, definitions: Mapping[str, Pred] | None = None,
                 deadlock: str = "reject") -> Verdict:
    """Commitment-constrained fixpoint; TRUE carries a checked uniform witness, FALSE is inconclusive."""
    f = _as_flat(formula)
    game = _game(model, f, deadlock)
    p, q = _goal_sets(model, f, definitions)
    n = model.num_states
    commits: dict[tuple[int, int], int] = {}
    if f.operator == "G":
        region = game.greatest(p)
        won = game.greatest(region, commits)[0] if region[0] else False
    else:
        safe_up = game.greatest([True] * n)
        if f.operator == "U":
            target = [a and b for a, b in zip(q, safe_up)]
            game.least(target, p, commits)
            safe = game.greatest(safe_up, commits)
            target = [a and b for a, b in zip(q, safe)]
            won = game.least(target, p, commits)[0]
        else:
            goal = [a and b for a, b in zip(p, safe_up)]
            sel = game.controllable(0, goal, commits)
            if sel is not None:
                game.commit(0, sel, commits)
            safe = game.greatest(safe_up, commits)
            goal = [a and b for a, b in zip(p, safe)]
            won = game.controllable(0, goal, commits) is not None
    if not won:
        return Verdict(FALSE, "lower", note="lower bound not established")
    witness = game.strategy_from(commits)
    if not _check(game, witness, f, p, q):
        return Verdict(FALSE, "lower", note="commitment witness rejected")
    return Verdict(TRUE, "lower", witness)


def _strategy_lookup(game: Game, strategy: UniformStrategy):
    model = game.model
    table: dict[tuple[int, int], int] = {}
    coalition_names = {model.agent_names[i] for i in game.coalition}
    for agent, mapping in strategy.choices.items():
        if agent not in coalition_names:
            raise StrategyError(f"strategy given for {agent!r} outside the coalition")
        i = model.agent_index[agent]
        a = model.agents[i]
        for local, event in mapping.items():
            if local.location not in a.loc_index:
                raise StrategyError(f"unknown location {local.location!r} for {agent}")
            if event not in a.protocol(local.location):
                raise StrategyError(f"{event!r} is not in the protocol of {agent} at {local.location}")
            table[(i, a.encode(local))] = model.event_index[event]
    return table


def _check(game: Game, strategy: UniformStrategy, f: FlatFormula, p, q) -> bool:
    table = _strategy_lookup(game, strategy)
    return game.outcome_ok(lambda i, lid: table.get((i, lid)), f.operator, p, q)


def check_strategy(model: GlobalModel, coalition, strategy: UniformStrategy, goal,
                   definitions: Mapping[str, Pred] | None = None, deadlock: str = "reject") -> bool:
    """Whether every outcome path of ``strategy`` from the initial state satisfies ``goal``."""
    f = _as_flat(goal)
    idx = tuple(sorted({model.agent_index[a] for a in coalition}))
    if set(idx) != set(check_coalition(model, f)):
        raise StrategyError("coalition does not match the formula's coalition")
    game = Game(model, idx, deadlock)
    p, q = _goal_sets(model, f, definitions)
    return _check(game, strategy, f, p, q)


def verify_exact(model: GlobalModel, formula, definitions: Mapping[str, Pred] | None = None,
                 budget: int = DEFAULT_BUDGET, deadline: float | None = None,
                 deadlock: str = "reject") -> Verdict:
    """Backtracking search over uniform strategies; raises :class:`BudgetExceeded`."""
    f = _as_flat(formula)
    game = _game(model, f, deadlock)
    p, q = _goal_sets(model, f, definitions)
    op = f.operator
    off, ev, dst, cparts, cols = game.off, game.ev, game.dst, game.cparts, game.cols

    assign: dict[tuple[int, int], int] = {}
    trail: list[tuple[int, int]] = []
    reached = [0]
    flag = bytearray(game.n)
    flag[0] = 1
    head = 0
    stack: list[list] = []
    nodes = 0
    violated = op == "G" and not p[0]

    while True:
        if violated:
            violated = False
            while stack:
                top = stack[-1]
                key, options, idx, hmark, rlen, tlen = top
                for d in reached[rlen:]:
                    flag[d] = 0
                del reached[rlen:]
                for k in trail[tlen:]:
                    del assign[k]
                del trail[tlen:]
                head = hmark
                if idx < len(options):
                    top[2] = idx + 1
                    assign[key] = options[idx]
                    trail.append(key)
                    break
                stack.pop()
            else:
                return Verdict(FALSE, "exact", note=f"{nodes} search nodes")
            continue

        nodes += 1
        if nodes > budget:
            raise BudgetExceeded(f"exact search exceeded {budget} nodes")
        if deadline is not None and nodes % 1024 == 0 and time.perf_counter() > deadline:
            raise BudgetExceeded("exact search timed out")

        if head == len(reached):
            if op == "U":
                succ = {s: game.retained(s, lambda i, lid: assign.get((i, lid))) or [s] for s in reached}
                if not _until_ok(succ, p, q):
                    violated = True
                    continue
            witness = game.strategy_from(assign)
            return Verdict(TRUE, "exact", witness, note=f"{nodes} search nodes")

        s = reached[head]
        need = None
        for t in range(off[s], off[s + 1]):
            for i in cparts[ev[t]]:
                key = (i, cols[i][s])
                if key not in assign:
                    need = key
                    break
            if need is not None:
                break
        if need is not None:
            i, lid = need
            here = {ev[t] for t in range(off[s], off[s + 1]) if i in cparts[ev[t]]}
            prot = game.protocol_of(i, lid)
            options = [e for e in prot if e in here] + [e for e in prot if e not in here]
            stack.append([need, options, 1, head, len(reached), len(trail)])
            assign[need] = options[0]
            trail.append(need)
            continue

        kept = []
        for t in range(off[s], off[s + 1]):
            e = ev[t]
            for i in cparts[e]:
                if assign[(i, cols[i][s])] != e:
                    break
            else:
                kept.append(dst[t])
        if not kept:
            if not game.stutter:
                violated = True
                continue
            kept.append(s)
        if op == "X" and head == 0 and not all(p[d] for d in kept):
            violated = True
            continue
        for d in kept:
            if not flag[d]:
                flag[d] = 1
                reached.append(d)
                if op == "G" and not p[d]:
                    violated = True
        head += 1


# -- driver -----------------------------------------------------------------------

def verify(model: GlobalModel, formula, mode: str = "auto", budget: int = DEFAULT_BUDGET,
           timeout: float | None = None, definitions: Mapping[str, Pred] | None = None,
           deadlock: str = "reject") -> VerificationReport:
    """Run one engine, or the lower / upper / exact cascade in ``auto`` mode."""
    f = _as_flat(formula)
    text = f.source or format_formula(f)
    timings: dict[str, float] = {}
    deadline = None if timeout is None else time.perf_counter() + timeout

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        finally:
            timings[name] = time.perf_counter() - t0

    def exact() -> Verdict:
        try:
            return timed("exact", lambda: verify_exact(model, f, definitions, budget, deadline, deadlock))
        except BudgetExceeded as exc:
            return Verdict(INCONCLUSIVE, "exact" if mode == "exact" else "combined", note=str(exc))

    if mode == "lower":
        verdict = timed("lower", lambda: verify_lower(model, f, definitions, deadlock))
    elif mode == "upper":
        up = timed("upper", lambda: verify_upper(model, f, definitions, deadlock))
        verdict = Verdict(TRUE if up else FALSE, "upper")
    elif mode == "exact":
        verdict = exact()
    elif mode == "auto":
        verdict = timed("lower", lambda: verify_lower(model, f, definitions, deadlock))
        if verdict.value != TRUE:
            up = timed("upper", lambda: verify_upper(model, f, definitions, deadlock))
            if not up:
                verdict = Verdict(FALSE, "upper")
            else:
                verdict = exact()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return VerificationReport(text, verdict, timings, model.stats())

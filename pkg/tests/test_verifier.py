from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amascheck.amas import LocalState
from amascheck.logic import parse_flat, sat
from amascheck.model import compose
from amascheck.scenarios import ScenarioConfig, generate, phi
from amascheck.spec_lang import validate_system
from amascheck.verifier import (
    FALSE,
    INCONCLUSIVE,
    TRUE,
    BudgetExceeded,
    StrategyError,
    UniformStrategy,
    check_strategy,
    pre_perfect,
    verify,
    verify_exact,
    verify_lower,
    verify_upper,
    winning_region,
)

from _systems import DONE, T3, TGAP, model_of, random_formula, random_system


def idx(model, *locs):
    return model.index_of([LocalState(loc) for loc in locs])


def strategy(agent, **choices):
    return UniformStrategy({agent: {LocalState(loc): ev for loc, ev in choices.items()}})


FP = "<<C>> F C@c1"


# -- independent oracles ------------------------------------------------------------

def outcome_ok(model, coalition, choice, formula, stutter=False) -> bool:
    """Check a strategy (dict (agent, LocalState) -> event) by direct graph search."""
    parts = model.system.event_agents()
    p = sat(model, formula.predicates[0]).tolist()
    q = sat(model, formula.predicates[1]).tolist() if formula.operator == "U" else None
    succ = {}
    order, seen = [0], {0}
    for s in order:
        local = dict(zip(model.agent_names, model.state(s)))
        kept = [t for e, t in model.successors(s)
                if all(choice[(a, local[a])] == e for a in parts[e] if a in coalition)]
        if not kept:
            if not stutter:
                return False
            kept = [s]
        succ[s] = kept
        for t in kept:
            if t not in seen:
                seen.add(t)
                order.append(t)
    if formula.operator == "G":
        return all(p[s] for s in order)
    if formula.operator == "X":
        return all(p[t] for t in succ[0])
    # p U q holds on every path: least fixpoint over the retained graph
    good = {s for s in order if q[s]}
    changed = True
    while changed:
        changed = False
        for s in order:
            if s not in good and p[s] and all(t in good for t in succ[s]):
                good.add(s)
                changed = True
    return 0 in good


def brute_force(model, formula, stutter=False, limit=4096):
    """Whether some uniform strategy over all coalition local states wins, or None if too many."""
    coalition = set(formula.coalition)
    keys = sorted({(a, ls) for s in range(model.num_states)
                   for a, ls in zip(model.agent_names, model.state(s)) if a in coalition})
    options = [model.agents[model.agent_index[a]].protocol(ls.location) for a, ls in keys]
    total = 1
    for o in options:
        total *= len(o)
    if total > limit:
        return None
    return any(outcome_ok(model, coalition, dict(zip(keys, combo)), formula, stutter)
               for combo in itertools.product(*options))


def witness_lookup(model, witness):
    return {(a, ls): ev for a, m in witness.choices.items() for ls, ev in m.items()}


# -- fixtures -----------------------------------------------------------------------

class TestCheckStrategy:
    def test_t3_good_choice(self):
        m = model_of(T3)
        assert check_strategy(m, ["C"], strategy("C", c0="g", c1="l1", c2="l2"), FP)

    def test_t3_bad_choice(self):
        m = model_of(T3)
        assert not check_strategy(m, ["C"], strategy("C", c0="b", c1="l1", c2="l2"), FP)

    def test_tgap_left(self):
        m = model_of(TGAP)
        s = strategy("D", d0="lft", dl="stay_l", dr="stay_r")
        assert not check_strategy(m, ["D"], s, f"<<D>> F {DONE}")

    def test_protocol_violation(self):
        m = model_of(T3)
        with pytest.raises(StrategyError):
            check_strategy(m, ["C"], strategy("C", c0="l1"), FP)

    def test_missing_choice(self):
        m = model_of(T3)
        with pytest.raises(StrategyError):
            check_strategy(m, ["C"], strategy("C", c0="g"), FP)

    def test_outside_coalition(self):
        m = model_of(TGAP)
        with pytest.raises(StrategyError):
            check_strategy(m, ["D"], strategy("E", e0="u"), f"<<D>> F {DONE}")


class TestExact:
    def test_t3_true_with_witness(self):
        v = verify_exact(model_of(T3), FP)
        assert v.value == TRUE
        assert v.witness.choice("C", LocalState("c0")) == "g"

    def test_t3_empty_coalition(self):
        assert verify_exact(model_of(T3), "<<>> F C@c1").value == FALSE

    def test_tgap(self):
        assert verify_exact(model_of(TGAP), f"<<D>> F {DONE}").value == FALSE

    def test_budget(self):
        m = compose(validate_system(generate(ScenarioConfig(agents=2, attack="impersonator"))))
        with pytest.raises(BudgetExceeded):
            verify_exact(m, phi(ScenarioConfig(agents=2, attack="impersonator"), "all"), budget=10)


class TestPrePerfect:
    def test_tgap_choice_state(self):
        m = model_of(TGAP)
        done = {s for s in range(m.num_states) if sat(m, parse_flat(f"<<D>> G {DONE}").goal)[s]}
        assert idx(m, "e1", "d0") in pre_perfect(m, ["D"], done)

    def test_full_target(self):
        m = model_of(TGAP)
        assert pre_perfect(m, ["D"], set(range(m.num_states))) == set(range(m.num_states))

    def test_deadlock_never(self):
        m = model_of("agent A { init a; a -[e]-> b; loc a, b; }")
        dead = idx(m, "b")
        assert dead not in pre_perfect(m, ["A"], set(range(m.num_states)))
        assert dead not in pre_perfect(m, [], set(range(m.num_states)), mode="stay")

    def test_modes_agree(self):
        m = model_of(TGAP)
        q = {0, 3, 4}
        assert pre_perfect(m, ["D"], q, "reach") == pre_perfect(m, ["D"], q, "stay")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_monotone(self, seed):
        rng = random.Random(seed)
        _, m = random_system(rng, min_states=4)
        names = list(m.agent_names)
        coalition = rng.sample(names, rng.randint(0, min(2, len(names))))
        q2 = {s for s in range(m.num_states) if rng.random() < 0.7}
        q1 = {s for s in q2 if rng.random() < 0.6}
        assert pre_perfect(m, coalition, q1) <= pre_perfect(m, coalition, q2)


class TestUpper:
    def test_tgap(self):
        assert verify_upper(model_of(TGAP), f"<<D>> F {DONE}")

    def test_g_true(self):
        assert verify_upper(model_of(T3), "<<C>> G true")

    def test_g_fails_at_initial(self):
        assert not verify_upper(model_of(T3), "<<C>> G C@c1")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_gfp_laws(self, seed):
        rng = random.Random(seed)
        _, m = random_system(rng, min_states=4)
        f = random_formula(rng, m)
        f = type(f)(f.coalition, "G", (f.goal,))
        region = winning_region(m, f)
        p = sat(m, f.goal).tolist()
        assert all(p[s] for s in region)
        assert region <= pre_perfect(m, f.coalition, region)
        for s in set(range(m.num_states)) - region:
            bigger = region | {s}
            assert not p[s] or not bigger <= pre_perfect(m, f.coalition, bigger)


class TestLower:
    def test_tgap(self):
        assert verify_lower(model_of(TGAP), f"<<D>> F {DONE}").value == FALSE

    def test_t3(self):
        v = verify_lower(model_of(T3), FP)
        assert v.value == TRUE and v.witness.choice("C", LocalState("c0")) == "g"

    def test_g_true_deadlock_free(self):
        m = compose(validate_system(generate(ScenarioConfig(agents=2, attack="none"))))
        assert verify_lower(m, "<<AI1>> G true").value == TRUE


class TestVerify:
    def test_tgap_cascade(self):
        rep = verify(model_of(TGAP), f"<<D>> F {DONE}")
        assert rep.verdict.value == FALSE and rep.verdict.engine == "exact"
        assert set(rep.timings) == {"lower", "upper", "exact"}
        assert all(t >= 0 for t in rep.timings.values())

    @pytest.mark.parametrize("variant, expected", [("all", FALSE), ("any", TRUE)])
    def test_impersonator_two(self, variant, expected):
        cfg = ScenarioConfig(agents=2, attack="impersonator")
        m = compose(validate_system(generate(cfg)))
        assert verify(m, phi(cfg, variant)).verdict.value == expected

    def test_inconclusive_when_budget_runs_out(self):
        rep = verify(model_of(TGAP), f"<<D>> F {DONE}", budget=1)
        assert rep.verdict.value == INCONCLUSIVE and rep.verdict.engine == "combined"

    @pytest.mark.parametrize("mode", ["lower", "upper", "exact"])
    def test_single_engine_modes(self, mode):
        rep = verify(model_of(T3), FP, mode=mode)
        assert rep.verdict.value == TRUE and rep.verdict.engine == mode
        assert list(rep.timings) == [mode]


class TestDeadlockModes:
    DEAD = "agent A { init a; loc a, b; a -[e]-> b; }"

    def test_reject(self):
        assert verify_exact(model_of(self.DEAD), "<<>> G true").value == FALSE
        assert not verify_upper(model_of(self.DEAD), "<<>> G true")

    def test_stutter(self):
        m = model_of(self.DEAD)
        assert verify_exact(m, "<<>> G true", deadlock="stutter").value == TRUE
        assert verify_upper(m, "<<>> G true", deadlock="stutter")
        assert verify_lower(m, "<<>> G true", deadlock="stutter").value == TRUE
        # a stuck play never reaches b's goal
        assert verify_exact(m, "<<A>> F A@a", deadlock="stutter").value == TRUE
        assert verify_exact(m, "<<A>> F !A@a", deadlock="stutter").value == TRUE
        assert verify_exact(m, "<<>> G A@a", deadlock="stutter").value == FALSE


# -- randomized properties ---------------------------------------------------------------

class TestProperties:
    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from(["reject", "stutter"]))
    def test_soundness_chain_and_witnesses(self, seed, deadlock):
        rng = random.Random(seed)
        _, m = random_system(rng, max_states=600, min_states=3)
        f = random_formula(rng, m)
        lo = verify_lower(m, f, deadlock=deadlock)
        ex = verify_exact(m, f, deadlock=deadlock)
        up = verify_upper(m, f, deadlock=deadlock)
        assert not (lo.value == TRUE and ex.value == FALSE)
        assert not (ex.value == TRUE and not up)
        for v in (lo, ex):
            if v.value == TRUE:
                assert v.witness is not None
                assert check_strategy(m, f.coalition, v.witness, f, deadlock=deadlock)
                # protocol-respecting, one event per local state of a coalition agent
                for agent, choices in v.witness.choices.items():
                    assert agent in f.coalition
                    a = m.agents[m.agent_index[agent]]
                    assert all(ev in a.protocol(ls.location) for ls, ev in choices.items())

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from(["reject", "stutter"]))
    def test_exact_matches_brute_force(self, seed, deadlock):
        rng = random.Random(seed)
        _, m = random_system(rng, max_states=60, min_states=2, max_agents=2)
        f = random_formula(rng, m)
        expected = brute_force(m, f, stutter=deadlock == "stutter")
        if expected is None:
            return
        v = verify_exact(m, f, deadlock=deadlock)
        assert (v.value == TRUE) == expected
        if v.witness is not None:
            lookup = witness_lookup(m, v.witness)
            coalition = set(f.coalition)
            # fill local states the witness does not reach; they cannot matter
            for s in range(m.num_states):
                for a, ls in zip(m.agent_names, m.state(s)):
                    if a in coalition:
                        lookup.setdefault((a, ls), m.agents[m.agent_index[a]].protocol(ls.location)[0])
            assert outcome_ok(m, coalition, lookup, f, stutter=deadlock == "stutter")

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6))
    def test_empty_coalition_is_universal(self, seed):
        rng = random.Random(seed)
        _, m = random_system(rng, min_states=2)
        f = random_formula(rng, m, max_coalition=0)
        assert f.coalition == ()
        expected = outcome_ok(m, set(), {}, f)
        assert (verify_exact(m, f).value == TRUE) == expected
        assert (verify(m, f).verdict.value == TRUE) == expected

from __future__ import annotations

import json
import random

import pydot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amascheck.amas import LocalState
from amascheck.model import (
    StateCapExceeded,
    compose,
    dump_model,
    enabled,
    epistemic_partition,
    export_dot,
    model_stats,
    project,
)
from amascheck.scenarios import ScenarioConfig, generate
from amascheck.spec_lang import validate_system

from _systems import T2, T3, TGAP, model_of, model_as_sets, naive_enumerate, random_system


def idx(model, *locs):
    return model.index_of([LocalState(loc) for loc in locs])


class TestCompose:
    def test_t2_counts(self):
        m = model_of(T2)
        assert (m.num_states, m.num_transitions) == (2, 3)

    def test_single_self_loop(self):
        m = model_of("agent A { init a; a -[e]-> a; }")
        assert (m.num_states, m.num_transitions) == (1, 1)

    def test_t3_counts(self):
        m = model_of(T3)
        assert (m.num_states, m.num_transitions) == (3, 4)

    def test_bfs_numbering(self):
        m = model_of(T3)
        assert [m.state(i)[0].location for i in range(3)] == ["c0", "c1", "c2"]
        assert m.initial == 0

    def test_synchronisation_needs_all_participants(self):
        m = model_of("""
            agent A { init a0; a0 -[s]-> a1; a1 -[x]-> a1; }
            agent B { init b0; b0 -[y]-> b1; b1 -[s]-> b2; b2 -[z]-> b2; }
        """)
        # s is only possible once B has moved to b1
        assert enabled(m, 0) == {("y", idx(m, "a0", "b1"))}

    def test_snapshot_reads(self):
        m = model_of("""
            agent A { init a; var x: 0..3 = 1; a -[s do x = B.y]-> a; }
            agent B { init b; var y: 0..3 = 2; b -[s do y = A.x]-> b; }
        """)
        ((_, j),) = m.successors(0)
        assert m.state(j)[0].as_dict() == {"x": 2}
        assert m.state(j)[1].as_dict() == {"y": 1}

    def test_initial_deadlock_warning(self):
        m = model_of("""
            agent A { init a; a -[s]-> a; }
            agent B { init b; loc b, c; c -[t]-> c; c -[s]-> c; }
        """)
        assert m.num_transitions == 0
        assert any("deadlocked" in w.message for w in m.warnings)

    def test_state_cap(self):
        system = validate_system(generate(ScenarioConfig(agents=2, attack="none")))
        with pytest.raises(StateCapExceeded):
            compose(system, max_states=100)

    def test_reproducible(self):
        system = validate_system(generate(ScenarioConfig(agents=2, attack="impersonator")))
        a, b = compose(system), compose(system)
        assert list(a.transitions()) == list(b.transitions())
        assert [a.state(i) for i in range(a.num_states)] == [b.state(i) for i in range(b.num_states)]

    def test_partial_function(self):
        system = validate_system(generate(ScenarioConfig(agents=3, attack="mitm")))
        m = compose(system)
        for s in range(0, m.num_states, 97):
            evs = [e for e, _ in m.successors(s)]
            assert len(evs) == len(set(evs))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_naive_enumerator(self, seed):
        system, model = random_system(random.Random(seed))
        assert naive_enumerate(system.spec) == model_as_sets(model)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_def2_conformance(self, seed):
        system, model = random_system(random.Random(seed), min_states=5)
        parts = system.event_agents()
        for s, e, t in model.transitions():
            src, dst = model.state(s), model.state(t)
            for i, name in enumerate(model.agent_names):
                if name not in parts[e]:
                    assert src[i] == dst[i]


class TestQueries:
    def test_enabled_t2(self):
        m = model_of(T2)
        assert enabled(m, 0) == {("e", 1)}
        assert enabled(m, 1) == {("x", 1), ("y", 1)}

    def test_enabled_out_of_range(self):
        with pytest.raises(IndexError):
            enabled(model_of(T2), 5)

    def test_enabled_deadlock(self):
        m = model_of("agent A { init a; var x: 0..1; a -[e when x > 0]-> a; }")
        assert enabled(m, 0) == set()

    def test_project(self):
        m = model_of(T2)
        assert project(m, 1, ["A"]) == (LocalState("a1"),)
        assert project(m, 1, []) == ()
        with pytest.raises(KeyError):
            project(m, 1, ["Z"])

    def test_project_sai(self):
        m = compose(validate_system(generate(ScenarioConfig(agents=2, attack="impersonator"))))
        key = project(m, 0, ["Imp"])
        assert len(key) == 1 and key[0].location == "q5"

    def test_partition_tgap(self):
        m = model_of(TGAP)
        classes = {c.key: set(c.members) for c in epistemic_partition(m, ["D"])}
        d0 = classes[(LocalState("d0"),)]
        assert d0 == {idx(m, "e0", "d0"), idx(m, "e1", "d0"), idx(m, "e2", "d0")}

    @pytest.mark.parametrize("coalition", [[], ["E"], ["D"], ["E", "D"]])
    def test_partition_laws(self, coalition):
        m = model_of(TGAP)
        classes = epistemic_partition(m, coalition)
        members = [s for c in classes for s in c.members]
        assert sorted(members) == list(range(m.num_states))
        for c in classes:
            assert all(project(m, s, coalition) == c.key for s in c.members)
        if not coalition:
            assert len(classes) == 1
        if len(coalition) == 2:
            assert all(len(c.members) == 1 for c in classes)

    def test_valuation_decomposition(self):
        m = compose(validate_system(generate(ScenarioConfig(agents=2, attack="impersonator"))))
        for s in range(0, m.num_states, 41):
            parts = [a.labels(ls) for a, ls in zip(m.agents, m.state(s))]
            assert m.valuation(s) == frozenset().union(*parts)

    def test_stats(self):
        s = model_stats(model_of(T3))
        assert (s.states, s.transitions) == (3, 4) and s.generation_seconds >= 0


class TestExport:
    def test_dot_t2(self):
        (g,) = pydot.graph_from_dot_data(export_dot(model_of(T2)))
        assert len(g.get_nodes()) - len([n for n in g.get_nodes() if n.get_name() in ("node", "edge")]) == 2
        assert len(g.get_edges()) == 3

    def test_dot_truncated(self):
        m = compose(validate_system(generate(ScenarioConfig(agents=2, attack="impersonator"))))
        text = export_dot(m, max_states=100)
        assert "truncated" in text
        (g,) = pydot.graph_from_dot_data(text)
        assert g.get_node("truncated")

    def test_dot_atom_filter(self):
        text = export_dot(model_of(T2), atoms=["A@a1"])
        assert "A@a1" in text and "B@b1" not in text

    def test_dump(self):
        m = model_of(T2)
        d = json.loads(json.dumps(dump_model(m)))
        assert d["version"] == 1
        assert len(d["states"]) == 2 and len(d["transitions"]) == 3

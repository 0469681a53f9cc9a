"""Acceptance gate: one group of checks per criterion, summarised at the end of the run."""
from __future__ import annotations

import json
import random
import resource
import subprocess
import sys
import time

import pydot
import pytest

from amascheck.amas import LocalState
from amascheck.calibration import RECORDED, apply_key, calibrate, grid_key
from amascheck.cli import bench_report, build_parser
from amascheck.model import compose, export_dot
from amascheck.report import emit_report, mask_timing, report_to_dict, within_order
from amascheck.scenarios import (
    CALIBRATION_POINTS,
    EXPECTED_VERDICTS,
    PHI_VARIANTS,
    REFERENCE_COUNTS,
    ScenarioConfig,
    generate,
    phi,
)
from amascheck.spec_lang import validate_system
from amascheck.verifier import FALSE, TRUE, check_strategy, verify, verify_exact, verify_lower, verify_upper

from _systems import DONE, T2, T3, TGAP, model_as_sets, model_of, naive_enumerate, random_formula, random_system


def scenario_model(attack: str, agents: int, **kw):
    return compose(validate_system(generate(ScenarioConfig(agents=agents, attack=attack, **kw))))


@pytest.fixture(scope="module")
def calibration():
    return calibrate(deadlock="reject")


# -- criterion 1 ---------------------------------------------------------------------

@pytest.mark.criterion(1, "naive enumerator agrees with compose on 100 random systems in < 60 s")
def test_c1_definitional_conformance():
    rng = random.Random(20261015)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(100):
        system, model = random_system(rng, max_states=400)
        assert len(system.agents) <= 3 and model.num_states <= 400
        if naive_enumerate(system.spec) != model_as_sets(model):
            mismatches += 1
    elapsed = time.perf_counter() - start
    print(f"criterion 1: {mismatches} mismatches in {elapsed:.1f}s")
    assert mismatches == 0
    assert elapsed < 60


# -- criterion 2 ---------------------------------------------------------------------

@pytest.mark.criterion(2, "no soundness violation on 200 random instances in < 10 min")
def test_c2_soundness_chain():
    rng = random.Random(7)
    start = time.perf_counter()
    violations = 0
    for _ in range(200):
        _, model = random_system(rng, max_states=2000, min_states=2)
        f = random_formula(rng, model, max_coalition=2)
        lo, ex, up = verify_lower(model, f), verify_exact(model, f), verify_upper(model, f)
        if (lo.value == TRUE and ex.value == FALSE) or (ex.value == TRUE and not up):
            violations += 1
        for v in (lo, ex):
            if v.value == TRUE:
                assert check_strategy(model, f.coalition, v.witness, f)
    elapsed = time.perf_counter() - start
    print(f"criterion 2: {violations} violations in {elapsed:.1f}s")
    assert violations == 0
    assert elapsed < 600


# -- criterion 3 ---------------------------------------------------------------------

@pytest.mark.criterion(3, "T3 and TGAP fixture verdicts")
def test_c3_fixture_verdicts():
    t3 = model_of(T3)
    v = verify_exact(t3, "<<C>> F C@c1")
    assert v.value == TRUE
    assert v.witness.choice("C", LocalState("c0")) == "g"
    assert verify_exact(t3, "<<>> F C@c1").value == FALSE

    tgap = model_of(TGAP)
    done = f"<<D>> F {DONE}"
    assert verify_upper(tgap, done) is True
    assert verify_exact(tgap, done).value == FALSE
    assert verify_lower(tgap, done).value == FALSE


# -- criterion 4 ---------------------------------------------------------------------

@pytest.mark.criterion(4, "grid sweep re-derives the recorded outcome and the shipped default")
def test_c4_calibration_recorded(calibration):
    rec = RECORDED["reject"]
    assert calibration.points == list(CALIBRATION_POINTS)
    assert len(calibration.keys()) == 54
    assert calibration.selected == rec["selected"]
    assert tuple(calibration.matching_points(calibration.selected)) == rec["matches_at"]
    assert calibration.discrepancy == rec["discrepancy"]
    assert grid_key(ScenarioConfig()) == calibration.selected


@pytest.mark.criterion(4, "bench report flags the discrepancy")
def test_c4_discrepancy_flagged(calibration):
    args = build_parser().parse_args(["bench", "--attack", "mitm", "--agents-from", "3", "--agents-to", "3"])
    text = emit_report(bench_report(args), "md")
    assert calibration.discrepancy
    assert "DISCREPANCY" in text


@pytest.mark.criterion(4, "shipped default confirmed at (impersonator, 3) in auto mode in < 15 min")
def test_c4_confirmation_impersonator_three():
    cfg = ScenarioConfig(agents=3, attack="impersonator")
    model = compose(validate_system(generate(cfg)))
    verdicts = []
    for variant in (1, 2):
        start = time.perf_counter()
        rep = verify(model, phi(cfg, PHI_VARIANTS[variant]), timeout=900)
        assert time.perf_counter() - start < 900
        verdicts.append(rep.verdict.value)
    print(f"criterion 4: (impersonator, 3) verdicts {tuple(verdicts)}")
    assert tuple(verdicts) == EXPECTED_VERDICTS


@pytest.mark.criterion(4, "default state counts within one order of magnitude of the reference rows")
def test_c4_order_of_magnitude():
    for attack, n in (("impersonator", 2), ("impersonator", 3), ("mitm", 3)):
        model = scenario_model(attack, n)
        ref_states, ref_transitions = REFERENCE_COUNTS[attack][n]
        print(f"criterion 4: ({attack}, {n}) {model.num_states} states vs {ref_states}, "
              f"{model.num_transitions} transitions vs {ref_transitions}")
        assert within_order(model.num_states, ref_states)
        assert within_order(model.num_transitions, ref_transitions)


@pytest.mark.criterion(4, "one combination reproduces (FALSE, TRUE) at every calibration point")
@pytest.mark.xfail(strict=True, reason="no grid combination reproduces the verdicts at (mitm, 3) when "
                                       "deadlocks reject a strategy")
def test_c4_full_reproduction(calibration):
    assert calibration.matches


def test_c4_stutter_reading_reproduces():
    """Informational: with deadlocks read as stuttering, the same default matches at both points."""
    cfg = apply_key(ScenarioConfig(agents=3, attack="mitm"), RECORDED["stutter"]["selected"])
    model = compose(validate_system(generate(cfg)))
    verdicts = tuple(verify_exact(model, phi(cfg, PHI_VARIANTS[v]), deadlock="stutter").value for v in (1, 2))
    assert verdicts == EXPECTED_VERDICTS


# -- criterion 5 ---------------------------------------------------------------------

_GENERATE_FOUR = """
import time
from amascheck.model import compose
from amascheck.scenarios import ScenarioConfig, generate
from amascheck.spec_lang import validate_system
start = time.perf_counter()
m = compose(validate_system(generate(ScenarioConfig(agents=4, attack="impersonator"))), max_states=10**8)
print(m.num_states, m.num_transitions, time.perf_counter() - start)
"""


@pytest.mark.slow
@pytest.mark.criterion(5, "(impersonator, 4) generated within 30 min and 16 GB; counts strictly monotone")
def test_c5_scaling_smoke():
    counts = [scenario_model("impersonator", n).num_states for n in (2, 3)]
    proc = subprocess.run([sys.executable, "-c", _GENERATE_FOUR], capture_output=True, text=True,
                          timeout=1800, check=True)
    states, transitions, seconds = proc.stdout.split()
    peak_gb = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss / 2**20
    counts.append(int(states))
    print(f"criterion 5: counts {counts}, (impersonator, 4) {transitions} transitions "
          f"in {float(seconds):.1f}s, peak {peak_gb:.2f} GB")
    assert float(seconds) < 1800
    assert peak_gb < 16
    assert counts[0] < counts[1] < counts[2]


# -- criterion 6 ---------------------------------------------------------------------

@pytest.mark.criterion(6, "two identical bench runs give byte-identical JSON after masking timings")
def test_c6_determinism():
    argv = ["bench", "--attack", "imp", "--agents-from", "2", "--agents-to", "3", "--format", "json"]
    docs = []
    for _ in range(2):
        report = bench_report(build_parser().parse_args(argv))
        raw = emit_report(report, "json")
        assert json.loads(raw) == report_to_dict(report)
        docs.append(json.dumps(mask_timing(json.loads(raw)), indent=2, ensure_ascii=False).encode())
    assert docs[0] == docs[1]


# -- criterion 7 ---------------------------------------------------------------------

@pytest.mark.criterion(7, "DOT exports of T2, T3, TGAP and truncated (impersonator, 2) parse")
def test_c7_dot_validity():
    models = [model_of(T2), model_of(T3), model_of(TGAP)]
    texts = [export_dot(m) for m in models]
    imp2 = scenario_model("impersonator", 2)
    texts.append(export_dot(imp2, max_states=200))
    assert "truncated" in texts[-1]
    for m, text in zip(models, texts):
        (g,) = pydot.graph_from_dot_data(text)
        assert len(g.get_edges()) == m.num_transitions
    (g,) = pydot.graph_from_dot_data(texts[-1])
    assert g.get_node("truncated")


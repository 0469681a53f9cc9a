"""Run reports and their JSON, CSV and markdown renderings.

Wall-clock measurements live only under keys named ``timing`` so that
:func:`mask_timing` leaves a byte-stable document.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .model import ModelStats
from .verifier import VerificationReport

SCHEMA = 1
FORMATS = ("json", "csv", "md")
CSV_FIELDS = ("label", "agents", "states", "transitions", "generation_s", "property", "formula",
              "verdict", "engine", "verification_s")


def seconds(x: float) -> float:
    return round(max(x, 0.0), 3)


@dataclass
class PropertyResult:
    name: str
    report: VerificationReport

    @property
    def total_seconds(self) -> float:
        return sum(self.report.timings.values())


@dataclass
class ModelRun:
    """One generated model and the properties decided on it."""

    label: str
    stats: ModelStats
    agents: int | None = None
    results: list[PropertyResult] = field(default_factory=list)
    reference: tuple[int, int] | None = None


@dataclass
class RunReport:
    kind: str
    config: dict
    runs: list[ModelRun] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def within_order(value: int, reference: int) -> bool:
    return reference / 10 <= value <= reference * 10


def _result_dict(r: PropertyResult) -> dict:
    v = r.report.verdict
    d = {
        "property": r.name,
        "formula": r.report.formula,
        "verdict": v.value,
        "engine": v.engine,
        "note": v.note,
        "timing": {name: seconds(t) for name, t in r.report.timings.items()} | {"total": seconds(r.total_seconds)},
    }
    if v.witness is not None:
        d["witness_size"] = v.witness.size()
        d["witness"] = v.witness.summary()
    return d


def _run_dict(run: ModelRun) -> dict:
    d = {
        "label": run.label,
        "agents": run.agents,
        "states": run.stats.states,
        "transitions": run.stats.transitions,
        "timing": {"generation": seconds(run.stats.generation_seconds)},
        "results": [_result_dict(r) for r in run.results],
    }
    if run.reference is not None:
        st, tr = run.reference
        d["reference"] = {
            "states": st,
            "transitions": tr,
            "states_within_order": within_order(run.stats.states, st),
            "transitions_within_order": within_order(run.stats.transitions, tr),
        }
    return d


def report_to_dict(report: RunReport) -> dict:
    return {
        "schema": SCHEMA,
        "kind": report.kind,
        "config": report.config,
        "notes": list(report.notes),
        **report.extra,
        "runs": [_run_dict(r) for r in report.runs],
    }


def mask_timing(obj):
    """Copy of a report dictionary with every ``timing`` entry removed."""
    if isinstance(obj, dict):
        return {k: mask_timing(v) for k, v in obj.items() if k != "timing"}
    if isinstance(obj, list):
        return [mask_timing(v) for v in obj]
    return obj


def _property_names(report: RunReport) -> list[str]:
    names: dict[str, None] = {}
    for run in report.runs:
        for r in run.results:
            names.setdefault(r.name)
    return list(names)


def _header(name: str) -> str:
    if name.startswith("phi") and name[3:].isdigit():
        return f"Verif. φ{name[3:]}"
    return f"Verif. {name}"


def _emit_md(report: RunReport) -> str:
    props = _property_names(report)
    first = "#Ag" if report.kind == "bench" else "Model"
    cols = [first, "#st", "#tr", "Gen.", *(_header(p) for p in props)]
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
    for run in report.runs:
        by_name = {r.name: r for r in run.results}
        cells = [str(run.agents) if report.kind == "bench" and run.agents is not None else run.label,
                 str(run.stats.states), str(run.stats.transitions), f"{run.stats.generation_seconds:.3f}"]
        for p in props:
            r = by_name.get(p)
            cells.append("" if r is None else f"{r.total_seconds:.3f}/{r.report.verdict.value}")
        lines.append("| " + " | ".join(cells) + " |")
    engines = [f"{run.label} {r.name}: {r.report.verdict.engine}" for run in report.runs for r in run.results]
    if engines:
        lines += ["", "Deciding engines: " + "; ".join(engines) + "."]
    refs = [(run, run.reference) for run in report.runs if run.reference is not None]
    if refs:
        lines += ["", "| #Ag | reference #st | reference #tr | within 10x |", "|---|---|---|---|"]
        for run, (st, tr) in refs:
            ok = within_order(run.stats.states, st) and within_order(run.stats.transitions, tr)
            lines.append(f"| {run.agents} | {st} | {tr} | {'yes' if ok else 'no'} |")
    if report.notes:
        lines += [""] + [f"- {n}" for n in report.notes]
    return "\n".join(lines) + "\n"


def _emit_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for run in report.runs:
        for r in run.results:
            w.writerow([run.label, "" if run.agents is None else run.agents, run.stats.states,
                        run.stats.transitions, f"{run.stats.generation_seconds:.3f}", r.name,
                        r.report.formula, r.report.verdict.value, r.report.verdict.engine,
                        f"{r.total_seconds:.3f}"])
    return buf.getvalue()


def emit_report(report: RunReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "md":
        return _emit_md(report)
    raise ValueError(f"unknown report format {fmt!r}")

"""Command-line front end.

Exit codes: 0 success, 1 verdict differs from ``--expect``, 2 usage or input
error, 3 timeout, search budget or state cap exhausted.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .calibration import RECORDED, calibrate, grid_key, status_note
from .diagnostics import SpecError
from .logic import UnresolvedAtom, UnsupportedFragment, parse_flat
from .model import DEFAULT_STATE_CAP, StateCapExceeded, compose, export_dot, write_dump
from .report import FORMATS, ModelRun, PropertyResult, RunReport, emit_report
from .scenarios import (
    ATTACK_ALIASES,
    EXPECTED_VERDICTS,
    FAKE_RANGES,
    PHI_VARIANTS,
    QUALITY_SCOPES,
    RECEIVE_MODES,
    REFERENCE_COUNTS,
    SHARED_READINGS,
    ScenarioConfig,
    ScenarioError,
    generate,
    phi,
)
from .spec_lang import format_system, load_system, validate_system
from .verifier import DEADLOCK_MODES, DEFAULT_BUDGET, INCONCLUSIVE, verify

EXIT_OK, EXIT_EXPECT, EXIT_USAGE, EXIT_LIMIT = 0, 1, 2, 3
DEFAULT_TIMEOUT = 900.0


class UsageError(Exception):
    pass


def _threads() -> int:
    raw = os.environ.get("AMASCHECK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"AMASCHECK_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


# -- argument groups -------------------------------------------------------------

def _add_scenario_flags(p: argparse.ArgumentParser, attack_flag: str = "--scenario") -> None:
    defaults = ScenarioConfig()
    g = p.add_argument_group("scenario")
    if attack_flag == "--scenario":
        g.add_argument("--scenario", choices=sorted(ATTACK_ALIASES), help="generate a gossip-learning scenario")
        g.add_argument("--agents", type=int, default=2, help="total agents including the intruder")
    g.add_argument("--k", type=int, default=defaults.k, help="quality threshold")
    g.add_argument("--receive", choices=RECEIVE_MODES, default=defaults.receive)
    g.add_argument("--shared", choices=SHARED_READINGS, default=defaults.shared, help="round-completion reading")
    g.add_argument("--fake-range", choices=FAKE_RANGES, default=defaults.fake_range)
    g.add_argument("--quality-scope", choices=QUALITY_SCOPES, default=defaults.quality_scope)
    g.add_argument("--no-direct-links", action="store_true",
                   help="man-in-the-middle: remove the direct links it interposes on")


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("file", nargs="?", help=".amas system file")
    _add_scenario_flags(p)
    p.add_argument("--max-states", type=int, default=DEFAULT_STATE_CAP)


def _config(args, attack: str, agents: int) -> ScenarioConfig:
    return ScenarioConfig(
        agents=agents, attack=attack, k=args.k, receive=args.receive, shared=args.shared,
        fake_range=args.fake_range, quality_scope=args.quality_scope,
        mitm_direct_links=not args.no_direct_links,
    )


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise UsageError(f"file not found: {path}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load(args):
    """Validated system plus the scenario config it came from (None for files)."""
    if args.file and args.scenario:
        raise UsageError("give either FILE or --scenario, not both")
    if args.file:
        text = _read(args.file)
        try:
            return load_system(text), None
        except SpecError as exc:
            raise SpecFailure(args.file, exc) from None
    if args.scenario:
        cfg = _config(args, args.scenario, args.agents)
        return validate_system(generate(cfg)), cfg
    raise UsageError("a system FILE or --scenario is required")


class SpecFailure(Exception):
    def __init__(self, filename: str, exc: SpecError):
        super().__init__(filename)
        self.filename = filename
        self.exc = exc


def _build(system, args):
    return compose(system, max_states=args.max_states)


# -- subcommands -----------------------------------------------------------------

def cmd_validate(args, out) -> int:
    text = _read(args.file)
    try:
        system = load_system(text)
    except SpecError as exc:
        for d in exc.diagnostics:
            print(d.format(args.file), file=out)
        return EXIT_USAGE
    for d in system.warnings:
        print(d.format(args.file), file=out)
    events = len(system.event_agents())
    print(f"ok: {len(system.agents)} agents, {events} events", file=out)
    return EXIT_OK


def cmd_build(args, out) -> int:
    system, _ = _load(args)
    model = _build(system, args)
    s = model.stats()
    print(f"states: {s.states}", file=out)
    print(f"transitions: {s.transitions}", file=out)
    print(f"generation: {s.generation_seconds:.3f}s", file=out)
    for w in model.warnings:
        print(w.format(args.file or system.name), file=out)
    if args.dump:
        write_dump(model, args.dump)
    if args.emit_amas:
        with open(args.emit_amas, "w", encoding="utf-8") as fh:
            fh.write(format_system(system.spec))
    return EXIT_OK


def _formula(args, cfg):
    if args.formula and args.phi:
        raise UsageError("give either --formula or --phi, not both")
    if args.phi:
        if cfg is None or cfg.intruder is None:
            raise UsageError("--phi needs --scenario imp or mitm")
        return f"phi{args.phi}", phi(cfg, PHI_VARIANTS[args.phi])
    if args.formula:
        return "formula", parse_flat(args.formula)
    raise UsageError("--formula or --phi is required")


def _print_verdict(report, out) -> None:
    v = report.verdict
    print(f"formula: {report.formula}", file=out)
    print(f"verdict: {v.value} (engine: {v.engine})", file=out)
    if v.note:
        print(f"note: {v.note}", file=out)
    for name, t in report.timings.items():
        print(f"time {name}: {t:.3f}s", file=out)
    if v.witness is not None:
        print(f"witness ({v.witness.size()} local-state choices):", file=out)
        for line in v.witness.summary():
            print(f"  {line}", file=out)


def _exit_for(value: str, expect: str | None) -> int:
    if value == INCONCLUSIVE:
        return EXIT_LIMIT
    if expect is not None and value != expect.upper():
        return EXIT_EXPECT
    return EXIT_OK


def cmd_verify(args, out) -> int:
    system, cfg = _load(args)
    name, formula = _formula(args, cfg)
    model = _build(system, args)
    rep = verify(model, formula, mode=args.mode, budget=args.budget, timeout=args.timeout,
                 deadlock=args.deadlock)
    if args.format == "text":
        _print_verdict(rep, out)
    else:
        config = {"source": args.file, "scenario": cfg.as_dict() if cfg else None, "mode": args.mode,
                  "deadlock": args.deadlock, "budget": args.budget, "timeout": args.timeout}
        run = ModelRun(args.file or system.name, model.stats(), cfg.agents if cfg else None,
                       [PropertyResult(name, rep)])
        out.write(emit_report(RunReport("verify", config, [run]), args.format))
    return _exit_for(rep.verdict.value, args.expect)


def cmd_export_dot(args, out) -> int:
    system, _ = _load(args)
    model = _build(system, args)
    atoms = [a.strip() for a in args.atoms.split(",") if a.strip()] if args.atoms is not None else None
    text = export_dot(model, max_states=args.dot_states, atoms=atoms)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def bench_report(args) -> RunReport:
    attack = ATTACK_ALIASES[args.attack]
    threads = _threads()
    if args.agents_from > args.agents_to:
        raise UsageError("--agents-from must not exceed --agents-to")
    base = _config(args, attack, max(args.agents_from, 3 if attack == "mitm" else 2))
    config = {"attack": attack, "agents_from": args.agents_from, "agents_to": args.agents_to,
              "scenario": {k: v for k, v in base.as_dict().items() if k != "agents"},
              "mode": args.mode, "deadlock": args.deadlock, "budget": args.budget, "timeout": args.timeout}
    report = RunReport("bench", config)
    note = status_note(args.deadlock)
    if note:
        report.notes.append(note)
    if grid_key(base) != RECORDED[args.deadlock]["selected"]:
        report.notes.append("configuration differs from the calibrated default")
    for n in range(args.agents_from, args.agents_to + 1):
        cfg = _config(args, attack, n)
        model = compose(validate_system(generate(cfg)), max_states=args.max_states)
        formulas = [(f"phi{v}", phi(cfg, PHI_VARIANTS[v])) for v in (1, 2)]

        def run_one(item):
            return item[0], verify(model, item[1], mode=args.mode, budget=args.budget,
                                   timeout=args.timeout, deadlock=args.deadlock)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                done = list(pool.map(run_one, formulas))
        else:
            done = [run_one(item) for item in formulas]
        run = ModelRun(f"{attack}-{n}", model.stats(), n, [PropertyResult(k, r) for k, r in done],
                       REFERENCE_COUNTS.get(attack, {}).get(n))
        report.runs.append(run)
        verdicts = tuple(r.verdict.value for _, r in done)
        if verdicts != EXPECTED_VERDICTS:
            report.notes.append(f"#Ag={n}: verdicts {verdicts} differ from the reference pattern {EXPECTED_VERDICTS}")
    return report


def cmd_bench(args, out) -> int:
    report = bench_report(args)
    text = emit_report(report, args.format)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    values = [r.report.verdict.value for run in report.runs for r in run.results]
    return EXIT_LIMIT if INCONCLUSIVE in values else EXIT_OK


def cmd_calibrate(args, out) -> int:
    result = calibrate(budget=args.budget, deadlock=args.deadlock)
    if args.format == "json":
        import json
        out.write(json.dumps(result.to_json(), indent=2) + "\n")
        return EXIT_OK
    print("| point | receive | shared | k | fake | #st | φ1 | φ2 |", file=out)
    print("|---|---|---|---|---|---|---|---|", file=out)
    for r in result.rows:
        rec, sh, k, fake = r.key
        print(f"| {r.attack}-{r.agents} | {rec} | {sh} | {k} | {fake} | {r.states} | "
              f"{r.verdicts[0]} | {r.verdicts[1]} |", file=out)
    sel = result.selected
    print("", file=out)
    print(f"matches at every point: {len(result.matches)}", file=out)
    print(f"selected: {'/'.join(map(str, sel)) if sel else 'none'}", file=out)
    if result.discrepancy:
        print("DISCREPANCY: no combination reproduces the reference verdicts at every point", file=out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _verify_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("auto", "lower", "upper", "exact"), default="auto")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="exact-search node budget")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="seconds per formula")
    p.add_argument("--deadlock", choices=DEADLOCK_MODES, default="reject",
                   help="reject strategies reaching a deadlock, or let deadlocks stutter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amascheck", description="Strategic-ability model checker for asynchronous multi-agent systems.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a system file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build", help="compose the global model and print statistics")
    _add_source(p)
    p.add_argument("--dump", metavar="PATH", help="write the model as JSON")
    p.add_argument("--emit-amas", metavar="PATH", help="write the system source")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("verify", help="decide a flat strategic formula")
    _add_source(p)
    p.add_argument("--formula", help="formula text, e.g. '<<A>> G A@a0'")
    p.add_argument("--phi", type=int, choices=(1, 2), help="scenario property 1 (all) or 2 (any)")
    _verify_flags(p)
    p.add_argument("--expect", choices=("true", "false"), help="exit 1 when the verdict differs")
    p.add_argument("--format", choices=("text", *FORMATS), default="text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-dot", help="write the global model as a Graphviz digraph")
    _add_source(p)
    p.add_argument("--dot-states", type=int, default=500, help="states shown before truncation")
    p.add_argument("--atoms", help="comma-separated atoms to label (default: all)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("bench", help="scenario sweep in the layout of the reference result tables")
    p.add_argument("--attack", choices=("imp", "impersonator", "mitm"), required=True)
    p.add_argument("--agents-from", type=int, required=True)
    p.add_argument("--agents-to", type=int, required=True)
    _add_scenario_flags(p, attack_flag="--attack")
    _verify_flags(p)
    p.add_argument("--max-states", type=int, default=DEFAULT_STATE_CAP)
    p.add_argument("--format", choices=FORMATS, default="md")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("calibrate", help="search the scenario grid for the reference verdicts")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--deadlock", choices=DEADLOCK_MODES, default="reject")
    p.add_argument("--format", choices=("md", "json"), default="md")
    p.set_defaults(func=cmd_calibrate)
    return parser


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"amascheck: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecFailure as exc:
        for d in exc.exc.diagnostics:
            print(d.format(exc.filename), file=sys.stderr)
        return EXIT_USAGE
    except (SpecError, ScenarioError, UnsupportedFragment, UnresolvedAtom) as exc:
        print(f"amascheck: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StateCapExceeded as exc:
        print(f"amascheck: {exc}", file=sys.stderr)
        return EXIT_LIMIT


def main() -> None:
    sys.exit(run())

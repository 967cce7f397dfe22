"""bierte command line: compile, simulate, validate-subsets, perf.

Exit codes: 0 ok, 1 verdict failure (--strict) or non-quiescence,
2 bad input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from . import perfmodel, planner
from .sim import NonQuiescenceError, ScenarioError, load_scenario_file, run
from .tables import CompileError, compile_tables, dump_tables
from .topology import FRR_MODES, TopologyError, dump_topology, load_topology_file

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_INPUT = 2


class InputError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _load(path):
    try:
        return load_topology_file(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def cmd_compile(args, out) -> int:
    t = _load(args.topology)
    text = dump_tables(compile_tables(t, frr=args.frr))
    if args.output:
        _write(args.output, text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    t = _load(args.topology)
    try:
        scenario = load_scenario_file(args.scenario, t)
    except OSError as exc:
        raise InputError(f"{args.scenario}: {exc.strerror or exc}") from None
    tables = compile_tables(t, frr=args.frr)
    result = run(t, tables, scenario)
    if args.trace:
        _write(args.trace, result.trace_text())
    out.write(result.report.to_json())
    if args.strict and not result.report.ok:
        return EXIT_VERDICT
    return EXIT_OK


def cmd_validate(args, out) -> int:
    t = _load(args.topology)
    sis = [args.si] if args.si is not None else sorted(t.subsets)
    for si in sis:
        if si not in t.subsets:
            raise InputError(f"{args.topology}: no subset {si}")
    report = []
    repaired = t
    failing = False
    for si in sis:
        d = planner.validate_subset(t, si, args.mode)
        report.append(d.to_dict())
        if not d.connected_enough(args.mode):
            failing = True
        if d.suggested_virtual_links:
            repaired = planner.apply_virtual_links(repaired, si, d.suggested_virtual_links)
    out.write(yaml.safe_dump({"mode": args.mode, "subsets": report}, sort_keys=False))
    if args.repair:
        _write(args.repair, dump_topology(repaired))
    if args.strict and failing:
        return EXIT_VERDICT
    return EXIT_OK


def cmd_perf(args, out) -> int:
    try:
        rows = perfmodel.curve(args.frames, args.bsl, args.overhead, args.line_rate)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out.write(perfmodel.curve_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bierte", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a topology into per-node tables")
    c.add_argument("topology")
    c.add_argument("--frr", choices=FRR_MODES, help="override every subset's FRR mode")
    c.add_argument("-o", "--output", help="write the dump here instead of stdout")
    c.set_defaults(func=cmd_compile)

    s = sub.add_parser("simulate", help="run a scenario and print the delivery report")
    s.add_argument("topology")
    s.add_argument("scenario")
    s.add_argument("--frr", choices=FRR_MODES, help="override every subset's FRR mode")
    s.add_argument("--trace", help="write the per-hop trace to this file")
    s.add_argument("--strict", action="store_true", help="exit 1 if any verdict is false")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate-subsets", help="check subset connectivity and suggest virtual links")
    v.add_argument("topology")
    v.add_argument("--mode", choices=(planner.EDGE, planner.VERTEX), default=planner.EDGE)
    v.add_argument("--si", type=int, help="only this subset")
    v.add_argument("--repair", metavar="OUT", help="write the topology with suggested virtual links added")
    v.add_argument("--strict", action="store_true", help="exit 1 if any subset fails the check")
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("perf", help="print the r_max curve as CSV")
    f.add_argument("--frames", type=_int_list, default=[64, 128, 256, 512, 1024, 1536])
    f.add_argument("--bsl", type=_int_list, default=[64, 128, 256])
    f.add_argument("--overhead", type=float, default=perfmodel.DEFAULT_OVERHEAD)
    f.add_argument("--line-rate", type=float, default=perfmodel.DEFAULT_LINE_RATE)
    f.set_defaults(func=cmd_perf)
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except (InputError, TopologyError, ScenarioError, CompileError) as exc:
        err.write(f"bierte: error: {exc}\n")
        return EXIT_INPUT
    except NonQuiescenceError as exc:
        err.write(f"bierte: {exc}\n")
        return EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands::

    burstsim simulate <scenario> [--seed N] [--scale F] [--out DIR] [--check]
    burstsim validate <scenario>
    burstsim report <trace-dir>

``<scenario>`` is a YAML file path, or the literal name ``reference`` for
the packaged reference burst.  ``--scale`` multiplies every count in the
scenario (group sizes, quotas, job batches) and defaults to 0.01 so that a
desk run finishes in seconds; pass ``--scale 1.0`` for the full pool.

Exit codes: 0 = success (and all checks passed when ``--check`` is set),
1 = scenario/input problem, 2 = at least one acceptance check failed,
3 = unexpected internal error.

The default output directory is ``./out``, overridable by the
``BURSTSIM_OUT`` environment variable; ``--out`` wins over both.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .checks import format_checks, replay_checks
from .errors import SimError, ValidationError
from .replay import reference_scenario_path
from .reports import emit_outputs, rebuild_outputs
from .scenario import load_scenario
from .simulation import run_scenario
from .workload import PerfTable
from .economics import PriceBook

OUT_ENV = "BURSTSIM_OUT"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CHECK = 2
EXIT_INTERNAL = 3


def _scenario_source(name: str):
    if name == "reference":
        return reference_scenario_path()
    return Path(name)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="burstsim",
        description="Deterministic simulator of a bursty multi-cloud GPU pool.")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser(
        "simulate", help="run a scenario and write trace, tables, and figures")
    sim.add_argument("scenario",
                     help="scenario YAML path, or 'reference' for the packaged burst")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the scenario's RNG seed")
    sim.add_argument("--scale", type=float, default=0.01,
                     help="multiply all counts by this factor (default 0.01)")
    sim.add_argument("--out", default=None,
                     help=f"output directory (default $" + OUT_ENV + " or ./out)")
    sim.add_argument("--check", action="store_true",
                     help="evaluate the reference-burst acceptance checks")
    sim.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering")

    val = sub.add_parser("validate", help="parse and validate a scenario, run nothing")
    val.add_argument("scenario")

    rep = sub.add_parser(
        "report", help="rebuild tables and figures from an existing trace directory")
    rep.add_argument("trace_dir")
    rep.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering")
    return ap


def _cmd_simulate(args) -> int:
    sc = load_scenario(_scenario_source(args.scenario))
    if args.seed is not None:
        sc = dataclasses.replace(sc, seed=args.seed)
    if args.scale <= 0:
        raise SimError(f"--scale must be positive, got {args.scale}")
    sc = sc.scaled(args.scale)

    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    result = run_scenario(sc, trace_path=out / "trace.csv")

    checks = None
    if args.check:
        checks = replay_checks(result.aggregates, result.perf, result.prices,
                               scale=args.scale)
    report = emit_outputs(result, out, figures=not args.no_figures,
                          acceptance=checks)

    agg = result.aggregates
    print(f"simulated seed={sc.seed} scale={args.scale:g}: "
          f"peak {agg.peak_total} instances at t={agg.peak_t / 60:.1f} min, "
          f"{agg.total_walltime_h():.0f} GPU-hours, "
          f"${result.ledger.total_cost():.0f} accrued")
    for path in report.manifest + report.figures:
        print(f"  wrote {path}")
    if checks is not None:
        print(format_checks(checks))
        if not all(c.passed for c in checks):
            return EXIT_CHECK
    return EXIT_OK


def _cmd_validate(args) -> int:
    sc = load_scenario(_scenario_source(args.scenario))
    print(f"ok: {len(sc.regions)} regions, {len(sc.plan)} plan entries, "
          f"{len(sc.workload)} workload entries, horizon {sc.horizon_s:g} s")
    return EXIT_OK


def _cmd_report(args) -> int:
    perf = PerfTable.load()
    report = rebuild_outputs(args.trace_dir, perf, PriceBook(perf),
                             figures=not args.no_figures)
    for path in report.manifest + report.figures:
        print(f"  wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"simulate": _cmd_simulate,
               "validate": _cmd_validate,
               "report": _cmd_report}[args.command]
    try:
        return handler(args)
    except ValidationError as exc:
        print(f"error: scenario failed validation "
              f"({len(exc.problems)} problem(s)):", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_INPUT
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())

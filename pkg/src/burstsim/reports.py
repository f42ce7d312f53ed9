"""Report generation: pure functions of a finished event trace.

Aggregation replays the effect rows of a trace (instance lifecycle, job
completions) into per-model step curves and totals.  Nothing here depends
on live simulation state, so the same reports can be rebuilt later from a
``trace.csv`` on disk — that is what the ``report`` CLI subcommand does.

Outputs of a run:

* ``trace.csv``               — every dispatched event and effect record
* ``pool_timeseries.csv``     — sampled pool/instance counts (60 s default)
* ``provisioning_audit.csv``  — one row per provisioning action
* ``peak_table.csv``          — per-model composition at the peak instant
* ``totals_table.csv``        — per-model walltime, compute, cost, science
* ``summary.txt``             — aligned-text tables plus run milestones

The same path renders the headline figures (instance ramp by region, pool
time evolution, peak composition, contribution rings) as PNG files next to
the delimited output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .economics import CostLedger, PriceBook
from .engine import Event, EventKind, TRACE_HEADER
from .errors import EmptyTrace, IoError
from .workload import PerfTable

POOL_TS_HEADER = "t,running_gpu_jobs,idle_gpu_jobs,running_instances,pflops32"
AUDIT_HEADER = "t,group_id,flavor,region,action,count"

CORE_OUTPUTS = ("trace.csv", "pool_timeseries.csv", "provisioning_audit.csv",
                "peak_table.csv", "totals_table.csv", "summary.txt")


def iter_trace_csv(path) -> Iterator[Event]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise EmptyTrace(f"{path}: not a trace file")
        for line in fh:
            t, seq, kind, target, detail = line.rstrip("\n").split(",", 4)
            yield Event(float(t), int(seq), EventKind(kind), target, detail)


def _kv(detail: str) -> dict[str, str]:
    return dict(p.split("=", 1) for p in detail.split())


@dataclass
class TraceAggregates:
    """Everything the tables, figures, and acceptance checks need."""

    end_t: float = 0.0
    peak_t: float = 0.0
    peak_total: int = 0
    peak_by_model: dict[str, int] = field(default_factory=dict)
    walltime_h: dict[str, float] = field(default_factory=dict)       # Running-state hours
    billable_h: dict[str, float] = field(default_factory=dict)       # non-rogue, by model
    rogue_billable_h: dict[str, float] = field(default_factory=dict)
    science: dict[str, float] = field(default_factory=dict)
    completions: dict[str, int] = field(default_factory=dict)
    preempted_instances: int = 0
    preempted_job_attempts: int = 0
    rogues_spawned: int = 0
    end_running: int = 0
    end_billable: int = 0
    # step curves: region -> (times, deltas); totals likewise
    region_deltas: dict[str, list[tuple[float, int]]] = field(default_factory=dict)
    total_deltas: list[tuple[float, int]] = field(default_factory=list)
    # periodic samples: (t, running_gpu_jobs, idle_gpu_jobs, instances, pflops32)
    timeseries: list[tuple[float, int, int, int, float]] = field(default_factory=list)
    t65: float | None = None
    t90: float | None = None

    def total_walltime_h(self) -> float:
        return sum(self.walltime_h.values())

    def total_science(self) -> float:
        return sum(self.science.values())

    def models(self) -> list[str]:
        seen = set(self.peak_by_model) | set(self.walltime_h) | set(self.science)
        return sorted(seen)


def aggregate(trace: Iterable[Event]) -> TraceAggregates:
    """One pass over the trace; crossing times are resolved afterwards."""
    agg = TraceAggregates()
    registry: dict[str, tuple[str, str, bool]] = {}   # iid -> (model, region, rogue)
    run_open: dict[str, float] = {}
    bill_open: dict[str, float] = {}
    counts: dict[str, int] = {}
    total_running = 0
    last_t = 0.0

    for ev in trace:
        last_t = ev.at
        kind = ev.kind
        if kind is EventKind.INSTANCE_BOOTING:
            d = _kv(ev.detail)
            rogue = d.get("rogue") == "1"
            registry[ev.target] = (d["model"], d["region"], rogue)
            bill_open[ev.target] = ev.at
            if rogue:
                agg.rogues_spawned += 1
        elif kind is EventKind.INSTANCE_RUNNING:
            info = registry.get(ev.target)
            if info is None:
                continue
            model, region, rogue = info
            run_open[ev.target] = ev.at
            if not rogue:
                counts[model] = counts.get(model, 0) + 1
                total_running += 1
                agg.total_deltas.append((ev.at, 1))
                agg.region_deltas.setdefault(region, []).append((ev.at, 1))
                if total_running > agg.peak_total:
                    agg.peak_total = total_running
                    agg.peak_t = ev.at
                    agg.peak_by_model = dict(counts)
        elif kind in (EventKind.INSTANCE_STOPPED, EventKind.INSTANCE_DEALLOCATED,
                      EventKind.INSTANCE_TERMINATED, EventKind.INSTANCE_PREEMPTED):
            info = registry.get(ev.target)
            if info is None:
                continue
            model, region, rogue = info
            t0 = run_open.pop(ev.target, None)
            if t0 is not None:
                if not rogue:
                    agg.walltime_h[model] = agg.walltime_h.get(model, 0.0) + (ev.at - t0) / 3600.0
                    counts[model] -= 1
                    total_running -= 1
                    agg.total_deltas.append((ev.at, -1))
                    agg.region_deltas.setdefault(region, []).append((ev.at, -1))
                else:
                    agg.rogue_billable_h.setdefault(model, 0.0)
            if kind is not EventKind.INSTANCE_STOPPED:
                b0 = bill_open.pop(ev.target, None)
                if b0 is not None:
                    bucket = agg.rogue_billable_h if rogue else agg.billable_h
                    bucket[model] = bucket.get(model, 0.0) + (ev.at - b0) / 3600.0
            if kind is EventKind.INSTANCE_PREEMPTED and not rogue:
                agg.preempted_instances += 1
        elif kind is EventKind.JOB_COMPLETED:
            d = _kv(ev.detail)
            model = d["model"]
            agg.science[model] = agg.science.get(model, 0.0) + float(d["science"])
            agg.completions[model] = agg.completions.get(model, 0) + 1
        elif kind is EventKind.JOB_PREEMPTED:
            agg.preempted_job_attempts += 1
        elif kind is EventKind.POOL_SAMPLE:
            d = _kv(ev.detail)
            agg.timeseries.append((ev.at, int(d["running_gpu"]), int(d["idle_gpu"]),
                                   int(d["instances"]), float(d["pflops32"])))

    agg.end_t = last_t
    # close anything still open at the end of the trace
    for iid, t0 in run_open.items():
        model, region, rogue = registry[iid]
        if not rogue:
            agg.walltime_h[model] = agg.walltime_h.get(model, 0.0) + (last_t - t0) / 3600.0
    for iid, b0 in bill_open.items():
        model, _, rogue = registry[iid]
        bucket = agg.rogue_billable_h if rogue else agg.billable_h
        bucket[model] = bucket.get(model, 0.0) + (last_t - b0) / 3600.0
    agg.end_running = total_running
    agg.end_billable = len(bill_open)

    # first crossings of 65% / 90% of the eventual peak
    if agg.peak_total > 0:
        lvl = 0
        for t, d in agg.total_deltas:
            lvl += d
            if agg.t65 is None and lvl >= 0.65 * agg.peak_total:
                agg.t65 = t
            if agg.t90 is None and lvl >= 0.90 * agg.peak_total:
                agg.t90 = t
                break
    return agg


# -- tables ------------------------------------------------------------------


def peak_table(agg: TraceAggregates, perf: PerfTable, prices: PriceBook):
    """Per-model composition at the instant of peak running instances:
    count, peak PFLOPS, and hourly cost."""
    if agg.peak_total == 0:
        raise EmptyTrace("no instance ever reached Running")
    header = ["model", "count", "count_pct", "pflops32", "usd_per_hour"]
    rows = []
    tot_pf = tot_cost = 0.0
    for m in sorted(agg.peak_by_model):
        n = agg.peak_by_model[m]
        if n == 0:
            continue
        pf = perf[m].tflops32 * n / 1000.0
        cost = prices.hourly_price(m) * n
        tot_pf += pf
        tot_cost += cost
        rows.append([m, n, 100.0 * n / agg.peak_total, round(pf, 2), round(cost, 2)])
    rows.append(["total", agg.peak_total, 100.0, round(tot_pf, 2), round(tot_cost, 2)])
    return header, rows


def totals_table(agg: TraceAggregates, perf: PerfTable, prices: PriceBook):
    """Per-model whole-run totals: walltime hours, compute hours, cost, and
    science output, with each model's fractional contribution."""
    if agg.peak_total == 0:
        raise EmptyTrace("no instance ever reached Running")
    header = ["model", "walltime_h", "pflops32_h", "cost_usd", "science_units",
              "walltime_frac", "cost_frac", "science_frac"]
    models = sorted(set(agg.walltime_h) | set(agg.science))
    wall_tot = sum(agg.walltime_h.values()) or 1.0
    cost_of = {m: agg.billable_h.get(m, 0.0) * prices.hourly_price(m) for m in models}
    cost_tot = sum(cost_of.values()) or 1.0
    sci_tot = sum(agg.science.values()) or 1.0
    rows = []
    for m in models:
        w = agg.walltime_h.get(m, 0.0)
        rows.append([
            m,
            round(w, 1),
            round(w * perf[m].tflops32 / 1000.0, 2),
            round(cost_of[m], 2),
            round(agg.science.get(m, 0.0), 2),
            round(w / wall_tot, 4),
            round(cost_of[m] / cost_tot, 4),
            round(agg.science.get(m, 0.0) / sci_tot, 4),
        ])
    rogue_cost = sum(h * prices.hourly_price(m)
                     for m, h in agg.rogue_billable_h.items())
    rows.append(["total", round(wall_tot, 1),
                 round(sum(agg.walltime_h.get(m, 0.0) * perf[m].tflops32 / 1000.0
                           for m in models), 2),
                 round(cost_tot, 2), round(sci_tot, 2), 1.0, 1.0, 1.0])
    if rogue_cost:
        rows.append(["rogue_waste", "-", "-", round(rogue_cost, 2), 0.0, "-", "-", "-"])
    return header, rows


def format_table(header: list[str], rows: list[list]) -> str:
    cols = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(row[i]) for row in cols) for i in range(len(header))]
    lines = []
    for r, row in enumerate(cols):
        lines.append("  ".join(c.rjust(w) if r else c.ljust(w)
                               for c, w in zip(row, widths)))
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_csv_table(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- run outputs ----------------------------------------------------------------


@dataclass
class RunReport:
    out_dir: str
    manifest: list[str]                 # the six core delimited/text outputs
    peak: tuple
    totals: tuple
    milestones: dict
    figures: list[str] = field(default_factory=list)
    acceptance: list | None = None

    def summary_text(self) -> str:
        ms = self.milestones
        lines = ["run summary", "===========", ""]
        for k in sorted(ms):
            lines.append(f"{k}: {ms[k]}")
        lines += ["", "composition at peak", "-------------------",
                  format_table(*self.peak), "",
                  "whole-run totals", "----------------",
                  format_table(*self.totals), ""]
        if self.acceptance is not None:
            lines += ["acceptance checks", "-----------------"]
            for c in self.acceptance:
                lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
            lines.append("")
        return "\n".join(lines)


def milestones_of(agg: TraceAggregates, ledger: CostLedger | None = None) -> dict:
    ms = {
        "peak_running_instances": agg.peak_total,
        "peak_time_min": round(agg.peak_t / 60.0, 1),
        "t65_min": round(agg.t65 / 60.0, 1) if agg.t65 is not None else None,
        "t90_min": round(agg.t90 / 60.0, 1) if agg.t90 is not None else None,
        "end_time_min": round(agg.end_t / 60.0, 1),
        "end_running_instances": agg.end_running,
        "gpu_walltime_h": round(agg.total_walltime_h(), 1),
        "science_units": round(agg.total_science(), 1),
        "instances_preempted": agg.preempted_instances,
        "rogues_spawned": agg.rogues_spawned,
    }
    if ledger is not None:
        ms["ledger_cost_usd"] = round(ledger.total_cost(), 2)
        ms["rogue_cost_usd"] = round(ledger.rogue_cost(), 2)
    return ms


def write_pool_timeseries(path, rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(POOL_TS_HEADER + "\n")
        for t, rj, ij, ri, pf in rows:
            fh.write(f"{t!r},{rj},{ij},{ri},{round(pf, 3)!r}\n")


def write_audit(path, rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(AUDIT_HEADER + "\n")
        for t, gid, flavor, region, action, count in rows:
            fh.write(f"{t!r},{gid},{flavor},{region},{action},{count}\n")


def emit_outputs(result, out_dir, *, figures: bool = True,
                 acceptance=None) -> RunReport:
    """Write the full output set for a finished run; returns the manifest.

    ``result`` is a ``SimulationResult``.  The trace file is either moved
    from the run's streaming location or written from memory.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise IoError(f"output directory not writable: {out}: {exc}") from None

    agg = result.aggregates
    peak = peak_table(agg, result.perf, result.prices)
    totals = totals_table(agg, result.perf, result.prices)
    manifest: list[str] = []

    trace_path = out / "trace.csv"
    result.write_trace(trace_path)
    manifest.append(str(trace_path))

    ts_path = out / "pool_timeseries.csv"
    write_pool_timeseries(ts_path, result.timeseries)
    manifest.append(str(ts_path))

    audit_path = out / "provisioning_audit.csv"
    write_audit(audit_path, result.audit)
    manifest.append(str(audit_path))

    write_csv_table(out / "peak_table.csv", *peak)
    manifest.append(str(out / "peak_table.csv"))
    write_csv_table(out / "totals_table.csv", *totals)
    manifest.append(str(out / "totals_table.csv"))

    report = RunReport(str(out), manifest, peak, totals,
                       milestones_of(agg, result.ledger), acceptance=acceptance)
    (out / "summary.txt").write_text(report.summary_text(), encoding="utf-8")
    manifest.append(str(out / "summary.txt"))

    if figures:
        from .figures import render_figures
        report.figures = render_figures(agg, result.timeseries, result.perf,
                                        result.prices, out)
    return report


def rebuild_outputs(trace_dir, perf: PerfTable, prices: PriceBook, *,
                    figures: bool = True) -> RunReport:
    """Regenerate every derived output from an existing ``trace.csv``.

    Used by the ``report`` subcommand: tables, timeseries, summary, and
    figures are pure functions of the trace, so they can be rebuilt long
    after the run.  The provisioning audit is a run artifact and is left
    untouched.  Cost here is reconstructed from billable spans in the
    trace; for a finished run it matches the live ledger exactly.
    """
    out = Path(trace_dir)
    trace_path = out / "trace.csv"
    try:
        agg = aggregate(iter_trace_csv(trace_path))
    except OSError:
        raise EmptyTrace(f"{out}: no readable trace.csv") from None

    peak = peak_table(agg, perf, prices)
    totals = totals_table(agg, perf, prices)
    manifest = [str(trace_path)]

    ts_path = out / "pool_timeseries.csv"
    write_pool_timeseries(ts_path, agg.timeseries)
    manifest.append(str(ts_path))

    write_csv_table(out / "peak_table.csv", *peak)
    manifest.append(str(out / "peak_table.csv"))
    write_csv_table(out / "totals_table.csv", *totals)
    manifest.append(str(out / "totals_table.csv"))

    report = RunReport(str(out), manifest, peak, totals, milestones_of(agg))
    try:
        (out / "summary.txt").write_text(report.summary_text(), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write summary: {exc}") from None
    manifest.append(str(out / "summary.txt"))

    if figures:
        from .figures import render_figures
        report.figures = render_figures(agg, agg.timeseries, perf, prices, out)
    return report

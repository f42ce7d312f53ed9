"""Replay acceptance checks: the calibration targets for the reference run.

The reference scenario is calibrated so that a full-scale (scale 1.0) run
reproduces the published shape of the exercise: the peak composition, the
ramp milestones, the integral totals, the cost at peak, and the science
skew.  Scaled-down runs evaluate the same checks with tolerances widened
by sqrt-N counting noise so that desk-scale runs stay meaningful.

Each check returns one :class:`CheckResult`; the CLI ``--check`` flag and
the acceptance test suite print one PASS/FAIL line per check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .economics import PriceBook
from .reports import TraceAggregates
from .workload import PerfTable

#: calibration targets: per-model instance count at the pool's peak instant
PEAK_COUNTS = {
    "V100": 9200, "P100": 7100, "P40": 2100, "T4": 4600,
    "P4": 500, "M60": 10100, "K80": 12500, "K520": 5400,
}
PEAK_TOTAL = 51500
PEAK_PFLOPS = 379.4
PEAK_COST_PER_H = 19600.0

#: per-model whole-run GPU-hours and PFLOP32-hours
WALLTIME_H = {
    "V100": 18200, "P100": 16000, "P40": 4400, "T4": 7300,
    "P4": 700, "M60": 25100, "K80": 18500, "K520": 7000,
}
WALLTIME_TOTAL_H = 97300
PFLOPH = {
    "V100": 260.7, "P100": 152.8, "P40": 51.5, "T4": 61.4,
    "P4": 3.6, "M60": 121.3, "K80": 76.2, "K520": 16.1,
}
PFLOPH_TOTAL = 734.7

T65_WINDOW_MIN = (25.0, 35.0)
T90_WINDOW_MIN = (65.0, 75.0)

SCIENCE_V100_T4 = (0.45, 0.55)
SCIENCE_K80_K520 = (0.05, 0.11)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _counting_noise(expected: float) -> float:
    """Extra relative tolerance for scaled-down runs (3 sigma of sqrt-N)."""
    return 3.0 / math.sqrt(max(expected, 1.0))


def _within(actual: float, expected: float, rel_tol: float) -> bool:
    return abs(actual - expected) <= rel_tol * expected


def replay_checks(agg: TraceAggregates, perf: PerfTable, prices: PriceBook,
                  scale: float = 1.0) -> list[CheckResult]:
    out: list[CheckResult] = []
    scaled = scale < 1.0

    # 1. peak composition
    fails = []
    parts = []
    for m, full in PEAK_COUNTS.items():
        want = full * scale
        tol = 0.02 + (_counting_noise(want) if scaled else 0.0)
        got = agg.peak_by_model.get(m, 0)
        parts.append(f"{m}={got}")
        if not _within(got, want, tol):
            fails.append(f"{m}: {got} vs {want:.0f} (tol {tol:.1%})")
    want_total = PEAK_TOTAL * scale
    tol = 0.02 + (_counting_noise(want_total) if scaled else 0.0)
    if not _within(agg.peak_total, want_total, tol):
        fails.append(f"total: {agg.peak_total} vs {want_total:.0f}")
    out.append(CheckResult(
        "peak_composition", not fails,
        "; ".join(fails) if fails else
        f"total={agg.peak_total} at t={agg.peak_t / 60:.1f} min ({' '.join(parts)})"))

    # 2. peak compute
    got_pf = perf.pflops32_of(agg.peak_by_model)
    want_pf = PEAK_PFLOPS * scale
    tol = 0.05 + (_counting_noise(want_total) if scaled else 0.0)
    out.append(CheckResult(
        "peak_compute", _within(got_pf, want_pf, tol),
        f"{got_pf:.1f} PFLOPS32 vs {want_pf:.1f} (tol {tol:.0%})"))

    # 3. ramp milestones
    widen = 5.0 if scaled else 0.0
    t65 = agg.t65 / 60.0 if agg.t65 is not None else math.inf
    t90 = agg.t90 / 60.0 if agg.t90 is not None else math.inf
    ok65 = T65_WINDOW_MIN[0] - widen <= t65 <= T65_WINDOW_MIN[1] + widen
    ok90 = T90_WINDOW_MIN[0] - widen <= t90 <= T90_WINDOW_MIN[1] + widen
    out.append(CheckResult(
        "ramp_milestones", ok65 and ok90,
        f"t65={t65:.1f} min (want {T65_WINDOW_MIN[0]:.0f}-{T65_WINDOW_MIN[1]:.0f}), "
        f"t90={t90:.1f} min (want {T90_WINDOW_MIN[0]:.0f}-{T90_WINDOW_MIN[1]:.0f})"))

    # 4. integral totals
    fails = []
    got_wall = agg.total_walltime_h()
    want_wall = WALLTIME_TOTAL_H * scale
    tol = 0.05 + (_counting_noise(want_total) if scaled else 0.0)
    if not _within(got_wall, want_wall, tol):
        fails.append(f"walltime {got_wall:.0f} h vs {want_wall:.0f} h")
    got_pfh = sum(agg.walltime_h.get(m, 0.0) * perf[m].tflops32 / 1000.0
                  for m in agg.walltime_h)
    want_pfh = PFLOPH_TOTAL * scale
    if not _within(got_pfh, want_pfh, tol):
        fails.append(f"compute {got_pfh:.1f} PFLOP32-h vs {want_pfh:.1f}")
    tol_m = 0.10 + (_counting_noise(want_total / 8) if scaled else 0.0)
    for m, full in PFLOPH.items():
        got = agg.walltime_h.get(m, 0.0) * perf[m].tflops32 / 1000.0
        if not _within(got, full * scale, tol_m):
            fails.append(f"{m}: {got:.1f} PFLOP32-h vs {full * scale:.1f}")
    out.append(CheckResult(
        "integral_totals", not fails,
        "; ".join(fails) if fails else
        f"walltime={got_wall:.0f} h, compute={got_pfh:.1f} PFLOP32-h"))

    # 5. cost at peak
    fails = []
    got_cost = sum(n * prices.hourly_price(m) for m, n in agg.peak_by_model.items())
    want_cost = PEAK_COST_PER_H * scale
    tol = 0.05 + (_counting_noise(want_total) if scaled else 0.0)
    if not _within(got_cost, want_cost, tol):
        fails.append(f"total ${got_cost:.0f}/h vs ${want_cost:.0f}/h")
    for m, n in sorted(agg.peak_by_model.items()):
        lo, hi = prices.price_range(m)
        cost = n * prices.hourly_price(m)
        if not (n * lo - 1e-9 <= cost <= n * hi + 1e-9):
            fails.append(f"{m}: ${cost:.0f}/h outside [{n * lo:.0f}, {n * hi:.0f}]")
    out.append(CheckResult(
        "cost_at_peak", not fails,
        "; ".join(fails) if fails else f"${got_cost:.0f}/h"))

    # 6. science skew
    total_sci = agg.total_science()
    if total_sci > 0:
        f_new = (agg.science.get("V100", 0.0) + agg.science.get("T4", 0.0)) / total_sci
        f_old = (agg.science.get("K80", 0.0) + agg.science.get("K520", 0.0)) / total_sci
    else:
        f_new = f_old = 0.0
    ok = (SCIENCE_V100_T4[0] <= f_new <= SCIENCE_V100_T4[1]
          and SCIENCE_K80_K520[0] <= f_old <= SCIENCE_K80_K520[1])
    out.append(CheckResult(
        "science_skew", ok,
        f"V100+T4={f_new:.3f} (want {SCIENCE_V100_T4[0]}-{SCIENCE_V100_T4[1]}), "
        f"K80+K520={f_old:.3f} (want {SCIENCE_K80_K520[0]}-{SCIENCE_K80_K520[1]})"))
    return out


def format_checks(checks: list[CheckResult]) -> str:
    return "\n".join(
        f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}" for c in checks)

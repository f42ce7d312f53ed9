"""Headline figures, rendered to PNG files next to the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .economics import PriceBook
from .reports import TraceAggregates
from .workload import PerfTable


def _step_curve(deltas):
    """Cumulative step curve from (t, +/-1) deltas, already in trace order."""
    ts, ys, lvl = [0.0], [0], 0
    for t, d in deltas:
        lvl += d
        ts.append(t / 60.0)
        ys.append(lvl)
    return ts, ys


def render_figures(agg: TraceAggregates, timeseries, perf: PerfTable,
                   prices: PriceBook, out_dir) -> list[str]:
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    # 1. instance ramp, one curve per region
    fig, ax = plt.subplots(figsize=(9, 5))
    regions = sorted(agg.region_deltas)
    cmap = plt.get_cmap("tab20")
    for i, r in enumerate(regions):
        ts, ys = _step_curve(agg.region_deltas[r])
        ax.step(ts, ys, where="post", lw=0.9, color=cmap(i % 20),
                label=r if len(regions) <= 12 else None)
    ts, ys = _step_curve(agg.total_deltas)
    ax.step(ts, ys, where="post", lw=2.0, color="black", label="all regions")
    ax.set_xlabel("time [min]")
    ax.set_ylabel("running instances")
    ax.set_title("instance ramp by region")
    ax.legend(fontsize=7, ncol=2, loc="upper right")
    p = fig_dir / "ramp_by_region.png"
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(str(p))

    # 2. pool time evolution (sampled series)
    fig, ax = plt.subplots(figsize=(9, 5))
    if timeseries:
        t = [row[0] / 60.0 for row in timeseries]
        ax.plot(t, [row[1] for row in timeseries], label="running GPU jobs")
        ax.plot(t, [row[2] for row in timeseries], label="idle GPU jobs")
        ax.plot(t, [row[3] for row in timeseries], label="running instances")
        ax2 = ax.twinx()
        ax2.plot(t, [row[4] for row in timeseries], color="tab:red", ls="--",
                 label="PFLOPS32")
        ax2.set_ylabel("PFLOPS32", color="tab:red")
        h1, l1 = ax.get_legend_handles_labels()
        h2, l2 = ax2.get_legend_handles_labels()
        ax.legend(h1 + h2, l1 + l2, fontsize=8, loc="upper right")
    ax.set_xlabel("time [min]")
    ax.set_ylabel("count")
    ax.set_title("pool over time")
    p = fig_dir / "pool_timeseries.png"
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(str(p))

    # 3. composition at the peak instant
    fig, ax = plt.subplots(figsize=(6, 6))
    items = sorted(agg.peak_by_model.items(), key=lambda kv: -kv[1])
    labels = [m for m, n in items if n]
    sizes = [n for _, n in items if n]
    if sizes:
        ax.pie(sizes, labels=labels, autopct="%1.1f%%", pctdistance=0.8,
               textprops={"fontsize": 8})
    ax.set_title(f"composition at peak ({agg.peak_total} instances, "
                 f"t={agg.peak_t / 60.0:.0f} min)")
    p = fig_dir / "peak_composition.png"
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(str(p))

    # 4. contribution rings: walltime / cost / science share per model
    fig, ax = plt.subplots(figsize=(7, 7))
    models = agg.models()
    wall = [agg.walltime_h.get(m, 0.0) for m in models]
    cost = [agg.billable_h.get(m, 0.0) * prices.hourly_price(m) for m in models]
    sci = [agg.science.get(m, 0.0) for m in models]
    cmap = plt.get_cmap("tab10")
    colors = [cmap(i % 10) for i in range(len(models))]
    for ring, (vals, rad) in enumerate(
            [(wall, 1.0), (cost, 0.72), (sci, 0.44)]):
        if sum(vals) <= 0:
            continue
        ax.pie(vals, radius=rad, colors=colors,
               wedgeprops={"width": 0.26, "edgecolor": "white"},
               labels=models if ring == 0 else None,
               textprops={"fontsize": 8})
    ax.text(0, 0, "walltime\ncost\nscience", ha="center", va="center",
            fontsize=8)
    ax.set_title("share by model: walltime (outer), cost, science (inner)")
    p = fig_dir / "contribution_rings.png"
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(str(p))

    return paths

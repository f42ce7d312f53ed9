"""Pricing and cost accounting.

Each GPU model carries one calibrated opportunistic price point ($/h per
instance), chosen inside the observed provider price range; on-demand
capacity costs a flat multiple of it.  Cost accrues per instance over its
billable span (booting, running, or stopped — a stopped-but-not-deallocated
instance bills at the full rate) with a one-second accrual quantum.

The ledger is the runtime-side record: the orchestrator closes a billing
span whenever an instance leaves the billable states and at the end of the
run.  Reports independently reconstruct the same spans from the event
trace; the two must agree to within the quantum, which is asserted by the
test suite (ledger completeness).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import OverlappingInterval, UnknownGpuModel
from .workload import PerfTable

ON_DEMAND_MULTIPLIER = 3.0
ACCRUAL_QUANTUM_S = 1.0


class Market(str, Enum):
    OPPORTUNISTIC = "opportunistic"
    ON_DEMAND = "on_demand"


class PriceBook:
    """Per-model hourly prices derived from the performance table."""

    def __init__(self, perf: PerfTable, on_demand_multiplier: float = ON_DEMAND_MULTIPLIER):
        self._points: dict[str, float] = {}
        self._ranges: dict[str, tuple[float, float]] = {}
        for m in perf.models():
            e = perf[m]
            if e.price_point is not None:
                self._points[m] = e.price_point
                self._ranges[m] = (e.price_min, e.price_max)
        self.on_demand_multiplier = on_demand_multiplier

    def hourly_price(self, model: str, market: Market = Market.OPPORTUNISTIC) -> float:
        try:
            point = self._points[model]
        except KeyError:
            raise UnknownGpuModel(f"{model} has no rental price") from None
        if market is Market.ON_DEMAND:
            return point * self.on_demand_multiplier
        return point

    def price_range(self, model: str) -> tuple[float, float]:
        try:
            return self._ranges[model]
        except KeyError:
            raise UnknownGpuModel(f"{model} has no rental price") from None


@dataclass(frozen=True)
class LedgerEntry:
    instance_id: str
    model: str
    t0: float
    t1: float
    rate: float     # $/h
    cost: float
    rogue: bool


@dataclass
class CostLedger:
    """Append-only billing record; intervals per instance must not overlap."""

    entries: list[LedgerEntry] = field(default_factory=list)
    _last_end: dict[str, float] = field(default_factory=dict)

    def accrue(self, instance_id: str, model: str, t0: float, t1: float,
               rate: float, rogue: bool = False) -> LedgerEntry:
        if t1 < t0:
            raise ValueError(f"interval ends before it starts: [{t0}, {t1}]")
        last = self._last_end.get(instance_id)
        if last is not None and t0 < last - 1e-9:
            raise OverlappingInterval(
                f"{instance_id}: [{t0}, {t1}] overlaps span ending at {last}")
        entry = LedgerEntry(instance_id, model, t0, t1, rate,
                            rate * (t1 - t0) / 3600.0, rogue)
        self.entries.append(entry)
        self._last_end[instance_id] = t1
        return entry

    def total_cost(self, include_rogues: bool = True) -> float:
        return sum(e.cost for e in self.entries if include_rogues or not e.rogue)

    def rogue_cost(self) -> float:
        return sum(e.cost for e in self.entries if e.rogue)

    def cost_by_model(self, include_rogues: bool = True) -> dict[str, float]:
        out: dict[str, float] = {}
        for e in self.entries:
            if e.rogue and not include_rogues:
                continue
            out[e.model] = out.get(e.model, 0.0) + e.cost
        return out

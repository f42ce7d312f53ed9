"""GPU workload model: per-model job runtimes, science output, storage I/O.

The performance table is data, not code: it ships as a versioned CSV
(``data/gpu_perf.csv``) mapping each supported GPU model to its reference
job runtime, peak fp32 throughput, a correlation factor between the two,
and the rental price range observed across providers.  Jobs come in input
classes; a class scales the reference runtime by its size factor (the
reduced-size class uses 1/8 by default) and earns proportionally less
science credit on completion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import NoEndpointForRegion, UnknownGpuModel, UnknownInputClass

STANDARD = "Standard"
SMALL = "Small"
SMALL_SIZE_FACTOR = 0.125

#: Default multiplicative runtime jitter half-width (fraction of runtime).
DEFAULT_JITTER = 0.05


@dataclass(frozen=True)
class GpuPerf:
    model: str
    runtime_min: float          # reference job runtime, minutes, Standard input
    tflops32: float             # peak fp32 TFLOPS per card
    corr: float                 # runtime/throughput correlation factor
    price_min: float | None     # $/h, cheapest provider (None: not rentable)
    price_max: float | None
    price_point: float | None   # calibrated single $/h used for cost accounting


class PerfTable:
    """The supported GPU model set, loaded from the versioned CSV."""

    def __init__(self, entries: dict[str, GpuPerf]):
        self._entries = entries

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PerfTable":
        if path is None:
            ref = resources.files("burstsim.data").joinpath("gpu_perf.csv")
            text = ref.read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        entries: dict[str, GpuPerf] = {}
        for row in csv.DictReader(text.splitlines()):
            entries[row["model"]] = GpuPerf(
                model=row["model"],
                runtime_min=float(row["runtime_min"]),
                tflops32=float(row["tflops32"]),
                corr=float(row["corr"]),
                price_min=float(row["price_min"]) if row["price_min"] else None,
                price_max=float(row["price_max"]) if row["price_max"] else None,
                price_point=float(row["price_point"]) if row["price_point"] else None,
            )
        return cls(entries)

    def __contains__(self, model: str) -> bool:
        return model in self._entries

    def __getitem__(self, model: str) -> GpuPerf:
        try:
            return self._entries[model]
        except KeyError:
            raise UnknownGpuModel(model) from None

    def models(self) -> list[str]:
        return list(self._entries)

    def rentable_models(self) -> list[str]:
        return [m for m, e in self._entries.items() if e.price_point is not None]

    # -- job timing ---------------------------------------------------------

    def runtime_for(self, model: str, input_class: str, jitter_u: float | None = None,
                    jitter: float = DEFAULT_JITTER, size_factor_override: float | None = None) -> float:
        """Job runtime in seconds for a model/input-class pair.

        ``jitter_u`` is a uniform [0,1) draw; when given, the runtime is
        scaled by ``1 + jitter*(2u-1)`` (default +-5%).  When omitted the
        exact reference runtime is returned.  A scenario may override the
        class size factor via ``size_factor_override``.
        """
        entry = self[model]
        sf = size_factor(input_class) if size_factor_override is None else size_factor_override
        base = entry.runtime_min * 60.0 * sf
        if jitter_u is None:
            return base
        return base * (1.0 + jitter * (2.0 * jitter_u - 1.0))

    def pflops32_of(self, counts: dict[str, int]) -> float:
        """Aggregate peak PFLOPS of a multiset of instances, by model."""
        return sum(self[m].tflops32 * n for m, n in counts.items()) / 1000.0


def size_factor(input_class: str) -> float:
    if input_class == STANDARD:
        return 1.0
    if input_class == SMALL:
        return SMALL_SIZE_FACTOR
    raise UnknownInputClass(input_class)


def science_output(input_class: str, completed: bool = True) -> float:
    """Science units credited for one job attempt.

    A completed Standard job earns 1.0; a completed reduced-input job earns
    its size factor.  Preempted or removed attempts earn nothing.
    """
    if not completed:
        return 0.0
    return size_factor(input_class)


# -- storage ---------------------------------------------------------------

GBIT = 1e9
DEFAULT_LOCAL_BPS = 1e12        # region-local object store, bits/s
INTER_REGION_BPS = 100e9        # cross-region path, bits/s (unused by jobs)


@dataclass(frozen=True)
class StorageEndpoint:
    region: str
    read_bps: float = DEFAULT_LOCAL_BPS
    write_bps: float = DEFAULT_LOCAL_BPS


@dataclass
class InputClassSpec:
    name: str
    size_factor: float
    replica_regions: frozenset[str]
    file_size_bytes: float = 10e9


@dataclass
class InputCatalog:
    """Which regions hold replicas of each input class, and class sizing."""

    classes: dict[str, InputClassSpec] = field(default_factory=dict)
    endpoints: dict[str, StorageEndpoint] = field(default_factory=dict)

    def spec(self, input_class: str) -> InputClassSpec:
        try:
            return self.classes[input_class]
        except KeyError:
            raise UnknownInputClass(input_class) from None

    def resolve_storage(self, region: str) -> StorageEndpoint:
        ep = self.endpoints.get(region)
        if ep is None:
            raise NoEndpointForRegion(region)
        return ep


def transfer_time(nbytes: float, endpoint: StorageEndpoint, direction: str) -> float:
    """Seconds to move ``nbytes`` through the endpoint (``read`` or ``write``)."""
    if nbytes < 0:
        raise ValueError("nbytes must be >= 0")
    bps = endpoint.read_bps if direction == "read" else endpoint.write_bps
    return nbytes * 8.0 / bps

"""Scenario files: everything one run needs, in one YAML document.

A scenario fixes the seed, the horizon, the region layout (with per-model
quotas and boot-time distributions), where each input class is replicated,
the provisioning plan (timed create/resize actions per group), the job
waves, the fault windows, and the operator actions.  Parsing and
validation are strictly separated: :func:`parse_scenario` only converts
YAML into typed objects (raising :class:`ParseError` on malformed input),
while :func:`validate` walks the whole document and reports *every*
problem it finds at once, each tagged with the field path that caused it.

``Scenario.scaled`` shrinks a scenario for fast runs: instance and job
counts multiply by the factor (rounded), quotas round up, and every time
constant stays untouched, so the shape of the run is preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ParseError, ValidationError
from .pool import PoolConfig
from .providers import (
    DEFAULT_BOOT_MEDIAN_S,
    DEFAULT_BOOT_SIGMA,
    FaultKind,
    FaultSpec,
    Flavor,
    Region,
)
from .workload import PerfTable, SMALL, STANDARD

PLAN_ACTIONS = ("create", "resize", "reassert")
OPERATOR_ACTIONS = ("manual_recovery", "manual_sweep")


@dataclass
class PlanEntry:
    t: float
    action: str                 # create | resize | reassert
    name: str                   # scenario-local group handle
    region: str = ""
    model: str = ""
    count: int = 0              # create: initial size
    max_size: int | None = None  # scale sets
    desired: int | None = None  # resize


@dataclass
class WorkloadEntry:
    t: float
    kind: str                   # gpu | cpu
    count: int
    input_class: str = ""       # gpu only


@dataclass
class OperatorAction:
    t: float
    action: str
    region: str


@dataclass
class InputSpec:
    replica_regions: list[str]
    file_size_bytes: float = 10e9
    size_factor: float | None = None   # defaults by class name


@dataclass
class Scenario:
    seed: int = 0
    horizon_s: float = 13500.0
    sample_period_s: float = 60.0
    pool: PoolConfig = field(default_factory=PoolConfig)
    regions: list[Region] = field(default_factory=list)
    inputs: dict[str, InputSpec] = field(default_factory=dict)
    plan: list[PlanEntry] = field(default_factory=list)
    workload: list[WorkloadEntry] = field(default_factory=list)
    shutdown_t_s: float | None = None
    faults: list[FaultSpec] = field(default_factory=list)
    operator: list[OperatorAction] = field(default_factory=list)

    def region_ids(self) -> set[str]:
        return {r.id for r in self.regions}

    def scaled(self, factor: float) -> "Scenario":
        """Same run shape with instance/job counts multiplied by ``factor``."""
        if factor <= 0:
            raise ValueError("scale factor must be > 0")
        if factor == 1.0:
            return self

        def cnt(x: int) -> int:
            return int(math.floor(x * factor + 0.5))

        regions = [replace(r, quotas={m: math.ceil(q * factor)
                                      for m, q in r.quotas.items()})
                   for r in self.regions]
        plan = [replace(p,
                        count=cnt(p.count),
                        max_size=None if p.max_size is None else max(cnt(p.max_size), 1),
                        desired=None if p.desired is None else cnt(p.desired))
                for p in self.plan]
        workload = [replace(w, count=cnt(w.count)) for w in self.workload]
        return replace(self, regions=regions, plan=plan, workload=workload)


# -- parsing -----------------------------------------------------------------


def _as_float(doc: dict, key: str, default: float, ctx: str) -> float:
    v = doc.get(key, default)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ParseError(f"{ctx}.{key}: expected a number, got {v!r}")
    return float(v)


def _as_int(doc: dict, key: str, default: int, ctx: str) -> int:
    v = doc.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ParseError(f"{ctx}.{key}: expected an integer, got {v!r}")
    return v


def _as_str(doc: dict, key: str, default: str, ctx: str) -> str:
    v = doc.get(key, default)
    if not isinstance(v, str):
        raise ParseError(f"{ctx}.{key}: expected a string, got {v!r}")
    return v


def _as_list(doc: dict, key: str, ctx: str) -> list:
    v = doc.get(key, [])
    if v is None:
        return []
    if not isinstance(v, list):
        raise ParseError(f"{ctx}.{key}: expected a list, got {type(v).__name__}")
    return v


def parse_scenario(source) -> Scenario:
    """Parse a scenario from a path, a YAML string, or a pre-loaded dict."""
    if isinstance(source, dict):
        doc = source
    else:
        is_path = isinstance(source, Path) or (
            isinstance(source, str) and "\n" not in source
            and (source.endswith((".yaml", ".yml")) or Path(source).is_file()))
        if is_path:
            try:
                text = Path(source).read_text(encoding="utf-8")
            except OSError as exc:
                raise ParseError(f"cannot read scenario file: {exc}") from None
        else:
            text = str(source)
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ParseError(f"not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"scenario root must be a mapping, got {type(doc).__name__}")

    sc = Scenario(
        seed=_as_int(doc, "seed", 0, "scenario"),
        horizon_s=_as_float(doc, "horizon_s", 13500.0, "scenario"),
        sample_period_s=_as_float(doc, "sample_period_s", 60.0, "scenario"),
    )

    pdoc = doc.get("pool") or {}
    if not isinstance(pdoc, dict):
        raise ParseError("pool: expected a mapping")
    sc.pool = PoolConfig(
        gpu_schedds=_as_int(pdoc, "gpu_schedds", 10, "pool"),
        cpu_schedds=_as_int(pdoc, "cpu_schedds", 20, "pool"),
        schedd_cap=_as_int(pdoc, "schedd_cap", 12000, "pool"),
        leaves_per_region=_as_int(pdoc, "leaves_per_region", 20, "pool"),
        negotiator_period_s=_as_float(pdoc, "negotiator_period_s", 60.0, "pool"),
        registration_service_s=_as_float(pdoc, "registration_service_s", 0.05, "pool"),
        forward_latency_s=_as_float(pdoc, "forward_latency_s", 2.0, "pool"),
        cpu_slots_per_instance=_as_int(pdoc, "cpu_slots_per_instance", 2, "pool"),
        prefetch_bug=bool(pdoc.get("prefetch_bug", False)),
    )

    for i, rdoc in enumerate(_as_list(doc, "regions", "scenario")):
        ctx = f"regions[{i}]"
        if not isinstance(rdoc, dict):
            raise ParseError(f"{ctx}: expected a mapping")
        flavor_s = _as_str(rdoc, "flavor", "", ctx)
        try:
            flavor = Flavor(flavor_s)
        except ValueError:
            raise ParseError(
                f"{ctx}.flavor: {flavor_s!r} is not one of "
                f"{[f.value for f in Flavor]}") from None
        quotas = rdoc.get("quotas") or {}
        if not isinstance(quotas, dict):
            raise ParseError(f"{ctx}.quotas: expected a mapping")
        sc.regions.append(Region(
            id=_as_str(rdoc, "id", "", ctx),
            flavor=flavor,
            geo=_as_str(rdoc, "geo", "", ctx),
            quotas={str(m): int(q) for m, q in quotas.items()},
            boot_median_s=_as_float(rdoc, "boot_median_s", DEFAULT_BOOT_MEDIAN_S, ctx),
            boot_sigma=_as_float(rdoc, "boot_sigma", DEFAULT_BOOT_SIGMA, ctx),
            wan_latency_s=_as_float(rdoc, "wan_latency_s", 0.05, ctx),
        ))

    idoc = doc.get("inputs") or {}
    if not isinstance(idoc, dict):
        raise ParseError("inputs: expected a mapping")
    for name, spec in idoc.items():
        ctx = f"inputs.{name}"
        if not isinstance(spec, dict):
            raise ParseError(f"{ctx}: expected a mapping")
        regions = _as_list(spec, "replica_regions", ctx)
        sf = spec.get("size_factor")
        sc.inputs[str(name)] = InputSpec(
            replica_regions=[str(r) for r in regions],
            file_size_bytes=_as_float(spec, "file_size_bytes", 10e9, ctx),
            size_factor=float(sf) if sf is not None else None,
        )

    for i, edoc in enumerate(_as_list(doc, "plan", "scenario")):
        ctx = f"plan[{i}]"
        if not isinstance(edoc, dict):
            raise ParseError(f"{ctx}: expected a mapping")
        ms = edoc.get("max_size")
        de = edoc.get("desired")
        sc.plan.append(PlanEntry(
            t=_as_float(edoc, "t", 0.0, ctx),
            action=_as_str(edoc, "action", "create", ctx),
            name=_as_str(edoc, "name", "", ctx),
            region=_as_str(edoc, "region", "", ctx),
            model=_as_str(edoc, "model", "", ctx),
            count=_as_int(edoc, "count", 0, ctx),
            max_size=int(ms) if ms is not None else None,
            desired=int(de) if de is not None else None,
        ))

    for i, wdoc in enumerate(_as_list(doc, "workload", "scenario")):
        ctx = f"workload[{i}]"
        if not isinstance(wdoc, dict):
            raise ParseError(f"{ctx}: expected a mapping")
        sc.workload.append(WorkloadEntry(
            t=_as_float(wdoc, "t", 0.0, ctx),
            kind=_as_str(wdoc, "kind", "gpu", ctx),
            count=_as_int(wdoc, "count", 0, ctx),
            input_class=_as_str(wdoc, "input_class", "", ctx),
        ))

    sdoc = doc.get("shutdown")
    if sdoc is not None:
        if not isinstance(sdoc, dict):
            raise ParseError("shutdown: expected a mapping")
        sc.shutdown_t_s = _as_float(sdoc, "t_s", 0.0, "shutdown")

    for i, fdoc in enumerate(_as_list(doc, "faults", "scenario")):
        ctx = f"faults[{i}]"
        if not isinstance(fdoc, dict):
            raise ParseError(f"{ctx}: expected a mapping")
        kind_s = _as_str(fdoc, "kind", "", ctx)
        try:
            kind = FaultKind(kind_s)
        except ValueError:
            raise ParseError(
                f"{ctx}.kind: {kind_s!r} is not one of "
                f"{[k.value for k in FaultKind]}") from None
        regions = fdoc.get("regions")
        sc.faults.append(FaultSpec(
            kind=kind,
            t0=_as_float(fdoc, "t0", 0.0, ctx),
            t1=_as_float(fdoc, "t1", 0.0, ctx),
            regions=frozenset(str(r) for r in regions) if regions is not None else None,
            rate_per_hour=_as_float(fdoc, "rate_per_hour", 0.0, ctx),
            rogue_per_call=_as_int(fdoc, "rogue_per_call", 0, ctx),
        ))

    for i, odoc in enumerate(_as_list(doc, "operator", "scenario")):
        ctx = f"operator[{i}]"
        if not isinstance(odoc, dict):
            raise ParseError(f"{ctx}: expected a mapping")
        sc.operator.append(OperatorAction(
            t=_as_float(odoc, "t", 0.0, ctx),
            action=_as_str(odoc, "action", "", ctx),
            region=_as_str(odoc, "region", "", ctx),
        ))
    return sc


# -- validation -----------------------------------------------------------------


def validate(sc: Scenario, perf: PerfTable | None = None) -> None:
    """Check the whole scenario; raise :class:`ValidationError` carrying
    every problem found (never just the first)."""
    if perf is None:
        perf = PerfTable.load()
    problems: list[str] = []
    rentable = set(perf.rentable_models())

    if sc.seed < 0:
        problems.append("seed: must be >= 0")
    if sc.horizon_s <= 0:
        problems.append("horizon_s: must be > 0")
    if sc.sample_period_s <= 0:
        problems.append("sample_period_s: must be > 0")
    for k in ("gpu_schedds", "cpu_schedds", "schedd_cap", "leaves_per_region"):
        if getattr(sc.pool, k) <= 0:
            problems.append(f"pool.{k}: must be > 0")
    if sc.pool.cpu_slots_per_instance < 2:
        problems.append("pool.cpu_slots_per_instance: must be >= 2")
    if sc.pool.negotiator_period_s <= 0:
        problems.append("pool.negotiator_period_s: must be > 0")

    ids = set()
    if not sc.regions:
        problems.append("regions: at least one region is required")
    for i, r in enumerate(sc.regions):
        ctx = f"regions[{i}]"
        if not r.id:
            problems.append(f"{ctx}.id: must be non-empty")
        elif r.id in ids:
            problems.append(f"{ctx}.id: duplicate region id {r.id!r}")
        ids.add(r.id)
        if r.boot_median_s <= 0:
            problems.append(f"{ctx}.boot_median_s: must be > 0")
        if r.boot_sigma < 0:
            problems.append(f"{ctx}.boot_sigma: must be >= 0")
        if r.wan_latency_s < 0:
            problems.append(f"{ctx}.wan_latency_s: must be >= 0")
        for m, q in r.quotas.items():
            if m not in perf:
                problems.append(f"{ctx}.quotas.{m}: unknown GPU model")
            if q < 0:
                problems.append(f"{ctx}.quotas.{m}: must be >= 0")

    for name, spec in sc.inputs.items():
        ctx = f"inputs.{name}"
        if name not in (STANDARD, SMALL):
            problems.append(f"{ctx}: input class must be {STANDARD!r} or {SMALL!r}")
        if not spec.replica_regions:
            problems.append(f"{ctx}.replica_regions: must list at least one region")
        for r in spec.replica_regions:
            if r not in ids:
                problems.append(f"{ctx}.replica_regions: unknown region {r!r}")
        if spec.file_size_bytes < 0:
            problems.append(f"{ctx}.file_size_bytes: must be >= 0")
        if spec.size_factor is not None and spec.size_factor <= 0:
            problems.append(f"{ctx}.size_factor: must be > 0")

    region_flavor = {r.id: r.flavor for r in sc.regions}
    created: dict[str, PlanEntry] = {}
    for i, p in enumerate(sc.plan):
        ctx = f"plan[{i}]"
        if p.action not in PLAN_ACTIONS:
            problems.append(f"{ctx}.action: {p.action!r} is not one of {list(PLAN_ACTIONS)}")
            continue
        if not p.name:
            problems.append(f"{ctx}.name: must be non-empty")
        if not (0 <= p.t <= sc.horizon_s):
            problems.append(f"{ctx}.t: must lie within [0, horizon_s]")
        if p.action == "create":
            if p.name in created:
                problems.append(f"{ctx}.name: duplicate group name {p.name!r}")
            created[p.name] = p
            if p.region not in ids:
                problems.append(f"{ctx}.region: unknown region {p.region!r}")
            if p.model not in rentable:
                problems.append(f"{ctx}.model: {p.model!r} is not a rentable GPU model")
            if p.count < 0:
                problems.append(f"{ctx}.count: must be >= 0")
            flavor = region_flavor.get(p.region)
            if flavor is Flavor.SCALE_SET:
                if p.max_size is None:
                    problems.append(f"{ctx}.max_size: required for a scale set")
                elif p.count > p.max_size:
                    problems.append(f"{ctx}.count: exceeds max_size {p.max_size}")
        else:  # resize | reassert
            src = created.get(p.name)
            if src is None:
                problems.append(f"{ctx}.name: no earlier create for {p.name!r}")
            elif p.t < src.t:
                problems.append(f"{ctx}.t: precedes the create of {p.name!r}")
            if src is not None and p.action == "reassert" and (
                    region_flavor.get(src.region) is Flavor.FLEET):
                problems.append(f"{ctx}: fleets cannot be resized")
            if p.action == "resize":
                if p.desired is None:
                    problems.append(f"{ctx}.desired: required for resize")
                elif p.desired < 0:
                    problems.append(f"{ctx}.desired: must be >= 0")
                elif src is not None and src.max_size is not None and p.desired > src.max_size:
                    problems.append(f"{ctx}.desired: exceeds max_size {src.max_size}")
                if src is not None and region_flavor.get(src.region) is Flavor.FLEET:
                    problems.append(f"{ctx}: fleets cannot be resized")

    for i, w in enumerate(sc.workload):
        ctx = f"workload[{i}]"
        if w.kind not in ("gpu", "cpu"):
            problems.append(f"{ctx}.kind: {w.kind!r} is not 'gpu' or 'cpu'")
        if w.count < 0:
            problems.append(f"{ctx}.count: must be >= 0")
        if not (0 <= w.t <= sc.horizon_s):
            problems.append(f"{ctx}.t: must lie within [0, horizon_s]")
        if w.kind == "gpu":
            if not w.input_class:
                problems.append(f"{ctx}.input_class: required for gpu jobs")
            elif w.input_class not in sc.inputs:
                problems.append(f"{ctx}.input_class: {w.input_class!r} not in inputs")

    if sc.shutdown_t_s is not None and not (0 <= sc.shutdown_t_s <= sc.horizon_s):
        problems.append("shutdown.t_s: must lie within [0, horizon_s]")

    for i, f in enumerate(sc.faults):
        ctx = f"faults[{i}]"
        if f.t1 < f.t0:
            problems.append(f"{ctx}: t1 must be >= t0")
        if f.regions is not None:
            for r in sorted(f.regions):
                if r not in ids:
                    problems.append(f"{ctx}.regions: unknown region {r!r}")
        if f.kind is FaultKind.PREEMPTION and f.rate_per_hour < 0:
            problems.append(f"{ctx}.rate_per_hour: must be >= 0")
        if f.kind is FaultKind.RESPAWN and f.rogue_per_call < 0:
            problems.append(f"{ctx}.rogue_per_call: must be >= 0")

    for i, o in enumerate(sc.operator):
        ctx = f"operator[{i}]"
        if o.action not in OPERATOR_ACTIONS:
            problems.append(f"{ctx}.action: {o.action!r} is not one of {list(OPERATOR_ACTIONS)}")
        if o.region not in ids:
            problems.append(f"{ctx}.region: unknown region {o.region!r}")
        if not (0 <= o.t <= sc.horizon_s):
            problems.append(f"{ctx}.t: must lie within [0, horizon_s]")

    if problems:
        raise ValidationError(problems)


def load_scenario(source, perf: PerfTable | None = None) -> Scenario:
    """Parse and validate in one step."""
    sc = parse_scenario(source)
    validate(sc, perf)
    return sc

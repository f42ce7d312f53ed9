"""Run orchestration: wires the engine, pool, providers, and ledger.

A :class:`Simulation` takes a validated scenario and executes it:

* provisioning plan entries become timed ``provision`` events;
* workload entries submit job batches round-robin across same-kind schedds;
* the negotiator, provider housekeeping, and the pool sampler run on fixed
  periods for the whole horizon;
* the shutdown event drains the pool (idle work dropped, slots marked
  draining) and freezes providers, then every instance is deprovisioned
  through its flavor's own teardown path as it finishes its last job —
  fleets terminate members, scale sets deallocate them (which is where a
  deprovision-bug window spawns rogues), instance groups use per-member
  delete so nothing is auto-replaced;
* operator actions (manual stall recovery, rogue sweeps) fire at their
  scheduled times.

Billing spans close through one callback whenever an instance leaves the
billable states, and once more at the horizon for anything still billable,
so the runtime ledger and the trace reconstruction agree exactly.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .economics import CostLedger, PriceBook
from .engine import Engine, Event, EventKind, write_trace_csv
from .pool import JobAd, JobKind, Pool
from .providers import (
    DEFAULT_SCALE_SET_MAX,
    Flavor,
    InstanceState,
    PROVIDER_TICK_S,
    Providers,
)
from .reports import TraceAggregates, aggregate, iter_trace_csv
from .scenario import Scenario
from .workload import (
    InputCatalog,
    InputClassSpec,
    PerfTable,
    SMALL,
    SMALL_SIZE_FACTOR,
    STANDARD,
    StorageEndpoint,
)


@dataclass
class SimulationResult:
    scenario: Scenario
    perf: PerfTable
    prices: PriceBook
    ledger: CostLedger
    aggregates: TraceAggregates
    timeseries: list[tuple] = field(default_factory=list)
    audit: list[tuple] = field(default_factory=list)
    trace: list[Event] | None = None      # in-memory runs only
    trace_path: Path | None = None        # streamed runs only
    pool: Pool | None = None
    providers: Providers | None = None

    def write_trace(self, target) -> None:
        target = Path(target)
        if self.trace_path is not None:
            if target.resolve() != self.trace_path.resolve():
                shutil.copyfile(self.trace_path, target)
        else:
            write_trace_csv(self.trace or [], target)

    def iter_trace(self):
        if self.trace_path is not None:
            return iter_trace_csv(self.trace_path)
        return iter(self.trace or [])


def _catalog_for(sc: Scenario) -> InputCatalog:
    classes = {}
    for name, spec in sc.inputs.items():
        sf = spec.size_factor
        if sf is None:
            sf = SMALL_SIZE_FACTOR if name == SMALL else 1.0
        classes[name] = InputClassSpec(
            name=name, size_factor=sf,
            replica_regions=frozenset(spec.replica_regions),
            file_size_bytes=spec.file_size_bytes)
    endpoints = {r.id: StorageEndpoint(r.id) for r in sc.regions}
    return InputCatalog(classes, endpoints)


class Simulation:
    def __init__(self, scenario: Scenario, perf: PerfTable | None = None):
        self.sc = scenario
        self.perf = perf or PerfTable.load()
        self.prices = PriceBook(self.perf)

    # -- handlers --------------------------------------------------------------

    def _on_provision(self, ev) -> None:
        entry = self.sc.plan[int(ev.detail.split("=", 1)[1])]
        prov = self.providers
        if entry.action == "create":
            flavor = self._region_flavor[entry.region]
            if flavor is Flavor.FLEET:
                gid = prov.create_fleet(entry.region, entry.model, entry.count)
            elif flavor is Flavor.SCALE_SET:
                gid = prov.create_scale_set(
                    entry.region, entry.model,
                    max_size=entry.max_size or DEFAULT_SCALE_SET_MAX,
                    desired=entry.count)
            else:
                gid = prov.create_instance_group(entry.region, entry.model, entry.count)
            self._group_of[entry.name] = gid
            return
        gid = self._group_of[entry.name]
        group = prov.groups[gid]
        desired = group.desired if entry.action == "reassert" else int(entry.desired or 0)
        if group.flavor is Flavor.SCALE_SET:
            prov.resize_scale_set(gid, desired)
        else:
            prov.resize_instance_group(gid, desired)

    def _on_submit(self, ev) -> None:
        w = self.sc.workload[int(ev.detail.split("=", 1)[1])]
        if w.kind == "gpu":
            kind, prefix = JobKind.GPU, "j"
            regions = frozenset(self.sc.inputs[w.input_class].replica_regions)
            sids = self._gpu_sids
        else:
            kind, prefix = JobKind.CPU, "f"
            regions = frozenset(self._region_flavor)
            sids = self._cpu_sids
        batches: dict[str, list[JobAd]] = {sid: [] for sid in sids}
        counter = self._job_seq[kind]
        for _ in range(w.count):
            sid = sids[counter % len(sids)]
            batches[sid].append(JobAd(
                id=f"{prefix}{counter:07d}", kind=kind,
                input_class=w.input_class, required_regions=regions,
                schedd_id=sid))
            counter += 1
        self._job_seq[kind] = counter
        for sid in sids:
            if batches[sid]:
                self.pool.submit_jobs(sid, batches[sid])

    def _on_negotiate(self, ev) -> None:
        self.pool.negotiate()

    def _on_sample(self, ev) -> None:
        t = self.engine.now()
        if self.timeseries and self.timeseries[-1][0] == t:
            return
        counts = self.providers.running_counts_by_model()
        row = (
            t,
            self.pool.running_jobs(JobKind.GPU),
            self.pool.idle_jobs(JobKind.GPU),
            sum(counts.values()),
            self.perf.pflops32_of(counts),
        )
        self.timeseries.append(row)
        self.engine.emit(
            EventKind.POOL_SAMPLE, "pool",
            f"running_gpu={row[1]} idle_gpu={row[2]} "
            f"instances={row[3]} pflops32={row[4]!r}")

    def _on_shutdown(self, ev) -> None:
        self.providers.frozen = True
        removed, idle_slots = self.pool.begin_drain()
        for gid in sorted(self.providers.groups):
            group = self.providers.groups[gid]
            if group.flavor is Flavor.SCALE_SET:
                self.providers.resize_scale_set(gid, 0)
            elif group.flavor is Flavor.INSTANCE_GROUP:
                self.providers.resize_instance_group(gid, 0)
        for iid in idle_slots:
            self.pool.finish_instance(iid)
            self._deprovision(iid)

    def _on_drained(self, iid: str) -> None:
        self._deprovision(iid)

    def _deprovision(self, iid: str) -> None:
        """Tear one instance down through its flavor's own path."""
        inst = self.providers.instances.get(iid)
        if inst is None or inst.rogue:
            return  # rogues only answer to a sweep
        if inst.state not in (InstanceState.BOOTING, InstanceState.RUNNING,
                              InstanceState.STOPPED):
            return
        if inst.state is InstanceState.BOOTING or inst.flavor is Flavor.FLEET:
            self.providers.terminate_instance(iid)
        elif inst.flavor is Flavor.SCALE_SET:
            self.providers.deallocate_instance(inst.group_id, iid)
        else:
            self.providers.delete_group_instance(inst.group_id, iid)

    def _on_operator(self, ev) -> None:
        if ev.kind is EventKind.MANUAL_RECOVERY:
            self.providers.manual_recovery(ev.target)
        else:
            self.providers.manual_sweep(ev.target)

    # -- run --------------------------------------------------------------------

    def run(self, trace_path=None) -> SimulationResult:
        sink = None
        if trace_path is not None:
            trace_path = Path(trace_path)
            trace_path.parent.mkdir(parents=True, exist_ok=True)
            sink = open(trace_path, "w", encoding="utf-8", newline="\n")
        try:
            return self._run(sink, trace_path)
        finally:
            if sink is not None:
                sink.close()

    def _run(self, sink, trace_path) -> SimulationResult:
        sc = self.sc
        engine = Engine(sc.seed, trace_file=sink)
        self.engine = engine
        regions = {r.id: r for r in sc.regions}
        self._region_flavor = {r.id: r.flavor for r in sc.regions}
        self._group_of: dict[str, str] = {}
        self._job_seq = {JobKind.GPU: 0, JobKind.CPU: 0}
        self.timeseries: list[tuple] = []

        ledger = CostLedger()
        providers = Providers(engine, regions, sc.faults)
        pool = Pool(engine, sc.pool, regions, self.perf, _catalog_for(sc))
        self.providers, self.pool = providers, pool
        self._gpu_sids = sorted(s for s, sd in pool.schedds.items()
                                if sd.kind is JobKind.GPU)
        self._cpu_sids = sorted(s for s, sd in pool.schedds.items()
                                if sd.kind is JobKind.CPU)

        providers.on_running = pool.register_startd
        providers.on_gone = pool.on_instance_gone
        providers.on_billing_span = lambda inst, t0, t1: ledger.accrue(
            inst.id, inst.model, t0, t1,
            self.prices.hourly_price(inst.model), rogue=inst.rogue)
        pool.on_drained = self._on_drained

        engine.on(EventKind.PROVISION, self._on_provision)
        engine.on(EventKind.SUBMIT_JOBS, self._on_submit)
        engine.on(EventKind.NEGOTIATOR_TICK, self._on_negotiate)
        engine.on(EventKind.PROVIDER_TICK, providers.tick)
        engine.on(EventKind.SAMPLE, self._on_sample)
        engine.on(EventKind.BOOT_COMPLETE, providers.on_boot_complete)
        engine.on(EventKind.PREEMPTION_DUE, providers.on_preemption_due)
        engine.on(EventKind.AD_VISIBLE, pool.on_ad_visible)
        engine.on(EventKind.START_JOB, pool.on_start_job)
        engine.on(EventKind.JOB_COMPLETE, pool.on_job_complete)
        engine.on(EventKind.SHUTDOWN_START, self._on_shutdown)
        engine.on(EventKind.MANUAL_RECOVERY, self._on_operator)
        engine.on(EventKind.MANUAL_SWEEP, self._on_operator)

        horizon = sc.horizon_s
        for i, p in enumerate(sc.plan):
            engine.schedule(p.t, EventKind.PROVISION, p.name, f"i={i}")
        for i, w in enumerate(sc.workload):
            engine.schedule(w.t, EventKind.SUBMIT_JOBS, f"wave-{i}", f"i={i}")
        t = sc.pool.negotiator_period_s
        while t <= horizon:
            engine.schedule(t, EventKind.NEGOTIATOR_TICK, "negotiator")
            t += sc.pool.negotiator_period_s
        t = PROVIDER_TICK_S
        while t <= horizon:
            engine.schedule(t, EventKind.PROVIDER_TICK, "providers")
            t += PROVIDER_TICK_S
        t = 0.0
        while t < horizon:
            engine.schedule(t, EventKind.SAMPLE, "pool")
            t += sc.sample_period_s
        engine.schedule(horizon, EventKind.SAMPLE, "pool")  # final sample
        if sc.shutdown_t_s is not None:
            engine.schedule(sc.shutdown_t_s, EventKind.SHUTDOWN_START, "orchestrator")
        for o in sc.operator:
            kind = (EventKind.MANUAL_RECOVERY if o.action == "manual_recovery"
                    else EventKind.MANUAL_SWEEP)
            engine.schedule(o.t, kind, o.region)

        trace = engine.run_until(horizon)

        # close every span still open at the horizon
        for iid in sorted(providers.instances):
            inst = providers.instances[iid]
            if inst.billable and inst.bill_start is not None:
                ledger.accrue(iid, inst.model, inst.bill_start, horizon,
                              self.prices.hourly_price(inst.model), rogue=inst.rogue)

        if sink is not None:
            sink.flush()
            agg = aggregate(iter_trace_csv(trace_path))
        else:
            agg = aggregate(trace)
        return SimulationResult(
            scenario=sc, perf=self.perf, prices=self.prices, ledger=ledger,
            aggregates=agg, timeseries=self.timeseries, audit=providers.audit,
            trace=None if sink is not None else trace,
            trace_path=trace_path, pool=pool, providers=providers)


def run_scenario(sc: Scenario, trace_path=None) -> SimulationResult:
    return Simulation(sc).run(trace_path)

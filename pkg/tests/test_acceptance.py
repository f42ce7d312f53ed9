"""Acceptance gate for the reference burst.

One test per acceptance criterion, each printing a single ``PASS``/``FAIL``
line (run with ``pytest -v -s tests/test_acceptance.py`` to watch them).
Criteria 1-6 replay the full-scale reference run against the frozen
calibration targets; the rest cover statistical behavior at 1% scale,
provider-semantics properties, pool invariants, determinism, and the
rogue-respawn regression.
"""

import filecmp
from dataclasses import dataclass, replace

import pytest

from burstsim.checks import (
    PEAK_COST_PER_H,
    PEAK_COUNTS,
    PEAK_PFLOPS,
    PEAK_TOTAL,
    PFLOPH,
    PFLOPH_TOTAL,
    SCIENCE_K80_K520,
    SCIENCE_V100_T4,
    T65_WINDOW_MIN,
    T90_WINDOW_MIN,
    WALLTIME_TOTAL_H,
    replay_checks,
)
from burstsim.engine import Engine, EventKind
from burstsim.errors import (
    IllegalInstanceTransition,
    MixedGpuTemplate,
    NotAnInstanceGroup,
    NotAScaleSet,
    SimError,
)
from burstsim.pool import Pool, PoolConfig
from burstsim.providers import (
    ACTIVE_STATES,
    BILLABLE_STATES,
    Flavor,
    InstanceState,
    LEGAL_TRANSITIONS,
    Providers,
    Region,
)
from burstsim.reports import emit_outputs
from burstsim.rng import RngStream
from burstsim.simulation import run_scenario
from burstsim.workload import STANDARD, InputCatalog, InputClassSpec, PerfTable, StorageEndpoint


def verdict(name: str, passed: bool, detail: str) -> None:
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    assert passed, f"{name}: {detail}"


# -- criteria 1-6: the full-scale replay --------------------------------------------


def test_c01_peak_composition_and_runtime(full_run):
    result, elapsed = full_run
    agg = result.aggregates
    bad = []
    for m, want in PEAK_COUNTS.items():
        got = agg.peak_by_model.get(m, 0)
        if abs(got - want) > 0.02 * want:
            bad.append(f"{m}: {got} vs {want}")
    if abs(agg.peak_total - PEAK_TOTAL) > 0.02 * PEAK_TOTAL:
        bad.append(f"total: {agg.peak_total} vs {PEAK_TOTAL}")
    if elapsed >= 60.0:
        bad.append(f"runtime {elapsed:.1f} s >= 60 s")
    verdict("c01_peak_composition",
            not bad,
            "; ".join(bad) if bad else
            f"peak {agg.peak_total} instances (every model within 2%), "
            f"simulated in {elapsed:.1f} s")


def test_c02_peak_compute(full_result, perf):
    got = perf.pflops32_of(full_result.aggregates.peak_by_model)
    ok = abs(got - PEAK_PFLOPS) <= 0.05 * PEAK_PFLOPS
    verdict("c02_peak_compute", ok,
            f"{got:.1f} PFLOPS32 vs {PEAK_PFLOPS} (5%)")


def test_c03_ramp_milestones(full_result):
    agg = full_result.aggregates
    t65, t90 = agg.t65 / 60.0, agg.t90 / 60.0
    ok = (T65_WINDOW_MIN[0] <= t65 <= T65_WINDOW_MIN[1]
          and T90_WINDOW_MIN[0] <= t90 <= T90_WINDOW_MIN[1])
    verdict("c03_ramp_milestones", ok,
            f"t65={t65:.1f} min (want 25-35), t90={t90:.1f} min (want 65-75)")


def test_c04_integral_totals(full_result, perf):
    agg = full_result.aggregates
    bad = []
    wall = agg.total_walltime_h()
    if abs(wall - WALLTIME_TOTAL_H) > 0.05 * WALLTIME_TOTAL_H:
        bad.append(f"walltime {wall:.0f} h vs {WALLTIME_TOTAL_H}")
    pfh = sum(h * perf[m].tflops32 / 1000.0 for m, h in agg.walltime_h.items())
    if abs(pfh - PFLOPH_TOTAL) > 0.05 * PFLOPH_TOTAL:
        bad.append(f"compute {pfh:.1f} PFLOP32-h vs {PFLOPH_TOTAL}")
    for m, want in PFLOPH.items():
        got = agg.walltime_h.get(m, 0.0) * perf[m].tflops32 / 1000.0
        if abs(got - want) > 0.10 * want:
            bad.append(f"{m}: {got:.1f} vs {want} PFLOP32-h")
    verdict("c04_integral_totals", not bad,
            "; ".join(bad) if bad else
            f"{wall:.0f} GPU-h, {pfh:.1f} PFLOP32-h (per-model within 10%)")


def test_c05_cost_at_peak(full_result, prices):
    agg = full_result.aggregates
    bad = []
    total = sum(n * prices.hourly_price(m) for m, n in agg.peak_by_model.items())
    if abs(total - PEAK_COST_PER_H) > 0.05 * PEAK_COST_PER_H:
        bad.append(f"total ${total:.0f}/h vs ${PEAK_COST_PER_H:.0f}/h")
    for m, n in sorted(agg.peak_by_model.items()):
        lo, hi = prices.price_range(m)
        cost = n * prices.hourly_price(m)
        if not (n * lo - 1e-9 <= cost <= n * hi + 1e-9):
            bad.append(f"{m}: ${cost:.0f}/h outside [{n * lo:.0f}, {n * hi:.0f}]")
    verdict("c05_cost_at_peak", not bad,
            "; ".join(bad) if bad else
            f"${total:.0f}/h, every model inside its published price band")


def test_c06_science_skew(full_result, perf, prices):
    agg = full_result.aggregates
    tot = agg.total_science()
    f_new = (agg.science.get("V100", 0.0) + agg.science.get("T4", 0.0)) / tot
    f_old = (agg.science.get("K80", 0.0) + agg.science.get("K520", 0.0)) / tot
    ok = (SCIENCE_V100_T4[0] <= f_new <= SCIENCE_V100_T4[1]
          and SCIENCE_K80_K520[0] <= f_old <= SCIENCE_K80_K520[1])
    # the CLI's --check path must agree with this gate on the same run
    assert all(c.passed for c in replay_checks(agg, perf, prices, scale=1.0))
    verdict("c06_science_skew", ok,
            f"V100+T4={f_new:.3f} (want 0.45-0.55), "
            f"K80+K520={f_old:.3f} (want 0.05-0.11)")


# -- criterion 7: preemption statistics over many seeds ------------------------------


def test_c07_pooled_preemption_rate(reference_scenario):
    sc = reference_scenario.scaled(0.01)
    preempted = 0
    exposure_h = 0.0
    for seed in range(3000, 3020):
        r = run_scenario(replace(sc, seed=seed))
        agg = r.aggregates
        preempted += agg.preempted_instances
        exposure_h += agg.total_walltime_h()

        starts: dict[str, int] = {}
        done: dict[str, int] = {}
        lost: set[str] = set()
        for ev in r.iter_trace():
            if ev.kind is EventKind.JOB_STARTED:
                starts[ev.target] = starts.get(ev.target, 0) + 1
            elif ev.kind is EventKind.JOB_COMPLETED:
                done[ev.target] = done.get(ev.target, 0) + 1
            elif ev.kind is EventKind.JOB_PREEMPTED:
                lost.add(ev.target)
        # a job finishes at most once, and only via a fresh attempt
        assert all(n == 1 for n in done.values())
        for jid in lost & set(done):
            assert starts[jid] >= 2, f"seed {seed}: {jid} completed a dead attempt"

    rate = preempted / exposure_h
    ok = abs(rate - 0.02) <= 0.005
    verdict("c07_preemption_rate", ok,
            f"{preempted} preemptions over {exposure_h:.0f} instance-hours "
            f"across 20 seeds: {rate:.4f}/h (want 0.020+-0.005); "
            f"lost attempts requeue and score zero")


# -- criterion 8: provider semantics ---------------------------------------------------


def _env(seed=1, quotas=None):
    engine = Engine(seed=seed)
    regions = {rid: Region(rid, fl, quotas=dict(quotas or {"V100": 1000}),
                           boot_median_s=30.0, boot_sigma=0.0)
               for rid, fl in (("fa", Flavor.FLEET), ("ss", Flavor.SCALE_SET),
                               ("ig", Flavor.INSTANCE_GROUP))}
    prov = Providers(engine, regions)
    engine.on(EventKind.BOOT_COMPLETE, prov.on_boot_complete)
    engine.on(EventKind.PREEMPTION_DUE, prov.on_preemption_due)
    return engine, prov


def _advance(engine, t):
    engine.schedule(t, EventKind.SAMPLE, "t")
    engine.run_until(t)


def _live(prov, gid):
    return [i for i in prov.instances.values()
            if i.group_id == gid and i.state in ACTIVE_STATES]


def _instance_in(state):
    engine, prov = _env()
    gid = prov.create_scale_set("ss", "V100", max_size=4, desired=1)
    [iid] = sorted(prov.groups[gid].members)
    if state not in (InstanceState.REQUESTED, InstanceState.BOOTING):
        _advance(engine, 100.0)
        op = {InstanceState.STOPPED: lambda: prov.stop_instance(iid),
              InstanceState.DEALLOCATED: lambda: prov.deallocate_instance(gid, iid),
              InstanceState.TERMINATED: lambda: prov.terminate_instance(iid),
              InstanceState.PREEMPTED: lambda: prov.preempt(iid)}.get(state)
        if op:
            op()
    inst = prov.instances[iid]
    if state is InstanceState.REQUESTED:        # reachable only while stalled
        return None, None
    assert inst.state is state
    return prov, inst


def test_c08_provider_semantics():
    notes = []

    # (a) instance-group teardown that never lowers `desired` never converges;
    #     the provider keeps replacing losses, generation after generation
    engine, prov = _env()
    gid = prov.create_instance_group("ig", "V100", 5)
    _advance(engine, 100.0)
    t = 100.0
    for _ in range(10):
        for inst in _live(prov, gid):
            prov.terminate_instance(inst.id)
        t += 100.0
        _advance(engine, t)
        assert len(_live(prov, gid)) == 5
    prov.resize_instance_group(gid, 0)
    for inst in _live(prov, gid):
        prov.terminate_instance(inst.id)
    _advance(engine, t + 100.0)
    assert _live(prov, gid) == []
    notes.append("teardown loop detected over 10 generations, converges once desired=0")

    # (b) Stopped keeps billing, Deallocated stops it
    engine, prov = _env()
    spans = []
    prov.on_billing_span = lambda inst, t0, t1: spans.append((t0, t1))
    gid = prov.create_scale_set("ss", "V100", max_size=4, desired=1)
    _advance(engine, 100.0)
    [iid] = [i.id for i in _live(prov, gid)]
    _advance(engine, 200.0)
    prov.stop_instance(iid)
    assert spans == []                          # stop does not close the span
    _advance(engine, 500.0)
    prov.deallocate_instance(gid, iid)
    assert spans == [(0.0, 500.0)]              # the stopped interval was billed
    notes.append("stopped bills, deallocated does not")

    # (c) fleets cannot resize, by construction
    engine, prov = _env()
    gid = prov.create_fleet("fa", "V100", 2)
    assert not hasattr(prov, "resize_fleet")
    with pytest.raises(NotAScaleSet):
        prov.resize_scale_set(gid, 5)
    with pytest.raises(NotAnInstanceGroup):
        prov.resize_instance_group(gid, 5)
    # (d) one GPU model per fleet template
    with pytest.raises(MixedGpuTemplate):
        prov.create_fleet("fa", ["V100", "K80"], 2)
    notes.append("fleet resize and mixed templates rejected")

    # (e) the lifecycle graph, exhaustively: every state pair behaves per the map
    checked = 0
    for source in InstanceState:
        for target in InstanceState:
            prov, inst = _instance_in(source)
            if prov is None:
                continue
            if target in LEGAL_TRANSITIONS[source]:
                prov._set_state(inst, target)
                assert inst.state is target
            else:
                with pytest.raises(IllegalInstanceTransition):
                    prov._set_state(inst, target)
                assert inst.state is source
            checked += 1
    notes.append(f"{checked} state pairs enumerated")

    # (f) randomized operation sequences cannot corrupt the state machine
    rng = RngStream(99, "gate-fuzz")
    rejected = 0
    for k in range(2000):
        engine, prov = _env(seed=k, quotas={"V100": 12})
        gids = [prov.create_fleet("fa", "V100", 2),
                prov.create_scale_set("ss", "V100", max_size=6, desired=2),
                prov.create_instance_group("ig", "V100", 2)]
        t = 100.0
        _advance(engine, t)
        for _ in range(6):
            op = rng.randrange(8)
            iid = sorted(prov.instances)[rng.randrange(len(prov.instances))]
            gid = gids[rng.randrange(3)]
            try:
                if op == 0:
                    prov.stop_instance(iid)
                elif op == 1:
                    prov.restart_instance(iid)
                elif op == 2:
                    prov.deallocate_instance(gid, iid)
                elif op == 3:
                    prov.terminate_instance(iid)
                elif op == 4:
                    prov.preempt(iid)
                elif op == 5:
                    prov.resize_scale_set(gid, rng.randrange(7))
                elif op == 6:
                    prov.resize_instance_group(gid, rng.randrange(7))
                else:
                    t += 50.0
                    _advance(engine, t)
            except SimError:
                rejected += 1
        for inst in prov.instances.values():
            assert (inst.bill_start is not None) == (inst.state in BILLABLE_STATES)
        used = sum(1 for i in prov.instances.values() if i.state in ACTIVE_STATES)
        assert used == sum(v for v in prov._quota_used.values() if v)
    assert rejected > 2000
    notes.append(f"2000 random sequences, {rejected} domain rejections, zero escapes")

    verdict("c08_provider_semantics", True, "; ".join(notes))


# -- criterion 9: pool invariants at 1% scale -------------------------------------------


def test_c09_pool_invariants(small_result):
    r = small_result
    sc = r.scenario
    cap = sc.pool.schedd_cap
    allowed = {name: frozenset(spec.replica_regions) for name, spec in sc.inputs.items()}

    region_of: dict[str, str] = {}
    job_at: dict[str, tuple[str, str, str]] = {}    # jid -> (schedd, instance, kind)
    running: dict[str, int] = {}
    hi_water = 0
    gpu_started = 0
    ratio_worst = 1.0
    ratios_checked = 0
    t90 = r.aggregates.t90

    def gpu_ratio():
        counts = [n for sid, n in running.items() if sid.startswith("gpu-")]
        if len(counts) < sc.pool.gpu_schedds or min(counts) == 0:
            return None
        return max(counts) / min(counts)

    pending_tick = None
    for ev in r.iter_trace():
        k = ev.kind
        if pending_tick is not None and ev.at > pending_tick:
            # the tick's matches have all been applied; sample fairness now
            ratio = gpu_ratio()
            if ratio is not None:
                ratios_checked += 1
                ratio_worst = max(ratio_worst, ratio)
            pending_tick = None
        if k is EventKind.INSTANCE_BOOTING:
            region_of[ev.target] = dict(p.split("=", 1) for p in ev.detail.split())["region"]
        elif k is EventKind.JOB_STARTED:
            d = dict(p.split("=", 1) for p in ev.detail.split())
            sid = d["schedd"]
            kind = "gpu" if sid.startswith("gpu-") else "cpu"
            job_at[ev.target] = (sid, d["instance"], kind)
            running[sid] = running.get(sid, 0) + 1
            hi_water = max(hi_water, running[sid])
            assert running[sid] <= cap, f"{sid} over cap at t={ev.at}"
            if kind == "gpu":
                gpu_started += 1
                assert region_of[d["instance"]] in allowed[d["class"]], \
                    f"locality: {ev.target} ({d['class']}) on {region_of[d['instance']]}"
        elif k in (EventKind.JOB_COMPLETED, EventKind.JOB_PREEMPTED):
            info = job_at.pop(ev.target, None)
            if info:
                running[info[0]] -= 1
        elif k is EventKind.JOBS_REMOVED and "kind=cpu" in ev.detail \
                and not ev.target.startswith("cpu-"):
            # teardown killed the running CPU fillers of one instance
            victims = [j for j, (_s, inst, kd) in job_at.items()
                       if inst == ev.target and kd == "cpu"]
            assert len(victims) == int(ev.detail.split("count=")[1])
            for j in victims:
                running[job_at.pop(j)[0]] -= 1
        elif k is EventKind.NEGOTIATOR_TICK \
                and t90 + 600.0 <= ev.at <= sc.shutdown_t_s - 60.0:
            pending_tick = ev.at

    assert gpu_started > 500
    assert ratios_checked > 20
    assert ratio_worst <= 1.15, f"fair-share ratio reached {ratio_worst:.3f}"
    assert r.pool.locality_violations == 0

    # synthetic registration burst: 10,000 startds in one minute across one
    # region's 20 leaf collectors must never queue anyone for 60 s
    @dataclass
    class Box:
        id: str
        region: str
        model: str = "V100"

    engine = Engine(seed=17)
    regions = {"r0": Region("r0", Flavor.FLEET)}
    catalog = InputCatalog(
        classes={STANDARD: InputClassSpec(STANDARD, 1.0, frozenset({"r0"}))},
        endpoints={"r0": StorageEndpoint("r0")})
    pool = Pool(engine, PoolConfig(), regions, PerfTable.load(), catalog)
    engine.on(EventKind.PROVISION,
              lambda ev: pool.register_startd(Box(ev.target, "r0")))
    for i in range(10_000):
        engine.schedule(i * 0.006, EventKind.PROVISION, f"b{i:05d}")
    engine.run_until(120.0)
    leaves = pool.leaves["r0"]
    assert sum(l.registrations for l in leaves) == 10_000
    worst = max(l.max_backlog_s for l in leaves)
    assert worst < 60.0

    verdict("c09_pool_invariants", True,
            f"cap never exceeded (high water {hi_water} of {cap}); "
            f"steady-state fair-share ratio <= {ratio_worst:.3f}; "
            f"{gpu_started} GPU starts all locality-clean; "
            f"burst backlog peaked at {worst:.2f} s across 20 leaves")


# -- criterion 10: determinism -----------------------------------------------------------


def test_c10_determinism(reference_scenario, small_result, tmp_path):
    sc = reference_scenario.scaled(0.01)
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        res = run_scenario(sc, trace_path=d / "trace.csv")
        emit_outputs(res, d, figures=False)
    same = []
    for name in ("trace.csv", "pool_timeseries.csv", "provisioning_audit.csv",
                 "peak_table.csv", "totals_table.csv", "summary.txt"):
        assert filecmp.cmp(dirs[0] / name, dirs[1] / name, shallow=False), name
        same.append(name)

    other = run_scenario(replace(sc, seed=sc.seed + 1))
    assert other.trace != small_result.trace

    verdict("c10_determinism", True,
            f"equal seeds: {len(same)} output files byte-identical; "
            f"different seed diverges")


# -- criterion 11: the deprovision-respawn regression ---------------------------------------


def test_c11_respawn_regression(reference_scenario, small_result):
    sc = reference_scenario.scaled(0.01)
    no_sweep = replace(sc, operator=[o for o in sc.operator
                                     if o.action != "manual_sweep"])
    r = run_scenario(no_sweep)
    rogues_left = [i for i in r.providers.instances.values()
                   if i.rogue and i.state in ACTIVE_STATES]
    assert r.aggregates.rogues_spawned > 0
    assert rogues_left, "without a sweep the rogues must survive to the horizon"
    assert r.ledger.rogue_cost() > 0.0

    swept = small_result
    left_after_sweep = [i for i in swept.providers.instances.values()
                        if i.rogue and i.state in ACTIVE_STATES]
    assert left_after_sweep == []
    assert swept.ledger.rogue_cost() > 0.0      # the waste already accrued stays

    verdict("c11_respawn_regression", True,
            f"bug alone: {len(rogues_left)} rogues alive at the horizon, "
            f"${r.ledger.rogue_cost():.2f} wasted; with the sweep: 0 alive, "
            f"${swept.ledger.rogue_cost():.2f} still on the books")

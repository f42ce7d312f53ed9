"""Workload-manager pool: collector tree, schedds, negotiator, slots, jobs.

The pool mirrors a two-level collector topology: every region hosts a set
of leaf collectors; a startd registers with one uniformly-chosen leaf in
its own region (a short exclusive handshake per registration) and its slot
ad becomes visible to the matchmaker after a forwarding latency.  Job
queues live on schedds, split by job kind: GPU schedds hold the real work,
CPU schedds hold open-ended filler tasks that ride along on the same
instances.  A negotiator runs on a fixed cycle and hands free slots to the
schedd with the lowest running count first (ties by id), which keeps
same-kind schedds within a few percent of each other.

Region locality is a hard matching constraint: a GPU job only matches a
slot whose region holds a replica of the job's input class.  The
``prefetch_bug`` flag reproduces a matchmaker defect where each cycle only
considers the lexicographically first region with advertised slots that
any idle job wants — all other regions starve until the flag is cleared.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from heapq import heappop, heappush

from .engine import Engine, EventKind
from .errors import (
    CapExceeded,
    IllegalJobTransition,
    KindMismatch,
    NoLeafInRegion,
    SlotVanished,
)
from .providers import Region
from .rng import unit_draw
from .workload import InputCatalog, PerfTable, transfer_time


class JobKind(str, Enum):
    GPU = "gpu"
    CPU = "cpu"


class JobState(str, Enum):
    IDLE = "idle"
    RUNNING = "running"
    COMPLETED = "completed"
    REMOVED = "removed"


_JOB_LEGAL = {
    JobState.IDLE: {JobState.RUNNING, JobState.REMOVED},
    # Idle = preempted requeue; Removed = killed at teardown
    JobState.RUNNING: {JobState.COMPLETED, JobState.IDLE, JobState.REMOVED},
    JobState.COMPLETED: set(),
    JobState.REMOVED: set(),
}


@dataclass(slots=True)
class JobAd:
    id: str
    kind: JobKind
    input_class: str
    required_regions: frozenset[str]
    schedd_id: str
    state: JobState = JobState.IDLE
    attempts: int = 0
    instance_id: str | None = None
    pending_claim: bool = False

    def advance(self, to: JobState) -> None:
        if to not in _JOB_LEGAL[self.state]:
            raise IllegalJobTransition(f"{self.id}: {self.state.value} -> {to.value}")
        self.state = to


@dataclass(slots=True)
class SlotAd:
    """One instance's advertised slots: one GPU slot plus its CPU slots.

    CPU slots only become matchable once the GPU slot has been claimed at
    least once."""
    instance_id: str
    region: str
    model: str
    cpu_slots: int
    gpu_job: str | None = None
    cpu_jobs: set = field(default_factory=set)
    cpu_enabled: bool = False
    draining: bool = False


@dataclass
class Schedd:
    id: str
    kind: JobKind
    cap: int
    idle: dict[frozenset, deque] = field(default_factory=dict)
    idle_count: int = 0
    running: int = 0
    hi_water: int = 0
    submitted: int = 0
    completed: int = 0
    removed: int = 0

    def push_idle(self, job: JobAd) -> None:
        self.idle.setdefault(job.required_regions, deque()).append(job)
        self.idle_count += 1


@dataclass
class LeafCollector:
    id: str
    region: str
    busy_until: float = 0.0
    max_backlog_s: float = 0.0
    registrations: int = 0


@dataclass
class PoolConfig:
    gpu_schedds: int = 10
    cpu_schedds: int = 20
    schedd_cap: int = 12000
    leaves_per_region: int = 20
    negotiator_period_s: float = 60.0
    registration_service_s: float = 0.05
    forward_latency_s: float = 2.0
    cpu_slots_per_instance: int = 2
    prefetch_bug: bool = False


class Pool:
    def __init__(self, engine: Engine, config: PoolConfig, regions: dict[str, Region],
                 perf: PerfTable, catalog: InputCatalog):
        assert config.cpu_slots_per_instance >= 2, "instances advertise at least 2 CPU slots"
        self.engine = engine
        self.cfg = config
        self.regions = regions
        self.perf = perf
        self.catalog = catalog
        self.jobs: dict[str, JobAd] = {}
        self.slots: dict[str, SlotAd] = {}
        self.schedds: dict[str, Schedd] = {}
        for i in range(config.gpu_schedds):
            sid = f"gpu-{i:02d}"
            self.schedds[sid] = Schedd(sid, JobKind.GPU, config.schedd_cap)
        for i in range(config.cpu_schedds):
            sid = f"cpu-{i:02d}"
            self.schedds[sid] = Schedd(sid, JobKind.CPU, config.schedd_cap)
        self.leaves: dict[str, list[LeafCollector]] = {
            rid: [LeafCollector(f"leaf:{rid}:{k:02d}", rid)
                  for k in range(config.leaves_per_region)]
            for rid in regions
        }
        self.gpu_free: dict[str, deque] = {rid: deque() for rid in regions}
        self.cpu_free: dict[str, deque] = {rid: deque() for rid in regions}
        self.draining = False
        self.matches_made = 0
        self.locality_violations = 0
        # called when a draining instance finishes its last GPU job
        self.on_drained = None  # fn(instance_id)

    # -- registration ---------------------------------------------------------

    def register_startd(self, instance) -> str:
        """A freshly booted instance checks in with a leaf collector in its
        region; its ad reaches the matchmaker after the forwarding latency."""
        leaves = self.leaves.get(instance.region) or []
        if not leaves:
            raise NoLeafInRegion(instance.region)
        leaf = leaves[self.engine.stream(f"leaf:{instance.id}").randrange(len(leaves))]
        now = self.engine.now()
        start = max(now, leaf.busy_until)
        done = start + self.cfg.registration_service_s
        leaf.busy_until = done
        leaf.registrations += 1
        leaf.max_backlog_s = max(leaf.max_backlog_s, start - now)
        visible_at = done + self.cfg.forward_latency_s + self.regions[instance.region].wan_latency_s
        self.engine.emit(EventKind.STARTD_REGISTERED, instance.id, f"leaf={leaf.id}")
        self.engine.schedule(visible_at, EventKind.AD_VISIBLE, instance.id,
                             f"model={instance.model} region={instance.region}")
        return leaf.id

    def on_ad_visible(self, ev) -> None:
        iid = ev.target
        if iid in self.slots:
            return
        detail = dict(kv.split("=", 1) for kv in ev.detail.split())
        slot = SlotAd(iid, detail["region"], detail["model"], self.cfg.cpu_slots_per_instance)
        self.slots[iid] = slot
        if self.draining:
            slot.draining = True
            if self.on_drained is not None:
                self.on_drained(iid)
            return
        self.gpu_free[slot.region].append(iid)

    # -- job submission ---------------------------------------------------------

    def submit_jobs(self, schedd_id: str, jobs: list[JobAd]) -> int:
        schedd = self.schedds[schedd_id]
        for job in jobs:
            if job.kind is not schedd.kind:
                raise KindMismatch(
                    f"{job.id} is {job.kind.value} but {schedd_id} serves {schedd.kind.value}")
        for job in jobs:
            job.schedd_id = schedd_id
            self.jobs[job.id] = job
            schedd.push_idle(job)
            schedd.submitted += 1
        return len(jobs)

    def remove_idle_jobs(self, kind: JobKind) -> int:
        """Drop every idle job of the given kind from every schedd."""
        total = 0
        for schedd in self.schedds.values():
            if schedd.kind is not kind:
                continue
            n = 0
            for dq in schedd.idle.values():
                # matched (pending-claim) jobs are never in the idle deques
                for job in dq:
                    job.advance(JobState.REMOVED)
                    schedd.removed += 1
                    n += 1
                dq.clear()
            if n:
                schedd.idle_count -= n
                self.engine.emit(EventKind.JOBS_REMOVED, schedd.id,
                                 f"kind={kind.value} count={n}")
            total += n
        return total

    # -- matchmaking ---------------------------------------------------------------

    def _pop_free(self, dq: deque, want_cpu: bool) -> SlotAd | None:
        """Pop entries until one refers to a live, unclaimed, undrained slot."""
        while dq:
            iid = dq.popleft()
            slot = self.slots.get(iid)
            if slot is None or slot.draining:
                continue
            if want_cpu:
                if slot.cpu_enabled and len(slot.cpu_jobs) < slot.cpu_slots:
                    return slot
            else:
                if slot.gpu_job is None:
                    return slot
        return None

    def negotiate(self, ev=None) -> int:
        """One matchmaking cycle; returns the number of matches granted."""
        if self.draining:
            return 0
        total = 0
        total += self._negotiate_kind(JobKind.GPU, self.gpu_free)
        total += self._negotiate_kind(JobKind.CPU, self.cpu_free)
        self.matches_made += total
        return total

    def _negotiate_kind(self, kind: JobKind, free: dict[str, deque]) -> int:
        free_regions = {r for r, dq in free.items() if dq}
        if not free_regions:
            return 0
        candidates = [s for s in self.schedds.values()
                      if s.kind is kind and s.idle_count > 0]
        if not candidates:
            return 0
        wanted: set[str] = set()
        for s in candidates:
            for ck, dq in s.idle.items():
                if dq:
                    wanted |= ck
        allowed: set[str] | None = None
        if self.cfg.prefetch_bug:
            # Defect mode: the matchmaker only prefetches slot ads for the
            # lexicographically first region any idle job could use; every
            # other region's slots are skipped this cycle.
            with_ads = {slot.region for slot in self.slots.values()
                        if not slot.draining} & wanted
            if not with_ads:
                return 0
            allowed = {min(with_ads)}

        heap: list[list] = []
        for s in sorted(candidates, key=lambda s: s.id):
            heappush(heap, [s.running, s.id])
        granted = 0
        barred: set[str] = set()
        while heap:
            count, sid = heappop(heap)
            if sid in barred:
                continue
            schedd = self.schedds[sid]
            if schedd.idle_count <= 0:
                continue
            if count >= schedd.cap:
                barred.add(sid)
                continue
            usable = free_regions if allowed is None else (free_regions & allowed)
            match = self._match_one(schedd, usable, free)
            if match is None:
                barred.add(sid)
                continue
            job, slot = match
            job.pending_claim = True
            job.instance_id = slot.instance_id
            if job.kind is JobKind.GPU:
                slot.gpu_job = job.id
            else:
                slot.cpu_jobs.add(job.id)
            self.engine.schedule(self.engine.now(), EventKind.START_JOB, job.id,
                                 f"instance={slot.instance_id}")
            granted += 1
            # a popped region may have emptied: refresh lazily
            free_regions = {r for r, dq in free.items() if dq}
            if not free_regions or (allowed is not None and not (free_regions & allowed)):
                break
            heappush(heap, [count + 1, sid])
        return granted

    def _match_one(self, schedd: Schedd, usable: set[str], free: dict[str, deque]):
        """Find this schedd's first idle job matchable in ``usable`` regions
        and pop a free slot for it.  Returns (job, slot) or None."""
        best_key: str | None = None
        best_class = None
        for ck, dq in schedd.idle.items():
            if not dq:
                continue
            if not (ck & usable):
                continue
            head = dq[0]
            if best_key is None or head.id < best_key:
                best_key = head.id
                best_class = ck
        if best_class is None:
            return None
        dq = schedd.idle[best_class]
        want_cpu = schedd.kind is JobKind.CPU
        for region in sorted(best_class & usable):
            slot = self._pop_free(free[region], want_cpu)
            if slot is not None:
                job = dq.popleft()
                schedd.idle_count -= 1
                return job, slot
        return None

    # -- job lifecycle ---------------------------------------------------------------

    def start_job(self, job_id: str, instance_id: str) -> float:
        """Claim the slot and schedule completion; returns the runtime drawn.

        Raises :class:`CapExceeded` if the schedd is at its running cap and
        :class:`SlotVanished` if the instance left the pool after matching;
        in both cases the job stays idle and is renegotiated next cycle.
        """
        job = self.jobs[job_id]
        slot = self.slots.get(instance_id)
        if slot is None:
            raise SlotVanished(instance_id)
        schedd = self.schedds[job.schedd_id]
        if schedd.running >= schedd.cap:
            raise CapExceeded(schedd.id)
        if slot.region not in job.required_regions:
            self.locality_violations += 1
            raise AssertionError(
                f"locality violation: {job.id} on {slot.region}")
        job.advance(JobState.RUNNING)
        job.pending_claim = False
        job.attempts += 1
        job.instance_id = instance_id
        schedd.running += 1
        schedd.hi_water = max(schedd.hi_water, schedd.running)
        if job.kind is JobKind.GPU and not slot.cpu_enabled:
            slot.cpu_enabled = True
            for _ in range(slot.cpu_slots):
                self.cpu_free[slot.region].append(slot.instance_id)
        runtime = 0.0
        if job.kind is JobKind.GPU:
            spec = self.catalog.spec(job.input_class)
            ep = self.catalog.resolve_storage(slot.region)
            jitter_u = unit_draw(self.engine.seed, "jitter", job.id, job.attempts)
            runtime = self.perf.runtime_for(slot.model, job.input_class, jitter_u=jitter_u,
                                            size_factor_override=spec.size_factor)
            runtime += transfer_time(spec.file_size_bytes, ep, "read")
            runtime += transfer_time(spec.file_size_bytes * 0.1, ep, "write")
            self.engine.schedule(self.engine.now() + runtime, EventKind.JOB_COMPLETE,
                                 job.id, f"a={job.attempts}")
        self.engine.emit(EventKind.JOB_STARTED, job.id,
                         f"instance={instance_id} schedd={schedd.id} model={slot.model} "
                         f"class={job.input_class or '-'}")
        return runtime

    def on_start_job(self, ev) -> None:
        job = self.jobs.get(ev.target)
        if job is None or job.state is not JobState.IDLE or not job.pending_claim:
            return
        instance_id = ev.detail.split("=", 1)[1]
        try:
            self.start_job(ev.target, instance_id)
        except (CapExceeded, SlotVanished):
            job.pending_claim = False
            job.instance_id = None
            slot = self.slots.get(instance_id)
            schedd = self.schedds[job.schedd_id]
            schedd.push_idle(job)
            if slot is not None:
                if job.kind is JobKind.GPU and slot.gpu_job == job.id:
                    slot.gpu_job = None
                    self.gpu_free[slot.region].append(slot.instance_id)
                slot.cpu_jobs.discard(job.id)

    def on_job_complete(self, ev) -> None:
        job = self.jobs.get(ev.target)
        if job is None or job.state is not JobState.RUNNING:
            return
        if ev.detail != f"a={job.attempts}":
            return  # completion of a preempted earlier attempt
        science = self.catalog.spec(job.input_class).size_factor
        job.advance(JobState.COMPLETED)
        schedd = self.schedds[job.schedd_id]
        schedd.running -= 1
        schedd.completed += 1
        self.engine.emit(EventKind.JOB_COMPLETED, job.id,
                         f"model={self.slots[job.instance_id].model} "
                         f"class={job.input_class} science={science!r}")
        slot = self.slots.get(job.instance_id)
        job.instance_id = None
        if slot is None:
            return
        slot.gpu_job = None
        if slot.draining:
            self.finish_instance(slot.instance_id)
            if self.on_drained is not None:
                self.on_drained(slot.instance_id)
        else:
            self.gpu_free[slot.region].append(slot.instance_id)

    def finish_instance(self, instance_id: str) -> None:
        """Retire an instance's slots at teardown: its filler CPU jobs are
        removed; the slot ad disappears."""
        slot = self.slots.pop(instance_id, None)
        if slot is None:
            return
        n = 0
        for jid in sorted(slot.cpu_jobs):
            job = self.jobs[jid]
            if job.state is JobState.RUNNING:
                job.advance(JobState.REMOVED)
                sch = self.schedds[job.schedd_id]
                sch.running -= 1
                sch.removed += 1
                n += 1
            job.instance_id = None
        if n:
            self.engine.emit(EventKind.JOBS_REMOVED, instance_id, f"kind=cpu count={n}")

    def on_instance_gone(self, instance, preempted: bool) -> None:
        """Slots of a dead instance vanish; whatever ran there requeues."""
        slot = self.slots.pop(instance.id, None)
        if slot is None:
            return
        victims = []
        if slot.gpu_job is not None:
            victims.append(slot.gpu_job)
        victims.extend(sorted(slot.cpu_jobs))
        for jid in victims:
            job = self.jobs[jid]
            if job.state is JobState.RUNNING:
                job.advance(JobState.IDLE)
                schedd = self.schedds[job.schedd_id]
                schedd.running -= 1
                schedd.push_idle(job)
                self.engine.emit(EventKind.JOB_PREEMPTED, jid, f"instance={instance.id}")
            elif job.state is JobState.IDLE and job.pending_claim:
                # matched but the start never happened: back to the queue
                job.pending_claim = False
                job.instance_id = None
                self.schedds[job.schedd_id].push_idle(job)

    # -- shutdown --------------------------------------------------------------------

    def begin_drain(self) -> tuple[int, list[str]]:
        """Stop matchmaking, drop idle GPU work, mark every slot draining.
        Returns (idle jobs removed, ids of slots with no GPU job on board —
        those can retire immediately)."""
        self.draining = True
        removed = self.remove_idle_jobs(JobKind.GPU)
        idle_slots = []
        for iid in sorted(self.slots):
            slot = self.slots[iid]
            slot.draining = True
            if slot.gpu_job is None:
                idle_slots.append(iid)
        return removed, idle_slots

    # -- introspection ------------------------------------------------------------------

    def running_jobs(self, kind: JobKind) -> int:
        return sum(s.running for s in self.schedds.values() if s.kind is kind)

    def idle_jobs(self, kind: JobKind) -> int:
        return sum(s.idle_count for s in self.schedds.values() if s.kind is kind)

    def conservation_ok(self, kind: JobKind) -> bool:
        sub = run = idle = done = rem = 0
        for s in self.schedds.values():
            if s.kind is not kind:
                continue
            sub += s.submitted
            run += s.running
            idle += s.idle_count
            done += s.completed
            rem += s.removed
        return sub == run + idle + done + rem

    def fair_share_ratio(self, kind: JobKind) -> float:
        counts = [s.running for s in self.schedds.values() if s.kind is kind]
        if not counts or min(counts) == 0:
            return float("inf")
        return max(counts) / min(counts)

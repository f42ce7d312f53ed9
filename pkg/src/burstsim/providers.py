"""Cloud provider provisioning semantics.

Three group flavors with deliberately different lifecycle rules, matching
the three provisioning APIs the pool runs against:

* ``fleet`` — ephemeral, fixed size.  There is no resize operation at all;
  capacity changes mean creating another fleet.  A fleet template names
  exactly one GPU model.
* ``scale_set`` — resizable up to a hard ``max_size``.  Scaling *down* only
  marks surplus members; instances keep running (and billing) until each is
  explicitly deallocated.  Stopped-but-not-deallocated members bill at the
  full rate.
* ``instance_group`` — resizable, and the provider auto-replaces any member
  that terminates while live membership is below the desired count.  Only
  an explicit per-member delete suppresses replacement, which is why a
  teardown must lower the desired count first.

Instances advance ``Requested -> Booting -> Running`` with log-normal boot
delays and may then stop, deallocate, terminate, or be preempted.  Billing
accrues in Booting, Running, and Stopped.  Fault injection covers regional
request stalls (frozen until manual recovery), spot preemption at a fixed
per-instance-hour rate, and a deprovision bug that spawns unkillable rogue
instances on deallocate calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .engine import Engine, EventKind
from .errors import (
    ExceedsMaxSize,
    IllegalInstanceTransition,
    MixedGpuTemplate,
    NotAnInstanceGroup,
    NotAScaleSet,
    NotProvisioned,
    UnknownGroup,
    UnknownInstance,
)

DEFAULT_BOOT_MEDIAN_S = 90.0
DEFAULT_BOOT_SIGMA = 0.5
DEFAULT_SCALE_SET_MAX = 1000
PROVIDER_TICK_S = 10.0


class Flavor(str, Enum):
    FLEET = "fleet"
    SCALE_SET = "scale_set"
    INSTANCE_GROUP = "instance_group"


class InstanceState(str, Enum):
    REQUESTED = "requested"
    BOOTING = "booting"
    RUNNING = "running"
    STOPPED = "stopped"
    DEALLOCATED = "deallocated"
    TERMINATED = "terminated"
    PREEMPTED = "preempted"


S = InstanceState
BILLABLE_STATES = frozenset({S.BOOTING, S.RUNNING, S.STOPPED})
#: states that hold capacity against the regional quota
ACTIVE_STATES = frozenset({S.REQUESTED, S.BOOTING, S.RUNNING, S.STOPPED})

#: the legal lifecycle graph.  Booting->Terminated covers sweeps and
#: teardown reaching instances that never finished booting.
LEGAL_TRANSITIONS: dict[InstanceState, frozenset[InstanceState]] = {
    S.REQUESTED: frozenset({S.BOOTING}),
    S.BOOTING: frozenset({S.RUNNING, S.TERMINATED}),
    S.RUNNING: frozenset({S.STOPPED, S.DEALLOCATED, S.TERMINATED, S.PREEMPTED}),
    S.STOPPED: frozenset({S.DEALLOCATED, S.RUNNING}),
    S.DEALLOCATED: frozenset(),
    S.TERMINATED: frozenset(),
    S.PREEMPTED: frozenset(),
}


class FaultKind(str, Enum):
    STALL = "regional_limit_stall"
    RESPAWN = "deprovision_respawn"
    PREEMPTION = "preemption"


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    t0: float
    t1: float
    regions: frozenset[str] | None = None  # None: every region
    rate_per_hour: float = 0.0             # preemption
    rogue_per_call: int = 0                # respawn

    def covers(self, region: str, t: float) -> bool:
        if not (self.t0 <= t < self.t1):
            return False
        return self.regions is None or region in self.regions


@dataclass
class Region:
    id: str
    flavor: Flavor
    geo: str = ""
    quotas: dict[str, int] = field(default_factory=dict)
    boot_median_s: float = DEFAULT_BOOT_MEDIAN_S
    boot_sigma: float = DEFAULT_BOOT_SIGMA
    wan_latency_s: float = 0.05


@dataclass(slots=True)
class Instance:
    id: str
    group_id: str
    region: str
    model: str
    flavor: Flavor
    rogue: bool
    state: InstanceState
    marked_surplus: bool
    preempted_flag: bool
    bill_start: float | None

    @property
    def billable(self) -> bool:
        return self.state in BILLABLE_STATES


@dataclass
class ProvisioningGroup:
    id: str
    flavor: Flavor
    region: str
    model: str
    desired: int
    max_size: int | None = None           # scale sets only
    members: set[str] = field(default_factory=set)
    unfulfilled: int = 0                  # quota-clamped requests
    next_member_idx: int = 0


@dataclass(frozen=True)
class MetadataRecord:
    instance_id: str
    group_id: str
    region: str
    gpu_model: str
    flavor: str
    rogue: bool
    state: str
    billable: bool


class Providers:
    """All provisioning groups and instances across every region.

    Wiring: the orchestrator registers :meth:`on_boot_complete` /
    :meth:`on_preemption_due` as engine handlers and passes callbacks for
    pool-side effects (``on_running``: a startd may register;
    ``on_gone``: slots vanish, jobs requeue) and for billing span closure.
    """

    def __init__(self, engine: Engine, regions: dict[str, Region],
                 faults: list[FaultSpec] | None = None):
        self.engine = engine
        self.regions = regions
        self.faults = list(faults or [])
        self.instances: dict[str, Instance] = {}
        self.groups: dict[str, ProvisioningGroup] = {}
        self.audit: list[tuple] = []       # (t, group_id, flavor, region, action, count)
        self.frozen = False                # set at shutdown: no new capacity
        self.on_running = None             # fn(instance)
        self.on_gone = None                # fn(instance, preempted: bool)
        self.on_billing_span = None        # fn(instance, t0, t1)
        self._quota_used: dict[tuple[str, str], int] = {}
        self._running_by_model: dict[str, int] = {}   # non-rogue Running, kept current
        self._group_seq = 0
        self._rogue_seq: dict[str, int] = {}
        self._pending_stalled: dict[str, list[Instance]] = {}
        self._recovered: set[str] = set()

    # -- fault plumbing -------------------------------------------------------

    def _fault(self, kind: FaultKind, region: str, t: float) -> FaultSpec | None:
        for f in self.faults:
            if f.kind is kind and f.covers(region, t):
                return f
        return None

    def _stalled(self, region: str, t: float) -> bool:
        if region in self._recovered:
            return False
        return self._fault(FaultKind.STALL, region, t) is not None

    # -- group creation -------------------------------------------------------

    def _new_group_id(self) -> str:
        gid = f"g{self._group_seq:04d}"
        self._group_seq += 1
        return gid

    def _audit(self, group: ProvisioningGroup, action: str, count: int) -> None:
        self.audit.append((self.engine.now(), group.id, group.flavor.value,
                           group.region, action, count))

    def create_fleet(self, region_id: str, template, count: int) -> str:
        """Create a fixed-size fleet.  ``template`` is a GPU model name or a
        list of them; more than one distinct model is rejected."""
        models = [template] if isinstance(template, str) else list(template)
        if len(set(models)) != 1:
            raise MixedGpuTemplate(f"fleet template must name one GPU model, got {sorted(set(models))}")
        return self._create_group(Flavor.FLEET, region_id, models[0], count, max_size=None)

    def create_scale_set(self, region_id: str, model: str, max_size: int = DEFAULT_SCALE_SET_MAX,
                         desired: int = 0) -> str:
        if desired > max_size:
            raise ExceedsMaxSize(f"desired {desired} > max_size {max_size}")
        return self._create_group(Flavor.SCALE_SET, region_id, model, desired, max_size=max_size)

    def create_instance_group(self, region_id: str, model: str, desired: int) -> str:
        return self._create_group(Flavor.INSTANCE_GROUP, region_id, model, desired, max_size=None)

    def _create_group(self, flavor: Flavor, region_id: str, model: str, count: int,
                      max_size: int | None) -> str:
        region = self.regions[region_id]
        gid = self._new_group_id()
        group = ProvisioningGroup(gid, flavor, region_id, model, desired=count, max_size=max_size)
        self.groups[gid] = group
        self.engine.emit(EventKind.GROUP_CREATED, gid,
                         f"flavor={flavor.value} region={region_id} model={model} count={count}")
        self._audit(group, "created", count)
        if count > 0:
            self._grow(group, count)
        return gid

    # -- capacity changes -----------------------------------------------------

    def _live_members(self, group: ProvisioningGroup) -> list[Instance]:
        return [self.instances[iid] for iid in sorted(group.members)
                if self.instances[iid].state in ACTIVE_STATES]

    def _grow(self, group: ProvisioningGroup, want: int) -> int:
        """Boot up to ``want`` new members, clamped by the regional quota."""
        region = self.regions[group.region]
        key = (group.region, group.model)
        quota = region.quotas.get(group.model, 0)
        room = max(0, quota - self._quota_used.get(key, 0))
        n = min(want, room)
        if n < want:
            group.unfulfilled += want - n
            self._audit(group, "shortfall", want - n)
        for _ in range(n):
            idx = group.next_member_idx
            group.next_member_idx += 1
            iid = f"{group.id}.{idx:04d}"
            inst = Instance(iid, group.id, group.region, group.model, group.flavor,
                            rogue=False, state=S.REQUESTED, marked_surplus=False,
                            preempted_flag=False, bill_start=None)
            self.instances[iid] = inst
            group.members.add(iid)
            self._quota_used[key] = self._quota_used.get(key, 0) + 1
            if self._stalled(group.region, self.engine.now()):
                self._pending_stalled.setdefault(group.region, []).append(inst)
            else:
                self._begin_boot(inst)
        return n

    def resize_scale_set(self, gid: str, new_desired: int) -> int:
        """Returns the signed change in live membership this call initiated."""
        group = self._group(gid)
        if group.flavor is not Flavor.SCALE_SET:
            raise NotAScaleSet(f"{gid} is a {group.flavor.value}")
        if new_desired > (group.max_size or 0):
            raise ExceedsMaxSize(f"desired {new_desired} > max_size {group.max_size}")
        if new_desired < 0:
            raise ValueError("desired must be >= 0")
        live = self._live_members(group)
        group.desired = new_desired
        delta = new_desired - len(live)
        self.engine.emit(EventKind.GROUP_RESIZED, gid, f"desired={new_desired} live={len(live)}")
        self._audit(group, "resized", delta)
        if delta > 0:
            if self.frozen:
                return 0
            return self._grow(group, delta)
        if delta < 0:
            # scale-down marks surplus members; nothing is deallocated here.
            for inst in live[new_desired:]:
                inst.marked_surplus = True
            return 0
        return 0

    def resize_instance_group(self, gid: str, new_desired: int) -> int:
        group = self._group(gid)
        if group.flavor is not Flavor.INSTANCE_GROUP:
            raise NotAnInstanceGroup(f"{gid} is a {group.flavor.value}")
        if new_desired < 0:
            raise ValueError("desired must be >= 0")
        live = self._live_members(group)
        group.desired = new_desired
        delta = new_desired - len(live)
        self.engine.emit(EventKind.GROUP_RESIZED, gid, f"desired={new_desired} live={len(live)}")
        self._audit(group, "resized", delta)
        if delta > 0 and not self.frozen:
            return self._grow(group, delta)
        return 0

    # -- instance lifecycle ---------------------------------------------------

    def _set_state(self, inst: Instance, to: InstanceState) -> None:
        legal = LEGAL_TRANSITIONS[inst.state]
        if to not in legal:
            raise IllegalInstanceTransition(f"{inst.id}: {inst.state.value} -> {to.value}")
        was_billable = inst.billable
        if not inst.rogue:
            if inst.state is S.RUNNING:
                self._running_by_model[inst.model] -= 1
            if to is S.RUNNING:
                self._running_by_model[inst.model] = (
                    self._running_by_model.get(inst.model, 0) + 1)
        inst.state = to
        if not was_billable and inst.billable:
            inst.bill_start = self.engine.now()
        elif was_billable and not inst.billable:
            if self.on_billing_span is not None and inst.bill_start is not None:
                self.on_billing_span(inst, inst.bill_start, self.engine.now())
            inst.bill_start = None

    def _begin_boot(self, inst: Instance) -> None:
        self._set_state(inst, S.BOOTING)
        self.engine.emit(
            EventKind.INSTANCE_BOOTING, inst.id,
            f"model={inst.model} region={inst.region} group={inst.group_id} rogue={int(inst.rogue)}")
        region = self.regions[inst.region]
        delay = self.engine.stream(f"boot:{inst.id}").lognormal(
            region.boot_median_s, region.boot_sigma)
        self.engine.schedule(self.engine.now() + delay, EventKind.BOOT_COMPLETE, inst.id)

    def on_boot_complete(self, ev) -> None:
        inst = self.instances.get(ev.target)
        if inst is None or inst.state is not S.BOOTING:
            return  # swept or torn down while booting
        self._set_state(inst, S.RUNNING)
        self.engine.emit(EventKind.INSTANCE_RUNNING, inst.id, "")
        self._maybe_schedule_preemption(inst)
        if self.on_running is not None:
            self.on_running(inst)

    def _maybe_schedule_preemption(self, inst: Instance) -> None:
        now = self.engine.now()
        for f in self.faults:
            if f.kind is not FaultKind.PREEMPTION or f.rate_per_hour <= 0:
                continue
            if f.regions is not None and inst.region not in f.regions:
                continue
            if now >= f.t1:
                continue
            start = max(now, f.t0)
            delta = self.engine.stream(f"preempt:{inst.id}").expovariate(
                f.rate_per_hour / 3600.0)
            at = start + delta
            if at < f.t1:
                self.engine.schedule(at, EventKind.PREEMPTION_DUE, inst.id)
            return

    def on_preemption_due(self, ev) -> None:
        inst = self.instances.get(ev.target)
        if inst is None or inst.state is not S.RUNNING:
            return  # already gone; the draw is stale
        self.preempt(inst.id)

    def preempt(self, iid: str) -> None:
        inst = self._instance(iid)
        inst.preempted_flag = True
        self._set_state(inst, S.PREEMPTED)
        self._release_quota(inst)
        self.engine.emit(EventKind.INSTANCE_PREEMPTED, inst.id, "")
        group = self.groups.get(inst.group_id)
        if group is not None:
            group.members.discard(iid)
            self._audit(group, "preempted", 1)
        if self.on_gone is not None:
            self.on_gone(inst, True)
        self._maybe_replace(group)

    def _maybe_replace(self, group: ProvisioningGroup | None) -> None:
        """Instance groups replace terminated members up to the desired count."""
        if group is None or group.flavor is not Flavor.INSTANCE_GROUP or self.frozen:
            return
        short = group.desired - len(self._live_members(group))
        if short > 0:
            grown = self._grow(group, short)
            if grown:
                self._audit(group, "replaced", grown)

    def stop_instance(self, iid: str) -> None:
        """OS-level stop: the instance stays provisioned and keeps billing."""
        inst = self._instance(iid)
        self._set_state(inst, S.STOPPED)
        self.engine.emit(EventKind.INSTANCE_STOPPED, inst.id, "")
        if self.on_gone is not None:
            self.on_gone(inst, False)

    def restart_instance(self, iid: str) -> None:
        inst = self._instance(iid)
        self._set_state(inst, S.RUNNING)
        self.engine.emit(EventKind.INSTANCE_RUNNING, inst.id, "")
        if self.on_running is not None:
            self.on_running(inst)

    def deallocate_instance(self, gid: str, iid: str) -> None:
        """Release a member's capacity; billing stops.  Under the respawn
        bug the call acknowledges but also boots rogue instances that no
        further group operation can reach."""
        group = self._group(gid)
        if iid not in group.members:
            raise UnknownInstance(f"{iid} is not a member of {gid}")
        inst = self._instance(iid)
        self._set_state(inst, S.DEALLOCATED)
        self._release_quota(inst)
        group.members.discard(iid)
        self.engine.emit(EventKind.INSTANCE_DEALLOCATED, inst.id, "")
        self._audit(group, "deallocated", 1)
        if self.on_gone is not None:
            self.on_gone(inst, False)
        bug = self._fault(FaultKind.RESPAWN, group.region, self.engine.now())
        if bug is not None and bug.rogue_per_call > 0:
            self._spawn_rogues(group, bug.rogue_per_call)

    def _spawn_rogues(self, group: ProvisioningGroup, n: int) -> None:
        region = group.region
        key = (region, group.model)
        quota = self.regions[region].quotas.get(group.model, 0)
        room = max(0, quota - self._quota_used.get(key, 0))
        for _ in range(min(n, room)):
            k = self._rogue_seq.get(region, 0)
            self._rogue_seq[region] = k + 1
            iid = f"rogue-{region}-{k:04d}"
            inst = Instance(iid, "", region, group.model, group.flavor,
                            rogue=True, state=S.REQUESTED, marked_surplus=False,
                            preempted_flag=False, bill_start=None)
            self.instances[iid] = inst
            self._quota_used[key] = self._quota_used.get(key, 0) + 1
            self.engine.emit(EventKind.ROGUE_SPAWNED, iid, f"model={inst.model} region={region}")
            self._audit(group, "rogue_spawned", 1)
            self._begin_boot(inst)

    def delete_group_instance(self, gid: str, iid: str) -> None:
        """Terminate a member *and* remove it from the group's membership,
        which is the only path that never triggers auto-replacement."""
        group = self._group(gid)
        if group.flavor is not Flavor.INSTANCE_GROUP:
            raise NotAnInstanceGroup(f"{gid} is a {group.flavor.value}")
        if iid not in group.members:
            raise UnknownInstance(f"{iid} is not a member of {gid}")
        inst = self._instance(iid)
        self._set_state(inst, S.TERMINATED)
        self._release_quota(inst)
        group.members.discard(iid)
        self.engine.emit(EventKind.INSTANCE_TERMINATED, inst.id, "")
        self._audit(group, "deleted", 1)
        if self.on_gone is not None:
            self.on_gone(inst, False)

    def terminate_instance(self, iid: str) -> None:
        """Bare termination.  For instance-group members this is the
        trap: the provider sees membership drop below desired and starts
        a replacement."""
        inst = self._instance(iid)
        self._set_state(inst, S.TERMINATED)
        self._release_quota(inst)
        self.engine.emit(EventKind.INSTANCE_TERMINATED, inst.id, "")
        group = self.groups.get(inst.group_id)
        if group is not None:
            group.members.discard(iid)
            self._audit(group, "terminated", 1)
        if self.on_gone is not None:
            self.on_gone(inst, False)
        self._maybe_replace(group)

    # -- queries ----------------------------------------------------------------

    def query_metadata(self, iid: str) -> MetadataRecord:
        inst = self.instances.get(iid)
        if inst is None or inst.state not in (S.BOOTING, S.RUNNING, S.STOPPED):
            raise NotProvisioned(iid)
        return MetadataRecord(inst.id, inst.group_id, inst.region, inst.model,
                              inst.flavor.value, inst.rogue, inst.state.value,
                              inst.billable)

    def running_counts_by_model(self, include_rogues: bool = False) -> dict[str, int]:
        if not include_rogues:
            return {m: n for m, n in self._running_by_model.items() if n}
        counts: dict[str, int] = {}
        for inst in self.instances.values():
            if inst.state is S.RUNNING and (include_rogues or not inst.rogue):
                counts[inst.model] = counts.get(inst.model, 0) + 1
        return counts

    def active_count(self) -> int:
        """Instances still holding capacity (pending, booting, running, stopped)."""
        return sum(1 for i in self.instances.values() if i.state in ACTIVE_STATES)

    # -- operator actions ---------------------------------------------------------

    def manual_recovery(self, region_id: str) -> int:
        """Release requests frozen by a regional limit stall."""
        self._recovered.add(region_id)
        pending = self._pending_stalled.pop(region_id, [])
        for inst in pending:
            self._begin_boot(inst)
        if pending:
            self.engine.emit(EventKind.STALL_RELEASED, region_id, f"count={len(pending)}")
        return len(pending)

    def manual_sweep(self, region_id: str) -> int:
        """Terminate rogue instances in a region.  Their accrued cost stays
        in the ledger; idempotent."""
        n = 0
        for inst in self.instances.values():
            if inst.rogue and inst.region == region_id and inst.state in ACTIVE_STATES:
                if inst.state is S.REQUESTED:
                    self._set_state(inst, S.BOOTING)  # keep the graph closed
                self._set_state(inst, S.TERMINATED)
                self._release_quota(inst)
                self.engine.emit(EventKind.INSTANCE_TERMINATED, inst.id, "")
                if self.on_gone is not None:
                    self.on_gone(inst, False)   # the pool drops the stale ad
                n += 1
        self.engine.emit(EventKind.SWEPT, region_id, f"count={n}")
        self.audit.append((self.engine.now(), "-", "-", region_id, "swept", n))
        return n

    def tick(self, ev=None) -> None:
        """Periodic housekeeping: auto-release stalls whose window has
        passed without an explicit recovery action."""
        now = self.engine.now()
        for region_id in list(self._pending_stalled):
            if not self._stalled(region_id, now):
                self.manual_recovery(region_id)

    # -- internals ------------------------------------------------------------------

    def _release_quota(self, inst: Instance) -> None:
        key = (inst.region, inst.model)
        self._quota_used[key] = self._quota_used.get(key, 0) - 1

    def _group(self, gid: str) -> ProvisioningGroup:
        try:
            return self.groups[gid]
        except KeyError:
            raise UnknownGroup(gid) from None

    def _instance(self, iid: str) -> Instance:
        try:
            return self.instances[iid]
        except KeyError:
            raise UnknownInstance(iid) from None

"""Discrete-event engine.

A single-threaded event loop over a binary heap ordered by
``(timestamp, insertion seq)``.  Timestamps are float seconds of virtual
time.  Ties dispatch in insertion order, which makes runs with equal seeds
bit-identical: there is no other source of ordering anywhere in the
simulator.

The trace distinguishes two row classes sharing one format:

* *dispatched* rows — events that were scheduled on the heap and popped;
* *effect* rows — state facts recorded by handlers via :meth:`Engine.emit`
  while they process a dispatched event (e.g. ``instance_running``).

Reports are derived exclusively from effect rows; dispatched rows document
the machinery that caused them.  Both carry the same ``(t, seq, kind,
target, detail)`` shape and serialise to one CSV.
"""

from __future__ import annotations

import heapq
from enum import Enum
from typing import Callable, NamedTuple, TextIO

from .errors import SchedulingInPast, UnknownEventKind
from .rng import RngStream


class EventKind(str, Enum):
    # dispatched (heap) events
    PROVISION = "provision"
    SUBMIT_JOBS = "submit_jobs"
    NEGOTIATOR_TICK = "negotiator_tick"
    PROVIDER_TICK = "provider_tick"
    SAMPLE = "sample"
    BOOT_COMPLETE = "boot_complete"
    PREEMPTION_DUE = "preemption_due"
    AD_VISIBLE = "ad_visible"
    START_JOB = "start_job"
    JOB_COMPLETE = "job_complete"
    SHUTDOWN_START = "shutdown_start"
    MANUAL_RECOVERY = "manual_recovery"
    MANUAL_SWEEP = "manual_sweep"

    # effect records emitted by handlers
    GROUP_CREATED = "group_created"
    GROUP_RESIZED = "group_resized"
    INSTANCE_BOOTING = "instance_booting"
    INSTANCE_RUNNING = "instance_running"
    INSTANCE_STOPPED = "instance_stopped"
    INSTANCE_DEALLOCATED = "instance_deallocated"
    INSTANCE_TERMINATED = "instance_terminated"
    INSTANCE_PREEMPTED = "instance_preempted"
    ROGUE_SPAWNED = "rogue_spawned"
    STARTD_REGISTERED = "startd_registered"
    JOB_STARTED = "job_started"
    JOB_COMPLETED = "job_completed"
    JOB_PREEMPTED = "job_preempted"
    JOBS_REMOVED = "jobs_removed"
    STALL_RELEASED = "stall_released"
    SWEPT = "swept"
    POOL_SAMPLE = "pool_sample"


class Event(NamedTuple):
    at: float
    seq: int
    kind: EventKind
    target: str
    detail: str = ""


EventTrace = list  # list[Event]

TRACE_HEADER = "t,seq,kind,target,detail"


def format_trace_row(ev: Event) -> str:
    """One CSV line.  No field may contain a comma; details use k=v pairs."""
    return f"{ev.at!r},{ev.seq},{ev.kind.value},{ev.target},{ev.detail}"


def write_trace_csv(trace: list[Event], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for ev in trace:
            fh.write(format_trace_row(ev) + "\n")


class Engine:
    """Virtual clock, event heap, trace, and the root of all randomness.

    If ``trace_file`` is given, rows are streamed to it as they occur and
    the in-memory trace stays empty (full-scale runs produce ~10^6 rows).
    Otherwise rows accumulate in :attr:`trace`.
    """

    def __init__(self, seed: int = 0, trace_file: TextIO | None = None):
        self.seed = seed
        self._clock = 0.0
        self._seq = 0
        self._heap: list[Event] = []
        self.trace: list[Event] = []
        self._sink = trace_file
        if trace_file is not None:
            trace_file.write(TRACE_HEADER + "\n")
        self.handlers: dict[EventKind, Callable[[Event], None]] = {}

    # -- time and randomness ------------------------------------------------

    def now(self) -> float:
        return self._clock

    def stream(self, stream_id: str) -> RngStream:
        """Independent random stream keyed by this engine's seed."""
        return RngStream(self.seed, stream_id)

    # -- scheduling ----------------------------------------------------------

    def schedule(self, at: float, kind: EventKind, target: str, detail: str = "") -> int:
        """Queue an event; returns its id (the insertion seq)."""
        if not isinstance(kind, EventKind):
            raise UnknownEventKind(f"not an EventKind: {kind!r}")
        if at < self._clock:
            raise SchedulingInPast(
                f"cannot schedule {kind.value} at t={at}; clock is {self._clock}"
            )
        ev = Event(at, self._seq, kind, target, detail)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev.seq

    def on(self, kind: EventKind, fn: Callable[[Event], None]) -> None:
        self.handlers[kind] = fn

    def emit(self, kind: EventKind, target: str, detail: str = "") -> None:
        """Record an effect row at the current clock without queueing."""
        ev = Event(self._clock, self._seq, kind, target, detail)
        self._seq += 1
        self._record(ev)

    # -- the loop ------------------------------------------------------------

    def run_until(self, t_end: float) -> list[Event]:
        """Dispatch every queued event with ``at <= t_end`` in (t, seq) order.

        Afterwards the clock sits at ``t_end`` if events remain queued
        beyond it, else at the time of the last dispatched event.  Returns
        the in-memory trace (empty when streaming to a file).
        """
        heap = self._heap
        while heap and heap[0].at <= t_end:
            ev = heapq.heappop(heap)
            self._clock = ev.at
            self._record(ev)
            fn = self.handlers.get(ev.kind)
            if fn is not None:
                fn(ev)
        if heap and self._clock < t_end:
            self._clock = t_end
        return self.trace

    def _record(self, ev: Event) -> None:
        if self._sink is not None:
            self._sink.write(format_trace_row(ev) + "\n")
        else:
            self.trace.append(ev)

"""Deterministic discrete-event simulator of a bursty multi-cloud GPU pool.

The package models the full arc of a short-notice compute burst: renting
tens of thousands of GPU instances across three cloud providers with
different provisioning semantics, joining them to a central scheduling
pool, running a backlog of GPU jobs against replicated input data, and
tearing everything down again — with a per-instance cost ledger and
science-output accounting throughout.

Typical use::

    from burstsim import load_scenario, run_scenario, emit_outputs

    sc = load_scenario("my_burst.yaml").scaled(0.01)
    result = run_scenario(sc)
    emit_outputs(result, "out/")

or from the shell::

    burstsim simulate reference --scale 0.01 --out out/ --check
"""

from .checks import CheckResult, format_checks, replay_checks
from .economics import CostLedger, Market, PriceBook
from .engine import Engine, Event, EventKind, TRACE_HEADER
from .errors import (
    EmptyTrace,
    IoError,
    ParseError,
    SimError,
    ValidationError,
)
from .providers import Flavor, InstanceState, Providers
from .replay import reference_burst, reference_scenario_path
from .reports import (
    RunReport,
    TraceAggregates,
    aggregate,
    emit_outputs,
    iter_trace_csv,
    rebuild_outputs,
)
from .rng import RngStream, unit_draw
from .scenario import Scenario, load_scenario, parse_scenario, validate
from .simulation import Simulation, SimulationResult, run_scenario
from .workload import InputCatalog, PerfTable

__all__ = [
    "CheckResult",
    "CostLedger",
    "EmptyTrace",
    "Engine",
    "Event",
    "EventKind",
    "Flavor",
    "InputCatalog",
    "InstanceState",
    "IoError",
    "Market",
    "ParseError",
    "PerfTable",
    "PriceBook",
    "Providers",
    "RngStream",
    "RunReport",
    "Scenario",
    "SimError",
    "Simulation",
    "SimulationResult",
    "TraceAggregates",
    "TRACE_HEADER",
    "ValidationError",
    "aggregate",
    "emit_outputs",
    "format_checks",
    "iter_trace_csv",
    "load_scenario",
    "parse_scenario",
    "rebuild_outputs",
    "reference_burst",
    "reference_scenario_path",
    "replay_checks",
    "run_scenario",
    "unit_draw",
    "validate",
]

__version__ = "0.1.0"

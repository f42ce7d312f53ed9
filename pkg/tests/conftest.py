"""Shared fixtures.

The expensive full-scale reference run executes once per session and is
shared by the report and acceptance tests; its wall-clock duration is
recorded because the runtime budget is itself an acceptance criterion.
"""

from __future__ import annotations

import time

import pytest

from burstsim import PerfTable, PriceBook, load_scenario, run_scenario
from burstsim.replay import reference_burst


@pytest.fixture(scope="session")
def perf():
    return PerfTable.load()


@pytest.fixture(scope="session")
def prices(perf):
    return PriceBook(perf)


@pytest.fixture(scope="session")
def reference_scenario():
    return load_scenario(reference_burst())


@pytest.fixture(scope="session")
def small_result(reference_scenario):
    """Reference burst at desk scale (about 515 instances)."""
    return run_scenario(reference_scenario.scaled(0.01))


@pytest.fixture(scope="session")
def full_run(reference_scenario, tmp_path_factory):
    """Reference burst at full scale, trace streamed to disk.

    Returns ``(result, elapsed_seconds)``.
    """
    out = tmp_path_factory.mktemp("full_replay")
    t0 = time.perf_counter()
    result = run_scenario(reference_scenario, trace_path=out / "trace.csv")
    elapsed = time.perf_counter() - t0
    return result, elapsed


@pytest.fixture(scope="session")
def full_result(full_run):
    return full_run[0]

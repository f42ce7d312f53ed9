"""Performance table, job timing, science credit, and storage transfers."""

import pytest
from hypothesis import given, strategies as st

from burstsim.checks import PFLOPH, WALLTIME_H
from burstsim.errors import (
    NoEndpointForRegion,
    UnknownGpuModel,
    UnknownInputClass,
)
from burstsim.workload import (
    DEFAULT_JITTER,
    InputCatalog,
    InputClassSpec,
    PerfTable,
    StorageEndpoint,
    science_output,
    size_factor,
    transfer_time,
)

RENTABLE = ["V100", "P100", "P40", "T4", "P4", "M60", "K80", "K520"]


@pytest.fixture(scope="module")
def perf():
    return PerfTable.load()


def test_model_set(perf):
    assert sorted(perf.rentable_models()) == sorted(RENTABLE)
    assert "GTX1080" in perf and perf["GTX1080"].price_point is None
    assert "V100" in perf and "H100" not in perf
    with pytest.raises(UnknownGpuModel):
        perf["H100"]


def test_reference_runtimes_exact(perf):
    # frozen oracles: runtime_min * 60 * size_factor, no jitter
    assert perf.runtime_for("V100", "Standard") == 1440.0
    assert perf.runtime_for("K520", "Standard") == 18600.0
    assert perf.runtime_for("K80", "Small") == 1035.0
    assert perf.runtime_for("K520", "Small") == 2325.0
    assert perf.runtime_for("M60", "Standard") == 5700.0


def test_runtime_jitter_bounds(perf):
    base = perf.runtime_for("T4", "Standard")
    lo = perf.runtime_for("T4", "Standard", jitter_u=0.0)
    hi = perf.runtime_for("T4", "Standard", jitter_u=1.0 - 1e-12)
    assert lo == pytest.approx(base * (1 - DEFAULT_JITTER))
    assert hi == pytest.approx(base * (1 + DEFAULT_JITTER), rel=1e-9)
    mid = perf.runtime_for("T4", "Standard", jitter_u=0.5)
    assert mid == pytest.approx(base)


@given(st.floats(0.0, 1.0, exclude_max=True))
def test_runtime_jitter_never_escapes_band(u):
    perf = PerfTable.load()
    r = perf.runtime_for("K80", "Standard", jitter_u=u)
    base = 138 * 60.0
    assert base * (1 - DEFAULT_JITTER) <= r <= base * (1 + DEFAULT_JITTER)


def test_size_factor_override_wins(perf):
    assert perf.runtime_for("V100", "Standard", size_factor_override=0.5) == 720.0
    # override applies even when the class name alone would say otherwise
    assert perf.runtime_for("V100", "Small", size_factor_override=1.0) == 1440.0


def test_size_factor_and_science():
    assert size_factor("Standard") == 1.0
    assert size_factor("Small") == 0.125
    with pytest.raises(UnknownInputClass):
        size_factor("Gigantic")
    assert science_output("Standard") == 1.0
    assert science_output("Small") == 0.125
    assert science_output("Standard", completed=False) == 0.0


def test_pool_compute_aggregation(perf):
    # frozen oracle: 9,200 V100 at 14 TFLOPS32 each
    assert perf.pflops32_of({"V100": 9200}) == pytest.approx(128.8)
    assert perf.pflops32_of({"V100": 1}) == pytest.approx(0.014)
    assert perf.pflops32_of({}) == 0.0
    two = perf.pflops32_of({"V100": 1, "K80": 2})
    assert two == pytest.approx((14 + 2 * 4.1) / 1000.0)


def test_totals_cross_check_within_four_percent(perf):
    # the frozen whole-run targets must be mutually consistent:
    # walltime x per-card throughput reproduces compute-hours.  The source
    # tables round each column independently, so the bound is 4%, with the
    # V100 row carrying the largest residual.
    for m in RENTABLE:
        implied = WALLTIME_H[m] * perf[m].tflops32 / 1000.0
        assert implied == pytest.approx(PFLOPH[m], rel=0.04), m


def test_transfer_time_oracles():
    fast = StorageEndpoint("r1")                      # 1 Tbps local store
    assert transfer_time(10e9, fast, "read") == pytest.approx(0.08)
    slow = StorageEndpoint("r2", read_bps=100e9, write_bps=100e9)
    assert transfer_time(10e9, slow, "read") == pytest.approx(0.8)
    assert transfer_time(0.0, fast, "write") == 0.0
    with pytest.raises(ValueError):
        transfer_time(-1.0, fast, "read")


def test_catalog_resolution():
    cat = InputCatalog(
        classes={"Standard": InputClassSpec("Standard", 1.0, frozenset({"r1"}))},
        endpoints={"r1": StorageEndpoint("r1")},
    )
    assert cat.spec("Standard").size_factor == 1.0
    assert cat.resolve_storage("r1").region == "r1"
    with pytest.raises(UnknownInputClass):
        cat.spec("Small")
    with pytest.raises(NoEndpointForRegion):
        cat.resolve_storage("r2")


def test_perf_table_loads_from_explicit_path(tmp_path):
    p = tmp_path / "perf.csv"
    p.write_text("model,runtime_min,tflops32,corr,price_min,price_max,price_point\n"
                 "X1,10,2.0,1.0,0.1,0.2,0.15\n")
    t = PerfTable.load(p)
    assert t["X1"].tflops32 == 2.0
    assert t.rentable_models() == ["X1"]

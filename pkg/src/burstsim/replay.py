"""The shipped reference scenario: a three-hour multi-cloud GPU burst.

One calibrated run: 28 regions across three providers fill a pool to a
~51.5k-instance peak in well under two hours, hold it briefly, then tear
everything down in a controlled drain.  The shape of the ramp is produced
by staged provisioning waves:

* *early* waves (minutes 1-18) bring up the bulk of the fast-booting
  capacity, with a few top-up resizes in the twenties;
* five regions hit a regional request limit at t=0 — their instances sit
  frozen until recovery at t=50 min, which produces the second sharp rise;
* *late* waves (minutes 62-70) add the last slices of capacity;
* fixed-size groups cannot resize, so their spot losses are compensated by
  small top-up creations late in the ramp, while resizable groups re-assert
  their desired size every ten minutes and member-replacing groups heal
  themselves.

Shutdown starts at t=115 min: idle GPU work is dropped, every slot drains,
and each instance is deprovisioned through its provider's own teardown
path as it finishes its last job.  One region's deallocate path carries
the deprovision bug for the first twenty minutes of teardown, leaving
rogue instances that bill until an operator sweep at t=170 min.

The module both *generates* the scenario (tables below) and ships a frozen
copy as package data; a test pins the two together so calibration edits
stay visible in review.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import yaml

MIN = 60.0  # seconds

SEED = 2203
HORIZON_S = 13500.0
SHUTDOWN_S = 6900.0          # 115 min
STALL_END_S = 3000.0         # 50 min: manual recovery releases frozen requests
SWEEP_S = 10200.0            # 170 min: rogue cleanup
RESPAWN_WINDOW = (6900.0, 8100.0)

#: region -> (flavor, geo, boot_median_s, boot_sigma, wan_latency_s)
REGIONS = {
    "a-us-east-1":            ("fleet", "us-east", 160, 0.5, 0.030),
    "a-us-east-2":            ("fleet", "us-east", 170, 0.5, 0.032),
    "a-us-west-1":            ("fleet", "us-west", 200, 0.5, 0.068),
    "a-us-west-2":            ("fleet", "us-west", 120, 0.4, 0.070),
    "a-ca-central-1":         ("fleet", "na-east", 220, 0.5, 0.040),
    "a-eu-west-1":            ("fleet", "europe", 240, 0.5, 0.088),
    "a-eu-central-1":         ("fleet", "europe", 260, 0.5, 0.094),
    "a-ap-northeast-1":       ("fleet", "asia", 200, 0.5, 0.145),
    "a-ap-southeast-2":       ("fleet", "oceania", 130, 0.4, 0.150),
    "a-sa-east-1":            ("fleet", "sa-east", 210, 0.5, 0.120),
    "b-eastus":               ("scale_set", "us-east", 150, 0.5, 0.031),
    "b-eastus2":              ("scale_set", "us-east", 160, 0.5, 0.031),
    "b-westus2":              ("scale_set", "us-west", 190, 0.5, 0.066),
    "b-japaneast":            ("scale_set", "asia", 210, 0.5, 0.140),
    "b-australiaeast":        ("scale_set", "oceania", 230, 0.5, 0.152),
    "b-northeurope":          ("scale_set", "europe", 140, 0.5, 0.085),
    "b-westeurope":           ("scale_set", "europe", 150, 0.5, 0.086),
    "b-uksouth":              ("scale_set", "europe", 180, 0.5, 0.080),
    "b-southcentralus":       ("scale_set", "us-south", 120, 0.4, 0.045),
    "b-southeastasia":        ("scale_set", "asia", 125, 0.4, 0.170),
    "c-us-central1":          ("instance_group", "us-central", 190, 0.5, 0.042),
    "c-us-east1":             ("instance_group", "us-east", 150, 0.5, 0.033),
    "c-us-west1":             ("instance_group", "us-west", 200, 0.5, 0.067),
    "c-europe-west1":         ("instance_group", "europe", 140, 0.5, 0.087),
    "c-europe-west4":         ("instance_group", "europe", 210, 0.5, 0.090),
    "c-asia-east1":           ("instance_group", "asia", 120, 0.4, 0.138),
    "c-asia-northeast1":      ("instance_group", "asia", 230, 0.5, 0.142),
    "c-australia-southeast1": ("instance_group", "oceania", 220, 0.5, 0.155),
}

STALLED_REGIONS = ["a-us-west-2", "a-ap-southeast-2",
                   "b-southeastasia", "c-asia-east1"]
RESPAWN_REGIONS = ["b-australiaeast"]

#: name -> (region, model, create_t_s, count, max_size, [(resize_t_s, desired), ...])
#: max_size only applies to scale sets.
GROUPS = {
    # -- early waves: the bulk of the burst --------------------------------
    "p100-neur":    ("b-northeurope", "P100", 66.0, 2400, 3100, []),
    "p100-weur":    ("b-westeurope", "P100", 95.0, 2300, 3000, []),
    "p100-euw1c":   ("c-europe-west1", "P100", 130.0, 2400, None, []),
    "v100-use1":    ("a-us-east-1", "V100", 128.0, 1500, None, []),
    "v100-eastus":  ("b-eastus", "V100", 185.0, 2200, 3000, []),
    "p40-uks":      ("b-uksouth", "P40", 200.0, 1830, 2400, []),
    "v100-use2":    ("a-us-east-2", "V100", 244.0, 1500, None, []),
    "v100-use1c":   ("c-us-east1", "V100", 275.0, 1500, None, []),
    "v100-eastus2": ("b-eastus2", "V100", 310.0, 2100, 3200, [(3780.0, 2500)]),
    "m60-usw1":     ("a-us-west-1", "M60", 425.0, 2600, None, []),
    "k80-euw1":     ("a-eu-west-1", "K80", 430.0, 2125, None, []),
    # the M60 pair grows in two steps: job runtime on M60 is long enough
    # that capacity arriving before ~20 min picks up a second job right at
    # the teardown deadline and drains for nearly a full extra run
    "m60-westus2":  ("b-westus2", "M60", 490.0, 1750, 3400, [(1380.0, 2600)]),
    "m60-jpe":      ("b-japaneast", "M60", 545.0, 1750, 3400, [(1380.0, 2600)]),
    "k80-euc1":     ("a-eu-central-1", "K80", 560.0, 2125, None, []),
    "t4-cac1":      ("a-ca-central-1", "T4", 730.0, 640, None, []),
    "p40-scus":     ("b-southcentralus", "P40", 11.0, 270, 400, []),
    # -- trickle top-ups in the twenties -----------------------------------
    "k80-asne1c":   ("c-asia-northeast1", "K80", 1080.0, 1000, None,
                     [(1440.0, 2000), (3900.0, 3950)]),
    "t4-usw1c":     ("c-us-west1", "T4", 1200.0, 500, None, [(1560.0, 1000)]),
    "m60-ause":     ("b-australiaeast", "M60", 1320.0, 500, 1400, [(1500.0, 1000)]),
    # -- stalled at creation; released at t=50 min --------------------------
    "m60-usw2":     ("a-us-west-2", "M60", 5.0, 900, None, []),
    "k520-apse2":   ("a-ap-southeast-2", "K520", 8.0, 3200, None, []),
    "t4-seasia":    ("b-southeastasia", "T4", 14.0, 2000, 2600, []),
    "k80-asiae1c":  ("c-asia-east1", "K80", 17.0, 4300, None, []),
    # -- late waves ----------------------------------------------------------
    "k520-apne1":   ("a-ap-northeast-1", "K520", 3720.0, 1100, None, []),
    "m60-ause1c":   ("c-australia-southeast1", "M60", 3840.0, 400, None, []),
    "t4-usc1c":     ("c-us-central1", "T4", 3900.0, 960, None, []),
    "k520-sae1":    ("a-sa-east-1", "K520", 3960.0, 1100, None, []),
    "p4-euw4c":     ("c-europe-west4", "P4", 4200.0, 500, None, []),
}

#: Fixed-size groups cannot resize, so spot losses accumulated over the ramp
#: are compensated by one late top-up creation per region (t = 104 min),
#: sized to the expected cumulative loss at peak time.
FLEET_TOPUP_S = 6240.0
FLEET_TOPUPS = {
    "v100-use1": 51,
    "v100-use2": 49,
    "m60-usw1": 81,
    "m60-usw2": 15,
    "t4-cac1": 19,
    "k80-euw1": 66,
    "k80-euc1": 65,
    "k520-apne1": 14,
    "k520-apse2": 55,
    "k520-sae1": 13,
}

#: Resizable groups re-assert their desired size on this schedule, booting
#: replacements for members lost to preemption since the last pass.
REASSERT_TIMES_S = [2400.0, 3000.0, 3600.0, 4200.0, 4800.0, 5400.0, 6000.0, 6600.0]

QUOTA_MARGIN = 1.06

WORKLOAD = [
    {"t": 0.0, "kind": "gpu", "input_class": "Standard", "count": 90000},
    {"t": 0.0, "kind": "gpu", "input_class": "Small", "count": 80000},
    {"t": 0.0, "kind": "cpu", "count": 110000},
    {"t": 1800.0, "kind": "gpu", "input_class": "Standard", "count": 25000},
]

SMALL_INPUT_MODELS = {"K80", "K520"}


def _quotas() -> dict[str, dict[str, int]]:
    want: dict[str, dict[str, int]] = {r: {} for r in REGIONS}
    for name, (region, model, _t, count, _max, resizes) in GROUPS.items():
        peak = max([count] + [d for _, d in resizes])
        extra = FLEET_TOPUPS.get(name, 0)
        want[region][model] = want[region].get(model, 0) + peak + extra
    return {
        r: {m: int(n * QUOTA_MARGIN) + 10 for m, n in per.items()}
        for r, per in want.items()
    }


def reference_burst() -> dict:
    """The reference scenario as a plain YAML-ready mapping."""
    quotas = _quotas()
    regions = []
    for rid, (flavor, geo, boot_med, boot_sig, wan) in REGIONS.items():
        regions.append({
            "id": rid, "flavor": flavor, "geo": geo,
            "boot_median_s": float(boot_med), "boot_sigma": boot_sig,
            "wan_latency_s": wan, "quotas": quotas[rid],
        })

    small_regions = sorted(
        r for r, (_f, _g, _b, _s, _w) in REGIONS.items()
        if any(GROUPS[n][0] == r and GROUPS[n][1] in SMALL_INPUT_MODELS
               for n in GROUPS))
    standard_regions = sorted(set(REGIONS) - set(small_regions))

    plan = []
    for name, (region, model, t, count, max_size, resizes) in GROUPS.items():
        entry = {"t": t, "action": "create", "name": name,
                 "region": region, "model": model, "count": count}
        if max_size is not None:
            entry["max_size"] = max_size
        plan.append(entry)
        for rt, desired in resizes:
            plan.append({"t": rt, "action": "resize", "name": name,
                         "desired": desired})
        if max_size is not None:  # member-replacing groups heal themselves
            for rt in REASSERT_TIMES_S:
                if rt > t + MIN and all(abs(rt - x) > 1.0 for x, _ in resizes):
                    plan.append({"t": rt, "action": "reassert", "name": name})
    for name, extra in FLEET_TOPUPS.items():
        region, model = GROUPS[name][0], GROUPS[name][1]
        plan.append({"t": FLEET_TOPUP_S, "action": "create",
                     "name": f"{name}-topup", "region": region,
                     "model": model, "count": extra})
    plan.sort(key=lambda e: (e["t"], e["name"]))

    operator = [{"t": STALL_END_S, "action": "manual_recovery", "region": r}
                for r in STALLED_REGIONS]
    operator += [{"t": SWEEP_S, "action": "manual_sweep", "region": r}
                 for r in RESPAWN_REGIONS]

    return {
        "seed": SEED,
        "horizon_s": HORIZON_S,
        "sample_period_s": 60.0,
        "pool": {
            "gpu_schedds": 10, "cpu_schedds": 20, "schedd_cap": 12000,
            "leaves_per_region": 20, "negotiator_period_s": 60.0,
            "prefetch_bug": False,
        },
        "regions": regions,
        "inputs": {
            "Standard": {"replica_regions": standard_regions,
                         "file_size_bytes": 1.0e10},
            "Small": {"replica_regions": small_regions,
                      "file_size_bytes": 1.25e9},
        },
        "plan": plan,
        "workload": [dict(w) for w in WORKLOAD],    # callers may mutate freely
        "shutdown": {"t_s": SHUTDOWN_S},
        "faults": [
            {"kind": "preemption", "t0": 0.0, "t1": HORIZON_S,
             "rate_per_hour": 0.02},
            {"kind": "regional_limit_stall", "t0": 0.0, "t1": STALL_END_S,
             "regions": STALLED_REGIONS},
            {"kind": "deprovision_respawn", "t0": RESPAWN_WINDOW[0],
             "t1": RESPAWN_WINDOW[1], "regions": RESPAWN_REGIONS,
             "rogue_per_call": 1},
        ],
        "operator": operator,
    }


def reference_scenario_text() -> str:
    return yaml.safe_dump(reference_burst(), sort_keys=False, width=100)


def reference_scenario_path() -> Path:
    """Path of the frozen copy shipped as package data."""
    return Path(str(resources.files("burstsim.data").joinpath("reference_burst.yaml")))

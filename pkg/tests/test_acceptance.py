"""Acceptance criteria, one test each.

Every test appends a ``criterion N: PASS|FAIL`` line (with the measured
values) to ``ACCEPTANCE_LINES``; the lines are printed in a dedicated section
at the end of the pytest run.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

import property_suites
from conftest import (
    ACCEPTANCE_LINES,
    DARFIELD,
    bad_phone_intervals,
    good_phone_intervals,
    interval_record,
    msg,
    noise_free_scenario,
)
from eewsim.detect import DetectorParams, cluster_triggers, online_detect
from eewsim.geo import great_circle_distance
from eewsim.metrics import aggregate
from eewsim.netsim import (
    DEFAULT_QUALITY_MIXTURE,
    assign_quality,
    make_phones,
    sample_clock_offset,
    sample_phone_locations,
    uniform_grid,
)
from eewsim.pipeline import run_once
from eewsim.quality import quality_report
from eewsim.scenario import load_scenario
from eewsim.trigger import simulate_false_positives
from oracles import as_cluster_sets, brute_dbscan


def record(n, title, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------- 1


def test_criterion_1_darfield_end_to_end():
    sc = load_scenario(DARFIELD)
    seeds = [sc.seed + i for i in range(50)]
    start = time.perf_counter()
    results = [run_once(sc, s) for s in seeds]
    elapsed = time.perf_counter() - start

    steady_near = min(
        sum(p.steady and great_circle_distance(p.location, sc.epicenter) <= 150.0
            for p in r.simulation.phones)
        for r in results)
    s = aggregate([r.metrics for r in results])
    ok = (steady_near >= 2000 and s.detection_rate == 1.0 and s.median_latency_s <= 10.0
          and s.median_abs_magnitude_error <= 0.5 and elapsed <= 60.0)
    record(1, "Darfield M7.2, 50 runs", ok,
           f"min steady phones within 150 km {steady_near}, detection rate {s.detection_rate:.2f}, "
           f"median latency {s.median_latency_s:.2f} s, median |magnitude error| "
           f"{s.median_abs_magnitude_error:.3f}, false alerts {s.false_alerts}, runtime {elapsed:.1f} s")
    assert steady_near >= 2000
    assert s.detection_rate == 1.0
    assert s.median_latency_s <= 10.0
    assert s.median_abs_magnitude_error <= 0.5
    assert elapsed <= 60.0


# ---------------------------------------------------------------- 2


def test_criterion_2_noise_free_inversion():
    worst = [0.0, 0.0, 0.0]
    n_min = math.inf
    events_ok = True
    for seed in range(50):
        sc = noise_free_scenario(seed=seed)
        res = run_once(sc)
        stream = res.simulation.stream
        events_ok &= len(res.events) == 1
        estimates = [sc.estimator().estimate(stream[:30])]
        if res.events:
            estimates.append(res.events[0].final)
        for est in estimates:
            n_min = min(n_min, est.n)
            worst[0] = max(worst[0], great_circle_distance(est.epicenter, sc.epicenter))
            worst[1] = max(worst[1], abs(est.origin_time - sc.origin_time))
            worst[2] = max(worst[2], abs(est.magnitude - sc.magnitude))
    ok = events_ok and n_min >= 30 and worst[0] <= 2.0 and worst[1] <= 0.5 and worst[2] <= 0.01
    record(2, "noise-free inversion, 50 seeds, >= 30 triggers", ok,
           f"one detection per run {events_ok}, worst epicentre {worst[0]:.2e} km, "
           f"origin {worst[1]:.2e} s, magnitude {worst[2]:.2e}")
    assert events_ok and n_min >= 30
    assert worst[0] <= 2.0 and worst[1] <= 0.5 and worst[2] <= 0.01


# ---------------------------------------------------------------- 3


def test_criterion_3_clustering_oracle():
    rng = np.random.default_rng(2024)
    mismatches, sizes = 0, []
    for _ in range(100):
        n = int(rng.integers(0, 201))
        sizes.append(n)
        lat = -43.5 + rng.uniform(-0.4, 0.4, n)
        lon = 172.0 + rng.uniform(-0.5, 0.5, n)
        t = np.sort(rng.uniform(0, rng.uniform(20, 300), n))
        w = rng.uniform(0.0, 1.0, n)
        s = [msg(i, float(a), float(b), float(c), w=float(x)) for i, (a, b, c, x) in enumerate(zip(lat, lon, t, w))]
        p = DetectorParams(min_weight=float(rng.uniform(1.0, 6.0)))
        clusters, _ = cluster_triggers(s, p)
        ref = brute_dbscan([(m.lat, m.lon, m.t_report, m.weight) for m in s], p.eps_space, p.eps_time,
                           p.min_weight)
        mismatches += as_cluster_sets(ref) != {frozenset(c) for c in clusters}
    ok = mismatches == 0
    record(3, "DBSCAN equals brute-force oracle", ok,
           f"100 streams, n from {min(sizes)} to {max(sizes)}, mismatches {mismatches}")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_clock_offsets():
    x = sample_clock_offset(np.random.default_rng(4), size=100_000)
    frac = float(np.mean(np.abs(x) <= 2.5))
    ok = 0.89 <= frac <= 0.91
    record(4, "clock offsets within 2.5 s", ok, f"fraction {frac:.4f} of 1e5 draws")
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_false_alarms():
    grid = uniform_grid(-44.45, -42.65, 170.97, 173.37, 0.01)
    total, n_fp = 0, 0
    for seed in range(1000, 1020):
        rng = np.random.default_rng(seed)
        phones = make_phones(sample_phone_locations(grid, 5000, rng))
        phones = [replace(p, steady=True) for p in assign_quality(phones, DEFAULT_QUALITY_MIXTURE, rng)]
        fp = simulate_false_positives(phones, (0.0, 86400.0), 1.0 / 24.0, rng)
        n_fp += len(fp)
        total += len(online_detect(fp, DetectorParams()))
    ok = total == 0
    record(5, "no detections from false triggers", ok,
           f"20 seeds x 24 h x 5000 steady phones, {n_fp} false triggers, {total} detections")
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_6_quality_fixtures():
    good = quality_report(interval_record(good_phone_intervals(), 0.005, seed=11))
    bad = quality_report(interval_record(bad_phone_intervals(), 0.03, seed=12))
    checks = [
        abs(good.noise_std - 0.005) <= 0.06 * 0.005,
        abs(bad.noise_std - 0.03) <= 0.06 * 0.03,
        (good.gaps_gt_1s, good.gaps_gt_2s) == (0, 0),
        (bad.gaps_gt_1s, bad.gaps_gt_2s) == (35, 32),
        (good.interval_p25, good.interval_p50, good.interval_p75) == (39.0, 40.0, 41.0),
        (bad.interval_p25, bad.interval_p50, bad.interval_p75) == (1.0, 59.0, 60.0),
        good.weight >= 0.9,
        bad.weight <= 0.05,
    ]
    ok = all(checks)
    record(6, "quality metrics on good and bad phone fixtures", ok,
           f"noise {good.noise_std:.5f}/{bad.noise_std:.4f}, gaps {good.gaps_gt_1s},{good.gaps_gt_2s}/"
           f"{bad.gaps_gt_1s},{bad.gaps_gt_2s}, percentiles "
           f"{good.interval_p25:g},{good.interval_p50:g},{good.interval_p75:g}/"
           f"{bad.interval_p25:g},{bad.interval_p50:g},{bad.interval_p75:g}, "
           f"weights {good.weight:.3f}/{bad.weight:.3f}")
    assert ok


# ---------------------------------------------------------------- 7


@pytest.mark.parametrize("name", list(property_suites.SUITES))
def test_criterion_7_property_suites(name):
    start = time.perf_counter()
    n = property_suites.SUITES[name]()
    elapsed = time.perf_counter() - start
    ok = n >= 1000 and elapsed <= 30.0
    record(7, f"property suite: {name}", ok, f"{n} cases in {elapsed:.1f} s")
    assert n >= 1000
    assert elapsed <= 30.0

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eewsim.geo import GeoPoint  # noqa: E402
from eewsim.netsim import DiurnalCurve, QualityClass, uniform_grid  # noqa: E402
from eewsim.quality import WaveformRecord  # noqa: E402
from eewsim.scenario import EarthquakeScenario  # noqa: E402
from eewsim.trigger import TriggerMessage  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
DARFIELD = ROOT / "scenarios" / "darfield.json"

# acceptance lines collected by test_acceptance and echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def noise_free_scenario(seed=0, lat=-43.55, lon=172.17, mag=6.0, n=300, **kw):
    """Zero offsets, zero delays, step trigger, no site scatter, no false triggers;
    every steady phone triggers on the P wave."""
    grid = uniform_grid(lat - 0.5, lat + 0.5, lon - 0.6, lon + 0.6, 0.01, 1.0)
    args = dict(depth_km=0.0, origin_time=1.0e9, grid=grid, phone_count=n,
                pga_sigma_log10=0.0, offset_scale_s=0.0, diurnal=DiurnalCurve.constant(1.0),
                quality_mixture=(QualityClass(1.0, 1.0, -3.0, (0.0, 0.0)),),
                k_steepness=math.inf, fp_rate=0.0, seed=seed)
    args.update(kw)
    return EarthquakeScenario(GeoPoint(lat, lon), mag, **args)


def msg(pid, lat, lon, t, amp=0.01, w=1.0, src=None):
    return TriggerMessage(pid, GeoPoint(lat, lon), float(t), amp, w, src)


def interval_record(intervals_ms, sigma, seed, t_start=1283531741.0, trigger_after=60.0,
                    phone_id=0):
    """Record whose consecutive timestamps differ by ``intervals_ms`` (exact
    integer milliseconds) with N(0, sigma^2) samples on every component."""
    rng = np.random.default_rng(seed)
    steps = np.concatenate([[0], np.cumsum(np.asarray(intervals_ms, dtype=np.int64))])
    t = t_start + steps / 1000.0
    xyz = rng.normal(0.0, sigma, size=(3, t.size))
    return WaveformRecord(phone_id, t_start + trigger_after, t, *xyz)


def good_phone_intervals(k=1875, seed=0):
    """n = 4k+1 intervals whose linear 25/50/75 percentiles are exactly 39/40/41 ms."""
    iv = np.array([39] * (k + 1) + [40] * (2 * k - 1) + [41] * (k + 1))
    return np.random.default_rng(seed).permutation(iv)


def bad_phone_intervals(seed=0):
    """Percentiles exactly 1/59/60 ms, 35 gaps above 1 s of which 32 above 2 s."""
    iv = np.array([1] * 1001 + [59] * 1000 + [60] * 1965 + [1500] * 3 + [2500] * 32)
    return np.random.default_rng(seed).permutation(iv)


@pytest.fixture
def good_record():
    return interval_record(good_phone_intervals(), 0.005, seed=11)


@pytest.fixture
def bad_record():
    return interval_record(bad_phone_intervals(), 0.03, seed=12)

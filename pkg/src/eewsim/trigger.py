"""Trigger stream generation: wavefront triggers plus random false positives."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from eewsim.errors import ConfigurationError, ContractError, InputError
from eewsim.geo import GeoPoint, haversine_km
from eewsim.gmm import GAL_PER_MS2, predict_log_pga

SOURCES = ("p", "s", "fp")

# per-phone substream tags
_TAG_EVENT = 1


@dataclass(frozen=True, slots=True)
class TriggerMessage:
    phone_id: int
    location: GeoPoint
    t_report: float
    amplitude: float
    weight: float = 1.0
    provenance: str | None = None

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise InputError(f"amplitude must be >= 0, got {self.amplitude}")
        if not 0.0 <= self.weight <= 1.0:
            raise InputError(f"weight {self.weight} outside [0, 1]")
        if self.provenance is not None and self.provenance not in SOURCES:
            raise InputError(f"unknown provenance {self.provenance!r}")

    @property
    def lat(self) -> float:
        return self.location.lat

    @property
    def lon(self) -> float:
        return self.location.lon


def is_sorted(stream) -> bool:
    return all(a.t_report <= b.t_report for a, b in zip(stream, stream[1:]))


def require_sorted(stream, name="stream") -> None:
    for i in range(1, len(stream)):
        if stream[i].t_report < stream[i - 1].t_report:
            raise ContractError(f"{name} is not time-ordered at position {i}")


def _logistic(x, k):
    x = np.asarray(x, dtype=float)
    if math.isinf(k):
        return np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))
    # exp overflow for very negative k*x just saturates to 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-k * x))


def trigger_probability(log_pga_at_phone, phone, k: float = 4.0):
    """Logistic trigger probability around the phone's log10 PGA threshold.

    ``phone`` may be a :class:`~eewsim.netsim.PhoneAgent` or a bare threshold.
    ``k = inf`` gives a step function (0.5 exactly at the threshold).
    """
    if not k > 0:
        raise ConfigurationError(f"steepness must be > 0, got {k}")
    thr = getattr(phone, "trigger_threshold", phone)
    out = _logistic(np.asarray(log_pga_at_phone, dtype=float) - thr, k)
    return float(out) if out.ndim == 0 else out


def phone_uniforms(base_seed: int, phone_ids, tag: int, n: int) -> np.ndarray:
    """``n`` open-interval uniforms per phone, keyed only by (seed, tag, phone id)."""
    out = np.empty((len(phone_ids), n))
    for row, pid in enumerate(phone_ids):
        words = np.random.SeedSequence(base_seed, spawn_key=(tag, int(pid))).generate_state(n, np.uint64)
        out[row] = ((words >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53
    return out


def simulate_event_triggers(scenario, phones, rng: np.random.Generator) -> list[TriggerMessage]:
    """True triggers for ``scenario`` from steady phones.

    Each steady phone gets one chance at P passage (P-scaled PGA) and, failing
    that, one at S passage (full PGA). Random numbers come from per-phone
    substreams, so a phone's draws do not depend on the other phones.
    """
    base = int(rng.integers(0, 2**63))
    steady = [ph for ph in phones if ph.steady]
    if not steady:
        return []
    ids = np.array([ph.id for ph in steady])
    lat = np.array([ph.location.lat for ph in steady])
    lon = np.array([ph.location.lon for ph in steady])
    thr = np.array([ph.trigger_threshold for ph in steady])
    delay = np.array([ph.detection_delay for ph in steady])
    offset = np.array([ph.clock_offset for ph in steady])
    weight = np.array([ph.quality_weight for ph in steady])

    epi = haversine_km(scenario.epicenter.lat, scenario.epicenter.lon, lat, lon)
    d_hyp = np.hypot(epi, scenario.depth_km)
    u = phone_uniforms(base, ids, _TAG_EVENT, 3)
    site = scenario.pga_sigma_log10 * ndtri(u[:, 2])
    log_s = np.asarray(predict_log_pga(scenario.gmm, scenario.magnitude, d_hyp)) + site
    log_p = log_s + math.log10(scenario.p_fraction)

    k = scenario.k_steepness
    on_p = u[:, 0] < _logistic(log_p - thr, k)
    on_s = ~on_p & (u[:, 1] < _logistic(log_s - thr, k))

    out = []
    for mask, speed, logs, src in ((on_p, scenario.speeds.vp, log_p, "p"),
                                   (on_s, scenario.speeds.vs, log_s, "s")):
        t_true = scenario.origin_time + d_hyp[mask] / speed + delay[mask]
        t_rep = t_true + offset[mask]
        amp = 10.0 ** logs[mask] / GAL_PER_MS2
        for j, i in enumerate(np.flatnonzero(mask)):
            out.append(TriggerMessage(int(ids[i]), steady[i].location, float(t_rep[j]),
                                      float(amp[j]), float(weight[i]), src))
    out.sort(key=lambda m: (m.t_report, m.phone_id))
    return out


def simulate_false_positives(phones, window, rate: float, rng: np.random.Generator,
                             amp_range=(-1.0, 0.5), min_separation: float = 30.0):
    """Homogeneous Poisson false triggers on steady phones.

    ``rate`` is events per phone-hour; ``amp_range`` bounds log10 amplitude in
    cm/s^2. Events closer than ``min_separation`` seconds to the previous kept
    event of the same phone are dropped.
    """
    t_start, t_end = window
    if t_end < t_start:
        raise InputError("window end precedes start")
    if rate < 0:
        raise ConfigurationError(f"false-positive rate must be >= 0, got {rate}")
    steady = [ph for ph in phones if ph.steady]
    span = t_end - t_start
    if rate == 0 or span == 0 or not steady:
        return []
    counts = rng.poisson(rate * span / 3600.0, size=len(steady))
    total = int(counts.sum())
    owner = np.repeat(np.arange(len(steady)), counts)
    times = t_start + rng.random(total) * span
    lo, hi = amp_range
    amps = 10.0 ** rng.uniform(lo, hi, size=total) / GAL_PER_MS2

    order = np.lexsort((times, owner))
    out = []
    last_owner, last_t = -1, -math.inf
    for i in order:
        o = owner[i]
        if o == last_owner and times[i] - last_t < min_separation:
            continue
        last_owner, last_t = o, times[i]
        ph = steady[o]
        out.append(TriggerMessage(ph.id, ph.location, float(times[i]), float(amps[i]),
                                  ph.quality_weight, "fp"))
    out.sort(key=lambda m: (m.t_report, m.phone_id))
    return out


def merge_streams(a, b) -> list[TriggerMessage]:
    """Stable time-ordered merge; on equal times elements of ``a`` come first."""
    require_sorted(a, "first stream")
    require_sorted(b, "second stream")
    return list(heapq.merge(a, b, key=lambda m: m.t_report))

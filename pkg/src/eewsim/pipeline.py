"""End-to-end runs: network synthesis, trigger simulation, detection, scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from eewsim.alert import city_warnings
from eewsim.detect import online_detect
from eewsim.geo import destination
from eewsim.metrics import RunMetrics, evaluate_run
from eewsim.netsim import (
    assign_clock_offsets,
    assign_quality,
    make_phones,
    mark_steady,
    sample_phone_locations,
)
from eewsim.trigger import merge_streams, simulate_event_triggers, simulate_false_positives


def build_network(sc, rng: np.random.Generator):
    """Phones for a scenario. Consumes ``rng`` in a fixed order."""
    if sc.n_phones == 0:
        return []
    phones = make_phones(sample_phone_locations(sc.grid, sc.n_phones, rng))
    phones = mark_steady(phones, sc.diurnal, sc.local_hour, rng)
    phones = assign_clock_offsets(phones, sc.offset_scale_s, rng)
    return assign_quality(phones, sc.quality_mixture, rng)


@dataclass
class Simulation:
    scenario: object
    seed: int
    phones: list
    event_triggers: list
    false_triggers: list
    stream: list = field(default_factory=list)

    def truth(self) -> dict:
        sc = self.scenario
        return {
            "lat": sc.epicenter.lat, "lon": sc.epicenter.lon, "depth_km": sc.depth_km,
            "mag": sc.magnitude, "origin_epoch": sc.origin_time, "local_hour": sc.local_hour,
            "seed": self.seed, "n_phones": len(self.phones),
            "n_steady": sum(p.steady for p in self.phones),
            "n_event_triggers": len(self.event_triggers),
            "n_false_triggers": len(self.false_triggers),
        }


def simulate(sc, seed: int | None = None) -> Simulation:
    seed = sc.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    phones = build_network(sc, rng)
    ev = simulate_event_triggers(sc, phones, rng)
    window = (sc.origin_time - sc.pre_s, sc.origin_time + sc.post_s)
    fp = simulate_false_positives(phones, window, sc.fp_rate, rng, sc.fp_amp_range)
    return Simulation(sc, seed, phones, ev, fp, merge_streams(ev, fp))


def detect(stream, sc):
    return online_detect(stream, estimator=sc.estimator())


def warnings_for(event, sc):
    return city_warnings(event, sc.cities, sc.speeds, sc.gmm, sc.mmi, sc.detector.search_depth)


@dataclass
class RunResult:
    simulation: Simulation
    events: list
    metrics: RunMetrics


def run_once(sc, seed: int | None = None) -> RunResult:
    sim = simulate(sc, seed)
    events = detect(sim.stream, sc)
    return RunResult(sim, events, evaluate_run(sc, events, sc.match_km, sc.match_s))


def _circle(center, radius_km: float, n: int = 72):
    bearings = np.linspace(0.0, 360.0, n, endpoint=False)
    lat, lon = destination(center, bearings, max(radius_km, 0.0))
    ring = [[float(a), float(b)] for a, b in zip(lon, lat)]
    ring.append(ring[0])
    return ring


def snapshot(sim: Simulation, events, t_rel: float) -> dict:
    """GeoJSON map state ``t_rel`` seconds after origin.

    Features: one point per phone, the P and S wavefront circles, the true
    epicentre and, once alerted, the estimated epicentre.
    """
    sc = sim.scenario
    t_abs = sc.origin_time + t_rel
    fired = {m.phone_id for m in sim.stream if m.t_report <= t_abs}
    feats = []
    for ph in sim.phones:
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [ph.location.lon, ph.location.lat]},
            "properties": {"kind": "phone", "phone_id": ph.id, "steady": ph.steady,
                           "triggered": ph.id in fired},
        })
    for wave, speed in (("P", sc.speeds.vp), ("S", sc.speeds.vs)):
        r = speed * max(t_rel, 0.0)
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [_circle(sc.epicenter, r)]},
            "properties": {"kind": "wavefront", "wave": wave, "radius_km": r},
        })
    feats.append({
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [sc.epicenter.lon, sc.epicenter.lat]},
        "properties": {"kind": "epicenter", "estimated": False, "mag": sc.magnitude},
    })
    alerted = [e for e in events if e.t_alert <= t_abs]
    if alerted:
        e = min(alerted, key=lambda ev: ev.t_alert)
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [e.est_epicenter.lon, e.est_epicenter.lat]},
            "properties": {"kind": "epicenter", "estimated": True,
                           "mag": e.est_magnitude if np.isfinite(e.est_magnitude) else None,
                           "t_alert_rel": e.t_alert - sc.origin_time},
        })
    return {"type": "FeatureCollection", "properties": {"t_rel": t_rel}, "features": feats}

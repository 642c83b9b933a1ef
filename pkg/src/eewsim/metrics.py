"""Scoring detections against ground truth and summarising ensembles."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from eewsim.errors import ContractError
from eewsim.geo import haversine_km

RUN_COLUMNS = ("run", "seed", "detected", "latency_s", "epicenter_error_km",
               "origin_time_error_s", "magnitude_error", "false_alerts")


@dataclass(frozen=True)
class RunMetrics:
    detected: bool
    detection_latency: float = math.nan
    epicenter_error: float = math.nan
    origin_time_error: float = math.nan
    magnitude_error: float = math.nan
    false_alerts: int = 0


def evaluate_run(truth, events, match_km: float = 100.0, match_s: float = 60.0) -> RunMetrics:
    """Match the earliest alert near the true event; every other alert is false.

    Errors are signed (estimate minus truth) except the epicentral distance,
    and use the estimates issued with the alert.
    """
    matched = None
    for ev in sorted(events, key=lambda e: e.t_alert):
        d = float(haversine_km(truth.epicenter.lat, truth.epicenter.lon,
                               ev.est_epicenter.lat, ev.est_epicenter.lon))
        if d <= match_km and abs(ev.est_origin_time - truth.origin_time) <= match_s:
            matched = (ev, d)
            break
    if matched is None:
        return RunMetrics(False, false_alerts=len(events))
    ev, d = matched
    return RunMetrics(
        detected=True,
        detection_latency=ev.t_alert - truth.origin_time,
        epicenter_error=d,
        origin_time_error=ev.est_origin_time - truth.origin_time,
        magnitude_error=ev.est_magnitude - truth.magnitude,
        false_alerts=len(events) - 1,
    )


@dataclass(frozen=True)
class Summary:
    runs: int
    detection_rate: float
    median_latency_s: float
    p90_latency_s: float
    median_epicenter_error_km: float
    median_abs_origin_time_error_s: float
    median_abs_magnitude_error: float
    false_alerts: int

    def as_dict(self):
        return asdict(self)


def lower_median(values) -> float:
    """Median; for even counts the lower of the two middle values."""
    v = sorted(values)
    if not v:
        return math.nan
    return v[(len(v) - 1) // 2]


def nearest_rank(values, q: float) -> float:
    """Order statistic at rank ceil(q * n)."""
    v = sorted(values)
    if not v:
        return math.nan
    return v[max(0, math.ceil(q * len(v)) - 1)]


def aggregate(runs) -> Summary:
    runs = list(runs)
    if not runs:
        raise ContractError("cannot aggregate an empty ensemble")
    hit = [r for r in runs if r.detected]
    lat = [r.detection_latency for r in hit]
    return Summary(
        runs=len(runs),
        detection_rate=len(hit) / len(runs),
        median_latency_s=lower_median(lat),
        p90_latency_s=nearest_rank(lat, 0.9),
        median_epicenter_error_km=lower_median(r.epicenter_error for r in hit),
        median_abs_origin_time_error_s=lower_median(abs(r.origin_time_error) for r in hit),
        median_abs_magnitude_error=lower_median(
            abs(r.magnitude_error) for r in hit if math.isfinite(r.magnitude_error)),
        false_alerts=sum(r.false_alerts for r in runs),
    )

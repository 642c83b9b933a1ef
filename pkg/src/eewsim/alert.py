"""City-level warning products from a detection: predicted intensity and lead time."""

from __future__ import annotations

import math
from dataclasses import dataclass

from eewsim.geo import GeoPoint, WaveSpeeds, haversine_km
from eewsim.gmm import GroundMotionModel, MmiScale, pga_to_mmi, predict_log_pga


@dataclass(frozen=True, slots=True)
class City:
    name: str
    location: GeoPoint


@dataclass(frozen=True, slots=True)
class CityWarning:
    name: str
    predicted_mmi: float
    warning_time: float


def _hyp_km(city: GeoPoint, epicenter: GeoPoint, depth: float) -> float:
    d = float(haversine_km(epicenter.lat, epicenter.lon, city.lat, city.lon))
    return math.hypot(d, depth)


def warning_time(city: GeoPoint, event, speeds: WaveSpeeds = WaveSpeeds(), depth: float = 0.0) -> float:
    """Seconds from alert to S arrival at ``city``; negative when the alert is late."""
    t_s = event.est_origin_time + _hyp_km(city, event.est_epicenter, depth) / speeds.vs
    return t_s - event.t_alert


def predict_city_mmi(city: GeoPoint, event, gmm: GroundMotionModel = GroundMotionModel(),
                     mmi_scale: MmiScale = MmiScale(), depth: float = 0.0) -> float:
    """MMI at ``city`` for the event's estimated magnitude (NaN if it has none)."""
    if not math.isfinite(event.est_magnitude):
        return math.nan
    log_pga = predict_log_pga(gmm, event.est_magnitude, _hyp_km(city, event.est_epicenter, depth))
    return pga_to_mmi(mmi_scale, 10.0 ** log_pga)


def city_warnings(event, cities, speeds: WaveSpeeds = WaveSpeeds(), gmm: GroundMotionModel = GroundMotionModel(),
                  mmi_scale: MmiScale = MmiScale(), depth: float = 0.0) -> list[CityWarning]:
    return [CityWarning(c.name,
                        predict_city_mmi(c.location, event, gmm, mmi_scale, depth),
                        warning_time(c.location, event, speeds, depth))
            for c in cities]

"""Spherical geodesy and wave kinematics in a homogeneous medium."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from eewsim.errors import ConfigurationError, InputError

EARTH_RADIUS_KM = 6371.0
KM_PER_DEG = math.pi * EARTH_RADIUS_KM / 180.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InputError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InputError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InputError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True, slots=True)
class WaveSpeeds:
    """P and S velocities in km/s."""

    vp: float = 6.0
    vs: float = 3.5

    def __post_init__(self):
        if not (math.isfinite(self.vp) and math.isfinite(self.vs)):
            raise ConfigurationError("wave speeds must be finite")
        if not self.vp > self.vs > 0.0:
            raise ConfigurationError(f"need vp > vs > 0, got vp={self.vp}, vs={self.vs}")


def haversine_km(lat1, lon1, lat2, lon2):
    """Vectorised haversine distance in km; broadcasts like numpy."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance between two points on a 6371 km sphere."""
    for p in (a, b):
        if not (math.isfinite(p.lat) and math.isfinite(p.lon)):
            raise InputError(f"non-finite coordinate in {p}")
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon))


def hypocentral_distance(epicentral_km: float, depth_km: float) -> float:
    if epicentral_km < 0 or depth_km < 0:
        raise InputError(f"distances must be non-negative, got {epicentral_km}, {depth_km}")
    return math.hypot(epicentral_km, depth_km)


def wave_travel_time(dist_km: float, speed: float) -> float:
    if not speed > 0:
        raise ConfigurationError(f"wave speed must be positive, got {speed}")
    if dist_km < 0:
        raise InputError(f"distance must be non-negative, got {dist_km}")
    return dist_km / speed


def destination(origin: GeoPoint, bearing_deg, dist_km):
    """Point(s) reached travelling ``dist_km`` from ``origin`` along ``bearing_deg``.

    Returns ``(lat, lon)`` arrays in degrees, longitudes wrapped to [-180, 180).
    """
    phi1 = math.radians(origin.lat)
    lam1 = math.radians(origin.lon)
    theta = np.radians(bearing_deg)
    delta = np.asarray(dist_km, dtype=float) / EARTH_RADIUS_KM
    sin_phi2 = np.sin(phi1) * np.cos(delta) + np.cos(phi1) * np.sin(delta) * np.cos(theta)
    phi2 = np.arcsin(np.clip(sin_phi2, -1.0, 1.0))
    lam2 = lam1 + np.arctan2(
        np.sin(theta) * np.sin(delta) * np.cos(phi1),
        np.cos(delta) - np.sin(phi1) * sin_phi2,
    )
    lon = (np.degrees(lam2) + 180.0) % 360.0 - 180.0
    return np.degrees(phi2), lon

"""Scenario files: JSON documents describing one earthquake and every model knob."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from eewsim.alert import City
from eewsim.detect import DetectorParams, Estimator
from eewsim.errors import ConfigurationError, EEWError
from eewsim.geo import GeoPoint, WaveSpeeds
from eewsim.gmm import GroundMotionModel, MmiScale
from eewsim.netsim import (
    DEFAULT_OFFSET_SCALE_S,
    DEFAULT_QUALITY_MIXTURE,
    DiurnalCurve,
    PopulationGrid,
    QualityClass,
    load_population_grid,
    uniform_grid,
)


class ScenarioError(ConfigurationError):
    """Scenario validation failure; ``errors`` holds (field path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{loc}: {msg}" for loc, msg in self.errors))


_GMM = GroundMotionModel()
_MMI = MmiScale()
_SPEEDS = WaveSpeeds()
_DET = DetectorParams()


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EarthquakeSection(_Model):
    lat: float = Field(ge=-90, le=90)
    lon: float = Field(ge=-180, le=180)
    depth_km: float = Field(0.0, ge=0)
    mag: float = Field(ge=0, le=10)
    origin_epoch: float = 0.0
    local_hour: float = Field(12.0, ge=0, lt=24)


class BBox(_Model):
    lat_min: float = Field(ge=-90, le=90)
    lat_max: float = Field(ge=-90, le=90)
    lon_min: float = Field(ge=-180, le=180)
    lon_max: float = Field(ge=-180, le=180)

    @model_validator(mode="after")
    def _ordered(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError("bbox must have lat_min < lat_max and lon_min < lon_max")
        return self


class RegionSection(_Model):
    grid_path: Optional[str] = None
    bbox: Optional[BBox] = None
    uniform_density: float = Field(1.0, gt=0)
    cell_size_deg: float = Field(0.01, gt=0)
    phone_count: Optional[int] = Field(None, ge=0)
    penetration: Optional[float] = Field(None, ge=0, le=1)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.grid_path is None) == (self.bbox is None):
            raise ValueError("give exactly one of grid_path or bbox")
        if (self.phone_count is None) == (self.penetration is None):
            raise ValueError("give exactly one of phone_count or penetration")
        return self


class GmmSection(_Model):
    a: float = Field(_GMM.a, gt=0)
    b: float = Field(_GMM.b, gt=0)
    c: float = _GMM.c
    r0: float = Field(_GMM.r0, gt=0)


class MmiSection(_Model):
    m1: float = Field(_MMI.m1, gt=0)
    m0: float = _MMI.m0


class PhysicsSection(_Model):
    vp: float = Field(_SPEEDS.vp, gt=0)
    vs: float = Field(_SPEEDS.vs, gt=0)
    gmm: GmmSection = Field(default_factory=GmmSection)
    p_fraction: float = Field(0.3, gt=0, le=1)
    pga_sigma_log10: float = Field(0.2, ge=0)
    mmi: MmiSection = Field(default_factory=MmiSection)

    @model_validator(mode="after")
    def _speeds(self):
        if not self.vp > self.vs:
            raise ValueError("vp must exceed vs")
        return self


class QualityClassSection(_Model):
    probability: float = Field(ge=0, le=1)
    weight: float = Field(ge=0, le=1)
    threshold_log10: float
    delay_s: Tuple[float, float] = (0.5, 1.5)

    @model_validator(mode="after")
    def _delay(self):
        lo, hi = self.delay_s
        if not 0 <= lo <= hi:
            raise ValueError("delay_s must satisfy 0 <= lo <= hi")
        return self


def _default_mixture():
    return [QualityClassSection(probability=c.probability, weight=c.quality_weight,
                                threshold_log10=c.trigger_threshold, delay_s=c.delay_range)
            for c in DEFAULT_QUALITY_MIXTURE]


class PhonesSection(_Model):
    offset_scale_s: float = Field(DEFAULT_OFFSET_SCALE_S, ge=0)
    diurnal: List[Tuple[float, float]] = Field(default_factory=lambda: list(DiurnalCurve().anchors))
    quality_mixture: List[QualityClassSection] = Field(default_factory=_default_mixture, min_length=1)
    k_steepness: float = Field(4.0, gt=0)

    @model_validator(mode="after")
    def _check(self):
        total = math.fsum(c.probability for c in self.quality_mixture)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"quality_mixture probabilities sum to {total}, not 1")
        DiurnalCurve(tuple(self.diurnal))
        return self


class NoiseSection(_Model):
    fp_rate_per_phone_hour: float = Field(1.0 / 24.0, ge=0)
    fp_amp_range: Tuple[float, float] = (-1.0, 0.5)
    pre_s: float = Field(60.0, ge=0)
    post_s: float = Field(120.0, ge=0)


class DetectorSection(_Model):
    eps_space_km: float = Field(_DET.eps_space, gt=0)
    eps_time_s: float = Field(_DET.eps_time, gt=0)
    min_weight: float = Field(_DET.min_weight, gt=0)
    window_s: float = Field(_DET.window, gt=0)
    coarse_spacing_km: float = Field(_DET.coarse_spacing, gt=0)
    refine_levels: int = Field(_DET.refine_levels, ge=0)
    search_radius_km: float = Field(_DET.search_radius, gt=0)
    moveout_tol_s: float = Field(_DET.moveout_tol, gt=0)
    min_consistency: float = Field(_DET.min_consistency, ge=0, le=1)
    min_members: int = Field(_DET.min_members, ge=2)
    search_depth_km: float = Field(_DET.search_depth, ge=0)

    @model_validator(mode="after")
    def _window(self):
        if self.window_s < self.eps_time_s:
            raise ValueError("window_s must be >= eps_time_s")
        return self


class CitySection(_Model):
    name: str
    lat: float = Field(ge=-90, le=90)
    lon: float = Field(ge=-180, le=180)


class MetricsSection(_Model):
    match_km: float = Field(100.0, gt=0)
    match_s: float = Field(60.0, gt=0)


class ScenarioFile(_Model):
    earthquake: EarthquakeSection
    region: RegionSection
    physics: PhysicsSection = Field(default_factory=PhysicsSection)
    phones: PhonesSection = Field(default_factory=PhonesSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    detector: DetectorSection = Field(default_factory=DetectorSection)
    cities: List[CitySection] = Field(default_factory=list)
    snapshots_s: List[float] = Field(default_factory=list)
    metrics: MetricsSection = Field(default_factory=MetricsSection)
    seed: int = 0


@dataclass(frozen=True)
class EarthquakeScenario:
    epicenter: GeoPoint
    magnitude: float
    depth_km: float = 0.0
    origin_time: float = 0.0
    local_hour: float = 12.0
    grid: Optional[PopulationGrid] = field(default=None, repr=False)
    phone_count: Optional[int] = None
    penetration: Optional[float] = None
    speeds: WaveSpeeds = WaveSpeeds()
    gmm: GroundMotionModel = GroundMotionModel()
    p_fraction: float = 0.3
    pga_sigma_log10: float = 0.2
    mmi: MmiScale = MmiScale()
    offset_scale_s: float = DEFAULT_OFFSET_SCALE_S
    diurnal: DiurnalCurve = DiurnalCurve()
    quality_mixture: tuple = DEFAULT_QUALITY_MIXTURE
    k_steepness: float = 4.0
    fp_rate: float = 1.0 / 24.0
    fp_amp_range: tuple = (-1.0, 0.5)
    pre_s: float = 60.0
    post_s: float = 120.0
    detector: DetectorParams = DetectorParams()
    cities: tuple = ()
    snapshots_s: tuple = ()
    match_km: float = 100.0
    match_s: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.magnitude <= 10.0:
            raise ConfigurationError(f"magnitude {self.magnitude} outside [0, 10]")
        if self.depth_km < 0:
            raise ConfigurationError("depth must be >= 0")
        if self.fp_rate < 0:
            raise ConfigurationError("false-positive rate must be >= 0")
        if not 0 < self.p_fraction <= 1:
            raise ConfigurationError("p_fraction must lie in (0, 1]")

    @property
    def n_phones(self) -> int:
        if self.phone_count is not None:
            return self.phone_count
        if self.grid is None or self.penetration is None:
            return 0
        return int(round(self.grid.total * self.penetration))

    @property
    def p_gmm(self) -> GroundMotionModel:
        """Attenuation of the P-wave amplitude that early triggers report."""
        return self.gmm.scaled(self.p_fraction)

    def estimator(self) -> Estimator:
        return Estimator(self.detector, self.speeds, self.p_gmm)

    def with_seed(self, seed: int) -> "EarthquakeScenario":
        return replace(self, seed=int(seed))


def _loc(parts) -> str:
    return ".".join(str(p) for p in parts) or "<root>"


def parse_scenario(doc: dict, base_dir: Path | None = None) -> EarthquakeScenario:
    """Validate a scenario document and build the domain object."""
    try:
        f = ScenarioFile.model_validate(doc)
    except ValidationError as exc:
        raise ScenarioError((_loc(e["loc"]), e["msg"]) for e in exc.errors()) from None

    r = f.region
    try:
        if r.grid_path is not None:
            path = Path(r.grid_path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            grid = load_population_grid(path)
        else:
            b = r.bbox
            grid = uniform_grid(b.lat_min, b.lat_max, b.lon_min, b.lon_max, r.cell_size_deg,
                                r.uniform_density)
    except (OSError, EEWError) as exc:
        raise ScenarioError([("region", str(exc))]) from None

    eq, ph, d = f.earthquake, f.phones, f.detector
    mixture = tuple(QualityClass(c.probability, c.weight, c.threshold_log10, tuple(c.delay_s))
                    for c in ph.quality_mixture)
    try:
        return EarthquakeScenario(
            epicenter=GeoPoint(eq.lat, eq.lon),
            magnitude=eq.mag,
            depth_km=eq.depth_km,
            origin_time=eq.origin_epoch,
            local_hour=eq.local_hour,
            grid=grid,
            phone_count=r.phone_count,
            penetration=r.penetration,
            speeds=WaveSpeeds(f.physics.vp, f.physics.vs),
            gmm=GroundMotionModel(**f.physics.gmm.model_dump()),
            p_fraction=f.physics.p_fraction,
            pga_sigma_log10=f.physics.pga_sigma_log10,
            mmi=MmiScale(f.physics.mmi.m1, f.physics.mmi.m0),
            offset_scale_s=ph.offset_scale_s,
            diurnal=DiurnalCurve(tuple(ph.diurnal)),
            quality_mixture=mixture,
            k_steepness=ph.k_steepness,
            fp_rate=f.noise.fp_rate_per_phone_hour,
            fp_amp_range=tuple(f.noise.fp_amp_range),
            pre_s=f.noise.pre_s,
            post_s=f.noise.post_s,
            detector=DetectorParams(
                eps_space=d.eps_space_km, eps_time=d.eps_time_s, min_weight=d.min_weight,
                window=d.window_s, coarse_spacing=d.coarse_spacing_km,
                refine_levels=d.refine_levels, search_radius=d.search_radius_km,
                moveout_tol=d.moveout_tol_s, min_consistency=d.min_consistency,
                min_members=d.min_members, search_depth=d.search_depth_km),
            cities=tuple(City(c.name, GeoPoint(c.lat, c.lon)) for c in f.cities),
            snapshots_s=tuple(f.snapshots_s),
            match_km=f.metrics.match_km,
            match_s=f.metrics.match_s,
            seed=f.seed,
        )
    except ConfigurationError as exc:
        raise ScenarioError([("<root>", str(exc))]) from None


def load_scenario(path, seed: int | None = None) -> EarthquakeScenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([(f"line {exc.lineno}", exc.msg)]) from None
    sc = parse_scenario(doc, path.parent)
    return sc if seed is None else sc.with_seed(seed)

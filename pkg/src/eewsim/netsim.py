"""Synthetic phone network: population sampling, steadiness, clocks, sensor quality."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from eewsim.errors import ConfigurationError, ParseError
from eewsim.geo import GeoPoint

GRID_HEADER = ("lat_min", "lat_max", "lon_min", "lon_max", "cell_size_deg", "n_rows", "n_cols")

# |offset| <= 2.5 s for 90% of draws: 1 - exp(-2.5/b) = 0.9
DEFAULT_OFFSET_SCALE_S = 2.5 / math.log(10.0)


@dataclass(frozen=True)
class PopulationGrid:
    """People per cell on a regular lat/lon grid, northernmost row first."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    cell_size: float
    densities: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.densities, dtype=float)
        if d.ndim != 2:
            raise ConfigurationError("densities must be a 2-D array")
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ConfigurationError("empty bounding box")
        if not self.cell_size > 0:
            raise ConfigurationError("cell_size must be positive")
        rows = (self.lat_max - self.lat_min) / self.cell_size
        cols = (self.lon_max - self.lon_min) / self.cell_size
        if abs(rows - d.shape[0]) > 1e-6 * max(1.0, rows) or abs(cols - d.shape[1]) > 1e-6 * max(1.0, cols):
            raise ConfigurationError(
                f"grid shape {d.shape} inconsistent with bbox/cell_size ({rows:g} x {cols:g})"
            )
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ConfigurationError("densities must be finite and non-negative")
        if not np.any(d > 0):
            raise ConfigurationError("grid has no populated cell")
        d.setflags(write=False)
        object.__setattr__(self, "densities", d)

    @property
    def shape(self):
        return self.densities.shape

    @property
    def total(self) -> float:
        return float(self.densities.sum())

    def cell_bounds(self, row: int, col: int):
        """(lat_lo, lat_hi, lon_lo, lon_hi) of one cell."""
        lat_hi = self.lat_max - row * self.cell_size
        lon_lo = self.lon_min + col * self.cell_size
        return lat_hi - self.cell_size, lat_hi, lon_lo, lon_lo + self.cell_size


def uniform_grid(lat_min, lat_max, lon_min, lon_max, cell_size=0.01, density=1.0) -> PopulationGrid:
    n_rows = max(1, round((lat_max - lat_min) / cell_size))
    n_cols = max(1, round((lon_max - lon_min) / cell_size))
    # snap the bbox to whole cells so the shape check holds
    lat_max = lat_min + n_rows * cell_size
    lon_max = lon_min + n_cols * cell_size
    return PopulationGrid(lat_min, lat_max, lon_min, lon_max, cell_size,
                          np.full((n_rows, n_cols), float(density)))


def load_population_grid(source) -> PopulationGrid:
    """Read the CSV grid format (header line, then ``n_rows`` density rows)."""
    path = Path(source)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty grid file", line=1)
    head = [h.strip() for h in rows[0]]
    if tuple(head) != GRID_HEADER:
        raise ParseError(f"expected header {','.join(GRID_HEADER)}", line=1)
    if len(rows) < 2:
        raise ParseError("missing header values", line=2)
    try:
        vals = [float(v) for v in rows[1]]
    except ValueError as exc:
        raise ParseError(f"malformed header values: {exc}", line=2) from None
    if len(vals) != len(GRID_HEADER):
        raise ParseError("header value count mismatch", line=2)
    lat_min, lat_max, lon_min, lon_max, cell, n_rows_f, n_cols_f = vals
    if n_rows_f != int(n_rows_f) or n_cols_f != int(n_cols_f) or n_rows_f < 1 or n_cols_f < 1:
        raise ParseError("n_rows and n_cols must be positive integers", line=2)
    n_rows, n_cols = int(n_rows_f), int(n_cols_f)
    body = [r for r in rows[2:]]
    if len(body) != n_rows:
        raise ParseError(f"expected {n_rows} density rows, found {len(body)}", line=3 + min(len(body), n_rows))
    dens = np.empty((n_rows, n_cols))
    for i, row in enumerate(body):
        line = i + 3
        if len(row) != n_cols:
            raise ParseError(f"expected {n_cols} values, found {len(row)}", line=line)
        for j, cell_txt in enumerate(row):
            try:
                v = float(cell_txt)
            except ValueError:
                raise ParseError(f"not a number: {cell_txt!r}", line=line, column=j + 1) from None
            if not math.isfinite(v) or v < 0:
                raise ParseError(f"density must be finite and >= 0, got {cell_txt.strip()}",
                                 line=line, column=j + 1)
            dens[i, j] = v
    if not np.any(dens > 0):
        raise ParseError("grid has no populated cell", line=3)
    try:
        return PopulationGrid(lat_min, lat_max, lon_min, lon_max, cell, dens)
    except ConfigurationError as exc:
        raise ParseError(str(exc), line=2) from None


def sample_phone_locations(grid: PopulationGrid, n: int, rng: np.random.Generator) -> list[GeoPoint]:
    """Draw ``n`` positions: cell by density, then uniform inside the cell."""
    if n < 0:
        raise ConfigurationError(f"phone count must be >= 0, got {n}")
    if n == 0:
        return []
    flat = grid.densities.ravel()
    total = flat.sum()
    if total <= 0:
        raise ConfigurationError("cannot sample phones from an all-zero grid")
    cells = rng.choice(flat.size, size=n, p=flat / total)
    rows, cols = np.divmod(cells, grid.shape[1])
    u = rng.random((n, 2))
    lat = grid.lat_max - (rows + u[:, 0]) * grid.cell_size
    lon = grid.lon_min + (cols + u[:, 1]) * grid.cell_size
    lat = np.clip(lat, grid.lat_min, grid.lat_max)
    lon = np.clip(lon, grid.lon_min, grid.lon_max)
    return [GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)]


@dataclass(frozen=True)
class DiurnalCurve:
    """Periodic piecewise-linear steady-phone fraction over local hour."""

    anchors: tuple = ((2.0, 0.70), (8.0, 0.45), (14.0, 0.40), (20.0, 0.55))

    def __post_init__(self):
        pts = tuple((float(h), float(f)) for h, f in self.anchors)
        if not pts:
            raise ConfigurationError("diurnal curve needs at least one anchor")
        hours = [h for h, _ in pts]
        if any(not 0.0 <= h < 24.0 for h in hours):
            raise ConfigurationError("anchor hours must lie in [0, 24)")
        if any(b <= a for a, b in zip(hours, hours[1:])):
            raise ConfigurationError("anchor hours must be strictly increasing")
        if any(not 0.0 <= f <= 1.0 for _, f in pts):
            raise ConfigurationError("anchor fractions must lie in [0, 1]")
        object.__setattr__(self, "anchors", pts)

    @classmethod
    def constant(cls, fraction: float) -> "DiurnalCurve":
        return cls(((0.0, fraction),))


def steady_fraction(curve: DiurnalCurve, local_hour: float) -> float:
    hours = [h for h, _ in curve.anchors]
    fracs = [f for _, f in curve.anchors]
    if len(hours) == 1:
        return fracs[0]
    h = local_hour % 24.0
    i = bisect.bisect_right(hours, h)
    # neighbours with wrap-around across midnight
    h0, f0 = (hours[i - 1], fracs[i - 1]) if i > 0 else (hours[-1] - 24.0, fracs[-1])
    h1, f1 = (hours[i], fracs[i]) if i < len(hours) else (hours[0] + 24.0, fracs[0])
    if h == h0:
        return f0
    return f0 + (f1 - f0) * (h - h0) / (h1 - h0)


@dataclass(frozen=True, slots=True)
class PhoneAgent:
    id: int
    location: GeoPoint
    steady: bool = False
    clock_offset: float = 0.0
    trigger_threshold: float = 0.7
    quality_weight: float = 1.0
    detection_delay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.quality_weight <= 1.0:
            raise ConfigurationError(f"quality_weight {self.quality_weight} outside [0, 1]")
        if not self.detection_delay >= 0.0:
            raise ConfigurationError(f"detection_delay must be >= 0, got {self.detection_delay}")


def make_phones(locations) -> list[PhoneAgent]:
    return [PhoneAgent(i, loc) for i, loc in enumerate(locations)]


def mark_steady(phones, curve: DiurnalCurve, event_local_hour: float, rng: np.random.Generator):
    p = steady_fraction(curve, event_local_hour)
    flags = rng.random(len(phones)) < p
    return [replace(ph, steady=bool(f)) for ph, f in zip(phones, flags)]


def sample_clock_offset(rng: np.random.Generator, scale_b: float = DEFAULT_OFFSET_SCALE_S, size=None):
    """Zero-mean Laplace clock error in seconds."""
    if scale_b < 0:
        raise ConfigurationError(f"offset scale must be >= 0, got {scale_b}")
    if scale_b == 0:
        return 0.0 if size is None else np.zeros(size)
    out = rng.laplace(0.0, scale_b, size=size)
    return float(out) if size is None else out


def assign_clock_offsets(phones, scale_b: float, rng: np.random.Generator):
    offs = sample_clock_offset(rng, scale_b, size=len(phones))
    return [replace(ph, clock_offset=float(o)) for ph, o in zip(phones, offs)]


@dataclass(frozen=True, slots=True)
class QualityClass:
    probability: float
    quality_weight: float
    trigger_threshold: float
    delay_range: tuple = (0.5, 1.5)

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigurationError("class probability must lie in [0, 1]")
        if not 0.0 <= self.quality_weight <= 1.0:
            raise ConfigurationError("class quality_weight must lie in [0, 1]")
        lo, hi = self.delay_range
        if not 0.0 <= lo <= hi:
            raise ConfigurationError("delay_range must satisfy 0 <= lo <= hi")


DEFAULT_QUALITY_MIXTURE = (
    QualityClass(0.7, 0.95, 0.7, (0.5, 1.5)),
    QualityClass(0.3, 0.5, 1.0, (0.5, 1.5)),
)


def check_mixture(mixture) -> None:
    if not mixture:
        raise ConfigurationError("quality mixture is empty")
    total = math.fsum(c.probability for c in mixture)
    if abs(total - 1.0) > 1e-9:
        raise ConfigurationError(f"quality mixture probabilities sum to {total}, not 1")


def assign_quality(phones, mixture, rng: np.random.Generator):
    """Draw one quality class per phone and a detection delay from its range."""
    check_mixture(mixture)
    n = len(phones)
    probs = np.array([c.probability for c in mixture], dtype=float)
    idx = rng.choice(len(mixture), size=n, p=probs / probs.sum())
    u = rng.random(n)
    out = []
    for ph, k, uu in zip(phones, idx, u):
        cls = mixture[k]
        lo, hi = cls.delay_range
        out.append(replace(ph, quality_weight=cls.quality_weight,
                           trigger_threshold=cls.trigger_threshold,
                           detection_delay=float(lo + (hi - lo) * uu)))
    return out

"""Waveform quality metrics for a phone and their mapping to a detector weight.

Sampling intervals are quantised to whole microseconds before use, so that
gap thresholds and percentiles are exact for timestamps written in seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from eewsim.errors import InputError, InsufficientDataError, ParseError

PRE_TRIGGER_S = 60.0
WAVEFORM_HEADER = ("t", "x", "y", "z")


@dataclass(frozen=True)
class WaveformRecord:
    phone_id: int
    trigger_time: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.t, self.x, self.y, self.z)]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise InputError("t, x, y, z must be 1-D arrays of equal length")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise InputError("waveform samples must be finite")
        if np.any(np.diff(arrs[0]) <= 0):
            raise InputError("timestamps must be strictly increasing")
        for name, a in zip(("t", "x", "y", "z"), arrs):
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class QualityReport:
    noise_std: float
    gaps_gt_1s: int
    gaps_gt_2s: int
    interval_p25: float
    interval_p50: float
    interval_p75: float
    weight: float


@dataclass(frozen=True)
class QualityPolicy:
    sigma_ref: float = 0.01
    gap_scale: float = 5.0


def intervals_ms(record: WaveformRecord) -> np.ndarray:
    return np.round(np.diff(record.t) * 1e6) / 1e3


def noise_std(record: WaveformRecord, pre_s: float = PRE_TRIGGER_S) -> float:
    """Std (ddof 0) of the mean-removed x, y, z samples in the minute before trigger."""
    m = (record.t < record.trigger_time) & (record.t >= record.trigger_time - pre_s)
    if m.sum() < 2:
        raise InsufficientDataError(f"need >= 2 pre-trigger samples, have {int(m.sum())}")
    parts = [c[m] - c[m].mean() for c in (record.x, record.y, record.z)]
    return float(np.concatenate(parts).std())


def count_gaps(record: WaveformRecord, thresholds=(1.0, 2.0)) -> tuple:
    """Number of sampling intervals strictly longer than each threshold (seconds)."""
    if len(record.t) < 2:
        raise InsufficientDataError("need >= 2 samples")
    iv = intervals_ms(record)
    return tuple(int(np.count_nonzero(iv > thr * 1e3)) for thr in thresholds)


def sampling_percentiles(record: WaveformRecord) -> tuple:
    """25th, 50th, 75th percentiles of sampling intervals in ms (linear interpolation)."""
    if len(record.t) < 2:
        raise InsufficientDataError("need >= 2 samples")
    p = np.percentile(intervals_ms(record), [25, 50, 75], method="linear")
    return tuple(float(v) for v in p)


def quality_weight(report: QualityReport, policy: QualityPolicy = QualityPolicy()) -> float:
    if report.interval_p50 <= 0:
        raise InputError("median sampling interval is zero; malformed record")
    if report.noise_std <= 0:
        noise = 1.0
    else:
        noise = min(max(policy.sigma_ref / report.noise_std, 0.0), 1.0)
    gaps = 1.0 / (1.0 + report.gaps_gt_1s / policy.gap_scale)
    spread = (report.interval_p75 - report.interval_p25) / report.interval_p50
    stability = min(max(1.0 - spread, 0.0), 1.0)
    return noise * gaps * stability


def quality_report(record: WaveformRecord, policy: QualityPolicy = QualityPolicy()) -> QualityReport:
    g1, g2 = count_gaps(record, (1.0, 2.0))
    p25, p50, p75 = sampling_percentiles(record)
    partial = QualityReport(noise_std(record), g1, g2, p25, p50, p75, math.nan)
    return QualityReport(partial.noise_std, g1, g2, p25, p50, p75, quality_weight(partial, policy))


def load_waveform_csv(path, trigger_time: float | None = None, phone_id: int = 0) -> WaveformRecord:
    """Read a ``t,x,y,z`` CSV. Without ``trigger_time`` the trigger is put one
    minute after the first sample."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None or tuple(h.strip() for h in head) != WAVEFORM_HEADER:
            raise ParseError("expected header t,x,y,z", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, found {len(row)}", line=lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    if len(rows) < 2:
        raise ParseError("need at least 2 samples", line=len(rows) + 2)
    a = np.array(rows)
    bad = np.flatnonzero(np.diff(a[:, 0]) <= 0)
    if bad.size:
        raise ParseError("timestamps must be strictly increasing", line=int(bad[0]) + 3)
    if not np.all(np.isfinite(a)):
        raise ParseError("non-finite value", line=int(np.flatnonzero(~np.isfinite(a).all(1))[0]) + 2)
    tt = a[0, 0] + PRE_TRIGGER_S if trigger_time is None else trigger_time
    return WaveformRecord(phone_id, tt, a[:, 0], a[:, 1], a[:, 2], a[:, 3])

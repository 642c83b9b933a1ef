"""Ground-motion attenuation and PGA to intensity conversion.

The attenuation law is saturated log-linear::

    log10(PGA [cm/s^2]) = a*M - b*log10(r_hyp + r0) + c

which is trivially invertible in magnitude. Any other law with the same
three functions (predict, invert, monotone in M and r) can replace it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from eewsim.errors import ConfigurationError, InputError

# m/s^2 -> cm/s^2
GAL_PER_MS2 = 100.0


@dataclass(frozen=True, slots=True)
class GroundMotionModel:
    a: float = 0.6
    b: float = 1.6
    c: float = 0.78
    r0: float = 10.0

    def __post_init__(self):
        for name in ("a", "b", "c", "r0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"gmm.{name} must be finite")
        if self.a <= 0:
            raise ConfigurationError(f"gmm.a must be > 0, got {self.a}")
        if self.b <= 0:
            raise ConfigurationError(f"gmm.b must be > 0, got {self.b}")
        if self.r0 <= 0:
            raise ConfigurationError(f"gmm.r0 must be > 0, got {self.r0}")

    def scaled(self, fraction: float) -> "GroundMotionModel":
        """Same law for an amplitude that is ``fraction`` of the full PGA."""
        if not fraction > 0:
            raise ConfigurationError(f"amplitude fraction must be > 0, got {fraction}")
        return GroundMotionModel(self.a, self.b, self.c + math.log10(fraction), self.r0)


@dataclass(frozen=True, slots=True)
class MmiScale:
    m1: float = 3.66
    m0: float = -1.66
    lo: float = 1.0
    hi: float = 10.0

    def __post_init__(self):
        if not (math.isfinite(self.m1) and math.isfinite(self.m0)):
            raise ConfigurationError("mmi coefficients must be finite")
        if self.m1 <= 0:
            raise ConfigurationError(f"mmi.m1 must be > 0, got {self.m1}")
        if not self.lo < self.hi:
            raise ConfigurationError("mmi bounds must satisfy lo < hi")


def predict_log_pga(gmm: GroundMotionModel, magnitude, r_hyp):
    """log10 PGA in cm/s^2; accepts scalars or arrays for ``r_hyp``."""
    r = np.asarray(r_hyp, dtype=float)
    if np.any(r < 0):
        raise InputError("hypocentral distance must be non-negative")
    out = gmm.a * magnitude - gmm.b * np.log10(r + gmm.r0) + gmm.c
    return float(out) if out.ndim == 0 else out


def invert_magnitude(gmm: GroundMotionModel, log_pga, r_hyp):
    """Magnitude that makes ``predict_log_pga`` return ``log_pga`` at ``r_hyp``."""
    r = np.asarray(r_hyp, dtype=float)
    if np.any(r < 0):
        raise InputError("hypocentral distance must be non-negative")
    out = (np.asarray(log_pga, dtype=float) - gmm.c + gmm.b * np.log10(r + gmm.r0)) / gmm.a
    return float(out) if out.ndim == 0 else out


def pga_to_mmi(scale: MmiScale, pga) -> float:
    """MMI from PGA in cm/s^2, clipped to the scale bounds."""
    p = np.asarray(pga, dtype=float)
    if np.any(~(p > 0)):
        raise InputError("PGA must be positive")
    out = np.clip(scale.m1 * np.log10(p) + scale.m0, scale.lo, scale.hi)
    return float(out) if out.ndim == 0 else out

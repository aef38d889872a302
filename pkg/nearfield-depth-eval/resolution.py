"""
Spatial Resolution Calculators
Closed-form resolution limits of stereo, AMCW ToF and MIMO FSCW imaging sensors
"""

import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable

import pandas as pd

from models import SPEED_OF_LIGHT, ValidationError

RAYLEIGH_FACTOR = 1.22


@dataclass(frozen=True)
class StereoParams:
    baseline: float  # m
    focal: float  # px
    disparity: float = 0.0  # px
    disparity_resolution: float = 1.0  # px
    depth: float = 0.0  # m

    def __post_init__(self):
        if not (self.baseline > 0 and self.focal > 0):
            raise ValidationError("baseline and focal length must be > 0")


@dataclass(frozen=True)
class AmcwParams:
    f_m: float  # Hz
    p_laser: float  # W
    p_ambient: float  # W
    intensity: float
    quantum_efficiency: float
    optics_factor: float
    reflectivity: float
    integration_time: float  # s

    def __post_init__(self):
        positive = (self.f_m, self.p_laser, self.intensity, self.quantum_efficiency,
                    self.optics_factor, self.reflectivity, self.integration_time)
        if min(positive) <= 0 or self.p_ambient < 0:
            raise ValidationError("AMCW parameters must be positive")


@dataclass(frozen=True)
class MimoResolutionParams:
    f_min: float  # Hz
    f_max: float  # Hz
    aperture: float  # m
    distance: float  # m

    def __post_init__(self):
        if not self.f_max > self.f_min > 0:
            raise ValidationError("need f_max > f_min > 0")
        if not (self.aperture > 0 and self.distance > 0):
            raise ValidationError("aperture and distance must be > 0")

    @property
    def bandwidth(self) -> float:
        return self.f_max - self.f_min

    def at(self, distance: float) -> "MimoResolutionParams":
        return replace(self, distance=distance)


# 72-82 GHz, 0.138 m aperture; its 128 frequency steps do not enter the resolution limits
QAR5 = MimoResolutionParams(f_min=72e9, f_max=82e9, aperture=0.138, distance=0.30)


def wavelength(f: float, c: float = SPEED_OF_LIGHT) -> float:
    if not f > 0:
        raise ValidationError("frequency must be > 0")
    return c / f


def rayleigh_angular(lam: float, aperture: float) -> float:
    """ω = 1.22·λ/L in radians"""
    if not aperture > 0:
        raise ValidationError("aperture must be > 0")
    return RAYLEIGH_FACTOR * lam / aperture


def mimo_cross_range(p: MimoResolutionParams, c: float = SPEED_OF_LIGHT) -> float:
    return c / (4.0 * p.f_max) * math.sqrt(4.0 * (p.distance / p.aperture) ** 2 + 1.0)


def mimo_range_res(p: MimoResolutionParams, c: float = SPEED_OF_LIGHT) -> float:
    """Range resolution with the full swept bandwidth plus the aperture's angular diversity term"""
    diversity = 1.0 - 1.0 / math.sqrt(1.0 + 0.5 * (p.aperture / p.distance) ** 2)
    return 0.5 * c / (p.bandwidth + diversity * p.f_min)


def stereo_depth(p: StereoParams) -> float:
    if p.disparity == 0:
        raise ValidationError("disparity must be nonzero")
    return p.focal * p.baseline / p.disparity


def stereo_depth_res(p: StereoParams) -> float:
    return p.depth ** 2 / (p.baseline * p.focal) * p.disparity_resolution


def amcw_range_res(p: AmcwParams, c: float = SPEED_OF_LIGHT) -> float:
    power = (p.p_laser + p.p_ambient) / p.p_laser
    signal = p.intensity / (p.optics_factor * p.quantum_efficiency * p.reflectivity * p.integration_time)
    return c / p.f_m * math.sqrt(power * signal)


def mimo_resolution(p: MimoResolutionParams) -> Dict[str, float]:
    cross = mimo_cross_range(p)
    return {"delta_x": cross, "delta_y": cross, "delta_z": mimo_range_res(p)}


def resolution_table(f_min: float, f_max: float, aperture: float,
                     distances: Iterable[float] = (0.30, 0.40, 0.50)) -> pd.DataFrame:
    rows = []
    for z in distances:
        values = mimo_resolution(MimoResolutionParams(f_min, f_max, aperture, z))
        rows.append({
            "distance_m": z,
            "delta_x_mm": values["delta_x"] * 1e3,
            "delta_y_mm": values["delta_y"] * 1e3,
            "delta_z_mm": values["delta_z"] * 1e3,
        })
    return pd.DataFrame(rows)

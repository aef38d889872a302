"""
Radar Signal Model
FSCW waveform, Born-approximation point-target simulator, phase/range relations
and AMCW four-bucket demodulation
"""

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist

from models import (
    AmcwConfig, FscwConfig, MimoArray, PointScatterer, RawSignalCube,
    SPEED_OF_LIGHT, ValidationError,
)

logger = logging.getLogger(__name__)

MIN_ANTENNA_DISTANCE = 1e-9  # m


def build_square_array(aperture: float, n_per_edge: int) -> MimoArray:
    """
    Square MIMO layout in the z = 0 plane, boresight +z.

    TX elements sit on the two vertical edges (x = ±L/2), RX elements on the two
    horizontal edges (y = ±L/2), each at the cell centers -L/2 + (k + 0.5)·L/n.
    """
    if not aperture > 0:
        raise ValidationError("aperture must be > 0")
    if int(n_per_edge) < 1:
        raise ValidationError("n_per_edge must be >= 1")
    n = int(n_per_edge)
    half = aperture / 2.0
    along = -half + (np.arange(n) + 0.5) * aperture / n

    tx = [(x, y, 0.0) for x in (-half, half) for y in along]
    rx = [(x, y, 0.0) for y in (-half, half) for x in along]
    return MimoArray(np.array(tx), np.array(rx))


def _simulate_rx_block(rx: np.ndarray, tx: np.ndarray, positions: np.ndarray,
                       amplitudes: np.ndarray, freqs: np.ndarray, config: FscwConfig,
                       spreading: bool) -> np.ndarray:
    block = np.zeros((len(rx), len(tx), len(freqs)), dtype=np.complex128)
    d_tx = cdist(positions, tx)  # (K, N_TX)
    d_rx = cdist(positions, rx)  # (K, N_RX)
    wavenumber = 2.0 * np.pi * freqs / config.c
    for k in range(len(positions)):
        path = d_rx[k][:, None] + d_tx[k][None, :]
        weight = amplitudes[k]
        if spreading:
            weight = weight / (d_rx[k][:, None] * d_tx[k][None, :])
        else:
            weight = np.full(path.shape, weight)
        block += weight[..., None] * np.exp(-1j * path[..., None] * wavenumber + 1j * config.phi_c)
    return block


def simulate_fscw(scatterers: Sequence[PointScatterer], array: MimoArray, config: FscwConfig,
                  spreading: bool = False, n_jobs: int = 1) -> RawSignalCube:
    """
    Steady-state received phasors of a point-scatterer scene.

    s_r(f_n, r_i, t_j) = sum_k A_k·w_k·exp(-i·2π·f_n·(|t_j - p_k| + |p_k - r_i|)/c + i·φ_c)
    with w_k = 1, or 1/(|t_j - p_k|·|p_k - r_i|) when spreading is on.
    """
    if not scatterers:
        raise ValidationError("at least one scatterer is required")
    positions = np.array([s.position for s in scatterers], dtype=np.float64)
    amplitudes = np.array([s.reflectivity for s in scatterers], dtype=np.float64)

    if spreading:
        nearest = min(cdist(positions, array.tx_positions).min(), cdist(positions, array.rx_positions).min())
        if nearest < MIN_ANTENNA_DISTANCE:
            raise ValidationError("scatterer coincides with an antenna")

    freqs = config.frequencies()
    rx_blocks = np.array_split(np.arange(array.n_rx), max(1, min(int(n_jobs), array.n_rx)))
    parts = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_simulate_rx_block)(array.rx_positions[idx], array.tx_positions, positions,
                                    amplitudes, freqs, config, spreading)
        for idx in rx_blocks
    )
    data = np.concatenate(parts, axis=0)
    logger.debug("simulated %d scatterers on %dx%dx%d cube", len(scatterers), *data.shape)
    return RawSignalCube(data, config, array)


def phase_to_range(delta_phi: float, f: float, c: float = SPEED_OF_LIGHT) -> float:
    """Range r = c·Δφ / (2π f); the round trip is already halved"""
    if not f > 0:
        raise ValidationError("frequency must be > 0")
    return c * delta_phi / (2.0 * math.pi * f)


def unambiguous_range(f: float, c: float = SPEED_OF_LIGHT) -> float:
    """Period of phase_to_range in Δφ"""
    if not f > 0:
        raise ValidationError("frequency must be > 0")
    return c / f


def phase_to_path_difference(delta_phi: float, f: float, c: float = SPEED_OF_LIGHT) -> float:
    """Travelled-distance difference Δρ = c·Δφ / (4π f)"""
    if not f > 0:
        raise ValidationError("frequency must be > 0")
    return c * delta_phi / (4.0 * math.pi * f)


def path_difference_to_range(delta_rho: float) -> float:
    # first reflection: the signal covers the range twice
    return delta_rho / 2.0


def amcw_four_bucket(c0: float, c90: float, c180: float, c270: float) -> float:
    """Phase of correlation samples c_θ = B + A·cos(θ + φ) taken at θ = 0°, 90°, 180°, 270°

    Any input with zero first-harmonic amplitude (c0 == c180 and c90 == c270) is degenerate,
    not just four equal samples: (1, 0, 1, 0) carries no phase either.
    """
    quadrature = c270 - c90
    in_phase = c0 - c180
    if quadrature == 0 and in_phase == 0:
        raise ValidationError("no modulation detected")
    phi = math.atan2(quadrature, in_phase)
    return math.pi if phi == -math.pi else phi


def amcw_amplitude_offset(c0: float, c90: float, c180: float, c270: float) -> Tuple[float, float]:
    amplitude = 0.5 * math.hypot(c270 - c90, c0 - c180)
    offset = (c0 + c90 + c180 + c270) / 4.0
    return amplitude, offset


def amcw_correlation_samples(distance: float, config: AmcwConfig, amplitude: float = 1.0,
                             offset: float = 0.0, c: float = SPEED_OF_LIGHT) -> Tuple[float, float, float, float]:
    """Four-bucket samples of the correlation for a target at `distance` meters"""
    phi = 4.0 * math.pi * config.f_m * distance / c
    return tuple(offset + amplitude * math.cos(math.radians(theta) + phi) for theta in (0, 90, 180, 270))


def amcw_depth(phase: float, config: AmcwConfig, c: float = SPEED_OF_LIGHT) -> float:
    wrapped = phase % (2.0 * math.pi)
    return c * wrapped / (4.0 * math.pi * config.f_m)


def signal_magnitude(cubes: List[RawSignalCube]) -> float:
    """Mean absolute phasor value per cube, averaged over frames"""
    if not cubes:
        raise ValidationError("empty list")
    shape = cubes[0].data.shape
    per_frame = []
    for cube in cubes:
        if cube.data.shape != shape:
            raise ValidationError("all cubes must share dimensions")
        per_frame.append(np.abs(cube.data).mean())
    return float(np.mean(per_frame))

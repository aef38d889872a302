"""
Radar Imaging
Backprojection over a voxel grid, maximum intensity projection to an orthographic
depth map, and confidence filtering relative to the peak
"""

import logging
import time
from typing import Iterable, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist

from models import (
    ConfidenceVolume, DepthImage, ProjectionModel, RawSignalCube, Transform4,
    ValidationError, VoxelGridSpec,
)

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD_DB = -14.0
DEFAULT_BLOCK_SIZE = 4096  # voxels per work item; fixed so results do not depend on n_jobs


def _backproject_block(points: np.ndarray, tx: np.ndarray, rx: np.ndarray,
                       data: np.ndarray, wavenumber: np.ndarray) -> np.ndarray:
    d_tx = cdist(points, tx)
    d_rx = cdist(points, rx)
    acc = np.zeros(len(points), dtype=np.complex128)
    for n, k in enumerate(wavenumber):
        # conjugate of the propagation phase: sum_i sum_j s[i, j]·e^{ik d_rx}·e^{ik d_tx}
        along_rx = np.exp(1j * k * d_rx) @ data[:, :, n]
        acc += (along_rx * np.exp(1j * k * d_tx)).sum(axis=1)
    return acc


def backproject(cube: RawSignalCube, spec: VoxelGridSpec, n_jobs: int = 1,
                block_size: int = DEFAULT_BLOCK_SIZE) -> ConfidenceVolume:
    """
    Phase-only matched filter of every voxel center p:
    c_BP(p) = sum_n sum_i sum_j s_r(f_n, r_i, t_j)·exp(+i·2π·f_n·(|t_j - p| + |p - r_i|)/c)
    """
    centers = spec.centers()
    wavenumber = 2.0 * np.pi * cube.config.frequencies() / cube.config.c
    starts = range(0, len(centers), block_size)

    began = time.perf_counter()
    parts = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_backproject_block)(centers[s:s + block_size], cube.array.tx_positions,
                                    cube.array.rx_positions, cube.data, wavenumber)
        for s in starts
    )
    values = np.concatenate(parts).reshape(spec.dims)
    logger.info("backprojected %d voxels (%d RX x %d TX x %d f) in %.2f s",
                spec.n_voxels, cube.array.n_rx, cube.array.n_tx, cube.config.n_f,
                time.perf_counter() - began)
    return ConfidenceVolume(spec, values)


def max_projection(vol: ConfidenceVolume) -> Tuple[DepthImage, np.ndarray]:
    """
    Orthogonal maximum projection along z.

    Returns the depth map (pixel (u, v) = voxel column (x, y)) and the per-pixel peak
    confidence. np.argmax keeps the first maximum, so ties resolve to the smallest z.
    Columns without signal stay invalid.
    """
    spec = vol.spec
    magnitude = vol.magnitude()
    best = np.argmax(magnitude, axis=2)
    confidence = np.take_along_axis(magnitude, best[..., None], axis=2)[..., 0]
    depth = spec.origin[2] + best * spec.step[2]
    depth = np.where((confidence > 0) & (depth > 0), depth, 0.0)

    projection = ProjectionModel.orthographic(spec.step[0], spec.step[1], spec.origin[0], spec.origin[1])
    image = DepthImage(depth.T, projection, Transform4.identity())
    return image, np.ascontiguousarray(confidence.T)


def db_threshold_filter(depth: DepthImage, confidence: np.ndarray, threshold_db: float) -> DepthImage:
    """Invalidate pixels whose confidence is below max·10^(threshold_db/20)"""
    if threshold_db > 0:
        raise ValidationError("threshold_db must be <= 0")
    confidence = np.asarray(confidence, dtype=np.float64)
    if confidence.shape != depth.data.shape:
        raise ValidationError("confidence map does not match depth dimensions")
    peak = confidence.max()
    if peak <= 0:
        logger.warning("confidence map is all zero; every pixel filtered")
        return depth.with_data(np.zeros_like(depth.data))
    cutoff = peak * 10.0 ** (threshold_db / 20.0)
    keep = confidence >= cutoff
    logger.debug("threshold %.1f dB keeps %d of %d pixels", threshold_db, int(keep.sum()), keep.size)
    return depth.with_data(np.where(keep, depth.data, 0.0).astype(depth.data.dtype))


def normalize_confidence(confidence: np.ndarray) -> np.ndarray:
    confidence = np.asarray(confidence, dtype=np.float64)
    peak = confidence.max() if confidence.size else 0.0
    return confidence / peak if peak > 0 else np.zeros_like(confidence)


def threshold_sweep(confidence: np.ndarray, thresholds_db: Iterable[float],
                    object_mask: Optional[np.ndarray] = None) -> pd.DataFrame:
    """How much of the confidence map each dB threshold keeps, and the kept/rejected contrast"""
    normalized = normalize_confidence(confidence)
    rows = []
    for threshold in thresholds_db:
        keep = normalized >= 10.0 ** (threshold / 20.0)
        kept, rejected = normalized[keep], normalized[~keep]
        snr_db = np.nan
        if kept.size and rejected.size and rejected.mean() > 0:
            snr_db = 20.0 * np.log10(kept.mean() / rejected.mean())
        row = {
            "threshold_db": float(threshold),
            "kept_pixels": int(keep.sum()),
            "kept_fraction": float(keep.mean()) if keep.size else 0.0,
            "snr_db": snr_db,
        }
        if object_mask is not None:
            mask = np.asarray(object_mask, dtype=bool)
            row["object_recall"] = float(keep[mask].mean()) if mask.any() else np.nan
            row["background_rejection"] = float((~keep[~mask]).mean()) if (~mask).any() else np.nan
        rows.append(row)
    return pd.DataFrame(rows)


def image_scene(cube: RawSignalCube, spec: VoxelGridSpec, threshold_db: float = DEFAULT_THRESHOLD_DB,
                n_jobs: int = 1) -> Tuple[DepthImage, np.ndarray]:
    """backproject -> max_projection -> db_threshold_filter"""
    depth, confidence = max_projection(backproject(cube, spec, n_jobs=n_jobs))
    return db_threshold_filter(depth, confidence, threshold_db), confidence

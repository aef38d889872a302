"""
Tests for backprojection, maximum projection and confidence filtering
"""

import os
import time

import numpy as np
import pytest
from scipy.signal import find_peaks

from models import (
    ConfidenceVolume, DepthImage, FscwConfig, PointScatterer, ProjectionModel, RawSignalCube,
    ValidationError, VoxelGridSpec,
)
from radar_imaging import (
    backproject, db_threshold_filter, image_scene, max_projection, normalize_confidence, threshold_sweep,
)
from radar_signal import simulate_fscw
from resolution import MimoResolutionParams, mimo_range_res


def _volume(magnitudes, origin=(0.0, 0.0, 0.1), step=(0.01, 0.01, 0.01)):
    magnitudes = np.asarray(magnitudes, dtype=float)
    return ConfidenceVolume(VoxelGridSpec(origin, step, magnitudes.shape), magnitudes.astype(complex))


def _z_width_at(level, profile, step):
    """Width of the region around the peak above level·peak, with linear interpolation"""
    peak = int(np.argmax(profile))
    cut = level * profile[peak]
    lo = peak
    while lo > 0 and profile[lo - 1] >= cut:
        lo -= 1
    hi = peak
    while hi < len(profile) - 1 and profile[hi + 1] >= cut:
        hi += 1
    left = lo - (profile[lo] - cut) / (profile[lo] - profile[lo - 1])
    right = hi + (profile[hi] - cut) / (profile[hi] - profile[hi + 1])
    return (right - left) * step


@pytest.mark.slow
def test_point_target_round_trip(square_array, fscw32, acceptance_grid):
    target = acceptance_grid.center_of((24, 24, 24))
    cube = simulate_fscw([PointScatterer(tuple(target))], square_array, fscw32)
    vol = backproject(cube, acceptance_grid)
    magnitude = vol.magnitude()
    assert np.unravel_index(np.argmax(magnitude), magnitude.shape) == (24, 24, 24)
    assert magnitude[24, 24, 24] == pytest.approx(8 * 8 * 32, rel=1e-9)

    depth, confidence = max_projection(vol)
    assert depth.data[24, 24] == pytest.approx(0.3, abs=1e-12)
    assert np.unravel_index(np.argmax(confidence), confidence.shape) == (24, 24)

    # -3 dB width along z through the peak
    width = _z_width_at(10 ** (-3 / 20), magnitude[24, 24, :], 0.002)
    expected = mimo_range_res(MimoResolutionParams(72e9, 82e9, 0.138, 0.3))
    assert abs(width - expected) / expected < 0.35


def _column_profile(separation, square_array, fscw32):
    spec = VoxelGridSpec((0.0, 0.0, 0.25), (0.001, 0.001, 0.00025), (1, 1, 481))
    z0 = 0.31
    targets = [PointScatterer((0.0, 0.0, z0 - separation / 2)), PointScatterer((0.0, 0.0, z0 + separation / 2))]
    cube = simulate_fscw(targets, square_array, fscw32)
    return backproject(cube, spec).magnitude()[0, 0, :]


def test_two_point_separability(square_array, fscw32):
    delta_z = mimo_range_res(MimoResolutionParams(72e9, 82e9, 0.138, 0.31))

    apart = _column_profile(2 * delta_z, square_array, fscw32)
    peaks, _ = find_peaks(apart, height=0.5 * apart.max(), prominence=0.05 * apart.max())
    assert len(peaks) == 2

    close = _column_profile(0.3 * delta_z, square_array, fscw32)
    peaks, _ = find_peaks(close, height=0.5 * close.max(), prominence=0.05 * close.max())
    assert len(peaks) == 1


def test_zero_cube_gives_zero_volume(square_array):
    config = FscwConfig(72e9, 82e9, 4)
    cube = RawSignalCube(np.zeros((8, 8, 4), dtype=complex), config, square_array)
    vol = backproject(cube, VoxelGridSpec((-0.01, -0.01, 0.29), (0.01, 0.01, 0.01), (3, 3, 3)))
    assert not np.any(vol.values)


def test_backprojection_is_linear(square_array, rng):
    config = FscwConfig(72e9, 82e9, 8)
    spec = VoxelGridSpec((-0.01, -0.01, 0.29), (0.005, 0.005, 0.005), (5, 5, 5))
    a = simulate_fscw([PointScatterer((0.0, 0.0, 0.3))], square_array, config)
    b = simulate_fscw([PointScatterer((0.005, -0.005, 0.295), 0.4)], square_array, config)
    combined = RawSignalCube(a.data + 2.0 * b.data, config, square_array)
    lhs = backproject(combined, spec).values
    rhs = backproject(a, spec).values + 2.0 * backproject(b, spec).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * np.abs(lhs).max())


def test_block_size_and_threads_do_not_change_results(square_array):
    config = FscwConfig(72e9, 82e9, 8)
    spec = VoxelGridSpec((-0.01, -0.01, 0.29), (0.004, 0.004, 0.004), (6, 6, 6))
    cube = simulate_fscw([PointScatterer((0.002, 0.0, 0.3))], square_array, config)
    reference = backproject(cube, spec).values
    np.testing.assert_array_equal(backproject(cube, spec, n_jobs=3).values, reference)
    np.testing.assert_allclose(backproject(cube, spec, block_size=7).values, reference, rtol=1e-12)


def test_max_projection_examples():
    single = np.zeros((3, 2, 4))
    single[2, 1, 3] = 5.0
    depth, confidence = max_projection(_volume(single))
    assert depth.data.shape == (2, 3)
    assert np.count_nonzero(depth.data) == 1
    assert depth.data[1, 2] == pytest.approx(0.13)
    assert confidence[1, 2] == 5.0

    depth, _ = max_projection(_volume([[[1.0, 3.0, 2.0]]]))
    assert depth.data[0, 0] == pytest.approx(0.11)

    depth, _ = max_projection(_volume([[[2.0, 2.0]]]))
    assert depth.data[0, 0] == pytest.approx(0.10)


def test_max_projection_carries_orthographic_layout():
    depth, _ = max_projection(_volume(np.ones((4, 3, 2)), origin=(-0.02, 0.01, 0.3), step=(0.005, 0.002, 0.01)))
    assert not depth.projection.is_perspective
    p = depth.projection.matrix(depth.transform)
    # world (x, y) of voxel column (ix, iy) maps to pixel (u, v) = (ix, iy)
    np.testing.assert_allclose(p @ [-0.02 + 3 * 0.005, 0.01 + 2 * 0.002, 0.3, 1.0], [3.0, 2.0, 0.3, 1.0], atol=1e-12)


def test_filter_boundary_at_minus_14_db():
    confidence = np.array([[1.0, 0.1996, 0.1994, 0.0]])
    depth = DepthImage(np.full((1, 4), 0.3), ProjectionModel.orthographic(0.001, 0.001))
    filtered = db_threshold_filter(depth, confidence, -14.0)
    np.testing.assert_array_equal(filtered.valid_mask(), [[True, True, False, False]])

    spec_example = db_threshold_filter(depth, np.array([[1.0, 0.2, 0.19, 0.5]]), -14.0)
    np.testing.assert_array_equal(spec_example.valid_mask(), [[True, True, False, True]])


def test_filter_edge_cases():
    depth = DepthImage(np.full((2, 2), 0.3), ProjectionModel.orthographic(0.001, 0.001))
    only_max = db_threshold_filter(depth, np.array([[1.0, 0.9], [1.0, 0.2]]), 0.0)
    np.testing.assert_array_equal(only_max.valid_mask(), [[True, False], [True, False]])

    uniform = db_threshold_filter(depth, np.full((2, 2), 0.7), -14.0)
    np.testing.assert_array_equal(uniform.data, depth.data)

    silent = db_threshold_filter(depth, np.zeros((2, 2)), -14.0)
    assert not silent.valid_mask().any()

    with pytest.raises(ValidationError):
        db_threshold_filter(depth, np.ones((2, 2)), 3.0)
    with pytest.raises(ValidationError):
        db_threshold_filter(depth, np.ones((3, 2)), -14.0)


def test_phase_and_scale_invariance(square_array):
    config = FscwConfig(72e9, 82e9, 8)
    spec = VoxelGridSpec((-0.01, -0.01, 0.29), (0.005, 0.005, 0.005), (5, 5, 5))
    cube = simulate_fscw([PointScatterer((0.005, 0.0, 0.3)), PointScatterer((-0.005, 0.005, 0.295), 0.6)],
                         square_array, config)
    base_depth, base_conf = image_scene(cube, spec)
    rotated_depth, rotated_conf = image_scene(cube.scaled(np.exp(0.83j)), spec)
    np.testing.assert_allclose(rotated_conf, base_conf, rtol=1e-9)
    np.testing.assert_array_equal(rotated_depth.data, base_depth.data)

    scaled_depth, scaled_conf = image_scene(cube.scaled(3.5), spec)
    np.testing.assert_allclose(scaled_conf, 3.5 * base_conf, rtol=1e-9)
    np.testing.assert_array_equal(scaled_depth.data, base_depth.data)


def test_normalize_and_sweep():
    confidence = np.array([[4.0, 2.0], [1.0, 0.0]])
    np.testing.assert_allclose(normalize_confidence(confidence), [[1.0, 0.5], [0.25, 0.0]])
    assert not normalize_confidence(np.zeros((2, 2))).any()

    sweep = threshold_sweep(confidence, [0.0, -7.0, -14.0], object_mask=np.array([[1, 1], [0, 0]]))
    assert sweep["kept_pixels"].tolist() == [1, 2, 3]
    assert sweep["object_recall"].tolist() == [0.5, 1.0, 1.0]
    assert sweep["background_rejection"].tolist() == [1.0, 1.0, 0.5]


@pytest.mark.bench
@pytest.mark.skipif(os.environ.get("DEPTH_EVAL_BENCH") != "1" or (os.cpu_count() or 1) < 8,
                    reason="set DEPTH_EVAL_BENCH=1 on a machine with >= 8 CPUs")
def test_parallel_speedup(square_array, fscw32, acceptance_grid):
    cube = simulate_fscw([PointScatterer((0.0, 0.0, 0.3))], square_array, fscw32)
    began = time.perf_counter()
    serial = backproject(cube, acceptance_grid, n_jobs=1)
    serial_time = time.perf_counter() - began
    began = time.perf_counter()
    parallel = backproject(cube, acceptance_grid, n_jobs=8)
    parallel_time = time.perf_counter() - began

    assert np.argmax(serial.magnitude()) == np.argmax(parallel.magnitude())
    np.testing.assert_array_equal(serial.magnitude(), parallel.magnitude())
    assert serial_time / parallel_time >= 4.0

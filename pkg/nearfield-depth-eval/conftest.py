"""
Shared fixtures for the depth evaluation tests
"""

import numpy as np
import pytest

from models import FscwConfig, ProjectionModel, Transform4, VoxelGridSpec
from radar_signal import build_square_array
from simulator import SyntheticSceneSimulator


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def square_array():
    # 4 elements per edge: 8 TX and 8 RX
    return build_square_array(0.138, 4)


@pytest.fixture
def fscw32():
    return FscwConfig(f_min=72e9, f_max=82e9, n_f=32)


@pytest.fixture
def acceptance_grid():
    # 48^3 voxels, 2 mm steps, voxel (24, 24, 24) sits at (0, 0, 0.3)
    return VoxelGridSpec((-0.048, -0.048, 0.252), (0.002, 0.002, 0.002), (48, 48, 48))


@pytest.fixture
def ortho_projection():
    # 2 mm pixels, pixel (0, 0) at x = y = -0.02
    return ProjectionModel.orthographic(0.002, 0.002, -0.02, -0.02)


@pytest.fixture
def camera():
    return ProjectionModel.perspective(200.0, 200.0, 32.0, 24.0)


@pytest.fixture
def identity():
    return Transform4.identity()


@pytest.fixture
def simulator():
    return SyntheticSceneSimulator(seed=7)


@pytest.fixture(scope="session")
def demo_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    return SyntheticSceneSimulator(seed=3).build_demo_dataset(out)

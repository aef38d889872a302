"""
Tests for unprojection, alignment, rasterization, frame averaging, erosion and normals
"""

import logging

import numpy as np
import pytest

from models import DepthImage, PointCloud, ProjectionModel, SegMask, Transform4, TriMesh, ValidationError
from geometry import (
    align_to_sensor, apply_mask, average_frames, erode_mask, mesh_bbox_xy, rasterize_mesh_depth,
    unproject, vertex_normals,
)


def _quad(x0, x1, y0, y1, z_of):
    """Two-triangle rectangle with z given per corner by z_of(x, y)"""
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return TriMesh([(x, y, z_of(x, y)) for x, y in corners], [(0, 1, 2), (0, 2, 3)])


def test_unproject_examples(identity):
    image = np.zeros((6, 4))
    image[5, 3] = 0.4
    cloud = unproject(DepthImage(image, ProjectionModel.orthographic(1.0, 1.0)))
    np.testing.assert_allclose(cloud.points, [[3.0, 5.0, 0.4]])

    image = np.zeros((2, 2))
    image[0, 0] = 0.7
    cloud = unproject(DepthImage(image, ProjectionModel.perspective(1.0, 1.0, 0.0, 0.0)))
    np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 0.7]])

    image = np.zeros((241, 821))
    image[240, 820] = 2.0
    cloud = unproject(DepthImage(image, ProjectionModel.perspective(500.0, 500.0, 320.0, 240.0)))
    np.testing.assert_allclose(cloud.points, [[2.0, 0.0, 2.0]], atol=1e-12)


def test_unproject_is_row_major_and_honours_mask():
    image = np.array([[0.1, 0.0, 0.3], [0.4, 0.5, 0.0]])
    depth = DepthImage(image, ProjectionModel.orthographic(1.0, 1.0))
    cloud = unproject(depth)
    np.testing.assert_allclose(cloud.points[:, 2], [0.1, 0.3, 0.4, 0.5])

    mask = SegMask([[True, True, False], [False, True, True]])
    np.testing.assert_allclose(unproject(depth, mask).points, [[0.0, 0.0, 0.1], [1.0, 1.0, 0.5]])
    with pytest.raises(ValidationError):
        unproject(depth, SegMask(np.ones((3, 3))))


def test_align_to_sensor(rng):
    cloud = PointCloud([[0.0, 0.0, 0.3]])
    assert np.array_equal(align_to_sensor(cloud, Transform4.identity()).points, cloud.points)
    moved = align_to_sensor(cloud, Transform4.from_translation((0.05, 0.0, 0.0)))
    np.testing.assert_allclose(moved.points, [[0.05, 0.0, 0.3]])

    angle = 0.4
    rot = [[np.cos(angle), 0.0, np.sin(angle)], [0.0, 1.0, 0.0], [-np.sin(angle), 0.0, np.cos(angle)]]
    k1 = Transform4.from_rotation(rot, (0.01, 0.02, -0.03))
    k2 = Transform4.from_translation((0.0, -0.1, 0.25))
    random = PointCloud(rng.normal(size=(50, 3)))
    stepwise = align_to_sensor(align_to_sensor(random, k1), k2)
    at_once = align_to_sensor(random, k2.compose(k1))
    np.testing.assert_allclose(at_once.points, stepwise.points, atol=1e-12)
    back = align_to_sensor(align_to_sensor(random, k1), k1.inverse())
    np.testing.assert_allclose(back.points, random.points, atol=1e-10)

    mesh = _quad(0, 1, 0, 1, lambda x, y: 0.0)
    aligned = align_to_sensor(mesh, k2)
    assert isinstance(aligned, TriMesh)
    np.testing.assert_array_equal(aligned.faces, mesh.faces)


def test_rasterize_constant_triangle_and_empty_mesh(identity):
    ortho = ProjectionModel.orthographic(1.0, 1.0)
    triangle = TriMesh([(-1, -1, 0.5), (20, -1, 0.5), (-1, 20, 0.5)], [(0, 1, 2)])
    image = rasterize_mesh_depth(triangle, ortho, identity, 4, 3)
    np.testing.assert_array_equal(image.data, np.full((3, 4), 0.5))

    empty = rasterize_mesh_depth(TriMesh.empty(), ortho, identity, 4, 3)
    assert not empty.valid_mask().any()
    with pytest.raises(ValidationError):
        rasterize_mesh_depth(triangle, ortho, identity, 0, 3)


def test_rasterize_shared_edges_leave_no_holes(camera, identity, simulator, rng):
    tilted = _quad(-0.5, 0.5, -0.5, 0.5, lambda x, y: 0.3 + 0.2 * x)
    assert rasterize_mesh_depth(tilted, camera, identity, 64, 48).valid_mask().all()

    # diagonal running exactly through pixel centers
    ortho = ProjectionModel.orthographic(1.0, 1.0)
    aligned = _quad(-0.5, 3.5, -0.5, 3.5, lambda x, y: 0.5)
    np.testing.assert_array_equal(rasterize_mesh_depth(aligned, ortho, identity, 4, 4).data, np.full((4, 4), 0.5))

    plane = simulator.create_plane_mesh(0.4, 0.4, z=0.3, subdivisions=10)
    jittered = TriMesh(plane.vertices + np.c_[rng.uniform(-0.008, 0.008, (len(plane.vertices), 2)),
                                              np.zeros(len(plane.vertices))], plane.faces)
    for threads in (1, 3):
        image = rasterize_mesh_depth(jittered, camera, identity, 64, 48, n_jobs=threads)
        assert image.valid_mask().all()


def test_rasterize_slanted_plane(ortho_projection, identity):
    mesh = _quad(-0.03, 0.03, -0.03, 0.03, lambda x, y: 0.4 + 0.01 * x)
    image = rasterize_mesh_depth(mesh, ortho_projection, identity, 20, 20)
    x = -0.02 + 0.002 * np.arange(20)
    expected = np.tile(0.4 + 0.01 * x, (20, 1))
    np.testing.assert_allclose(image.data, expected, rtol=0, atol=1e-9)


def test_rasterize_nearest_surface_wins(ortho_projection, identity):
    far = _quad(-0.03, 0.03, -0.03, 0.03, lambda x, y: 0.5)
    near = _quad(-0.01, 0.01, -0.01, 0.01, lambda x, y: 0.3)
    both = TriMesh(np.vstack([far.vertices, near.vertices]), np.vstack([far.faces, near.faces + 4]))
    image = rasterize_mesh_depth(both, ortho_projection, identity, 20, 20)
    assert image.data[10, 10] == pytest.approx(0.3)
    assert image.data[0, 0] == pytest.approx(0.5)


def test_rasterize_threads_match_serial(camera, identity, simulator):
    dome = simulator.create_hemisphere_mesh(0.02, center=(0.0, 0.0, 0.3), n_rings=8, n_segments=16)
    serial = rasterize_mesh_depth(dome, camera, identity, 64, 48)
    banded = rasterize_mesh_depth(dome, camera, identity, 64, 48, n_jobs=4)
    np.testing.assert_array_equal(banded.data, serial.data)
    assert serial.valid_mask().any()


def test_rasterize_skips_triangles_behind_camera(camera, identity):
    behind = TriMesh([(-1, -1, -0.2), (1, -1, -0.2), (0, 1, 0.3)], [(0, 1, 2)])
    image = rasterize_mesh_depth(behind, camera, identity, 64, 48)
    assert not image.valid_mask().any()


def test_unproject_of_rasterized_points_lie_on_the_surface(ortho_projection, camera, identity):
    plane = lambda x, y: 0.4 + 0.01 * x
    mesh = _quad(-0.03, 0.03, -0.03, 0.03, plane)
    points = unproject(rasterize_mesh_depth(mesh, ortho_projection, identity, 20, 20)).points
    assert len(points) == 400
    np.testing.assert_allclose(points[:, 2], plane(points[:, 0], points[:, 1]), atol=1e-6)

    tilted = lambda x, y: 0.3 + 0.2 * x
    mesh = _quad(-0.5, 0.5, -0.5, 0.5, tilted)
    points = unproject(rasterize_mesh_depth(mesh, camera, identity, 64, 48)).points
    assert len(points) == 64 * 48
    np.testing.assert_allclose(points[:, 2], tilted(points[:, 0], points[:, 1]), atol=1e-9)


def test_average_frames_examples():
    ortho = ProjectionModel.orthographic(1.0, 1.0)
    frames = [DepthImage(np.array([[1.0, 0.0]]), ortho),
              DepthImage(np.array([[0.0, 0.0]]), ortho),
              DepthImage(np.array([[2.0, 0.0]]), ortho)]
    mean = average_frames(frames)
    np.testing.assert_array_equal(mean.data, [[1.5, 0.0]])

    single = DepthImage(np.array([[0.3, 0.0, 0.7]]), ortho)
    np.testing.assert_array_equal(average_frames([single]).data, single.data)

    with pytest.raises(ValidationError, match="empty list"):
        average_frames([])
    with pytest.raises(ValidationError):
        average_frames([single, DepthImage(np.ones((2, 3)), ortho)])


def test_average_frames_ignores_frame_order(rng):
    ortho = ProjectionModel.orthographic(1.0, 1.0)
    stack = rng.uniform(0.2, 0.4, (7, 5, 5)) * (rng.random((7, 5, 5)) > 0.3)
    frames = [DepthImage(f, ortho) for f in stack]
    reference = average_frames(frames).data
    for _ in range(5):
        order = rng.permutation(len(frames))
        np.testing.assert_array_equal(average_frames([frames[i] for i in order]).data, reference)


def test_erode_mask_examples(caplog):
    square = SegMask(np.ones((5, 5)))
    interior = np.zeros((5, 5), dtype=bool)
    interior[1:4, 1:4] = True
    np.testing.assert_array_equal(erode_mask(square, 3).bits, interior)
    assert erode_mask(square, 0) is square
    assert erode_mask(square, 1) is square

    dot = np.zeros((5, 5), dtype=bool)
    dot[2, 2] = True
    assert not erode_mask(SegMask(dot), 3).bits.any()

    with pytest.raises(ValidationError):
        erode_mask(square, -1)
    with caplog.at_level(logging.WARNING, logger="geometry"):
        assert not erode_mask(SegMask(np.ones((30, 30))), 25).bits[0].any()
    assert "exceeds" in caplog.text


def test_apply_mask():
    depth = DepthImage(np.array([[0.3, 0.4]], dtype=np.float32), ProjectionModel.orthographic(1.0, 1.0))
    masked = apply_mask(depth, SegMask([[False, True]]))
    np.testing.assert_array_equal(masked.data, np.array([[0.0, 0.4]], dtype=np.float32))
    assert masked.data.dtype == np.float32
    assert apply_mask(depth, None) is depth


def test_vertex_normals_examples():
    square = _quad(0, 1, 0, 1, lambda x, y: 0.0)
    normals, valid = vertex_normals(square)
    assert valid.all()
    np.testing.assert_allclose(normals, np.tile([0.0, 0.0, 1.0], (4, 1)))

    # outward-wound corner of a unit cube plus one isolated vertex
    corner = TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (5, 5, 5)],
                     [(0, 2, 1), (0, 1, 3), (0, 3, 2)])
    normals, valid = vertex_normals(corner)
    np.testing.assert_allclose(normals[0], -np.ones(3) / np.sqrt(3), atol=1e-12)
    assert valid.tolist() == [True, True, True, True, False]
    np.testing.assert_array_equal(normals[4], 0.0)
    np.testing.assert_allclose(np.linalg.norm(normals[valid], axis=1), 1.0, atol=1e-12)


def test_mesh_bbox(simulator):
    dome = simulator.create_hemisphere_mesh(0.02, center=(0.01, 0.0, 0.3), n_rings=4, n_segments=8)
    xmin, ymin, xmax, ymax = mesh_bbox_xy(dome)
    assert xmin == pytest.approx(-0.01) and xmax == pytest.approx(0.03)
    assert ymin == pytest.approx(-0.02) and ymax == pytest.approx(0.02)
    with pytest.raises(ValidationError):
        mesh_bbox_xy(TriMesh.empty())

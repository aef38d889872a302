"""
Depth Geometry
Depth map <-> point cloud conversion, GT alignment, z-buffer rasterization of meshes,
frame averaging, mask erosion and vertex normals
"""

import logging
import math
from typing import List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import ndimage

from models import (
    DepthImage, PointCloud, ProjectionModel, SegMask, TriMesh, Transform4, ValidationError,
)

logger = logging.getLogger(__name__)

MAX_EROSION_KERNEL = 20
MIN_CAMERA_DEPTH = 1e-9  # m; vertices closer than this to a perspective camera are unprojectable


def unproject(depth: DepthImage, mask: Optional[SegMask] = None) -> PointCloud:
    """Back-project every valid pixel: p = T^-1·(u·a, v·a, d, 1), a = d (perspective) or 1"""
    valid = depth.valid_mask()
    if mask is not None:
        if mask.bits.shape != valid.shape:
            raise ValidationError("mask dimensions do not match the depth image")
        valid &= mask.bits
    v, u = np.nonzero(valid)
    d = depth.data[v, u].astype(np.float64)
    a = d if depth.projection.is_perspective else np.ones_like(d)
    homog = np.stack([u * a, v * a, d, np.ones_like(d)], axis=1)
    inverse = np.linalg.inv(depth.projection.matrix(depth.transform))
    return PointCloud((homog @ inverse.T)[:, :3])


def align_to_sensor(geometry: Union[PointCloud, TriMesh], k_g_to_s: Transform4) -> Union[PointCloud, TriMesh]:
    """Move GT-space geometry into sensor space by applying the calibration to every point"""
    if isinstance(geometry, TriMesh):
        return TriMesh(k_g_to_s.apply(geometry.vertices), geometry.faces)
    return PointCloud(k_g_to_s.apply(geometry.points))


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _shared_edge(ax, ay, bx, by, px, py):
    # evaluated from the lexicographically smaller endpoint so both triangles
    # sharing an edge see bitwise opposite values
    if (ax, ay) > (bx, by):
        return -_edge(bx, by, ax, ay, px, py)
    return _edge(ax, ay, bx, by, px, py)


def _covers(weight: np.ndarray, ax: float, ay: float, bx: float, by: float) -> np.ndarray:
    # top-left rule: pixels exactly on an edge belong to the triangle only for top/left edges
    dx, dy = bx - ax, by - ay
    top_left = dy < 0 or (dy == 0 and dx > 0)
    return (weight > 0) | ((weight == 0) & top_left)


def _rasterize_band(screen: np.ndarray, depths: np.ndarray, perspective: bool,
                    width: int, row0: int, row1: int) -> np.ndarray:
    zbuf = np.full((row1 - row0, width), np.inf)
    for tri, d in zip(screen, depths):
        (u0, v0), (u1, v1), (u2, v2) = tri
        area = _edge(u0, v0, u1, v1, u2, v2)
        if area == 0:
            continue
        if area < 0:
            (u1, v1), (u2, v2) = (u2, v2), (u1, v1)
            d = d[[0, 2, 1]]
            area = -area

        umin = max(math.ceil(min(u0, u1, u2)), 0)
        umax = min(math.floor(max(u0, u1, u2)), width - 1)
        vmin = max(math.ceil(min(v0, v1, v2)), row0)
        vmax = min(math.floor(max(v0, v1, v2)), row1 - 1)
        if umin > umax or vmin > vmax:
            continue

        uu, vv = np.meshgrid(np.arange(umin, umax + 1, dtype=np.float64),
                             np.arange(vmin, vmax + 1, dtype=np.float64))
        w0 = _shared_edge(u1, v1, u2, v2, uu, vv)
        w1 = _shared_edge(u2, v2, u0, v0, uu, vv)
        w2 = _shared_edge(u0, v0, u1, v1, uu, vv)
        inside = (_covers(w0, u1, v1, u2, v2) & _covers(w1, u2, v2, u0, v0)
                  & _covers(w2, u0, v0, u1, v1))
        if not inside.any():
            continue

        l1, l2 = w1 / area, w2 / area
        if perspective:
            # 1/z is affine in screen space
            inv = 1.0 / d
            with np.errstate(divide="ignore"):
                z = 1.0 / (inv[0] + l1 * (inv[1] - inv[0]) + l2 * (inv[2] - inv[0]))
        else:
            # anchored at vertex 0 so a constant-depth triangle stays exact
            z = d[0] + l1 * (d[1] - d[0]) + l2 * (d[2] - d[0])

        tile = zbuf[vmin - row0:vmax - row0 + 1, umin:umax + 1]
        closer = inside & (z > 0) & (z < tile)
        tile[closer] = z[closer]
    return zbuf


def rasterize_mesh_depth(mesh: TriMesh, model: ProjectionModel, transform: Transform4,
                         width: int, height: int, n_jobs: int = 1) -> DepthImage:
    """
    Z-buffer rasterization sampling each pixel at its center (integer projection
    coordinates). The nearest surface wins; uncovered pixels stay 0.
    """
    if width < 1 or height < 1:
        raise ValidationError("raster size must be positive")
    image = np.zeros((height, width))
    if len(mesh.faces) == 0:
        return DepthImage(image, model, transform)

    proj = model.matrix(transform)
    h = mesh.vertices @ proj[:3, :3].T + proj[:3, 3]
    if model.is_perspective:
        depth = h[:, 2]
        safe = np.where(depth > MIN_CAMERA_DEPTH, depth, 1.0)
        screen_u, screen_v = h[:, 0] / safe, h[:, 1] / safe
    else:
        depth, screen_u, screen_v = h[:, 2], h[:, 0], h[:, 1]

    faces = mesh.faces
    tri_depth = depth[faces]
    keep = np.ones(len(faces), dtype=bool)
    if model.is_perspective:
        keep = np.all(tri_depth > MIN_CAMERA_DEPTH, axis=1)
        if not keep.all():
            logger.debug("skipping %d triangles behind the camera", int((~keep).sum()))
    screen = np.stack([screen_u[faces], screen_v[faces]], axis=2)[keep]
    tri_depth = tri_depth[keep]

    n_bands = max(1, min(int(n_jobs), height))
    bounds = np.linspace(0, height, n_bands + 1).astype(int)
    row_min = screen[:, :, 1].min(axis=1)
    row_max = screen[:, :, 1].max(axis=1)

    def band_faces(row0, row1):
        hit = (row_max >= row0 - 1) & (row_min <= row1)
        return screen[hit], tri_depth[hit]

    bands = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_rasterize_band)(*band_faces(r0, r1), model.is_perspective, width, r0, r1)
        for r0, r1 in zip(bounds[:-1], bounds[1:])
    )
    zbuf = np.vstack(bands)
    image = np.where(np.isfinite(zbuf), zbuf, 0.0)
    return DepthImage(image, model, transform)


def average_frames(frames: List[DepthImage]) -> DepthImage:
    """Per-pixel mean over the frames where the pixel is valid; invalid everywhere stays 0"""
    if not frames:
        raise ValidationError("empty list")
    first = frames[0]
    for frame in frames[1:]:
        if not first.same_layout(frame):
            raise ValidationError("frames must share dimensions and projection")
    stack = np.stack([f.data.astype(np.float64) for f in frames])
    valid = stack > 0
    # sorting makes the summation order independent of the frame order
    values = np.sort(np.where(valid, stack, 0.0), axis=0)
    count = valid.sum(axis=0)
    mean = np.divide(values.sum(axis=0), count, out=np.zeros(first.data.shape), where=count > 0)
    dtype = np.result_type(*[f.data.dtype for f in frames])
    return first.with_data(mean.astype(dtype))


def erode_mask(mask: SegMask, k: int) -> SegMask:
    """Binary erosion with a k×k all-true element anchored at its center; k <= 1 is identity"""
    if k < 0:
        raise ValidationError("erosion kernel size must be >= 0")
    if k > MAX_EROSION_KERNEL:
        logger.warning("erosion kernel %d exceeds the usual maximum of %d", k, MAX_EROSION_KERNEL)
    if k <= 1:
        return mask
    eroded = ndimage.binary_erosion(mask.bits, structure=np.ones((k, k), dtype=bool), border_value=0)
    return SegMask(eroded)


def apply_mask(depth: DepthImage, mask: Optional[SegMask]) -> DepthImage:
    if mask is None:
        return depth
    if mask.bits.shape != depth.data.shape:
        raise ValidationError("mask dimensions do not match the depth image")
    return depth.with_data(np.where(mask.bits, depth.data, 0.0).astype(depth.data.dtype))


def vertex_normals(mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    Area-weighted vertex normals following the face winding.

    Returns (normals, valid); vertices without faces get a zero normal and valid=False.
    """
    normals = np.zeros_like(mesh.vertices)
    if len(mesh.faces):
        tri = mesh.vertices[mesh.faces]
        # cross product length is twice the face area
        face_normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        for corner in range(3):
            np.add.at(normals, mesh.faces[:, corner], face_normals)
    length = np.linalg.norm(normals, axis=1)
    valid = length > 0
    normals[valid] /= length[valid][:, None]
    return normals, valid


def mesh_bbox_xy(mesh: TriMesh) -> Tuple[float, float, float, float]:
    if len(mesh.vertices) == 0:
        raise ValidationError("empty mesh has no bounding box")
    lo = mesh.vertices[:, :2].min(axis=0)
    hi = mesh.vertices[:, :2].max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

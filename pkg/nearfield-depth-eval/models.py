"""
Near-Field Depth Evaluation - Data Models
Defines the core data structures for depth maps, meshes, radar signals and reports
"""

from dataclasses import dataclass, field
from typing import List, Dict, Optional, Tuple
from enum import Enum
import math

import numpy as np
from scipy.constants import speed_of_light

SPEED_OF_LIGHT = float(speed_of_light)  # m/s, vacuum


class DepthEvalError(Exception):
    """Base class for every error raised by this project"""


class FormatError(DepthEvalError):
    """A file could not be decoded"""


class ValidationError(DepthEvalError, ValueError):
    """An invariant or precondition was violated"""


class ProjectionKind(Enum):
    """Camera models for the (u·d, v·d, d) unprojection"""
    PERSPECTIVE = "perspective"  # a = d
    ORTHOGRAPHIC = "orthographic"  # a = 1


class SensorKind(Enum):
    OPTICAL = "optical"
    RADAR = "radar"


class MaterialClass(Enum):
    """Coarse object material classes used to group radar results"""
    METAL = "metal"
    FIBERS_AND_STONE = "fibers-and-stone"
    POLYMER = "polymer"
    SKIN = "skin"
    FOAM_AND_FABRIC = "foam-and-fabric"
    OUTSIDE_FOV = "outside-fov"


class DistanceTag(Enum):
    """Nominal sensor-to-object capture distances"""
    CM30 = 30
    CM40 = 40
    CM50 = 50

    @property
    def centimeters(self) -> int:
        return self.value

    @property
    def meters(self) -> float:
        return self.value / 100.0

    @classmethod
    def from_cm(cls, value) -> "DistanceTag":
        try:
            return cls(int(round(float(value))))
        except ValueError:
            raise ValidationError(f"unsupported distance tag: {value} cm") from None


def _as_matrix(values, shape: Tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise ValidationError(f"{name} needs {int(np.prod(shape))} values, got {arr.size}")
    arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Transform4:
    """Homogeneous 4x4 rigid/affine transform, row-major, translation in meters"""
    m: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.m, (4, 4), "transform")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValidationError("transform last row must be (0, 0, 0, 1)")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise ValidationError("transform is not invertible")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Transform4":
        return cls(np.eye(4))

    @classmethod
    def from_translation(cls, offset) -> "Transform4":
        m = np.eye(4)
        m[:3, 3] = np.asarray(offset, dtype=np.float64)
        return cls(m)

    @classmethod
    def from_rotation(cls, rotation, offset=(0.0, 0.0, 0.0)) -> "Transform4":
        m = np.eye(4)
        m[:3, :3] = np.asarray(rotation, dtype=np.float64)
        m[:3, 3] = np.asarray(offset, dtype=np.float64)
        return cls(m)

    def inverse(self) -> "Transform4":
        inv = np.linalg.inv(self.m)
        inv[3] = (0.0, 0.0, 0.0, 1.0)
        return Transform4(inv)

    def compose(self, other: "Transform4") -> "Transform4":
        """self ∘ other: apply other first"""
        return Transform4(self.m @ other.m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map N×3 points, p' = M·p in homogeneous coordinates"""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.m[:3, :3].T + self.m[:3, 3]

    def to_list(self) -> List[float]:
        return [float(v) for v in self.m.ravel()]


@dataclass(frozen=True, eq=False)
class ProjectionModel:
    """Intrinsics (perspective) or scale matrix (orthographic) plus pixel offset t"""
    kind: ProjectionKind
    intrinsics: np.ndarray
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        intrinsics = _as_matrix(self.intrinsics, (3, 3), "intrinsics")
        if abs(np.linalg.det(intrinsics)) <= 1e-12:
            raise ValidationError("intrinsics/scale matrix is not invertible")
        object.__setattr__(self, "kind", ProjectionKind(self.kind))
        object.__setattr__(self, "intrinsics", intrinsics)
        object.__setattr__(self, "offset", _as_matrix(self.offset, (3,), "offset"))

    @classmethod
    def perspective(cls, fx: float, fy: float, cx: float, cy: float) -> "ProjectionModel":
        return cls(ProjectionKind.PERSPECTIVE, [[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])

    @classmethod
    def orthographic(cls, step_x: float, step_y: float,
                     origin_x: float = 0.0, origin_y: float = 0.0) -> "ProjectionModel":
        """Pixel u = (x - origin_x) / step_x, v = (y - origin_y) / step_y"""
        scale = np.diag([1.0 / step_x, 1.0 / step_y, 1.0])
        offset = np.array([-origin_x / step_x, -origin_y / step_y, 0.0])
        return cls(ProjectionKind.ORTHOGRAPHIC, scale, offset)

    @property
    def is_perspective(self) -> bool:
        return self.kind == ProjectionKind.PERSPECTIVE

    def matrix(self, transform: Optional[Transform4] = None) -> np.ndarray:
        """Full 4x4 projection T = [[I, t], [0, 1]] · transform"""
        proj = np.eye(4)
        proj[:3, :3] = self.intrinsics
        proj[:3, 3] = self.offset
        if transform is not None:
            proj = proj @ transform.m
        return proj

    def same_as(self, other: "ProjectionModel") -> bool:
        return (self.kind == other.kind
                and np.array_equal(self.intrinsics, other.intrinsics)
                and np.array_equal(self.offset, other.offset))


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Row-major H×W depth map in meters; 0 marks an invalid pixel"""
    data: np.ndarray
    projection: ProjectionModel
    transform: Transform4 = field(default_factory=Transform4.identity)

    def __post_init__(self):
        data = np.array(self.data, copy=True)
        if data.dtype.kind != "f":
            data = data.astype(np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"depth data must be a non-empty 2D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("non-finite values in depth image")
        if np.any(data < 0):
            raise ValidationError("negative depth values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def valid_mask(self) -> np.ndarray:
        return self.data > 0

    def with_data(self, data: np.ndarray) -> "DepthImage":
        return DepthImage(data, self.projection, self.transform)

    def same_layout(self, other: "DepthImage") -> bool:
        return self.data.shape == other.data.shape and self.projection.same_as(other.projection)


@dataclass(frozen=True, eq=False)
class SegMask:
    """Binary object segmentation, True = object"""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool, copy=True)
        if bits.ndim != 2:
            raise ValidationError(f"mask must be 2D, got shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValidationError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64, copy=True).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise ValidationError("mesh contains non-finite vertices")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValidationError("face index out of range")
        if faces.size:
            tri = vertices[faces]
            areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
            bad = np.flatnonzero(areas < 1e-12)
            if bad.size:
                raise ValidationError(f"degenerate face {int(bad[0])} (zero area)")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


# ---------------------------------------------------------------------------
# Radar signal types

@dataclass(frozen=True)
class FscwConfig:
    """Frequency-stepped CW sweep: n_f tones from f_min in steps of (f_max - f_min) / n_f"""
    f_min: float
    f_max: float
    n_f: int
    phi_c: float = 0.0
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not (self.f_max > self.f_min > 0):
            raise ValidationError("FSCW config needs f_max > f_min > 0")
        if int(self.n_f) < 1:
            raise ValidationError("FSCW config needs n_f >= 1")
        if not self.c > 0:
            raise ValidationError("propagation speed must be positive")
        object.__setattr__(self, "n_f", int(self.n_f))

    @property
    def bandwidth(self) -> float:
        return self.f_max - self.f_min

    @property
    def step(self) -> float:
        return self.bandwidth / self.n_f

    def frequencies(self) -> np.ndarray:
        """Half-open grid f_n = f_min + n·Δf, n = 0..n_f-1"""
        return self.f_min + np.arange(self.n_f) * self.step


@dataclass(frozen=True, eq=False)
class MimoArray:
    tx_positions: np.ndarray
    rx_positions: np.ndarray

    def __post_init__(self):
        tx = np.array(self.tx_positions, dtype=np.float64, copy=True).reshape(-1, 3)
        rx = np.array(self.rx_positions, dtype=np.float64, copy=True).reshape(-1, 3)
        if len(tx) == 0 or len(rx) == 0:
            raise ValidationError("MIMO array needs at least one TX and one RX")
        if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx))):
            raise ValidationError("antenna positions must be finite")
        tx.setflags(write=False)
        rx.setflags(write=False)
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)

    @property
    def n_tx(self) -> int:
        return len(self.tx_positions)

    @property
    def n_rx(self) -> int:
        return len(self.rx_positions)

    def bbox_xy(self) -> Tuple[float, float, float, float]:
        pts = np.vstack([self.tx_positions, self.rx_positions])
        return (float(pts[:, 0].min()), float(pts[:, 1].min()),
                float(pts[:, 0].max()), float(pts[:, 1].max()))


@dataclass(frozen=True)
class PointScatterer:
    position: Tuple[float, float, float]
    reflectivity: float = 1.0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise ValidationError("scatterer position must be a finite 3-vector")
        if not self.reflectivity >= 0:
            raise ValidationError("scatterer reflectivity must be >= 0")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True, eq=False)
class RawSignalCube:
    """Demodulated received phasors indexed [rx][tx][freq]"""
    data: np.ndarray
    config: FscwConfig
    array: MimoArray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128, copy=True)
        expected = (self.array.n_rx, self.array.n_tx, self.config.n_f)
        if data.shape != expected:
            raise ValidationError(f"cube shape {data.shape} does not match (N_RX, N_TX, N_f) = {expected}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("non-finite values in raw signal cube")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def scaled(self, factor: complex) -> "RawSignalCube":
        return RawSignalCube(self.data * factor, self.config, self.array)


@dataclass(frozen=True)
class AmcwConfig:
    f_m: float  # modulation frequency, Hz

    def __post_init__(self):
        if not self.f_m > 0:
            raise ValidationError("modulation frequency must be positive")

    @property
    def period(self) -> float:
        return 1.0 / self.f_m


# ---------------------------------------------------------------------------
# Imaging types

@dataclass(frozen=True)
class VoxelGridSpec:
    """Regular voxel grid; origin is the center of voxel (0, 0, 0)"""
    origin: Tuple[float, float, float]
    step: Tuple[float, float, float]
    dims: Tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        step = tuple(float(v) for v in self.step)
        dims = tuple(int(v) for v in self.dims)
        if len(origin) != 3 or len(step) != 3 or len(dims) != 3:
            raise ValidationError("voxel grid origin, step and dims need three components")
        if any(s <= 0 for s in step):
            raise ValidationError("voxel steps must be > 0")
        if any(d < 1 for d in dims):
            raise ValidationError("voxel dims must be >= 1")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "dims", dims)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def axis(self, index: int) -> np.ndarray:
        return self.origin[index] + np.arange(self.dims[index]) * self.step[index]

    def centers(self) -> np.ndarray:
        """All voxel centers, flattened in C order over (x, y, z)"""
        gx, gy, gz = np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def center_of(self, index: Tuple[int, int, int]) -> np.ndarray:
        return np.array(self.origin) + np.array(index) * np.array(self.step)

    def index_of(self, point) -> Tuple[int, int, int]:
        """Nearest voxel index of a world point (may lie outside the grid)"""
        rel = (np.asarray(point, dtype=np.float64) - np.array(self.origin)) / np.array(self.step)
        return tuple(int(v) for v in np.rint(rel))


@dataclass(frozen=True, eq=False)
class ConfidenceVolume:
    spec: VoxelGridSpec
    values: np.ndarray  # complex c_BP, shape dims

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.spec.dims:
            raise ValidationError(f"volume shape {values.shape} does not match grid {self.spec.dims}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("non-finite values in confidence volume")
        object.__setattr__(self, "values", values)

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


# ---------------------------------------------------------------------------
# Capture and evaluation types

@dataclass
class CaptureRecord:
    """All frames one sensor took of one object at one distance"""
    object_id: str
    sensor_id: str
    frames: List[DepthImage]
    masks: List[SegMask]
    calibration: Transform4  # K_{g->s}
    distance: DistanceTag
    material_class: MaterialClass
    sensor_kind: SensorKind = SensorKind.OPTICAL
    quasi_static: bool = False
    outside_fov: bool = False
    raw_cubes: List[RawSignalCube] = field(default_factory=list)

    def __post_init__(self):
        if not self.frames:
            raise ValidationError(f"capture {self.object_id}/{self.sensor_id} has no frames")
        first = self.frames[0]
        for frame in self.frames[1:]:
            if not first.same_layout(frame):
                raise ValidationError("all frames of a capture must share dimensions and projection")
        for mask in self.masks:
            if mask.bits.shape != first.data.shape:
                raise ValidationError("mask dimensions do not match the depth frames")

    @property
    def key(self) -> Tuple[str, str, int]:
        return (self.object_id, self.sensor_id, self.distance.centimeters)


METRIC_NAMES = ("C1", "C2", "P1", "P2", "P1s", "P2s")
SIGNED_METRICS = ("P1s", "P2s")
DEFAULT_RADAR_SENSOR = "rf_tof"


@dataclass
class MetricStats:
    """Summary of one metric in centimeters"""
    mean_cm: float
    std_cm: float
    median_cm: float
    count: int
    flagged: bool = False  # empty domain

    @classmethod
    def empty(cls) -> "MetricStats":
        nan = float("nan")
        return cls(nan, nan, nan, 0, True)

    def to_dict(self) -> Dict:
        def fmt(value: float) -> Optional[float]:
            return None if math.isnan(value) else float(f"{value:.9g}")
        return {
            "mean_cm": fmt(self.mean_cm),
            "std_cm": fmt(self.std_cm),
            "median_cm": fmt(self.median_cm),
            "count": int(self.count),
            "flagged": bool(self.flagged),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MetricStats":
        def read(value) -> float:
            return float("nan") if value is None else float(value)
        return cls(read(data.get("mean_cm")), read(data.get("std_cm")),
                   read(data.get("median_cm")), int(data.get("count", 0)),
                   bool(data.get("flagged", False)))


@dataclass
class MetricReport:
    """Per-object, per-sensor deviation statistics"""
    object_id: str
    sensor_id: str
    distance_cm: int
    erosion_k: int
    metrics: Dict[str, MetricStats] = field(default_factory=dict)

    def __post_init__(self):
        for name, stats in self.metrics.items():
            if name not in METRIC_NAMES:
                raise ValidationError(f"unknown metric {name}")
            if stats.count < 0 or (not math.isnan(stats.std_cm) and stats.std_cm < 0):
                raise ValidationError(f"invalid statistics for {name}")

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization"""
        return {
            "object": self.object_id,
            "sensor": self.sensor_id,
            "distance_cm": int(self.distance_cm),
            "erosion_k": int(self.erosion_k),
            "metrics": {name: self.metrics[name].to_dict() for name in METRIC_NAMES if name in self.metrics},
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MetricReport":
        return cls(
            object_id=str(data["object"]),
            sensor_id=str(data["sensor"]),
            distance_cm=int(data["distance_cm"]),
            erosion_k=int(data.get("erosion_k", 0)),
            metrics={name: MetricStats.from_dict(stats) for name, stats in data.get("metrics", {}).items()},
        )


@dataclass
class ObjectStats:
    """Radar-side descriptors of one object used for the scatter analysis"""
    object_id: str
    material_class: MaterialClass
    outside_fov: bool = False
    signal_magnitude: Optional[float] = None
    incidence_median_deg: Optional[float] = None
    relative_area: Optional[float] = None

    def to_dict(self) -> Dict:
        def fmt(value):
            return None if value is None else float(f"{value:.9g}")
        return {
            "object": self.object_id,
            "material_class": self.material_class.value,
            "outside_fov": bool(self.outside_fov),
            "signal_magnitude": fmt(self.signal_magnitude),
            "incidence_median_deg": fmt(self.incidence_median_deg),
            "relative_area": fmt(self.relative_area),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ObjectStats":
        return cls(
            object_id=str(data["object"]),
            material_class=MaterialClass(data["material_class"]),
            outside_fov=bool(data.get("outside_fov", False)),
            signal_magnitude=data.get("signal_magnitude"),
            incidence_median_deg=data.get("incidence_median_deg"),
            relative_area=data.get("relative_area"),
        )


@dataclass
class BaryTriple:
    """Affine coordinates of every object inside one sensor triangle"""
    labels: Tuple[str, str, str]
    weights: Dict[str, Tuple[float, float, float]] = field(default_factory=dict)

    @property
    def triple_id(self) -> str:
        return "|".join(self.labels)

"""
Dataset File I/O
Bit-exact readers and writers for depth maps (.dmap), raw radar cubes (.rsc),
OBJ meshes, PGM masks, calibration JSON and capture manifests
"""

import json
import logging
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from models import (
    CaptureRecord, DepthImage, DistanceTag, FormatError, FscwConfig, MaterialClass,
    MimoArray, PointCloud, ProjectionKind, ProjectionModel, RawSignalCube, SegMask,
    SensorKind, TriMesh, Transform4, ValidationError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DMAP_MAGIC = b"MRNDMAP1"
RSC_MAGIC = b"MRNRSC01"
DEFAULT_MATERIAL_TABLE = Path(__file__).resolve().parent / "data" / "material_classes.json"


def _dump_header(header: Dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def read_json_document(path: PathLike, what: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed {what} {path}: {exc}") from None


@contextmanager
def decoding(what: str, path: Optional[PathLike] = None):
    """Report missing keys and mistyped values of a JSON document as FormatError"""
    where = f"malformed {what}" + (f" {path}" if path is not None else "")
    try:
        yield
    except ValidationError:
        raise
    except KeyError as exc:
        raise FormatError(f"{where}: missing key {exc}") from None
    except (TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"{where}: {exc}") from None


def _read_container(path: PathLike, magic: bytes) -> Tuple[Dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[:len(magic)] != magic:
        raise FormatError(f"bad magic in {path}")
    pos = len(magic)
    if len(raw) < pos + 4:
        raise FormatError(f"truncated header in {path}")
    (header_len,) = struct.unpack("<I", raw[pos:pos + 4])
    pos += 4
    if len(raw) < pos + header_len:
        raise FormatError(f"truncated header in {path}")
    try:
        header = json.loads(raw[pos:pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed header in {path}: {exc}") from None
    return header, raw[pos + header_len:]


def _write_container(path: PathLike, magic: bytes, header: Dict, payload: bytes):
    head = _dump_header(header)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(payload)


def _check_payload(payload: bytes, expected: int, path: PathLike):
    if len(payload) < expected:
        raise FormatError(f"truncated payload in {path}: {len(payload)} < {expected} bytes")
    if len(payload) > expected:
        raise FormatError(f"header/payload size mismatch in {path}: {len(payload)} != {expected} bytes")


# ---------------------------------------------------------------------------
# Depth maps

def save_depth_image(path: PathLike, image: DepthImage):
    header = {
        "width": image.width,
        "height": image.height,
        "projection": image.projection.kind.value,
        "intrinsics": [float(v) for v in image.projection.intrinsics.ravel()],
        "offset": [float(v) for v in image.projection.offset],
        "transform": image.transform.to_list(),
    }
    payload = np.ascontiguousarray(image.data, dtype="<f4").tobytes()
    _write_container(path, DMAP_MAGIC, header, payload)


def load_depth_image(path: PathLike) -> DepthImage:
    header, payload = _read_container(path, DMAP_MAGIC)
    try:
        width, height = int(header["width"]), int(header["height"])
        projection = ProjectionModel(
            ProjectionKind(header["projection"]), header["intrinsics"], header["offset"])
        transform = Transform4(np.array(header["transform"], dtype=np.float64).reshape(4, 4))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed depth header in {path}: {exc}") from None
    if width < 1 or height < 1:
        raise FormatError(f"invalid depth image size {width}x{height} in {path}")
    _check_payload(payload, width * height * 4, path)
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width).astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"non-finite values in {path}")
    return DepthImage(data, projection, transform)


# ---------------------------------------------------------------------------
# Raw radar cubes

def save_raw_cube(path: PathLike, cube: RawSignalCube):
    header = {
        "n_rx": cube.array.n_rx,
        "n_tx": cube.array.n_tx,
        "n_f": cube.config.n_f,
        "f_min_hz": float(cube.config.f_min),
        "f_max_hz": float(cube.config.f_max),
        "phi_c": float(cube.config.phi_c),
        "rx_positions": cube.array.rx_positions.tolist(),
        "tx_positions": cube.array.tx_positions.tolist(),
    }
    interleaved = np.empty(cube.data.shape + (2,), dtype="<f4")
    interleaved[..., 0] = cube.data.real
    interleaved[..., 1] = cube.data.imag
    _write_container(path, RSC_MAGIC, header, interleaved.tobytes())


def load_raw_cube(path: PathLike) -> RawSignalCube:
    header, payload = _read_container(path, RSC_MAGIC)
    try:
        n_rx, n_tx, n_f = int(header["n_rx"]), int(header["n_tx"]), int(header["n_f"])
        config = FscwConfig(float(header["f_min_hz"]), float(header["f_max_hz"]), n_f,
                            phi_c=float(header.get("phi_c", 0.0)))
        array = MimoArray(header["tx_positions"], header["rx_positions"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed cube header in {path}: {exc}") from None
    if (array.n_rx, array.n_tx) != (n_rx, n_tx):
        raise FormatError(f"antenna count does not match header in {path}")
    _check_payload(payload, n_rx * n_tx * n_f * 8, path)
    pairs = np.frombuffer(payload, dtype="<f4").reshape(n_rx, n_tx, n_f, 2)
    if not np.all(np.isfinite(pairs)):
        raise FormatError(f"non-finite values in {path}")
    data = pairs[..., 0].astype(np.float64) + 1j * pairs[..., 1].astype(np.float64)
    return RawSignalCube(data, config, array)


# ---------------------------------------------------------------------------
# Meshes, masks, calibration, point clouds

_OBJ_IGNORED = {"vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l"}


def load_mesh(path: PathLike) -> TriMesh:
    """Read the v/f subset of ASCII OBJ; polygons are fan-triangulated"""
    vertices: List[Tuple[float, float, float]] = []
    faces: List[Tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            tag = tokens[0]
            if tag == "v":
                if len(tokens) not in (4, 5, 7):
                    raise FormatError(f"{path}:{lineno}: malformed line: {line.strip()!r}")
                try:
                    vertices.append(tuple(float(t) for t in tokens[1:4]))
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: malformed line: {line.strip()!r}") from None
            elif tag == "f":
                if len(tokens) < 4:
                    raise FormatError(f"{path}:{lineno}: malformed line: {line.strip()!r}")
                try:
                    idx = [int(t.split("/")[0]) for t in tokens[1:]]
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: malformed line: {line.strip()!r}") from None
                if any(i < 1 or i > len(vertices) for i in idx):
                    raise FormatError(f"{path}:{lineno}: index out of range")
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0] - 1, idx[k] - 1, idx[k + 1] - 1))
            elif tag not in _OBJ_IGNORED:
                raise FormatError(f"{path}:{lineno}: malformed line: {line.strip()!r}")
    try:
        return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                       np.array(faces, dtype=np.int64).reshape(-1, 3))
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_mesh(path: PathLike, mesh: TriMesh):
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def _pgm_tokens(raw: bytes, count: int) -> Tuple[List[bytes], int]:
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(raw[start:pos])
    return tokens, pos + 1  # single whitespace byte ends the header


def load_mask(path: PathLike) -> SegMask:
    """Binary PGM (P5); 0 is background, anything else is object"""
    raw = Path(path).read_bytes()
    tokens, pos = _pgm_tokens(raw, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"bad magic in {path}: expected P5")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise FormatError(f"malformed PGM header in {path}") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"malformed PGM header in {path}")
    dtype = np.uint8 if maxval < 256 else ">u2"
    expected = width * height * np.dtype(dtype).itemsize
    _check_payload(raw[pos:], expected, path)
    pixels = np.frombuffer(raw[pos:], dtype=dtype).reshape(height, width)
    return SegMask(pixels != 0)


def save_mask(path: PathLike, mask: SegMask):
    pixels = np.where(mask.bits, 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def load_calibration(path: PathLike) -> Transform4:
    """JSON with 16 row-major reals, either a bare list or {"matrix": [...]}"""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed calibration {path}: {exc}") from None
    values = data.get("matrix") if isinstance(data, dict) else data
    try:
        matrix = np.array(values, dtype=np.float64).reshape(4, 4)
    except (TypeError, ValueError):
        raise FormatError(f"calibration {path} must hold 16 reals") from None
    return Transform4(matrix)


def save_calibration(path: PathLike, transform: Transform4):
    Path(path).write_text(json.dumps({"matrix": transform.to_list()}, indent=2), encoding="utf-8")


def save_point_cloud(path: PathLike, cloud: PointCloud):
    np.savetxt(path, cloud.points, fmt="%.9g")


def load_point_cloud(path: PathLike) -> PointCloud:
    try:
        points = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"malformed point cloud {path}: {exc}") from None
    return PointCloud(points.reshape(-1, 3))


# ---------------------------------------------------------------------------
# Manifests and evaluation metadata

@dataclass
class ManifestObject:
    object_id: str
    gt_mesh_path: Path
    material_class: MaterialClass
    outside_fov: bool = False
    captures: List[CaptureRecord] = field(default_factory=list)

    def load_gt_mesh(self) -> TriMesh:
        return load_mesh(self.gt_mesh_path)


@dataclass
class CaptureManifest:
    root: Path
    objects: List[ManifestObject] = field(default_factory=list)

    def captures(self) -> List[Tuple[ManifestObject, CaptureRecord]]:
        return [(obj, cap) for obj in self.objects for cap in obj.captures]

    def sensor_ids(self) -> List[str]:
        return sorted({cap.sensor_id for _, cap in self.captures()})


def load_material_table(path: Optional[PathLike] = None) -> Dict[str, Tuple[MaterialClass, bool]]:
    """Object name -> (material class, extends outside the radar FOV)"""
    path = path or DEFAULT_MATERIAL_TABLE
    data = read_json_document(path, "material table")
    table = {}
    with decoding("material table", path):
        for entry in data["objects"]:
            table[entry["object"]] = (MaterialClass(entry["material_class"]), bool(entry.get("outside_fov", False)))
    return table


def load_capture_manifest(path: PathLike, sensors: Optional[List[str]] = None,
                          distances: Optional[List[int]] = None) -> CaptureManifest:
    """Load every capture listed in a manifest; relative paths resolve against its folder"""
    path = Path(path)
    root = path.parent
    data = read_json_document(path, "manifest")

    materials = load_material_table()
    manifest = CaptureManifest(root=root)
    with decoding("manifest", path):
        entries = list(data.get("objects", []))
    for entry in entries:
        with decoding("manifest", path):
            _load_manifest_object(manifest, entry, materials, sensors, distances)

    logger.info("loaded manifest %s with %d objects", path, len(manifest.objects))
    return manifest


def _load_manifest_object(manifest: CaptureManifest, entry: Dict, materials: Dict,
                          sensors: Optional[List[str]], distances: Optional[List[int]]):
    root = manifest.root
    object_id = entry["object"]
    default_class, default_fov = materials.get(object_id, (MaterialClass.POLYMER, False))
    material = MaterialClass(entry.get("material_class", default_class.value))
    outside_fov = bool(entry.get("outside_fov", default_fov))
    obj = ManifestObject(object_id, root / entry["gt_mesh"], material, outside_fov)

    for cap in entry.get("captures", []):
        sensor_id = cap["sensor"]
        distance = DistanceTag.from_cm(cap["distance_cm"])
        if sensors and sensor_id not in sensors:
            continue
        if distances and distance.centimeters not in distances:
            continue
        calibration = (load_calibration(root / cap["calibration"])
                       if cap.get("calibration") else Transform4.identity())
        record = CaptureRecord(
            object_id=object_id,
            sensor_id=sensor_id,
            frames=[load_depth_image(root / p) for p in cap["frames"]],
            masks=[load_mask(root / p) for p in cap.get("masks", [])],
            calibration=calibration,
            distance=distance,
            material_class=material,
            sensor_kind=SensorKind(cap.get("kind", SensorKind.OPTICAL.value)),
            quasi_static=bool(cap.get("quasi_static", entry.get("quasi_static", False))),
            outside_fov=outside_fov,
            raw_cubes=[load_raw_cube(root / p) for p in cap.get("raw_cubes", [])],
        )
        obj.captures.append(record)
    manifest.objects.append(obj)
    logger.debug("manifest object %s: %d captures", object_id, len(obj.captures))


def load_erosion_metadata(path: Optional[PathLike]) -> Dict[Tuple[str, str], int]:
    """{"object": {"sensor": k}} -> {(object, sensor): k}; missing file means k = 0 everywhere"""
    if path is None:
        return {}
    data = read_json_document(path, "erosion metadata")
    table = {}
    with decoding("erosion metadata", path):
        for object_id, per_sensor in data.items():
            for sensor_id, k in per_sensor.items():
                table[(object_id, sensor_id)] = int(k)
    return table

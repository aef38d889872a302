"""
Synthetic Scene Simulator
Builds point-target scenes, GT meshes and simulated optical/radar captures for
testing, and writes the bundled demo dataset
"""

import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models import (
    CaptureRecord, DistanceTag, FscwConfig, MaterialClass, MimoArray, PointScatterer,
    ProjectionModel, SegMask, SensorKind, Transform4, TriMesh, ValidationError, VoxelGridSpec,
)
from dataset_io import (
    decoding, save_calibration, save_depth_image, save_mask, save_mesh, save_raw_cube,
)
from geometry import align_to_sensor, rasterize_mesh_depth
from radar_imaging import DEFAULT_THRESHOLD_DB, image_scene
from radar_signal import build_square_array, simulate_fscw

logger = logging.getLogger(__name__)

DEMO_FSCW = FscwConfig(f_min=72e9, f_max=82e9, n_f=16)
DEMO_APERTURE = 0.138
DEMO_CAMERA = (64, 48, 200.0)  # width, height, focal length in pixels

# sensor id -> (kind, depth bias in m, depth noise std in m)
DEMO_SENSORS: Dict[str, Tuple[SensorKind, float, float]] = {
    "active_stereo": (SensorKind.OPTICAL, 0.0, 0.0004),
    "passive_stereo": (SensorKind.OPTICAL, 0.0, 0.0012),
    "nir_tof": (SensorKind.OPTICAL, 0.002, 0.0006),
    "rf_tof": (SensorKind.RADAR, 0.0, 0.0),
}


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def scene_from_dict(data: Dict) -> Tuple[MimoArray, FscwConfig, List[PointScatterer], bool]:
    """Decode a scene description: array, FSCW sweep, scatterers and the spreading flag"""
    with decoding("scene"):
        array_spec = data.get("array", {})
        if "tx" in array_spec:
            array = MimoArray(np.array(array_spec["tx"]), np.array(array_spec["rx"]))
        else:
            array = build_square_array(array_spec.get("aperture", DEMO_APERTURE), array_spec.get("n_per_edge", 4))
        sweep = data.get("fscw", {})
        config = FscwConfig(f_min=float(sweep.get("f_min", 72e9)), f_max=float(sweep.get("f_max", 82e9)),
                            n_f=int(sweep.get("n_f", 32)), phi_c=float(sweep.get("phi_c", 0.0)))
        scatterers = [PointScatterer(tuple(s["position"]), float(s.get("reflectivity", 1.0)))
                      for s in data.get("scatterers", [])]
        return array, config, scatterers, bool(data.get("spreading", False))


class SyntheticSceneSimulator:
    """Creates reproducible synthetic radar and depth-camera scenes"""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.array: Optional[MimoArray] = None
        self.scatterers: List[PointScatterer] = []

    def create_sample_array(self, aperture: float = DEMO_APERTURE, n_per_edge: int = 4) -> MimoArray:
        """Square MIMO array with 2·n TX and 2·n RX elements"""
        self.array = build_square_array(aperture, n_per_edge)
        return self.array

    def create_point_targets(self, count: int,
                             bounds: Sequence[Tuple[float, float]] = ((-0.03, 0.03), (-0.03, 0.03), (0.27, 0.33)),
                             reflectivity: Tuple[float, float] = (0.5, 1.0)) -> List[PointScatterer]:
        if count < 1:
            raise ValidationError("at least one scatterer is required")
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        positions = lo + self.rng.random((count, 3)) * (hi - lo)
        amplitudes = self.rng.uniform(*reflectivity, size=count)
        self.scatterers = [PointScatterer(tuple(p), float(a)) for p, a in zip(positions, amplitudes)]
        return self.scatterers

    def random_scene(self, count: int, n_f: int = 32) -> Dict:
        """Scene dictionary in the format read by scene_from_dict"""
        targets = self.create_point_targets(count)
        return {
            "array": {"aperture": DEMO_APERTURE, "n_per_edge": 4},
            "fscw": {"f_min": 72e9, "f_max": 82e9, "n_f": n_f, "phi_c": 0.0},
            "scatterers": [{"position": list(t.position), "reflectivity": t.reflectivity} for t in targets],
            "spreading": False,
        }

    @staticmethod
    def create_plane_mesh(width: float, height: float, z: float = 0.0, subdivisions: int = 1,
                          tilt_deg: float = 0.0, center: Tuple[float, float] = (0.0, 0.0)) -> TriMesh:
        """Rectangle in the xy plane, optionally tilted about the x axis through its center"""
        n = max(1, int(subdivisions))
        xs = center[0] + np.linspace(-width / 2, width / 2, n + 1)
        ys = np.linspace(-height / 2, height / 2, n + 1)
        gx, gy = np.meshgrid(xs, ys)
        tilt = np.radians(tilt_deg)
        vertices = np.stack([gx.ravel(), center[1] + gy.ravel() * np.cos(tilt),
                             z + gy.ravel() * np.sin(tilt)], axis=1)
        faces = []
        for row in range(n):
            for col in range(n):
                a = row * (n + 1) + col
                b, c, d = a + 1, a + n + 1, a + n + 2
                faces.extend([(a, b, d), (a, d, c)])
        return TriMesh(vertices, np.array(faces))

    @staticmethod
    def create_hemisphere_mesh(radius: float, center: Tuple[float, float, float] = (0.0, 0.0, 0.0),
                               n_rings: int = 32, n_segments: int = 64) -> TriMesh:
        """Dome bulging toward -z (the sensor), rings evenly spaced in polar angle"""
        cx, cy, cz = center
        vertices = [(cx, cy, cz - radius)]
        for ring in range(1, n_rings + 1):
            theta = ring * (np.pi / 2) / n_rings
            for seg in range(n_segments):
                phi = 2 * np.pi * seg / n_segments
                vertices.append((cx + radius * np.sin(theta) * np.cos(phi),
                                 cy + radius * np.sin(theta) * np.sin(phi),
                                 cz - radius * np.cos(theta)))
        faces = [(0, 1 + seg, 1 + (seg + 1) % n_segments) for seg in range(n_segments)]
        for ring in range(n_rings - 1):
            start, below = 1 + ring * n_segments, 1 + (ring + 1) * n_segments
            for seg in range(n_segments):
                nxt = (seg + 1) % n_segments
                faces.append((start + seg, below + seg, below + nxt))
                faces.append((start + seg, below + nxt, start + nxt))
        return TriMesh(np.array(vertices), np.array(faces))

    @staticmethod
    def camera_projection(width: int = DEMO_CAMERA[0], height: int = DEMO_CAMERA[1],
                          focal: float = DEMO_CAMERA[2]) -> ProjectionModel:
        return ProjectionModel.perspective(focal, focal, width / 2.0, height / 2.0)

    def create_sensor_capture(self, object_id: str, sensor_id: str, mesh: TriMesh,
                              projection: ProjectionModel, width: int, height: int,
                              distance: DistanceTag, calibration: Transform4,
                              bias: float = 0.0, noise_std: float = 0.0, n_frames: int = 3,
                              material_class: MaterialClass = MaterialClass.POLYMER) -> CaptureRecord:
        """Optical capture: the rasterized GT plus a depth bias and per-frame Gaussian noise"""
        truth = rasterize_mesh_depth(align_to_sensor(mesh, calibration), projection,
                                     Transform4.identity(), width, height)
        valid = truth.valid_mask()
        frames, masks = [], []
        for _ in range(n_frames):
            noise = self.rng.normal(0.0, noise_std, truth.data.shape) if noise_std > 0 else 0.0
            noisy = truth.data + bias + noise
            frames.append(truth.with_data(np.where(valid, np.maximum(noisy, 1e-4), 0.0)))
            masks.append(SegMask(valid))
        return CaptureRecord(object_id, sensor_id, frames, masks, calibration, distance, material_class)

    def create_radar_capture(self, object_id: str, sensor_id: str, mesh: TriMesh,
                             distance: DistanceTag, calibration: Transform4, spec: VoxelGridSpec,
                             config: FscwConfig = DEMO_FSCW, threshold_db: float = DEFAULT_THRESHOLD_DB,
                             material_class: MaterialClass = MaterialClass.POLYMER,
                             n_jobs: int = 1) -> CaptureRecord:
        """Radar capture: mesh vertices as Born scatterers, imaged and threshold-filtered"""
        array = self.array or self.create_sample_array()
        aligned = align_to_sensor(mesh, calibration)
        reflectivity = self.rng.uniform(0.8, 1.0, size=len(aligned.vertices))
        scatterers = [PointScatterer(tuple(p), float(a)) for p, a in zip(aligned.vertices, reflectivity)]
        cube = simulate_fscw(scatterers, array, config, n_jobs=n_jobs)
        depth, _ = image_scene(cube, spec, threshold_db, n_jobs=n_jobs)
        return CaptureRecord(object_id, sensor_id, [depth], [SegMask(depth.valid_mask())], calibration,
                             distance, material_class, sensor_kind=SensorKind.RADAR,
                             quasi_static=True, raw_cubes=[cube])

    @staticmethod
    def radar_grid(distance: DistanceTag) -> VoxelGridSpec:
        step = 0.0025
        return VoxelGridSpec((-0.03, -0.03, distance.meters - 0.03), (step, step, step), (25, 25, 25))

    def build_demo_dataset(self, out_dir, distances: Sequence[int] = (30, 40), n_jobs: int = 1) -> Path:
        """Write meshes, captures, calibrations, erosion metadata and manifest.json; returns the manifest path"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        width, height, _ = DEMO_CAMERA
        camera = self.camera_projection()

        objects = [
            ("Cardboard", MaterialClass.FIBERS_AND_STONE, self.create_plane_mesh(0.04, 0.04, subdivisions=16)),
            ("Christmas Ball: V1", MaterialClass.POLYMER,
             self.create_hemisphere_mesh(0.02, n_rings=12, n_segments=24)),
        ]
        manifest = {"objects": []}
        erosion = {}
        for object_id, material, mesh in objects:
            slug = _slug(object_id)
            mesh_path = Path("meshes") / f"{slug}.obj"
            (out_dir / mesh_path).parent.mkdir(parents=True, exist_ok=True)
            save_mesh(out_dir / mesh_path, mesh)
            entry = {"object": object_id, "gt_mesh": str(mesh_path),
                     "material_class": material.value, "captures": []}
            erosion[object_id] = {}

            for sensor_id, (kind, bias, noise) in DEMO_SENSORS.items():
                erosion[object_id][sensor_id] = 2 if kind is SensorKind.OPTICAL else 0
                for cm in distances:
                    distance = DistanceTag.from_cm(cm)
                    if kind is SensorKind.RADAR and cm != min(distances):
                        continue
                    calibration = Transform4.from_translation((0.0, 0.0, distance.meters))
                    if kind is SensorKind.RADAR:
                        capture = self.create_radar_capture(object_id, sensor_id, mesh, distance, calibration,
                                                            self.radar_grid(distance), material_class=material,
                                                            n_jobs=n_jobs)
                    else:
                        capture = self.create_sensor_capture(object_id, sensor_id, mesh, camera, width, height,
                                                             distance, calibration, bias, noise,
                                                             material_class=material)
                    entry["captures"].append(self._write_capture(out_dir, slug, capture))
            manifest["objects"].append(entry)

        (out_dir / "erosion.json").write_text(json.dumps(erosion, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        manifest_path = out_dir / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("demo dataset with %d objects written to %s", len(objects), out_dir)
        return manifest_path

    @staticmethod
    def _write_capture(out_dir: Path, slug: str, capture: CaptureRecord) -> Dict:
        folder = Path("captures") / slug / capture.sensor_id / f"{capture.distance.centimeters}cm"
        (out_dir / folder).mkdir(parents=True, exist_ok=True)
        entry = {
            "sensor": capture.sensor_id,
            "distance_cm": capture.distance.centimeters,
            "kind": capture.sensor_kind.value,
            "quasi_static": capture.quasi_static,
            "calibration": str(folder / "calibration.json"),
            "frames": [], "masks": [], "raw_cubes": [],
        }
        save_calibration(out_dir / entry["calibration"], capture.calibration)
        for i, frame in enumerate(capture.frames):
            entry["frames"].append(str(folder / f"frame_{i}.dmap"))
            save_depth_image(out_dir / entry["frames"][-1], frame)
        for i, mask in enumerate(capture.masks):
            entry["masks"].append(str(folder / f"mask_{i}.pgm"))
            save_mask(out_dir / entry["masks"][-1], mask)
        for i, cube in enumerate(capture.raw_cubes):
            entry["raw_cubes"].append(str(folder / f"cube_{i}.rsc"))
            save_raw_cube(out_dir / entry["raw_cubes"][-1], cube)
        return entry

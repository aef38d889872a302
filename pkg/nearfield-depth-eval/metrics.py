"""
Depth Deviation Metrics
One-sided Chamfer distances (C1/C2), projective errors with and without mask
erosion (P1/P2, P1s/P2s) and their persistence as results.json / results.csv
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.spatial import cKDTree

from models import (
    CaptureRecord, DepthImage, METRIC_NAMES, MetricReport, MetricStats, ObjectStats,
    PointCloud, SegMask, TriMesh, ValidationError,
)
from dataset_io import decoding, read_json_document
from geometry import align_to_sensor, average_frames, erode_mask, rasterize_mesh_depth, unproject

logger = logging.getLogger(__name__)

CM_PER_M = 100.0
NEIGHBOR_CANDIDATES = 4  # re-ranked exactly so near-ties resolve like a brute-force scan
CSV_COLUMNS = ["object", "sensor", "distance_cm", "metric", "mean_cm", "std_cm", "median_cm", "count"]


def chamfer_one_sided(source: PointCloud, dest: PointCloud, n_jobs: int = 1) -> np.ndarray:
    """Distance from every source point to its nearest neighbour in dest (meters)"""
    if len(dest) == 0:
        raise ValidationError("destination cloud is empty")
    if len(source) == 0:
        return np.zeros(0)

    k = min(NEIGHBOR_CANDIDATES, len(dest))
    _, idx = cKDTree(dest.points).query(source.points, k=k, workers=n_jobs)
    if k == 1:
        idx = idx[:, None]
    diff = source.points[:, None, :] - dest.points[idx]
    return np.sqrt((diff ** 2).sum(axis=2)).min(axis=1)


def projective_error(sensor: DepthImage, gt: DepthImage, domain: SegMask) -> Tuple[np.ndarray, np.ndarray]:
    """Per-pixel |D - F| and D - F over the domain, D = sensor, F = GT"""
    if not sensor.same_layout(gt):
        raise ValidationError("depth maps differ in dimensions or projection")
    if domain.bits.shape != sensor.data.shape:
        raise ValidationError("domain mask does not match the depth maps")
    signed = sensor.data[domain.bits].astype(np.float64) - gt.data[domain.bits].astype(np.float64)
    return np.abs(signed), signed


def summarize(values) -> Tuple[float, float, float]:
    """(mean, population stdev, median)"""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("empty list")
    return float(values.mean()), float(values.std()), float(np.median(values))


def _stats_cm(values: np.ndarray, name: str, label: str) -> MetricStats:
    if values.size == 0:
        logger.warning("%s: %s has an empty domain", label, name)
        return MetricStats.empty()
    mean, std, median = summarize(values * CM_PER_M)
    return MetricStats(mean, std, median, int(values.size))


def sensor_depth_and_mask(capture: CaptureRecord) -> Tuple[DepthImage, SegMask]:
    """Frame 0 for quasi-static captures, else the per-pixel frame average; masks likewise"""
    if capture.quasi_static:
        depth = capture.frames[0]
        bits = capture.masks[0].bits if capture.masks else None
    else:
        depth = average_frames(capture.frames)
        bits = np.logical_or.reduce([m.bits for m in capture.masks]) if capture.masks else None
    valid = depth.valid_mask()
    return depth, SegMask(valid if bits is None else valid & bits)


def evaluate_capture(capture: CaptureRecord, gt_mesh: TriMesh, erosion_k: int = 0,
                     n_jobs: int = 1) -> MetricReport:
    label = f"{capture.object_id}/{capture.sensor_id}@{capture.distance.centimeters}cm"
    depth, sensor_mask = sensor_depth_and_mask(capture)

    aligned = align_to_sensor(gt_mesh, capture.calibration)
    gt_depth = rasterize_mesh_depth(aligned, depth.projection, depth.transform,
                                    depth.width, depth.height, n_jobs=n_jobs)
    gt_mask = SegMask(gt_depth.valid_mask())

    gt_cloud = unproject(gt_depth)
    sensor_cloud = unproject(depth, sensor_mask)
    if len(gt_cloud) and len(sensor_cloud):
        c1 = chamfer_one_sided(gt_cloud, sensor_cloud, n_jobs)
        c2 = chamfer_one_sided(sensor_cloud, gt_cloud, n_jobs)
    else:
        c1 = c2 = np.zeros(0)

    p1, p1s = projective_error(depth, gt_depth, SegMask(sensor_mask.bits & gt_mask.bits))
    eroded = erode_mask(gt_mask, erosion_k)
    p2, p2s = projective_error(depth, gt_depth, SegMask(sensor_mask.bits & eroded.bits))

    metrics = {
        name: _stats_cm(values, name, label)
        for name, values in zip(METRIC_NAMES, (c1, c2, p1, p2, p1s, p2s))
    }
    logger.info("evaluated %s: C1 %.4f cm over %d points", label, metrics["C1"].mean_cm, metrics["C1"].count)
    return MetricReport(capture.object_id, capture.sensor_id, capture.distance.centimeters,
                        int(erosion_k), metrics)


def evaluate_manifest(manifest, erosion: Optional[Dict[Tuple[str, str], int]] = None,
                      n_jobs: int = 1) -> List[MetricReport]:
    """Evaluate every capture of a CaptureManifest, fanning out across captures"""
    erosion = erosion or {}
    meshes = {obj.object_id: obj.load_gt_mesh() for obj in manifest.objects if obj.captures}
    jobs = [(cap, meshes[obj.object_id], erosion.get((obj.object_id, cap.sensor_id), 0))
            for obj, cap in manifest.captures()]
    if not jobs:
        logger.warning("manifest contains no captures")
        return []
    reports = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(evaluate_capture)(cap, mesh, k) for cap, mesh, k in jobs
    )
    return sorted(reports, key=lambda r: (r.object_id, r.sensor_id, r.distance_cm))


def reports_to_frame(reports: List[MetricReport]) -> pd.DataFrame:
    """One row per object x sensor x distance x metric"""
    rows = []
    for report in reports:
        for name in METRIC_NAMES:
            stats = report.metrics.get(name)
            if stats is None:
                continue
            rows.append({
                "object": report.object_id,
                "sensor": report.sensor_id,
                "distance_cm": report.distance_cm,
                "metric": name,
                "mean_cm": stats.mean_cm,
                "std_cm": stats.std_cm,
                "median_cm": stats.median_cm,
                "count": stats.count,
            })
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def write_results(reports: List[MetricReport], out_dir: Union[str, Path],
                  objects: Optional[List[ObjectStats]] = None) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "results.json"
    csv_path = out_dir / "results.csv"

    document = {
        "reports": [r.to_dict() for r in reports],
        "objects": [o.to_dict() for o in sorted(objects or [], key=lambda o: o.object_id)],
    }
    json_path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    reports_to_frame(reports).to_csv(csv_path, index=False, float_format="%.9g", lineterminator="\n")
    logger.info("wrote %d reports to %s", len(reports), out_dir)
    return json_path, csv_path


def load_results(path: Union[str, Path]) -> Tuple[List[MetricReport], List[ObjectStats]]:
    data = read_json_document(path, "results")
    if isinstance(data, list):
        data = {"reports": data}
    with decoding("results", path):
        reports = [MetricReport.from_dict(r) for r in data.get("reports", [])]
        objects = [ObjectStats.from_dict(o) for o in data.get("objects", [])]
    return reports, objects

"""
Cross-Object Analysis
Barycentric sensor comparison, distance boxplots, signal-magnitude scatter data,
incidence angles, relative surface area and material-class grouping
"""

import itertools
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from models import (  # noqa: E402
    BaryTriple, DEFAULT_RADAR_SENSOR, MetricReport, ObjectStats, SensorKind, TriMesh, ValidationError,
)
from geometry import align_to_sensor, mesh_bbox_xy, vertex_normals  # noqa: E402
from radar_signal import signal_magnitude  # noqa: E402

logger = logging.getLogger(__name__)

WHISKER_IQR = 1.5
BARYCENTRIC_COLUMNS = ["triple", "metric", "object", "mu_a", "mu_b", "mu_c", "w_a", "w_b", "w_c"]

plt.rcParams["svg.hashsalt"] = "nearfield-depth-eval"


def barycentric_weights(mu: Sequence[float]) -> Tuple[float, float, float]:
    """w_i = μ_i / Σμ for three nonnegative means"""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (3,):
        raise ValidationError("exactly three values are required")
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValidationError("means must be finite and nonnegative")
    total = mu.sum()
    if total <= 0:
        raise ValidationError("undefined weights")
    w = mu / total
    w = w / w.sum()
    return float(w[0]), float(w[1]), float(w[2])


def incidence_angle_median(mesh: TriMesh) -> float:
    """Median angle (degrees) between vertex normals and the depth axis, folded to [0, 90]"""
    normals, valid = vertex_normals(mesh)
    if not valid.any():
        raise ValidationError("mesh has no valid normals")
    cosine = np.clip(np.abs(normals[valid, 2]), 0.0, 1.0)
    return float(np.median(np.degrees(np.arccos(cosine))))


def relative_surface_area(object_bbox: Sequence[float], aperture_bbox: Sequence[float]) -> float:
    """area(A ∩ B) / area(B) for boxes given as (xmin, ymin, xmax, ymax)"""
    ax0, ay0, ax1, ay1 = object_bbox
    bx0, by0, bx1, by1 = aperture_bbox
    if ax0 > ax1 or ay0 > ay1 or bx0 > bx1 or by0 > by1:
        raise ValidationError("bounding box min exceeds max")
    area_b = (bx1 - bx0) * (by1 - by0)
    if area_b <= 0:
        raise ValidationError("aperture box has zero area")
    width = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    height = max(0.0, min(ay1, by1) - max(ay0, by0))
    return float(min(1.0, width * height / area_b))


def five_number_summary(values: Sequence[float]) -> Dict[str, float]:
    """Quartiles by linear interpolation, whiskers at the extreme values within 1.5·IQR"""
    data = np.sort(np.asarray(values, dtype=np.float64))
    data = data[np.isfinite(data)]
    if data.size == 0:
        raise ValidationError("empty list")
    q1, median, q3 = np.percentile(data, [25, 50, 75])
    iqr = q3 - q1
    inside = data[(data >= q1 - WHISKER_IQR * iqr) & (data <= q3 + WHISKER_IQR * iqr)]
    outliers = data[(data < q1 - WHISKER_IQR * iqr) | (data > q3 + WHISKER_IQR * iqr)]
    return {
        "min": float(data[0]),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "max": float(data[-1]),
        "mean": float(data.mean()),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "n_outliers": int(outliers.size),
        "count": int(data.size),
    }


def object_statistics(manifest, radar_sensor: str = DEFAULT_RADAR_SENSOR) -> List[ObjectStats]:
    """Signal magnitude, incidence angle and aperture coverage of every manifest object"""
    stats = []
    for obj in manifest.objects:
        entry = ObjectStats(obj.object_id, obj.material_class, obj.outside_fov)
        radar = sorted((c for c in obj.captures
                        if c.sensor_id == radar_sensor or c.sensor_kind is SensorKind.RADAR),
                       key=lambda c: c.distance.centimeters)
        if radar:
            nearest = radar[0]
            aligned = align_to_sensor(obj.load_gt_mesh(), nearest.calibration)
            if len(aligned.faces):
                entry.incidence_median_deg = incidence_angle_median(aligned)
            if nearest.raw_cubes:
                entry.signal_magnitude = signal_magnitude(nearest.raw_cubes)
                entry.relative_area = relative_surface_area(
                    mesh_bbox_xy(aligned), nearest.raw_cubes[0].array.bbox_xy())
        stats.append(entry)
    return stats


class DepthResultAnalyzer:
    """Aggregates metric reports across objects, sensors and distances"""

    def __init__(self, reports: List[MetricReport], objects: Optional[List[ObjectStats]] = None):
        if not reports:
            raise ValidationError("no reports to analyze")
        self.reports = reports
        self.objects = objects or []
        self.frame = pd.DataFrame([
            {
                "object": r.object_id,
                "sensor": r.sensor_id,
                "distance_cm": r.distance_cm,
                "metric": name,
                "mean_cm": stats.mean_cm,
            }
            for r in reports for name, stats in r.metrics.items()
        ])

    def sensors(self) -> List[str]:
        return sorted(self.frame["sensor"].unique())

    def boxplot_table(self) -> pd.DataFrame:
        """Distribution of the per-object mean deviation per sensor, metric and distance"""
        rows = []
        for (sensor, metric, distance), group in self.frame.groupby(["sensor", "metric", "distance_cm"]):
            values = group["mean_cm"].dropna()
            if values.empty:
                continue
            rows.append({"sensor": sensor, "metric": metric, "distance_cm": int(distance),
                         **five_number_summary(values)})
        return pd.DataFrame(rows)

    def _object_means(self, metric: str) -> pd.DataFrame:
        """object x sensor table of the metric mean, averaged over distances"""
        subset = self.frame[self.frame["metric"] == metric]
        if subset.empty:
            return pd.DataFrame()
        return subset.groupby(["object", "sensor"])["mean_cm"].mean().unstack("sensor")

    def barycentric_table(self, metric: str = "C1") -> pd.DataFrame:
        """Affine coordinates of each object inside every sensor triple"""
        table = self._object_means(metric)
        rows = []
        for triple in self.barycentric_triples(metric):
            a, b, c = triple.labels
            for object_id, (wa, wb, wc) in sorted(triple.weights.items()):
                rows.append({"triple": triple.triple_id, "metric": metric, "object": object_id,
                             "mu_a": table.loc[object_id, a], "mu_b": table.loc[object_id, b],
                             "mu_c": table.loc[object_id, c], "w_a": wa, "w_b": wb, "w_c": wc})
        return pd.DataFrame(rows, columns=BARYCENTRIC_COLUMNS)

    def barycentric_triples(self, metric: str = "C1") -> List[BaryTriple]:
        table = self._object_means(metric)
        triples = []
        for labels in itertools.combinations(self.sensors(), 3):
            triple = BaryTriple(labels)
            if all(label in table.columns for label in labels):
                for object_id, row in table[list(labels)].dropna().iterrows():
                    try:
                        triple.weights[object_id] = barycentric_weights(row.values)
                    except ValidationError:
                        logger.debug("skipping %s in %s: all means are zero", object_id, triple.triple_id)
            triples.append(triple)
        return triples

    def scatter_table(self, radar_sensor: str = DEFAULT_RADAR_SENSOR) -> pd.DataFrame:
        """Radar signal magnitude against the C1 mean, averaged over distances"""
        c1 = (self.frame[(self.frame["metric"] == "C1") & (self.frame["sensor"] == radar_sensor)]
              .groupby("object")["mean_cm"].mean())
        rows = []
        for obj in self.objects:
            rows.append({
                "object": obj.object_id,
                "material_class": obj.material_class.value,
                "magnitude": obj.signal_magnitude,
                "C1_mean": c1.get(obj.object_id, np.nan),
                "incidence_median_deg": obj.incidence_median_deg,
                "rel_area": obj.relative_area,
                "outside_fov": obj.outside_fov,
            })
        return pd.DataFrame(rows, columns=["object", "material_class", "magnitude", "C1_mean",
                                           "incidence_median_deg", "rel_area", "outside_fov"])

    def material_summary(self, radar_sensor: str = DEFAULT_RADAR_SENSOR) -> pd.DataFrame:
        scatter = self.scatter_table(radar_sensor)
        if scatter.empty:
            return pd.DataFrame()
        scatter["magnitude"] = scatter["magnitude"].astype(float)
        return (scatter.groupby("material_class")
                .agg(n_objects=("object", "count"),
                     magnitude_mean=("magnitude", "mean"),
                     magnitude_median=("magnitude", "median"),
                     c1_mean=("C1_mean", "mean"),
                     c1_median=("C1_mean", "median"))
                .reset_index())

    def emit_plot_data(self, out_dir: Union[str, Path], radar_sensor: str = DEFAULT_RADAR_SENSOR,
                       metrics: Sequence[str] = ("C1", "C2", "P1", "P2")) -> List[Path]:
        """Write boxplot/scatter/barycentric CSV tables plus SVG renderings"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        boxplot = self.boxplot_table()
        scatter = self.scatter_table(radar_sensor)
        tables = [t for t in (self.barycentric_table(m) for m in metrics) if not t.empty]
        barycentric = (pd.concat(tables, ignore_index=True) if tables
                       else pd.DataFrame(columns=BARYCENTRIC_COLUMNS))

        written = []
        for name, table in (("boxplot", boxplot), ("scatter", scatter), ("barycentric", barycentric)):
            path = out_dir / f"{name}.csv"
            table.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")
            written.append(path)

        written.append(self._plot_boxplot(boxplot, out_dir / "boxplot.svg"))
        written.append(self._plot_scatter(scatter, out_dir / "scatter.svg"))
        written.append(self._plot_barycentric(barycentric, out_dir / "barycentric.svg"))
        logger.info("wrote %d plot files to %s", len(written), out_dir)
        return written

    @staticmethod
    def _save(fig, path: Path) -> Path:
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return path

    def _plot_boxplot(self, boxplot: pd.DataFrame, path: Path) -> Path:
        fig, ax = plt.subplots(figsize=(8, 4))
        subset = boxplot[boxplot["metric"] == "C1"] if not boxplot.empty else boxplot
        stats, labels = [], []
        for _, row in subset.iterrows():
            stats.append({"med": row["median"], "q1": row["q1"], "q3": row["q3"],
                          "whislo": row["whisker_low"], "whishi": row["whisker_high"],
                          "mean": row["mean"], "fliers": []})
            labels.append(f"{row['sensor']}\n{row['distance_cm']} cm")
        if stats:
            ax.bxp(stats, showmeans=True)
            ax.set_xticks(range(1, len(labels) + 1))
            ax.set_xticklabels(labels, fontsize=7)
        ax.set_ylabel("C1 mean deviation [cm]")
        return self._save(fig, path)

    def _plot_scatter(self, scatter: pd.DataFrame, path: Path) -> Path:
        fig, ax = plt.subplots(figsize=(6, 4))
        data = scatter.dropna(subset=["magnitude", "C1_mean"])
        for material, group in data.groupby("material_class"):
            ax.scatter(group["magnitude"].astype(float), group["C1_mean"].astype(float),
                       label=material, s=14)
        if not data.empty:
            ax.legend(fontsize=7)
        ax.set_xlabel("signal magnitude")
        ax.set_ylabel("C1 mean deviation [cm]")
        return self._save(fig, path)

    def _plot_barycentric(self, barycentric: pd.DataFrame, path: Path) -> Path:
        triples = sorted(barycentric["triple"].unique()) if not barycentric.empty else []
        fig, axes = plt.subplots(1, max(1, len(triples)), figsize=(3 * max(1, len(triples)), 3),
                                 squeeze=False)
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
        for ax, triple_id in zip(axes[0], triples):
            group = barycentric[(barycentric["triple"] == triple_id) & (barycentric["metric"] == "C1")]
            xy = group[["w_a", "w_b", "w_c"]].to_numpy(dtype=float) @ corners
            ax.fill(corners[:, 0], corners[:, 1], fill=False)
            ax.scatter(xy[:, 0], xy[:, 1], s=8)
            for corner, label in zip(corners, triple_id.split("|")):
                ax.annotate(label, corner, fontsize=7, ha="center")
            ax.set_axis_off()
        return self._save(fig, path)

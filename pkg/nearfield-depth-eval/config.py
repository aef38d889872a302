"""
Pipeline Configuration
Defaults, key = value config files and environment overrides for the batch pipelines
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from models import DEFAULT_RADAR_SENSOR, ValidationError, VoxelGridSpec
from radar_imaging import DEFAULT_THRESHOLD_DB

logger = logging.getLogger(__name__)

THREADS_ENV = "DEPTH_EVAL_THREADS"

# long flag names accepted for the matching PipelineConfig fields
FLAG_ALIASES = {
    "origin": "grid_origin",
    "step": "grid_step",
    "dims": "grid_dims",
    "db": "threshold_db",
}


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, 1)))
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", THREADS_ENV, os.environ.get(THREADS_ENV))
        return 1


@dataclass
class PipelineConfig:
    manifest: Optional[Path] = None  # dataset manifest, or "demo"
    sensors: List[str] = field(default_factory=list)
    distances: List[int] = field(default_factory=list)
    grid_origin: Tuple[float, float, float] = (-0.048, -0.048, 0.252)
    grid_step: Tuple[float, float, float] = (0.002, 0.002, 0.002)
    grid_dims: Tuple[int, int, int] = (48, 48, 48)
    threshold_db: float = DEFAULT_THRESHOLD_DB
    radar_sensor: str = DEFAULT_RADAR_SENSOR
    erosion: Optional[Path] = None
    out: Path = Path("out")
    threads: int = field(default_factory=default_threads)
    seed: int = 0

    def grid(self) -> VoxelGridSpec:
        return VoxelGridSpec(self.grid_origin, self.grid_step, self.grid_dims)

    def validate(self, check_paths: bool = True) -> "PipelineConfig":
        if self.threshold_db > 0:
            raise ValidationError("threshold_db must be <= 0")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        self.grid()
        if check_paths:
            if self.manifest is not None and str(self.manifest) != "demo" and not Path(self.manifest).exists():
                raise ValidationError(f"manifest not found: {self.manifest}")
            if self.erosion is not None and not Path(self.erosion).exists():
                raise ValidationError(f"erosion metadata not found: {self.erosion}")
        return self

    def merged(self, overrides: Dict) -> "PipelineConfig":
        """Copy with every non-None override applied"""
        known = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in overrides.items() if k in known and v is not None})


def _parse_value(name: str, raw: str):
    items = [item.strip() for item in raw.split(",") if item.strip()]
    if name in ("sensors",):
        return items
    if name == "distances":
        return [int(float(item)) for item in items]
    if name in ("grid_origin", "grid_step"):
        return tuple(float(item) for item in items)
    if name == "grid_dims":
        return tuple(int(item) for item in items)
    if name == "threshold_db":
        return float(raw)
    if name in ("threads", "seed"):
        return int(raw)
    if name in ("manifest", "erosion", "out"):
        return Path(raw.strip())
    if name == "radar_sensor":
        return raw.strip()
    raise ValidationError(f"unknown config key: {name}")


def load_config_file(path, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """
    key = value lines, '#' comments, list values comma-separated. Keys are the
    long command-line flags (origin, step, dims, db, radar-sensor, ...) or the
    PipelineConfig field names; dashes and underscores are interchangeable.
    """
    values = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{number}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        name = key.replace("-", "_")
        name = FLAG_ALIASES.get(name, name)
        try:
            values[name] = _parse_value(name, raw)
        except ValueError as exc:
            raise ValidationError(f"{path}:{number}: {exc}") from None
    logger.debug("config %s sets %s", path, sorted(values))
    return (base or PipelineConfig()).merged(values)

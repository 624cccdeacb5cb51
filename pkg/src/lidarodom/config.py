"""Flat ``key = value`` run configuration covering every stage of the pipeline.

Keys use dotted section prefixes (``features.edge_sigma_min``). Defaults come
from the config dataclasses themselves, so this table only adds units and a
one-line description per key.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

from .features import FeatureConfig
from .localmap import KeyframePolicy, MapConfig
from .pipeline import OdometryConfig
from .pointcloud import SensorConfig
from .registration import GNConfig

SENSOR_MODELS = ("vlp16", "hdl64")

# key -> (unit, description)
DOCS = {
    "sensor.model": ("", "beam layout preset: vlp16 (16 rings, -15..15 deg) or hdl64 (64 rings, -24.8..2 deg)"),
    "sensor.vertical_angles_deg": ("deg", "comma-separated beam elevations overriding the preset; empty keeps it"),
    "sensor.columns_per_rev": ("count", "azimuth samples per revolution"),
    "sensor.min_range": ("m", "returns closer than this are dropped"),
    "sensor.max_range": ("m", "returns farther than this are dropped"),
    "sensor.clockwise": ("bool", "spin direction; empty uses the preset's"),
    "features.neighbor_half_width": ("count", "neighbours on each side used for smoothness"),
    "features.edge_sigma_min": ("m", "smallest smoothness accepted as an edge"),
    "features.planar_sigma_max": ("m", "largest smoothness accepted as planar"),
    "features.sectors_per_ring": ("count", "azimuth sectors per ring for feature budgeting"),
    "features.max_edges_per_sector": ("count", "edge budget per sector"),
    "features.max_planars_per_sector": ("count", "planar budget per sector"),
    "features.discontinuity_ratio": ("ratio", "gap / median spacing above which a point cannot be an edge"),
    "features.suppress_neighbors": ("bool", "block the neighbours of each selected feature"),
    "features.grazing_angle": ("rad", "edges beside surfaces hit this obliquely are dropped; 0 disables"),
    "features.smoothness_form": ("", "sum (norm of summed differences) or literal (mean of norms)"),
    "gn.max_outer_iterations": ("count", "re-association rounds per scan"),
    "gn.update_norm_epsilon": ("", "stop when the pose update's 6-vector norm drops below this"),
    "gn.huber_delta": ("m", "Huber threshold on residuals; 0 disables"),
    "gn.min_correspondences": ("count", "fewer matches than this is treated as degenerate"),
    "gn.condition_limit": ("ratio", "largest allowed pivot ratio of the normal matrix"),
    "gn.max_step_halvings": ("count", "backtracking halvings before a step is rejected"),
    "gn.weight_orientation": ("", "as-printed or as-text smoothness weighting"),
    "keyframe.translation_threshold": ("m", "translation since the last keyframe that triggers insertion"),
    "keyframe.rotation_threshold": ("rad", "rotation since the last keyframe that triggers insertion"),
    "keyframe.every_frame": ("bool", "insert every scan"),
    "map.edge_leaf": ("m", "voxel edge length of the edge map"),
    "map.plane_leaf": ("m", "voxel edge length of the plane map"),
    "map.neighbors": ("count", "map points used to fit each landmark"),
    "map.line_ratio": ("ratio", "largest / second eigenvalue needed for a line"),
    "map.plane_ratio": ("ratio", "second / smallest eigenvalue needed for a plane"),
    "map.max_edge_distance": ("m", "edge match gate on the neighbour distance"),
    "map.max_plane_distance": ("m", "plane match gate on the neighbour distance"),
    "map.gate_on": ("", "which neighbour the gate checks: nearest or farthest"),
    "map.line_fit_tolerance": ("m", "largest neighbour offset from a fitted line; 0 disables"),
    "map.plane_fit_tolerance": ("m", "largest neighbour offset from a fitted plane; 0 disables"),
    "pipeline.compensation": ("", "distortion compensation mode: none or two-stage"),
}

_SECTIONS = {"features": FeatureConfig, "gn": GNConfig, "keyframe": KeyframePolicy, "map": MapConfig}
_SENSOR_DEFAULTS = {
    "sensor.model": "vlp16",
    "sensor.vertical_angles_deg": "",
    "sensor.columns_per_rev": 1800,
    "sensor.min_range": 0.5,
    "sensor.max_range": 100.0,
    "sensor.clockwise": "",
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _defaults() -> dict:
    base = OdometryConfig()
    values = dict(_SENSOR_DEFAULTS)
    for section in _SECTIONS:
        obj = getattr(base, section)
        for f in dataclasses.fields(obj):
            values[f"{section}.{f.name}"] = getattr(obj, f.name)
    values["pipeline.compensation"] = base.compensation
    return values


DEFAULTS = _defaults()


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(key: str, text: str):
    default = DEFAULTS[key]
    if key == "sensor.clockwise":
        return "" if text.strip() == "" else _parse_bool(text)
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        v = float(text)
        if not math.isfinite(v):
            raise ValueError(f"not a finite number: {text!r}")
        return v
    return text.strip()


class RunConfig:
    """Validated settings for one run; unknown keys are rejected."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value, line: int | None = None, validate: bool = True) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}", line)
        try:
            self.values[key] = _coerce(key, value) if isinstance(value, str) else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}", line) from None
        if validate:
            self.validate(f"{key}: ", line)

    def validate(self, prefix: str = "", line: int | None = None) -> None:
        """Build every config object once so cross-field constraints are checked."""
        try:
            self.odometry_config()
            self.sensor_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{prefix}{exc}", line) from None

    def __getitem__(self, key: str):
        return self.values[key]

    def update_from_text(self, text: str) -> "RunConfig":
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            self.set(key, value, lineno, validate=False)
        self.validate()
        return self

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls().update_from_text(text)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def odometry_config(self) -> OdometryConfig:
        parts = {}
        for section, klass in _SECTIONS.items():
            kwargs = {f.name: self.values[f"{section}.{f.name}"] for f in dataclasses.fields(klass)}
            parts[section] = klass(**kwargs)
        return OdometryConfig(compensation=self.values["pipeline.compensation"], **parts)

    def sensor_config(self) -> SensorConfig:
        model = self.values["sensor.model"]
        if model not in SENSOR_MODELS:
            raise ValueError(f"sensor.model must be one of {SENSOR_MODELS}")
        kwargs = {
            "columns_per_rev": self.values["sensor.columns_per_rev"],
            "min_range": self.values["sensor.min_range"],
            "max_range": self.values["sensor.max_range"],
        }
        if self.values["sensor.clockwise"] != "":
            kwargs["clockwise"] = self.values["sensor.clockwise"]
        preset = SensorConfig.vlp16(**kwargs) if model == "vlp16" else SensorConfig.hdl64(**kwargs)
        angles = self.values["sensor.vertical_angles_deg"]
        if angles:
            rad = tuple(math.radians(float(a)) for a in angles.split(","))
            preset = dataclasses.replace(preset, ring_count=len(rad), vertical_angles=rad)
        return preset

    def to_text(self, keys=None) -> str:
        lines = []
        for key in keys or DEFAULTS:
            value = self.values[key]
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def describe() -> str:
    """Every key with its default, unit and meaning, for ``--help``."""
    rows = []
    for key, default in DEFAULTS.items():
        unit, text = DOCS[key]
        shown = "(empty)" if default == "" else default
        rows.append(f"  {key} = {shown}" + (f" [{unit}]" if unit else "") + f"\n      {text}")
    return "\n".join(rows)

"""Scan data model, KITTI velodyne binaries and scene files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ScanFormatError(ValueError):
    pass


class DegeneratePointError(ValueError):
    pass


class SceneFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SensorConfig:
    """Geometry of a spinning multi-beam LiDAR.

    ``vertical_angles`` are radians, strictly increasing; ring 0 is the lowest beam.
    """

    ring_count: int = 16
    vertical_angles: tuple = tuple(math.radians(a) for a in np.linspace(-15.0, 15.0, 16))
    columns_per_rev: int = 1800
    min_range: float = 0.5
    max_range: float = 100.0
    clockwise: bool = False
    start_azimuth: float = 0.0

    def __post_init__(self):
        angles = tuple(float(a) for a in self.vertical_angles)
        object.__setattr__(self, "vertical_angles", angles)
        if len(angles) != self.ring_count:
            raise ValueError(f"{len(angles)} vertical angles for {self.ring_count} rings")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ValueError("vertical angles must be strictly increasing")
        if not 0.0 < self.min_range < self.max_range:
            raise ValueError("need 0 < min_range < max_range")
        if self.columns_per_rev < 1:
            raise ValueError("columns_per_rev must be positive")

    @classmethod
    def uniform(cls, ring_count: int, fov_down_deg: float, fov_up_deg: float, **kwargs) -> "SensorConfig":
        if ring_count == 1:
            angles = (math.radians(0.5 * (fov_down_deg + fov_up_deg)),)
        else:
            angles = tuple(np.radians(np.linspace(fov_down_deg, fov_up_deg, ring_count)))
        return cls(ring_count=ring_count, vertical_angles=angles, **kwargs)

    @classmethod
    def vlp16(cls, **kwargs) -> "SensorConfig":
        return cls.uniform(16, -15.0, 15.0, **kwargs)

    @classmethod
    def hdl64(cls, **kwargs) -> "SensorConfig":
        kwargs.setdefault("clockwise", True)
        kwargs.setdefault("max_range", 120.0)
        return cls.uniform(64, -24.8, 2.0, **kwargs)


@dataclass
class Scan:
    """Ring-ordered point cloud.

    Points are stored ring-major: ring ``m`` occupies
    ``points[ring_offsets[m]:ring_offsets[m + 1]]`` ordered by increasing
    azimuth fraction. Ring and column indices are zero-based.
    """

    points: np.ndarray
    ring: np.ndarray
    column: np.ndarray
    azimuth: np.ndarray
    ring_offsets: np.ndarray
    columns_per_ring: np.ndarray
    index: int = 0
    intensity: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ring_count(self) -> int:
        return len(self.columns_per_ring)

    def __len__(self) -> int:
        return len(self.points)

    def ring_slice(self, m: int) -> slice:
        return slice(int(self.ring_offsets[m]), int(self.ring_offsets[m + 1]))

    @classmethod
    def empty(cls, ring_count: int, index: int = 0) -> "Scan":
        return cls(
            points=np.zeros((0, 3)),
            ring=np.zeros(0, dtype=np.int64),
            column=np.zeros(0, dtype=np.int64),
            azimuth=np.zeros(0),
            ring_offsets=np.zeros(ring_count + 1, dtype=np.int64),
            columns_per_ring=np.zeros(ring_count, dtype=np.int64),
            index=index,
            intensity=np.zeros(0),
        )

    @classmethod
    def from_arrays(cls, points, ring, azimuth, ring_count: int, column=None,
                    columns_per_ring=None, index: int = 0, intensity=None) -> "Scan":
        """Sort points into ring-major, azimuth-ascending order and build the index."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        ring = np.asarray(ring, dtype=np.int64)
        azimuth = np.asarray(azimuth, dtype=float)
        order = np.lexsort((azimuth, ring))
        points, ring, azimuth = points[order], ring[order], azimuth[order]
        counts = np.bincount(ring, minlength=ring_count)[:ring_count]
        offsets = np.zeros(ring_count + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(counts)
        if column is None:
            column = np.arange(len(points), dtype=np.int64) - offsets[ring]
        else:
            column = np.asarray(column, dtype=np.int64)[order]
        if columns_per_ring is None:
            columns_per_ring = counts.astype(np.int64)
        if intensity is not None:
            intensity = np.asarray(intensity, dtype=float)[order]
        return cls(points, ring, column, azimuth, offsets,
                   np.asarray(columns_per_ring, dtype=np.int64), index, intensity)


def azimuth_fraction(p, clockwise: bool = False, start_azimuth: float = 0.0) -> float:
    """Fraction of a revolution between the scan-start azimuth and ``p``, in capture order."""
    x, y = float(p[0]), float(p[1])
    if x == 0.0 and y == 0.0:
        raise DegeneratePointError("point on the rotation axis has no azimuth")
    return float(_fractions(np.array([x]), np.array([y]), clockwise, start_azimuth)[0])


def _fractions(x, y, clockwise, start):
    theta = np.arctan2(y, x)
    d = (start - theta) if clockwise else (theta - start)
    f = np.mod(d, 2.0 * math.pi) / (2.0 * math.pi)
    f[f >= 1.0] = 0.0
    return f


def assign_rings(points: np.ndarray, config: SensorConfig) -> np.ndarray:
    """Nearest configured beam by elevation; ties go to the lower ring."""
    elev = np.arctan2(points[:, 2], np.hypot(points[:, 0], points[:, 1]))
    angles = np.asarray(config.vertical_angles)
    hi = np.clip(np.searchsorted(angles, elev), 1, max(len(angles) - 1, 1))
    if len(angles) == 1:
        return np.zeros(len(points), dtype=np.int64)
    lo = hi - 1
    pick_hi = np.abs(angles[hi] - elev) < np.abs(elev - angles[lo])
    return np.where(pick_hi, hi, lo).astype(np.int64)


def read_kitti_bin(data: bytes, config: SensorConfig, index: int = 0) -> Scan:
    """Parse a KITTI velodyne scan (little-endian float32 ``x y z intensity`` records)."""
    if len(data) % 16:
        raise ScanFormatError(f"byte length {len(data)} is not a multiple of 16")
    raw = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(float)
    xyz, intensity = raw[:, :3], raw[:, 3]
    finite = np.all(np.isfinite(xyz), axis=1)
    rng = np.linalg.norm(np.where(finite[:, None], xyz, 0.0), axis=1)
    in_range = finite & (rng >= config.min_range) & (rng <= config.max_range)
    # min_range > 0 so retained points are off the rotation axis unless z carries all range
    planar = np.hypot(xyz[:, 0], xyz[:, 1]) > 0.0
    keep = in_range & planar
    diagnostics = {
        "nan_dropped": int(np.count_nonzero(~finite)),
        "range_dropped": int(np.count_nonzero(finite & ~in_range)),
        "axis_dropped": int(np.count_nonzero(in_range & ~planar)),
    }
    xyz, intensity = xyz[keep], intensity[keep]
    if len(xyz) == 0:
        scan = Scan.empty(config.ring_count, index)
        scan.diagnostics = diagnostics
        return scan
    start = math.atan2(xyz[0, 1], xyz[0, 0])
    frac = _fractions(xyz[:, 0], xyz[:, 1], config.clockwise, start)
    ring = assign_rings(xyz, config)
    scan = Scan.from_arrays(xyz, ring, frac, config.ring_count, index=index, intensity=intensity)
    # equal azimuth within a ring breaks strict ordering; keep the first
    dup = np.zeros(len(scan), dtype=bool)
    same_ring = scan.ring[1:] == scan.ring[:-1]
    dup[1:] = same_ring & (scan.azimuth[1:] == scan.azimuth[:-1])
    if dup.any():
        k = ~dup
        scan = Scan.from_arrays(scan.points[k], scan.ring[k], scan.azimuth[k], config.ring_count,
                                index=index, intensity=scan.intensity[k])
    diagnostics["duplicate_dropped"] = int(np.count_nonzero(dup))
    scan.diagnostics = diagnostics
    return scan


def write_kitti_bin(points, intensity=None) -> bytes:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.zeros((len(points), 4), dtype="<f4")
    out[:, :3] = points
    if intensity is not None:
        out[:, 3] = intensity
    return out.tobytes()


def scan_to_kitti_bin(scan: Scan) -> bytes:
    """Serialise in capture order (column-major), so the first record is the scan start."""
    order = np.lexsort((scan.ring, scan.azimuth))
    inten = scan.intensity[order] if scan.intensity is not None else None
    return write_kitti_bin(scan.points[order], inten)


def _unit(v, what, line):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0.0:
        raise SceneFormatError(line, f"{what} must be a nonzero finite vector")
    return v / n


@dataclass(frozen=True)
class Plane:
    """Rectangle centred on ``point``; ``extent`` gives full side lengths along ``u`` and ``v``."""

    point: np.ndarray
    normal: np.ndarray
    extent: tuple

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.normal
        ref = np.array([1.0, 0.0, 0.0]) if abs(n[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
        u = np.cross(n, ref)
        u /= np.linalg.norm(u)
        return u, np.cross(n, u)


@dataclass(frozen=True)
class Pole:
    base: np.ndarray
    axis: np.ndarray
    radius: float
    height: float


@dataclass
class Scene:
    planes: list = field(default_factory=list)
    poles: list = field(default_factory=list)

    def __bool__(self):
        return bool(self.planes or self.poles)

    def add_plane(self, point, normal, extent=(math.inf, math.inf)):
        self.planes.append(Plane(np.asarray(point, dtype=float), _unit(normal, "normal", 0),
                                 (float(extent[0]), float(extent[1]))))
        return self

    def add_pole(self, base, axis, radius, height):
        self.poles.append(Pole(np.asarray(base, dtype=float), _unit(axis, "axis", 0),
                               float(radius), float(height)))
        return self

    def to_text(self) -> str:
        lines = []
        for p in self.planes:
            vals = [*p.point, *p.normal, *p.extent]
            lines.append("plane " + " ".join(repr(float(v)) for v in vals))
        for p in self.poles:
            vals = [*p.base, *p.axis, p.radius, p.height]
            lines.append("pole " + " ".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"


def parse_scene(text: str) -> Scene:
    """Parse ``plane px py pz nx ny nz ex ey`` / ``pole bx by bz ax ay az r h`` lines."""
    scene = Scene()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].split()
        if not body:
            continue
        kind, args = body[0], body[1:]
        if kind not in ("plane", "pole"):
            raise SceneFormatError(lineno, f"unknown primitive {kind!r}")
        if len(args) != 8:
            raise SceneFormatError(lineno, f"{kind} needs 8 numbers, got {len(args)}")
        try:
            v = [float(a) for a in args]
        except ValueError as exc:
            raise SceneFormatError(lineno, str(exc)) from None
        if kind == "plane":
            if not all(np.isfinite(v[:6])) or v[6] <= 0 or v[7] <= 0:
                raise SceneFormatError(lineno, "plane needs finite point/normal and positive extent")
            scene.planes.append(Plane(np.array(v[:3]), _unit(v[3:6], "normal", lineno), (v[6], v[7])))
        else:
            if not all(np.isfinite(v)) or v[6] <= 0 or v[7] <= 0:
                raise SceneFormatError(lineno, "pole needs finite values and positive radius/height")
            scene.poles.append(Pole(np.array(v[:3]), _unit(v[3:6], "axis", lineno), v[6], v[7]))
    return scene

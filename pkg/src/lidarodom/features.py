"""Edge and planar feature extraction from per-ring local smoothness."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .geometry import Pose
from .pointcloud import Scan


@dataclass(frozen=True)
class FeatureConfig:
    neighbor_half_width: int = 5
    edge_sigma_min: float = 0.1
    planar_sigma_max: float = 0.03
    sectors_per_ring: int = 6
    max_edges_per_sector: int = 2
    max_planars_per_sector: int = 30
    discontinuity_ratio: float = 1.5
    suppress_neighbors: bool = True
    grazing_angle: float = 0.35       # radians; edges beside surfaces seen this obliquely are dropped, 0 keeps them
    smoothness_form: str = "sum"      # "sum" or "literal" (mean of per-neighbour norms)

    def __post_init__(self):
        if self.neighbor_half_width < 1:
            raise ValueError("neighbor_half_width must be >= 1")
        if self.edge_sigma_min <= 0 or self.planar_sigma_max <= 0:
            raise ValueError("smoothness thresholds must be positive")
        if self.edge_sigma_min <= self.planar_sigma_max:
            raise ValueError("edge_sigma_min must exceed planar_sigma_max")
        if self.sectors_per_ring < 1:
            raise ValueError("sectors_per_ring must be >= 1")
        if not 0.0 <= self.grazing_angle < np.pi / 2:
            raise ValueError("grazing_angle must lie in [0, pi/2)")
        if self.smoothness_form not in ("sum", "literal"):
            raise ValueError(f"unknown smoothness_form {self.smoothness_form!r}")


@dataclass
class FeatureSet:
    """Points of one feature class with their smoothness, azimuth fraction and ring."""

    points: np.ndarray
    sigma: np.ndarray
    azimuth: np.ndarray
    ring: np.ndarray
    column: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.azimuth = np.asarray(self.azimuth, dtype=float)
        self.ring = np.asarray(self.ring, dtype=np.int64)
        if self.column is None:
            self.column = np.zeros(len(self.points), dtype=np.int64)

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls) -> "FeatureSet":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64))

    def with_points(self, points) -> "FeatureSet":
        return replace(self, points=np.asarray(points, dtype=float))


@dataclass
class FeatureCloud:
    edges: FeatureSet
    planars: FeatureSet

    def __len__(self):
        return len(self.edges) + len(self.planars)

    def transformed(self, T: Pose) -> "FeatureCloud":
        return FeatureCloud(self.edges.with_points(T @ self.edges.points),
                            self.planars.with_points(T @ self.planars.points))


def smoothness(ring_points, n: int, cfg: FeatureConfig = FeatureConfig()) -> float | None:
    """Smoothness of column ``n`` in an ordered ring, or None without a full neighbourhood."""
    P = np.asarray(ring_points, dtype=float)
    w = cfg.neighbor_half_width
    if n - w < 0 or n + w >= len(P):
        return None
    nbrs = np.concatenate([P[n - w:n], P[n + 1:n + w + 1]]) - P[n]
    if cfg.smoothness_form == "literal":
        return float(np.linalg.norm(nbrs, axis=1).sum() / (2 * w))
    return float(np.linalg.norm(nbrs.sum(axis=0)) / (2 * w))


def scan_smoothness(scan: Scan, cfg: FeatureConfig = FeatureConfig()):
    """Smoothness of every point in ``scan`` with its validity and occlusion flags."""
    return _kernels.scan_smoothness(scan.points, scan.ring_offsets, cfg.neighbor_half_width,
                                    cfg.smoothness_form == "literal", cfg.discontinuity_ratio)


def grazing_mask(points, ring_offsets, half_width: int, angle: float) -> np.ndarray:
    """True where the chord to either ``half_width`` neighbour meets the beam within ``angle``.

    A surface swept at a shallow angle is sampled sparsely, so the sharpest
    point near a corner on it lands some way from the true corner.
    """
    points = np.asarray(points, dtype=float)
    out = np.zeros(len(points), dtype=bool)
    if angle <= 0.0:
        return out
    limit = np.cos(angle)
    w = int(half_width)
    for a, b in zip(ring_offsets[:-1], ring_offsets[1:]):
        P = points[a:b]
        if len(P) < 2 * w + 1:
            continue
        c = P[w:len(P) - w]
        beam = c / np.maximum(np.linalg.norm(c, axis=1), 1e-12)[:, None]
        for nb in (P[:len(P) - 2 * w], P[2 * w:]):
            chord = nb - c
            norm = np.maximum(np.linalg.norm(chord, axis=1), 1e-12)
            out[a + w:b - w] |= np.abs(np.einsum("ij,ij->i", chord, beam)) / norm > limit
    return out


def extract_features(scan: Scan, cfg: FeatureConfig = FeatureConfig()) -> FeatureCloud:
    """Split each ring into azimuth sectors and pick the sharpest and flattest points."""
    if len(scan) == 0:
        return FeatureCloud(FeatureSet.empty(), FeatureSet.empty())
    sigma, valid, edge_ok = scan_smoothness(scan, cfg)
    if cfg.grazing_angle > 0.0:
        edge_ok = edge_ok & ~grazing_mask(scan.points, scan.ring_offsets, cfg.neighbor_half_width,
                                          cfg.grazing_angle)
    e_idx, p_idx = _kernels.select_features(
        sigma, valid, edge_ok, scan.azimuth, scan.ring_offsets, cfg.sectors_per_ring,
        cfg.max_edges_per_sector, cfg.max_planars_per_sector, cfg.edge_sigma_min,
        cfg.planar_sigma_max, cfg.neighbor_half_width, cfg.suppress_neighbors,
    )

    def take(idx):
        return FeatureSet(scan.points[idx], sigma[idx], scan.azimuth[idx], scan.ring[idx], scan.column[idx])

    return FeatureCloud(take(e_idx), take(p_idx))

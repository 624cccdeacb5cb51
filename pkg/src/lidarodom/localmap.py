"""Global edge and plane maps with k-d tree lookup and voxel downsampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .features import FeatureCloud
from .geometry import Pose, rotation_angle


@dataclass(frozen=True)
class LineLandmark:
    center: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True)
class PlaneLandmark:
    center: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class KeyframePolicy:
    translation_threshold: float = 0.5
    rotation_threshold: float = 0.175
    every_frame: bool = False

    def __post_init__(self):
        if self.translation_threshold <= 0 or self.rotation_threshold <= 0:
            raise ValueError("keyframe thresholds must be positive")

    def is_keyframe(self, pose: Pose, last_kf_pose: Pose) -> bool:
        if self.every_frame:
            return True
        delta = last_kf_pose.inverse() @ pose
        return bool(np.linalg.norm(delta.translation) > self.translation_threshold
                    or rotation_angle(delta.rotation) > self.rotation_threshold)


@dataclass(frozen=True)
class MapConfig:
    edge_leaf: float = 0.4              # metres
    plane_leaf: float = 0.4             # metres
    neighbors: int = 5
    line_ratio: float = 3.0
    plane_ratio: float = 3.0
    max_edge_distance: float = 1.0      # metres, applied to the farthest of the k neighbours
    max_plane_distance: float = 1.0
    gate_on: str = "farthest"           # or "nearest"
    line_fit_tolerance: float = 0.05    # metres; a neighbour farther than this from its line voids the fit
    plane_fit_tolerance: float = 0.05   # metres; 0 disables either check

    def __post_init__(self):
        if self.edge_leaf <= 0 or self.plane_leaf <= 0:
            raise ValueError("voxel leaves must be positive")
        if self.neighbors < 3:
            raise ValueError("landmark fitting needs at least 3 neighbours")
        if self.gate_on not in ("nearest", "farthest"):
            raise ValueError("gate_on must be 'nearest' or 'farthest'")
        if min(self.max_edge_distance, self.max_plane_distance) <= 0:
            raise ValueError("correspondence distances must be positive")
        if min(self.line_fit_tolerance, self.plane_fit_tolerance) < 0:
            raise ValueError("fit tolerances must be non-negative")


def voxel_keys(points: np.ndarray, leaf: float) -> np.ndarray:
    return np.floor(np.asarray(points, dtype=float) / leaf).astype(np.int64)


def voxel_downsample(points, leaf: float) -> np.ndarray:
    """Centroid of each occupied voxel, sorted by voxel key."""
    if leaf <= 0:
        raise ValueError("leaf size must be positive")
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        return points.copy()
    keys = voxel_keys(points, leaf)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, points)
    out = sums / counts[:, None]
    # a centroid can round onto a neighbouring voxel's boundary; pull it back inside
    lo = uniq * leaf
    return np.clip(out, lo, np.nextafter((uniq + 1) * leaf, -np.inf))


def _eig_sorted(points: np.ndarray):
    """Mean, eigenvalues (descending) and eigenvectors (columns) of the point covariance."""
    if points.ndim == 2:
        center, vals, vecs = _kernels.covariance_eigen(points[None])
        return center[0], vals[0], vecs[0]
    return _kernels.covariance_eigen(points)


def fit_line(points, ratio: float = 3.0) -> LineLandmark | None:
    """Principal direction through the centroid, or None unless one eigenvalue dominates."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) < 3:
        raise ValueError("need at least 3 points")
    center, vals, vecs = _eig_sorted(points)
    if vals[0] <= 1e-12 * max(1.0, float(np.abs(points).max()) ** 2) or vals[0] < ratio * vals[1]:
        return None
    return LineLandmark(center, vecs[:, 0] / np.linalg.norm(vecs[:, 0]))


def fit_plane(points, ratio: float = 3.0) -> PlaneLandmark | None:
    """Least-variance direction as the normal, or None for rank-deficient spreads."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) < 3:
        raise ValueError("need at least 3 points")
    center, vals, vecs = _eig_sorted(points)
    scale = 1e-12 * max(1.0, float(np.abs(points).max()) ** 2)
    if vals[1] <= scale or vals[1] < ratio * vals[2]:
        return None
    return PlaneLandmark(center, vecs[:, 2] / np.linalg.norm(vecs[:, 2]))


def fit_lines_batch(groups: np.ndarray, ratio: float = 3.0, tolerance: float = 0.0):
    """Vectorised :func:`fit_line` over ``(n, k, 3)`` neighbourhoods: centers, directions, ok-mask.

    With ``tolerance > 0`` a fit is also rejected when any neighbour lies
    farther than that from the line.
    """
    center, vals, vecs = _eig_sorted(groups)
    scale = 1e-12 * np.maximum(1.0, np.abs(groups).max(axis=(1, 2)) ** 2)
    ok = (vals[:, 0] > scale) & (vals[:, 0] >= ratio * vals[:, 1])
    direction = vecs[:, :, 0]
    if tolerance > 0.0:
        off = np.cross(groups - center[:, None, :], direction[:, None, :])
        ok &= np.sqrt(np.einsum("nki,nki->nk", off, off)).max(axis=1) <= tolerance
    return center, direction, ok


def fit_planes_batch(groups: np.ndarray, ratio: float = 3.0, tolerance: float = 0.0):
    center, vals, vecs = _eig_sorted(groups)
    scale = 1e-12 * np.maximum(1.0, np.abs(groups).max(axis=(1, 2)) ** 2)
    ok = (vals[:, 1] > scale) & (vals[:, 1] >= ratio * vals[:, 2])
    normal = vecs[:, :, 2]
    if tolerance > 0.0:
        off = np.einsum("nki,ni->nk", groups - center[:, None, :], normal)
        ok &= np.abs(off).max(axis=1) <= tolerance
    return center, normal, ok


class FeatureMap:
    """World-frame edge and plane point sets, each behind its own k-d tree.

    Writes (``insert``) rebuild the trees; queries in between are read-only.
    """

    def __init__(self, config: MapConfig = MapConfig()):
        self.config = config
        self.edge_points = np.zeros((0, 3))
        self.plane_points = np.zeros((0, 3))
        self._trees = {"edge": None, "plane": None}

    @property
    def edge_leaf(self):
        return self.config.edge_leaf

    @property
    def plane_leaf(self):
        return self.config.plane_leaf

    def points(self, side: str) -> np.ndarray:
        if side == "edge":
            return self.edge_points
        if side == "plane":
            return self.plane_points
        raise ValueError(f"unknown map side {side!r}")

    def size(self, side: str | None = None) -> int:
        if side is None:
            return len(self.edge_points) + len(self.plane_points)
        return len(self.points(side))

    def tree(self, side: str) -> cKDTree | None:
        pts = self.points(side)
        if len(pts) == 0:
            return None
        if self._trees[side] is None:
            self._trees[side] = cKDTree(pts)
        return self._trees[side]

    def knn(self, side: str, query, k: int):
        """Exact ``min(k, size)`` nearest neighbours sorted by distance: ``(points, distances)``."""
        tree = self.tree(side)
        if tree is None or k <= 0:
            return np.zeros((0, 3)), np.zeros(0)
        k = min(k, tree.n)
        dist, idx = tree.query(np.asarray(query, dtype=float).reshape(3), k=k)
        dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
        return self.points(side)[idx], dist

    def knn_batch(self, side: str, queries: np.ndarray, k: int):
        """Neighbour indices ``(n, k)`` and distances for many queries; None when the side is empty."""
        tree = self.tree(side)
        if tree is None:
            return None, None
        k = min(k, tree.n)
        dist, idx = tree.query(np.asarray(queries, dtype=float).reshape(-1, 3), k=k)
        return idx.reshape(len(queries), k), dist.reshape(len(queries), k)

    def add_points(self, edges=None, planes=None) -> None:
        """Append world-frame points and downsample each touched side."""
        if edges is not None and len(edges):
            self.edge_points = voxel_downsample(np.vstack([self.edge_points, edges]), self.edge_leaf)
            self._trees["edge"] = None
        if planes is not None and len(planes):
            self.plane_points = voxel_downsample(np.vstack([self.plane_points, planes]), self.plane_leaf)
            self._trees["plane"] = None

    def insert(self, features: FeatureCloud, pose: Pose) -> None:
        self.add_points(pose @ features.edges.points, pose @ features.planars.points)

    def dump(self) -> str:
        """Plain-text dump, one ``E|S x y z`` line per point."""
        lines = [f"E {x!r} {y!r} {z!r}" for x, y, z in self.edge_points.tolist()]
        lines += [f"S {x!r} {y!r} {z!r}" for x, y, z in self.plane_points.tolist()]
        return "\n".join(lines) + ("\n" if lines else "")


def maybe_insert(fmap: FeatureMap, features: FeatureCloud, pose: Pose, last_kf_pose: Pose,
                 policy: KeyframePolicy) -> bool:
    """Insert ``features`` (sensor frame) at ``pose`` if it qualifies as a keyframe."""
    if not policy.is_keyframe(pose, last_kf_pose):
        return False
    fmap.insert(features, pose)
    return True

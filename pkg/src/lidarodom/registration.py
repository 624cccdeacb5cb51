"""Smoothness-weighted point-to-line / point-to-plane Gauss-Newton alignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .features import FeatureCloud
from .geometry import Pose, exp_se3, point_jacobian, transform_point
from .localmap import FeatureMap, LineLandmark, MapConfig, PlaneLandmark, fit_lines_batch, fit_planes_batch

AXIS_NAMES = ("tx", "ty", "tz", "rx", "ry", "rz")
WEIGHT_ORIENTATIONS = ("as-printed", "as-text")


class DegeneracyError(RuntimeError):
    """Alignment is under-constrained; carries correspondence counts and the weak axis."""

    def __init__(self, message, edge_count=0, plane_count=0, weak_direction=None):
        super().__init__(message)
        self.edge_count = edge_count
        self.plane_count = plane_count
        self.weak_direction = weak_direction


@dataclass(frozen=True)
class GNConfig:
    max_outer_iterations: int = 10
    update_norm_epsilon: float = 1e-5
    huber_delta: float = 0.0             # metres; 0 disables
    min_correspondences: int = 10
    condition_limit: float = 1e6
    max_step_halvings: int = 4
    weight_orientation: str = "as-printed"

    def __post_init__(self):
        if self.max_outer_iterations < 1 or self.update_norm_epsilon <= 0:
            raise ValueError("iteration count and epsilon must be positive")
        if self.weight_orientation not in WEIGHT_ORIENTATIONS:
            raise ValueError(f"weight_orientation must be one of {WEIGHT_ORIENTATIONS}")


@dataclass
class AlignDiagnostics:
    iterations: int = 0
    final_cost: float = 0.0
    edge_correspondences: int = 0
    plane_correspondences: int = 0
    converged: bool = False
    last_update_norm: float = float("nan")
    weight_orientation: str = "as-printed"
    step_costs: list = field(default_factory=list)   # (cost before, cost after) per accepted step

    def to_fields(self) -> dict:
        return {
            "iterations": self.iterations,
            "cost": f"{self.final_cost:.6e}",
            "edge_matches": self.edge_correspondences,
            "plane_matches": self.plane_correspondences,
            "converged": int(self.converged),
            "weights": self.weight_orientation,
        }


def edge_residual(T: Pose, p, line: LineLandmark) -> float:
    """Distance from ``T p`` to the infinite line."""
    d = transform_point(T, p) - line.center
    return float(np.linalg.norm(np.cross(d, line.direction)))


def plane_residual(T: Pose, p, plane: PlaneLandmark) -> float:
    """Signed distance from ``T p`` to the plane along its normal."""
    return float((transform_point(T, p) - plane.center) @ plane.normal)


def compute_weights(edge_sigma, planar_sigma, orientation: str = "as-printed"):
    """Per-class softmax weights over smoothness.

    ``as-printed`` favours smooth edges (``exp(-sigma)``) and sharp planar
    points (``exp(sigma)``); ``as-text`` flips both signs.
    """
    if orientation not in WEIGHT_ORIENTATIONS:
        raise ValueError(f"weight orientation must be one of {WEIGHT_ORIENTATIONS}")
    sign = 1.0 if orientation == "as-printed" else -1.0

    def softmax(z):
        z = np.asarray(z, dtype=float)
        if len(z) == 0:
            return np.zeros(0)
        e = np.exp(z - z.max())
        return e / e.sum()

    return softmax(-sign * np.asarray(edge_sigma, dtype=float)), softmax(sign * np.asarray(planar_sigma, dtype=float))


def edge_jacobian(T: Pose, p, line: LineLandmark, W: float = 1.0) -> np.ndarray:
    """1x6 derivative of ``W * edge_residual`` under a left perturbation of ``T``."""
    x = np.cross(transform_point(T, p) - line.center, line.direction)
    f = np.linalg.norm(x)
    if f < 1e-12:
        return np.zeros(6)
    pn = x / f
    return W * (np.cross(line.direction, pn) @ point_jacobian(T, p))


def plane_jacobian(T: Pose, p, plane: PlaneLandmark, W: float = 1.0) -> np.ndarray:
    return W * (plane.normal @ point_jacobian(T, p))


@dataclass
class Correspondences:
    points: np.ndarray      # sensor-frame feature points
    centers: np.ndarray
    dirs: np.ndarray        # line directions / plane normals
    kinds: np.ndarray       # _kernels.EDGE / _kernels.PLANE
    weights: np.ndarray
    edge_count: int
    plane_count: int

    def __len__(self):
        return len(self.points)


def build_correspondences(features: FeatureCloud, fmap: FeatureMap, T: Pose,
                          edge_w: np.ndarray, plane_w: np.ndarray,
                          cfg: MapConfig | None = None) -> Correspondences:
    """Fit a landmark around every feature's neighbours in the map; drop gated or degenerate ones."""
    cfg = cfg or fmap.config
    parts = []
    counts = {}
    for side, fs, w, fitter, ratio, tol, gate, kind in (
        ("edge", features.edges, edge_w, fit_lines_batch, cfg.line_ratio, cfg.line_fit_tolerance,
         cfg.max_edge_distance, _kernels.EDGE),
        ("plane", features.planars, plane_w, fit_planes_batch, cfg.plane_ratio, cfg.plane_fit_tolerance,
         cfg.max_plane_distance, _kernels.PLANE),
    ):
        counts[side] = 0
        if len(fs) == 0 or fmap.size(side) < 3:
            continue
        q = T @ fs.points
        idx, dist = fmap.knn_batch(side, q, cfg.neighbors)
        if idx.shape[1] < 3:
            continue
        near = (dist[:, -1] if cfg.gate_on == "farthest" else dist[:, 0]) <= gate
        groups = fmap.points(side)[idx[near]]
        if len(groups) == 0:
            continue
        centers, dirs, ok = fitter(groups, ratio, tol)
        sel = np.flatnonzero(near)[ok]
        counts[side] = len(sel)
        parts.append((fs.points[sel], centers[ok], dirs[ok], np.full(len(sel), kind), w[sel]))
    if parts:
        pts, cen, dirs, kinds, ws = (np.concatenate(a) for a in zip(*parts))
    else:
        pts, cen, dirs = np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3))
        kinds, ws = np.zeros(0, dtype=np.int64), np.zeros(0)
    return Correspondences(pts, cen, dirs, kinds.astype(np.int64), ws, counts["edge"], counts["plane"])


def _solve(H: np.ndarray, g: np.ndarray, limit: float, corr: Correspondences) -> np.ndarray:
    def weak_axis():
        vals, vecs = np.linalg.eigh(H)
        return AXIS_NAMES[int(np.argmax(np.abs(vecs[:, 0])))]

    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        axis = weak_axis()
        raise DegeneracyError(f"normal matrix is singular (weak direction {axis})",
                              corr.edge_count, corr.plane_count, axis) from None
    pivots = np.diag(L) ** 2
    if pivots.min() <= 0 or pivots.max() / pivots.min() > limit:
        axis = weak_axis()
        raise DegeneracyError(f"normal matrix is ill-conditioned (weak direction {axis})",
                              corr.edge_count, corr.plane_count, axis)
    y = np.linalg.solve(L, -g)
    return np.linalg.solve(L.T, y)


def _cost(corr: Correspondences, T: Pose, huber: float) -> float:
    return _kernels.normal_equations(corr.points, T.rotation, T.translation, corr.centers,
                                     corr.dirs, corr.kinds, corr.weights, huber)[2]


def align(features: FeatureCloud, fmap: FeatureMap, T_init: Pose, cfg: GNConfig = GNConfig()):
    """Refine ``T_init`` so the features sit on the map's lines and planes.

    Each outer iteration re-associates features, takes one Gauss-Newton step
    with backtracking, and left-multiplies the update onto the pose.
    Returns ``(pose, AlignDiagnostics)``; raises :class:`DegeneracyError` when
    the problem is under-constrained.
    """
    edge_w, plane_w = compute_weights(features.edges.sigma, features.planars.sigma, cfg.weight_orientation)
    T = T_init
    diag = AlignDiagnostics(weight_orientation=cfg.weight_orientation)
    for it in range(cfg.max_outer_iterations):
        corr = build_correspondences(features, fmap, T, edge_w, plane_w)
        diag.edge_correspondences, diag.plane_correspondences = corr.edge_count, corr.plane_count
        if len(corr) < cfg.min_correspondences:
            raise DegeneracyError(
                f"only {len(corr)} correspondences (edges {corr.edge_count}, planes {corr.plane_count})",
                corr.edge_count, corr.plane_count)
        H, g, cost = _kernels.normal_equations(corr.points, T.rotation, T.translation, corr.centers,
                                               corr.dirs, corr.kinds, corr.weights, cfg.huber_delta)
        delta = _solve(H, g, cfg.condition_limit, corr)
        diag.iterations = it + 1
        accepted = None
        step = delta
        for _ in range(cfg.max_step_halvings + 1):
            candidate = (exp_se3(step) @ T).orthonormalized()
            new_cost = _cost(corr, candidate, cfg.huber_delta)
            if new_cost <= cost:
                accepted = (candidate, new_cost, step)
                break
            step = 0.5 * step
        if accepted is None:
            diag.final_cost = cost
            diag.converged = True
            diag.last_update_norm = 0.0
            break
        T, new_cost, step = accepted
        diag.step_costs.append((cost, new_cost))
        diag.final_cost = new_cost
        diag.last_update_norm = float(np.linalg.norm(step))
        if diag.last_update_norm < cfg.update_norm_epsilon:
            diag.converged = True
            break
    return T, diag

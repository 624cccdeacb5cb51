"""Segment-based relative pose error (KITTI odometry metric)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, rotation_angle
from .pipeline import Trajectory

KITTI_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


class PoseParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class ErrorReport:
    ate: float                     # percent
    are: float                     # degrees per metre
    pairs: int
    by_length: dict = field(default_factory=dict)   # length -> (ate %, are deg/m, pairs)
    skipped: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"ate {self.ate:.3f}%", f"are {self.are:.4f} deg/m", f"pairs {self.pairs}"]
        if self.by_length:
            lines.append("length_m  ate_%  are_deg/m  pairs")
            for L, (a, r, n) in sorted(self.by_length.items()):
                lines.append(f"{L:g}  {a:.3f}  {r:.4f}  {n}")
        for L in self.skipped:
            lines.append(f"notice: segment length {L:g} m exceeds the ground-truth path; skipped")
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        parts = [f"ate={self.ate:.6f}", f"are={self.are:.6f}", f"pairs={self.pairs}"]
        for L, (a, r, n) in sorted(self.by_length.items()):
            parts.append(f"ate_{L:g}={a:.6f} are_{L:g}={r:.6f} pairs_{L:g}={n}")
        return " ".join(parts) + "\n"


def path_distances(poses) -> np.ndarray:
    t = np.array([p.translation for p in poses])
    steps = np.linalg.norm(np.diff(t, axis=0), axis=1) if len(t) > 1 else np.zeros(0)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _poses(traj) -> list:
    return traj.poses if isinstance(traj, Trajectory) else list(traj)


def evaluate(est, gt, segment_lengths=KITTI_LENGTHS) -> ErrorReport:
    """Average translational (%) and rotational (deg/m) error over fixed-length segments.

    For every start frame ``i`` and length ``L`` the end frame ``j`` is the
    first one whose ground-truth arc length from ``i`` reaches ``L``; the
    error is the mismatch between estimated and true relative motion
    ``inv(est_i) est_j`` vs ``inv(gt_i) gt_j``.
    """
    if isinstance(est, Trajectory) and isinstance(gt, Trajectory) and est.indices != gt.indices:
        raise ValueError("trajectories have different scan indices")
    E, G = _poses(est), _poses(gt)
    if len(E) != len(G):
        raise ValueError(f"trajectory lengths differ: {len(E)} vs {len(G)}")
    dist = path_distances(G) if G else np.zeros(0)
    total = dist[-1] if len(dist) else 0.0
    by_length, skipped = {}, []
    t_all, r_all = [], []
    for L in segment_lengths:
        L = float(L)
        if L <= 0:
            raise ValueError("segment lengths must be positive")
        if total < L:
            skipped.append(L)
            warnings.warn(f"segment length {L:g} m exceeds ground-truth path {total:.3f} m; skipped")
            continue
        t_err, r_err = [], []
        for i in range(len(G)):
            j = int(np.searchsorted(dist, dist[i] + L, side="left"))
            if j >= len(G):
                break
            d_est = E[i].inverse() @ E[j]
            d_gt = G[i].inverse() @ G[j]
            err = d_est.inverse() @ d_gt
            t_err.append(np.linalg.norm(err.translation) / L)
            r_err.append(rotation_angle(err.rotation) / L)
        by_length[L] = (100.0 * float(np.mean(t_err)), math.degrees(float(np.mean(r_err))), len(t_err))
        t_all += t_err
        r_all += r_err
    if not t_all:
        return ErrorReport(0.0, 0.0, 0, by_length, skipped)
    return ErrorReport(100.0 * float(np.mean(t_all)), math.degrees(float(np.mean(r_all))),
                       len(t_all), by_length, skipped)


def rmse(est, gt) -> float:
    """Root-mean-square translation difference between corresponding poses."""
    E, G = _poses(est), _poses(gt)
    if len(E) != len(G):
        raise ValueError("trajectory lengths differ")
    d = np.array([e.translation - g.translation for e, g in zip(E, G)])
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def read_kitti_poses(text: str) -> Trajectory:
    traj = Trajectory()
    k = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 12:
            raise PoseParseError(lineno, f"expected 12 values, got {len(fields)}")
        try:
            vals = np.array([float(v) for v in fields]).reshape(3, 4)
        except ValueError as exc:
            raise PoseParseError(lineno, str(exc)) from None
        traj.append(k, Pose(vals[:, :3], vals[:, 3]))
        k += 1
    return traj


def read_kitti_calib(text: str) -> Pose:
    """Velodyne-to-camera transform ``Tr`` from a KITTI odometry ``calib.txt``."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        key, _, rest = line.partition(":")
        if key.strip() != "Tr":
            continue
        vals = rest.split()
        if len(vals) != 12:
            raise PoseParseError(lineno, f"Tr needs 12 values, got {len(vals)}")
        M = np.array([float(v) for v in vals]).reshape(3, 4)
        return Pose(M[:, :3], M[:, 3])
    raise PoseParseError(0, "no 'Tr:' entry in calibration")


def to_camera_frame(poses, Tr: Pose) -> list:
    """Express sensor-frame poses in the camera frame KITTI ground truth uses."""
    Tr_inv = Tr.inverse()
    return [Tr @ p @ Tr_inv for p in _poses(poses)]

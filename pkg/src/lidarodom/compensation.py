"""Two-stage motion compensation.

Points captured at azimuth fraction ``s`` of a scan are re-expressed in the
sensor frame at the end of that scan. Under a constant per-scan twist ``xi``
the sensor at fraction ``s`` sits at ``exp(-(1 - s) * xi)`` relative to the
end frame, so that transform is applied to each point. Stage one uses the
constant-velocity prediction; stage two repeats the correction on the raw
points with the twist implied by the optimised pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .features import FeatureCloud, FeatureSet
from .geometry import Pose, exp_se3_batch, log_se3
from .pointcloud import Scan

MODES = ("none", "two-stage")


def predict_twist(T_prev2: Pose, T_prev: Pose) -> np.ndarray:
    """Per-scan twist under constant velocity."""
    return log_se3(T_prev2.inverse() @ T_prev)


def deskew_points(points, azimuth, xi) -> np.ndarray:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    xi = np.asarray(xi, dtype=float).reshape(6)
    if not xi.any() or len(points) == 0:
        return points.copy()
    frac = 1.0 - np.asarray(azimuth, dtype=float)
    R, t = exp_se3_batch(-frac[:, None] * xi[None, :])
    return np.einsum("nij,nj->ni", R, points) + t


def undistort(obj, xi):
    """Deskew a :class:`FeatureSet`, :class:`FeatureCloud` or :class:`Scan` by twist ``xi``.

    Length, order and all metadata are preserved; only positions change.
    """
    if isinstance(obj, FeatureCloud):
        return FeatureCloud(undistort(obj.edges, xi), undistort(obj.planars, xi))
    if isinstance(obj, FeatureSet):
        return obj.with_points(deskew_points(obj.points, obj.azimuth, xi))
    if isinstance(obj, Scan):
        return replace(obj, points=deskew_points(obj.points, obj.azimuth, xi))
    raise TypeError(f"cannot undistort {type(obj).__name__}")


def recompute_undistort(raw, T_prev: Pose, T_star: Pose):
    """Stage two: deskew the raw (uncorrected) points with the optimised motion."""
    return undistort(raw, log_se3(T_prev.inverse() @ T_star))


@dataclass
class MotionState:
    """The last two scan poses and the twist they imply."""

    T_prev2: Pose | None = None
    T_prev: Pose | None = None
    predicted_twist: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def push(self, pose: Pose) -> None:
        self.T_prev2, self.T_prev = self.T_prev, pose
        if self.T_prev2 is None:
            self.predicted_twist = np.zeros(6)
        else:
            self.predicted_twist = predict_twist(self.T_prev2, self.T_prev)

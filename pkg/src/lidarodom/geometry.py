"""Rigid-body math on SE(3).

Twists are 6-vectors ordered ``(rho, phi)``: translational part first, then the
rotation vector. Poses are :class:`Pose` objects holding a rotation matrix and
a translation; ``A @ B`` composes them and ``A @ p`` transforms points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Taylor branch below this rotation angle (rad)
SMALL_ANGLE = 1e-8
# log is ambiguous at a half turn
LOG_PI_MARGIN = 1e-6
# re-project rotations onto SO(3) once they drift this far
ORTHO_DRIFT = 1e-7


class GeometryDomainError(ValueError):
    """Raised when the SE(3) logarithm is requested too close to a half turn."""


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return Pose(
                self.rotation @ other.rotation,
                self.rotation @ other.translation + self.translation,
            )
        return transform_points(self, other)

    def angle(self) -> float:
        """Rotation angle in radians."""
        return rotation_angle(self.rotation)

    def orthonormalized(self, tol: float = ORTHO_DRIFT) -> "Pose":
        """Project the rotation back onto SO(3) if it drifted by more than ``tol``."""
        R = self.rotation
        if np.max(np.abs(R.T @ R - np.eye(3))) <= tol:
            return self
        U, _, Vt = np.linalg.svd(R)
        D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
        return Pose(U @ D @ Vt, self.translation)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        rv = log_so3(self.rotation) if self.angle() < math.pi - LOG_PI_MARGIN else None
        return f"Pose(t={np.round(self.translation, 6).tolist()}, rotvec={None if rv is None else np.round(rv, 6).tolist()})"


def skew(v) -> np.ndarray:
    """Matrix ``S`` with ``S @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def skew_batch(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


def rotation_angle(R: np.ndarray) -> float:
    R = np.asarray(R, dtype=float)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return math.atan2(0.5 * np.linalg.norm(w), 0.5 * (np.trace(R) - 1.0))


def exp_so3(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float).reshape(3)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def log_so3(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = 0.5 * np.linalg.norm(w)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = math.atan2(s, c)
    if theta >= math.pi - LOG_PI_MARGIN:
        raise GeometryDomainError(f"rotation angle {theta:.9f} rad is too close to pi")
    if theta < SMALL_ANGLE:
        return 0.5 * w
    return (theta / (2.0 * s)) * w


# The closed-form coefficients below cancel catastrophically for small angles,
# so short Taylor series take over there.
_SERIES_ANGLE = 1e-3


def _one_minus_cos_over_sq(theta):
    h = math.sin(0.5 * theta) / theta
    return 2.0 * h * h


def _theta_minus_sin_over_cube(theta):
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    return (theta - math.sin(theta)) / theta ** 3


def _log_v_coefficient(theta):
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    half = 0.5 * theta
    return (1.0 - half * math.cos(half) / math.sin(half)) / (theta * theta)


def exp_se3(xi) -> Pose:
    """Closed-form exponential of the twist ``xi = (rho, phi)``."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    rho, phi = xi[:3], xi[3:]
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    K2 = K @ K
    if theta < SMALL_ANGLE:
        R = np.eye(3) + K + 0.5 * K2
        V = np.eye(3) + 0.5 * K + K2 / 6.0
    else:
        b = _one_minus_cos_over_sq(theta)
        R = np.eye(3) + (math.sin(theta) / theta) * K + b * K2
        V = np.eye(3) + b * K + _theta_minus_sin_over_cube(theta) * K2
    return Pose(R, V @ rho)


def log_se3(T: Pose) -> np.ndarray:
    """Inverse of :func:`exp_se3` for rotations strictly below a half turn."""
    phi = log_so3(T.rotation)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        V_inv = np.eye(3) - 0.5 * K + (K @ K) / 12.0
    else:
        V_inv = np.eye(3) - 0.5 * K + _log_v_coefficient(theta) * (K @ K)
    return np.concatenate([V_inv @ T.translation, phi])


def exp_se3_batch(xis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised exponential: ``(n, 6)`` twists to rotations ``(n, 3, 3)`` and translations ``(n, 3)``."""
    xis = np.asarray(xis, dtype=float).reshape(-1, 6)
    rho, phi = xis[:, :3], xis[:, 3:]
    theta = np.sqrt(np.einsum("ij,ij->i", phi, phi))
    K = skew_batch(phi)
    K2 = K @ K
    small = theta < SMALL_ANGLE
    th = np.where(small, 1.0, theta)
    t2 = th * th
    a = np.where(small, 1.0, np.sin(th) / th)
    h = np.sin(0.5 * th) / th
    b = np.where(small, 0.5, 2.0 * h * h)
    c = np.where(theta < _SERIES_ANGLE, 1.0 / 6.0 - theta ** 2 / 120.0 + theta ** 4 / 5040.0,
                 (th - np.sin(th)) / (t2 * th))
    eye = np.eye(3)
    R = eye + a[:, None, None] * K + b[:, None, None] * K2
    V = eye + b[:, None, None] * K + c[:, None, None] * K2
    t = np.einsum("nij,nj->ni", V, rho)
    return R, t


def interpolate(T_prev: Pose, xi, s: float) -> Pose:
    """Pose reached after fraction ``s`` of the constant-velocity motion ``xi``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation fraction must lie in [0, 1], got {s}")
    if s == 0.0:
        return T_prev
    return T_prev @ exp_se3(s * np.asarray(xi, dtype=float))


def transform_point(T: Pose, p) -> np.ndarray:
    return T.rotation @ np.asarray(p, dtype=float).reshape(3) + T.translation


def transform_points(T: Pose, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        return transform_point(T, points)
    return points @ T.rotation.T + T.translation


def point_jacobian(T: Pose, p) -> np.ndarray:
    """3x6 derivative of ``exp(d) @ T @ p`` at ``d = 0`` (left perturbation)."""
    J = np.zeros((3, 6))
    J[:, :3] = np.eye(3)
    J[:, 3:] = -skew(transform_point(T, p))
    return J

"""Deterministic ray-casting simulator for motion-distorted scans.

The sensor follows ``start_pose @ exp((n / N) * twist)`` while it sweeps column
``n`` of ``N``; every return is stored in the sensor frame at its own capture
time, which is exactly the skew a real spinning LiDAR produces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, exp_se3, exp_se3_batch
from .pointcloud import Scan, Scene, SensorConfig


@dataclass
class SimulatedScan:
    scan: Scan
    column_rotations: np.ndarray      # (N, 3, 3) sensor-to-world per column
    column_translations: np.ndarray   # (N, 3)
    primitive: np.ndarray             # index of the primitive hit by each point
    diagnostics: dict = field(default_factory=dict)

    def column_pose(self, n: int) -> Pose:
        return Pose(self.column_rotations[n], self.column_translations[n])

    def world_points(self) -> np.ndarray:
        """Every return mapped through the true pose of its column."""
        c = self.scan.column
        R, t = self.column_rotations[c], self.column_translations[c]
        return np.einsum("nij,nj->ni", R, self.scan.points) + t


def beam_directions(config: SensorConfig) -> np.ndarray:
    """Unit ray directions in the sensor frame, shape ``(N, M, 3)``."""
    N = config.columns_per_rev
    sign = -1.0 if config.clockwise else 1.0
    az = config.start_azimuth + sign * 2.0 * math.pi * np.arange(N) / N
    el = np.asarray(config.vertical_angles)
    ce, se = np.cos(el), np.sin(el)
    d = np.empty((N, len(el), 3))
    d[..., 0] = np.cos(az)[:, None] * ce[None, :]
    d[..., 1] = np.sin(az)[:, None] * ce[None, :]
    d[..., 2] = se[None, :]
    return d


def cast_rays(scene: Scene, origins: np.ndarray, dirs: np.ndarray, min_range: float):
    """Nearest hit distance along each unit ray (``inf`` on a miss) and the primitive index."""
    best = np.full(len(dirs), np.inf)
    which = np.full(len(dirs), -1, dtype=np.int64)
    for k, pl in enumerate(scene.planes):
        denom = dirs @ pl.normal
        ok = np.abs(denom) > 1e-12
        t = ((pl.point - origins) @ pl.normal) / np.where(ok, denom, 1.0)
        ok &= t >= min_range
        ok &= t < best
        if not (math.isinf(pl.extent[0]) and math.isinf(pl.extent[1])):
            u, v = pl.axes
            hit = origins + t[:, None] * dirs - pl.point
            ok &= np.abs(hit @ u) <= 0.5 * pl.extent[0]
            ok &= np.abs(hit @ v) <= 0.5 * pl.extent[1]
        best = np.where(ok, t, best)
        which = np.where(ok, k, which)
    offset = len(scene.planes)
    for k, pole in enumerate(scene.poles):
        a = pole.axis
        w = origins - pole.base
        d_perp = dirs - np.outer(dirs @ a, a)
        w_perp = w - np.outer(w @ a, a)
        A = np.einsum("ij,ij->i", d_perp, d_perp)
        B = 2.0 * np.einsum("ij,ij->i", d_perp, w_perp)
        C = np.einsum("ij,ij->i", w_perp, w_perp) - pole.radius ** 2
        disc = B * B - 4.0 * A * C
        valid = (A > 1e-14) & (disc >= 0.0)
        sq = np.sqrt(np.where(valid, disc, 0.0))
        A_safe = np.where(valid, A, 1.0)
        t_best = np.full(len(dirs), np.inf)
        for t in ((-B - sq) / (2.0 * A_safe), (-B + sq) / (2.0 * A_safe)):
            h = (w + t[:, None] * dirs) @ a
            ok = valid & (t >= min_range) & (h >= 0.0) & (h <= pole.height) & (t < t_best)
            t_best = np.where(ok, t, t_best)
        ok = t_best < best
        best = np.where(ok, t_best, best)
        which = np.where(ok, offset + k, which)
    return best, which


def simulate_scan(scene: Scene, start_pose: Pose, twist_per_scan, config: SensorConfig,
                  noise_sigma: float = 0.0, seed: int = 0, index: int = 0) -> SimulatedScan:
    """Cast one revolution while the sensor moves by ``twist_per_scan``.

    Returns the scan (sensor-frame points, column ``n`` has azimuth fraction
    ``n / N``) together with the exact pose of every column.
    """
    xi = np.asarray(twist_per_scan, dtype=float).reshape(6)
    if np.linalg.norm(xi[3:]) >= math.pi:
        raise ValueError("rotation per scan must stay below pi")
    N, M = config.columns_per_rev, config.ring_count
    s = np.arange(N) / N
    dR, dt = exp_se3_batch(s[:, None] * xi[None, :])
    R = np.einsum("ij,njk->nik", start_pose.rotation, dR)
    t = dt @ start_pose.rotation.T + start_pose.translation

    local = beam_directions(config)                       # (N, M, 3)
    world_dirs = np.einsum("nij,nmj->nmi", R, local).reshape(-1, 3)
    origins = np.repeat(t, M, axis=0)
    rng_hit, prim = cast_rays(scene, origins, world_dirs, config.min_range)
    rng_hit = rng_hit.reshape(N, M)
    prim = prim.reshape(N, M)
    if noise_sigma > 0.0:
        noise = np.random.default_rng(seed).normal(0.0, noise_sigma, size=(N, M))
        rng_hit = rng_hit + noise
    hit = np.isfinite(rng_hit) & (rng_hit <= config.max_range) & (rng_hit >= config.min_range)

    cols, rings = np.nonzero(hit)
    pts = rng_hit[cols, rings][:, None] * local[cols, rings]
    scan = Scan.from_arrays(
        pts, rings, s[cols], M, column=cols,
        columns_per_ring=np.full(M, N, dtype=np.int64), index=index,
        intensity=np.zeros(len(pts)),
    )
    order = np.lexsort((cols, rings))
    diagnostics = {"rays": N * M, "hits": int(len(pts)), "misses": int(N * M - len(pts))}
    return SimulatedScan(scan, R, t, prim[cols, rings][order], diagnostics)


@dataclass
class SimulatedSequence:
    scans: list
    start_poses: list     # sensor pose at the first column of each scan
    end_poses: list       # sensor pose at the end of each scan (reference frame)
    twists: list

    def ground_truth(self) -> list:
        """End-of-scan poses expressed relative to the first one (first pose is identity)."""
        if not self.end_poses:
            return []
        ref = self.end_poses[0].inverse()
        return [Pose.identity()] + [ref @ T for T in self.end_poses[1:]]


def simulate_sequence(scene: Scene, twists, config: SensorConfig, start_pose: Pose | None = None,
                      noise_sigma: float = 0.0, seed: int = 0) -> SimulatedSequence:
    """Chain scans so scan ``k`` sweeps from the end pose of scan ``k - 1``."""
    pose = start_pose or Pose.identity()
    scans, starts, ends, used = [], [], [], []
    for k, xi in enumerate(twists):
        xi = np.asarray(xi, dtype=float)
        sim = simulate_scan(scene, pose, xi, config, noise_sigma, seed + k, index=k)
        scans.append(sim)
        starts.append(pose)
        pose = pose @ exp_se3(xi)
        ends.append(pose)
        used.append(xi)
    return SimulatedSequence(scans, starts, ends, used)


def constant_twists(twist, count: int) -> list:
    return [np.asarray(twist, dtype=float)] * count


def box_room(size=(10.0, 8.0, 3.0), center=(0.0, 0.0), floor_z=-1.0) -> Scene:
    """Closed box (four walls, floor and ceiling) centred on ``center`` in x/y."""
    lx, ly, lz = size
    cx, cy = center
    zc = floor_z + lz / 2
    scene = Scene()
    scene.add_plane((cx + lx / 2, cy, zc), (-1, 0, 0), (ly, lz))
    scene.add_plane((cx - lx / 2, cy, zc), (1, 0, 0), (ly, lz))
    scene.add_plane((cx, cy + ly / 2, zc), (0, -1, 0), (lx, lz))
    scene.add_plane((cx, cy - ly / 2, zc), (0, 1, 0), (lx, lz))
    scene.add_plane((cx, cy, floor_z), (0, 0, 1), (lx, ly))
    scene.add_plane((cx, cy, floor_z + lz), (0, 0, -1), (lx, ly))
    return scene


def corridor_room_scene() -> Scene:
    """Corridor along +x opening into a hall, with pillars and wall recesses.

    Floor at z = -1 (sensor mounted 1 m high); sensor path runs along y = 0.
    """
    scene = Scene()
    h = 4.0
    zc = -1.0 + h / 2
    # floor / ceiling over the whole footprint
    scene.add_plane((15.0, 0.0, -1.0), (0, 0, 1), (50.0, 30.0))
    scene.add_plane((15.0, 0.0, 3.0), (0, 0, -1), (50.0, 30.0))
    # corridor x in [-6, 24], y in [-3, 3]; back wall at x=-6
    scene.add_plane((-6.0, 0.0, zc), (1, 0, 0), (6.0, h))
    # side walls are broken into segments with recesses to give along-track structure
    for x0, x1, y in [(-6, 2, 3.0), (3, 10, 3.0), (11, 18, 3.0), (19, 24, 3.0)]:
        scene.add_plane(((x0 + x1) / 2, y, zc), (0, -1, 0), (x1 - x0, h))
    for x0, x1, y in [(-6, 0, -3.0), (1, 8, -3.0), (9, 15, -3.0), (16, 24, -3.0)]:
        scene.add_plane(((x0 + x1) / 2, y, zc), (0, 1, 0), (x1 - x0, h))
    # recess pockets (0.6 m deep) between wall segments
    for xa, xb, y, sgn in [(2, 3, 3.0, 1), (10, 11, 3.0, 1), (18, 19, 3.0, 1),
                           (0, 1, -3.0, -1), (8, 9, -3.0, -1), (15, 16, -3.0, -1)]:
        yb = y + sgn * 0.6
        scene.add_plane(((xa + xb) / 2, yb, zc), (0, -sgn, 0), (xb - xa, h))
        scene.add_plane((xa, y + sgn * 0.3, zc), (1, 0, 0), (0.6, h))
        scene.add_plane((xb, y + sgn * 0.3, zc), (-1, 0, 0), (0.6, h))
    # hall x in [24, 40], y in [-12, 12]
    scene.add_plane((24.0, 7.5, zc), (1, 0, 0), (9.0, h))
    scene.add_plane((24.0, -7.5, zc), (1, 0, 0), (9.0, h))
    scene.add_plane((40.0, 0.0, zc), (-1, 0, 0), (24.0, h))
    scene.add_plane((32.0, 12.0, zc), (0, -1, 0), (16.0, h))
    scene.add_plane((32.0, -12.0, zc), (0, 1, 0), (16.0, h))
    # pillars
    for bx, by in [(4.0, 2.2), (12.5, -2.2), (20.0, 2.2), (28.0, 5.0), (30.0, -6.0),
                   (34.0, 2.0), (36.0, -9.0)]:
        scene.add_pole((bx, by, -1.0), (0, 0, 1), 0.2, h)
    return scene


def ground_truth_deskew(sim: SimulatedScan, reference: Pose) -> np.ndarray:
    """Points of ``sim`` expressed in ``reference`` using the true column poses."""
    return reference.inverse() @ sim.world_points()


def yaw_rate_to_twist(speed: float, yaw_rate: float, period: float = 0.1) -> np.ndarray:
    return np.array([speed * period, 0.0, 0.0, 0.0, 0.0, yaw_rate * period])

"""Scan-by-scan odometry: features, compensation, alignment, map update."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .compensation import MODES, MotionState, recompute_undistort, undistort
from .features import FeatureConfig, extract_features
from .geometry import Pose, exp_se3
from .localmap import FeatureMap, KeyframePolicy, MapConfig
from .pointcloud import Scan
from .registration import AlignDiagnostics, DegeneracyError, GNConfig, align


@dataclass(frozen=True)
class OdometryConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    # tracking starts from a motion prediction, so a short per-scan budget suffices
    gn: GNConfig = field(default_factory=lambda: GNConfig(max_outer_iterations=5))
    keyframe: KeyframePolicy = field(default_factory=KeyframePolicy)
    map: MapConfig = field(default_factory=MapConfig)
    compensation: str = "two-stage"

    def __post_init__(self):
        if self.compensation not in MODES:
            raise ValueError(f"compensation must be one of {MODES}")


class Trajectory:
    """Ordered ``(scan_index, Pose)`` pairs with strictly increasing indices."""

    def __init__(self, entries=None):
        self.entries: list[tuple[int, Pose]] = []
        for k, pose in entries or []:
            self.append(k, pose)

    def append(self, index: int, pose: Pose) -> None:
        if self.entries and index <= self.entries[-1][0]:
            raise ValueError(f"scan index {index} does not increase")
        self.entries.append((int(index), pose))

    @property
    def poses(self) -> list[Pose]:
        return [p for _, p in self.entries]

    @property
    def indices(self) -> list[int]:
        return [k for k, _ in self.entries]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @classmethod
    def from_poses(cls, poses) -> "Trajectory":
        return cls(list(enumerate(poses)))


@dataclass
class ScanDiagnostics:
    index: int
    pose: Pose
    keyframe: bool = False
    degenerate: bool = False
    weak_direction: str | None = None
    edges: int = 0
    planars: int = 0
    align: AlignDiagnostics | None = None
    timing_ms: dict = field(default_factory=dict)

    def log_line(self) -> str:
        """Deterministic ``key=value`` record (timings are kept out on purpose)."""
        t = self.pose.translation
        m = self.pose.matrix[:3].reshape(-1)
        fields = {
            "scan": self.index,
            "x": f"{t[0]:.6f}", "y": f"{t[1]:.6f}", "z": f"{t[2]:.6f}",
            "pose": ",".join(f"{v:.9g}" for v in m),
            "edges": self.edges,
            "planars": self.planars,
            "keyframe": int(self.keyframe),
            "degenerate": int(self.degenerate),
        }
        if self.weak_direction:
            fields["weak"] = self.weak_direction
        if self.align is not None:
            fields.update(self.align.to_fields())
        return " ".join(f"{k}={v}" for k, v in fields.items())

    def timing_line(self) -> str:
        parts = [f"scan={self.index}"] + [f"{k}_ms={v:.3f}" for k, v in self.timing_ms.items()]
        return " ".join(parts)


@dataclass
class OdometryState:
    config: OdometryConfig
    motion: MotionState = field(default_factory=MotionState)
    map: FeatureMap | None = None
    last_keyframe_pose: Pose | None = None
    trajectory: Trajectory = field(default_factory=Trajectory)

    def __post_init__(self):
        if self.map is None:
            self.map = FeatureMap(self.config.map)


def process_scan(state: OdometryState, scan: Scan) -> tuple[Pose, ScanDiagnostics]:
    """Estimate the end-of-scan pose of ``scan`` and update ``state`` in place."""
    cfg = state.config
    timing = {}
    clock = time.perf_counter
    t0 = clock()
    raw = extract_features(scan, cfg.features)
    t1 = clock()
    timing["extract"] = (t1 - t0) * 1e3

    first = state.motion.T_prev is None
    xi = state.motion.predicted_twist
    two_stage = cfg.compensation == "two-stage"
    feats = undistort(raw, xi) if two_stage else raw
    t2 = clock()
    timing["compensate"] = (t2 - t1) * 1e3

    diag = ScanDiagnostics(scan.index, Pose.identity(), edges=len(raw.edges), planars=len(raw.planars))
    if first:
        pose = Pose.identity()
    else:
        T_init = (state.motion.T_prev @ exp_se3(xi)).orthonormalized()
        try:
            pose, diag.align = align(feats, state.map, T_init, cfg.gn)
        except DegeneracyError as exc:
            pose = T_init
            diag.degenerate = True
            diag.weak_direction = exc.weak_direction or "correspondences"
    t3 = clock()
    timing["align"] = (t3 - t2) * 1e3

    if first:
        state.map.insert(raw, pose)
        diag.keyframe = True
        state.last_keyframe_pose = pose
    elif cfg.keyframe.is_keyframe(pose, state.last_keyframe_pose):
        final = recompute_undistort(raw, state.motion.T_prev, pose) if two_stage else raw
        state.map.insert(final, pose)
        diag.keyframe = True
        state.last_keyframe_pose = pose
    t4 = clock()
    timing["map"] = (t4 - t3) * 1e3
    timing["total"] = (t4 - t0) * 1e3

    state.motion.push(pose)
    state.trajectory.append(scan.index, pose)
    diag.pose = pose
    diag.timing_ms = timing
    return pose, diag


def run_sequence(scans, config: OdometryConfig = OdometryConfig()):
    """Fold :func:`process_scan` over an iterable of scans: ``(Trajectory, diagnostics)``."""
    state = OdometryState(config)
    diags = []
    source = iter(scans)
    k = 0
    while True:
        try:
            scan = next(source)
        except StopIteration:
            break
        except OSError as exc:
            raise OSError(f"failed reading scan {k}: {exc}") from exc
        _, d = process_scan(state, scan)
        diags.append(d)
        k += 1
    if not diags:
        raise ValueError("sequence contains no scans")
    return state.trajectory, diags


def _fmt(v: float) -> str:
    if v == 0.0:
        return "0"
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def write_trajectory(traj: Trajectory) -> str:
    """KITTI pose format: the row-major upper 3x4 of each pose, one line per scan."""
    lines = []
    for _, pose in traj:
        lines.append(" ".join(_fmt(v) for v in pose.matrix[:3].reshape(-1)))
    return "\n".join(lines) + ("\n" if lines else "")


def mean_total_ms(diags) -> float:
    return float(np.mean([d.timing_ms["total"] for d in diags])) if diags else 0.0

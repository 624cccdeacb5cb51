"""Command-line front end: ``lidarodom run | simulate | eval | ablate``."""

from __future__ import annotations

import argparse
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, describe
from .evaluation import KITTI_LENGTHS, PoseParseError, evaluate, read_kitti_poses, rmse
from .pipeline import Trajectory, mean_total_ms, run_sequence, write_trajectory
from .pointcloud import ScanFormatError, SceneFormatError, parse_scene, read_kitti_bin, scan_to_kitti_bin
from .simulate import simulate_sequence

DATASET_CONF = "dataset.conf"
DEFAULT_MOTION = "0.2,0,0,0,0,0"


class CliError(Exception):
    """A user-facing failure; the message is printed and the exit status is 1."""


def bundled_scene_text() -> str:
    return resources.files("lidarodom").joinpath("data/corridor_room.scene").read_text()


def _scan_files(root: Path) -> list[Path]:
    if not root.is_dir():
        raise CliError(f"scan directory not found: {root}")
    sub = root / "velodyne"
    files = sorted((sub if sub.is_dir() else root).glob("*.bin"))
    if not files:
        raise CliError(f"no scans found in {root}")
    return files


def _iter_scans(files, sensor):
    for k, path in enumerate(files):
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror or exc}") from exc
        try:
            yield read_kitti_bin(data, sensor, index=k)
        except ScanFormatError as exc:
            raise CliError(f"{path}: {exc}") from None


def _load_config(args, scans_dir: Path | None = None) -> RunConfig:
    cfg = RunConfig()
    try:
        if scans_dir is not None and (scans_dir / DATASET_CONF).is_file():
            cfg.update_from_text((scans_dir / DATASET_CONF).read_text())
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.is_file():
                raise CliError(f"config file not found: {path}")
            try:
                cfg.update_from_text(path.read_text())
            except ConfigError as exc:
                raise CliError(f"{path}: {exc}") from None
        for item in getattr(args, "set", None) or []:
            if "=" not in item:
                raise CliError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            cfg.set(key.strip(), value.strip())
        if getattr(args, "mode", None):
            cfg.set("pipeline.compensation", args.mode)
    except ConfigError as exc:
        raise CliError(str(exc)) from None
    return cfg


def _lengths(text: str | None):
    if not text:
        return KITTI_LENGTHS
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise CliError(f"--lengths expects comma-separated metres, got {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise CliError("--lengths must list positive metres")
    return values


def _read_poses(path) -> Trajectory:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"pose file not found: {path}")
    try:
        return read_kitti_poses(path.read_text())
    except PoseParseError as exc:
        raise CliError(f"{path}: {exc}") from None


def _evaluate(est, gt, lengths):
    if len(est) != len(gt):
        raise CliError(f"trajectory lengths differ: {len(est)} estimated vs {len(gt)} ground truth")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return evaluate(est.poses, gt.poses, lengths)


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}") from None


def _output_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    return out


def _run(files, cfg: RunConfig):
    try:
        return run_sequence(_iter_scans(files, cfg.sensor_config()), cfg.odometry_config())
    except OSError as exc:
        raise CliError(str(exc)) from None


def cmd_run(args) -> int:
    scans_dir = Path(args.scans)
    files = _scan_files(scans_dir)
    cfg = _load_config(args, scans_dir)
    out = _output_dir(args.output)
    traj, diags = _run(files, cfg)
    _write(out / "trajectory.txt", write_trajectory(traj))
    _write(out / "run.log", "".join(d.log_line() + "\n" for d in diags))
    _write(out / "timing.log", "".join(d.timing_line() + "\n" for d in diags))
    summary = [
        f"scans {len(diags)}",
        f"keyframes {sum(d.keyframe for d in diags)}",
        f"degenerate {sum(d.degenerate for d in diags)}",
        f"mean_ms_per_scan {mean_total_ms(diags):.3f}",
    ]
    if args.gt:
        report = _evaluate(traj, _read_poses(args.gt), _lengths(args.lengths))
        summary.append(report.to_text().rstrip("\n"))
    text = "\n".join(summary) + "\n"
    _write(out / "summary.txt", text)
    print(text, end="")
    return 0


def _parse_motion(spec: str, count: int | None):
    """Per-scan twists from ``tx,ty,tz,rx,ry,rz`` or a schedule file of ``count tx ty tz rx ry rz`` lines."""
    path = Path(spec)
    if path.is_file():
        twists = []
        for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            if len(line) != 7:
                raise CliError(f"{path}: line {lineno}: expected 'count tx ty tz rx ry rz'")
            try:
                n = int(line[0])
                xi = np.array([float(v) for v in line[1:]])
            except ValueError as exc:
                raise CliError(f"{path}: line {lineno}: {exc}") from None
            if n < 0:
                raise CliError(f"{path}: line {lineno}: negative scan count")
            twists += [xi] * n
        return twists if count is None else twists[:count]
    try:
        xi = np.array([float(v) for v in spec.split(",")])
    except ValueError:
        raise CliError(f"--motion is neither a file nor six comma-separated numbers: {spec!r}") from None
    if xi.shape != (6,):
        raise CliError("--motion needs exactly six numbers: tx,ty,tz,rx,ry,rz per scan")
    return [xi] * (10 if count is None else count)


def cmd_simulate(args) -> int:
    if args.scene:
        scene_path = Path(args.scene)
        if not scene_path.is_file():
            raise CliError(f"scene file not found: {scene_path}")
        text = scene_path.read_text()
    else:
        scene_path, text = "bundled corridor_room.scene", bundled_scene_text()
    try:
        scene = parse_scene(text)
    except SceneFormatError as exc:
        raise CliError(f"{scene_path}: {exc}") from None
    if args.count is not None and args.count < 0:
        raise CliError("--count must be non-negative")
    cfg = _load_config(args)
    sensor = cfg.sensor_config()
    twists = _parse_motion(args.motion, args.count)
    seq = simulate_sequence(scene, twists, sensor, noise_sigma=args.noise, seed=args.seed)
    out = _output_dir(args.output)
    velodyne = _output_dir(out / "velodyne")
    for k, sim in enumerate(seq.scans):
        try:
            (velodyne / f"{k:06d}.bin").write_bytes(scan_to_kitti_bin(sim.scan))
        except OSError as exc:
            raise CliError(f"cannot write scan {k}: {exc.strerror or exc}") from None
    _write(out / "poses.txt", write_trajectory(Trajectory.from_poses(seq.ground_truth())))
    sensor_keys = [k for k in cfg.values if k.startswith("sensor.")]
    _write(out / DATASET_CONF, cfg.to_text(sensor_keys))
    print(f"wrote {len(seq.scans)} scans to {out}")
    return 0


def cmd_eval(args) -> int:
    est, gt = _read_poses(args.est), _read_poses(args.gt)
    report = _evaluate(est, gt, _lengths(args.lengths))
    print(report.to_text(), end="")
    print(report.to_kv(), end="")
    return 0


def cmd_ablate(args) -> int:
    scans_dir = Path(args.scans)
    files = _scan_files(scans_dir)
    base = _load_config(args, scans_dir)
    gt = _read_poses(args.gt)
    if len(gt) != len(files):
        raise CliError(f"{len(files)} scans but {len(gt)} ground-truth poses")
    lengths = _lengths(args.lengths)
    rows = []
    for mode in ("none", "two-stage"):
        cfg = RunConfig(dict(base.values))
        cfg.set("pipeline.compensation", mode)
        traj, diags = _run(files, cfg)
        report = _evaluate(traj, gt, lengths)
        rows.append((mode, mean_total_ms(diags), rmse(traj.poses, gt.poses), report.ate, report.are))
    lines = [f"{'mode':<10} {'ms/frame':>9} {'rmse_m':>9} {'ate_%':>8} {'are_deg/m':>10}"]
    for mode, ms, err, ate, are in rows:
        lines.append(f"{mode:<10} {ms:>9.2f} {err:>9.4f} {ate:>8.3f} {are:>10.4f}")
    text = "\n".join(lines) + "\n"
    if args.output:
        _write(_output_dir(args.output) / "ablation.txt", text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    keys = "configuration keys (set in --config files or with --set key=value):\n" + describe()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="lidarodom", description="Feature-based LiDAR odometry.",
                                     epilog=keys, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scans=True):
        p.add_argument("--config", help="key = value configuration file (default: built-in defaults)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
        if scans:
            p.add_argument("--scans", required=True, help="directory of KITTI .bin scans (or with a velodyne/ subdirectory)")
            p.add_argument("--mode", choices=("none", "two-stage"), help="compensation mode (default: two-stage)")

    p = sub.add_parser("run", help="estimate a trajectory from a scan directory", epilog=keys, formatter_class=fmt)
    common(p)
    p.add_argument("--output", default="out", help="output directory (default: out)")
    p.add_argument("--gt", help="ground-truth poses; adds an error report to the summary")
    p.add_argument("--lengths", help="segment lengths in metres, comma-separated (default: 100,...,800)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="write a simulated dataset", epilog=keys, formatter_class=fmt)
    common(p, scans=False)
    p.add_argument("--scene", help="scene file (default: the bundled corridor and hall)")
    p.add_argument("--motion", default=DEFAULT_MOTION,
                   help="per-scan twist tx,ty,tz,rx,ry,rz in m and rad, or a schedule file of "
                        f"'count tx ty tz rx ry rz' lines (default: {DEFAULT_MOTION})")
    p.add_argument("--count", type=int, help="number of scans (default: 10, or the schedule's total)")
    p.add_argument("--noise", type=float, default=0.0, help="range noise std in metres (default: 0)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    p.add_argument("--output", default="sim", help="output directory (default: sim)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="segment errors of an estimated trajectory")
    p.add_argument("--est", required=True, help="estimated poses, KITTI format")
    p.add_argument("--gt", required=True, help="ground-truth poses, KITTI format")
    p.add_argument("--lengths", help="segment lengths in metres, comma-separated (default: 100,...,800)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare compensation modes on one dataset", epilog=keys, formatter_class=fmt)
    common(p)
    p.add_argument("--gt", required=True, help="ground-truth poses, KITTI format")
    p.add_argument("--lengths", help="segment lengths in metres, comma-separated (default: 100,...,800)")
    p.add_argument("--output", help="also write the table to OUTPUT/ablation.txt")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

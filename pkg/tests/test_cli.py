import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lidarodom.cli import main
from lidarodom.config import DEFAULTS
from lidarodom.evaluation import read_kitti_poses
from lidarodom.geometry import exp_se3

FAST = ["--set", "sensor.columns_per_rev=600"]


def simulate(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["simulate", "--output", str(out), *FAST, *extra]) == 0
    return out


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    return simulate(root, "sim", "--count", "10")


def test_simulate_writes_scans_and_poses(dataset):
    scans = sorted((dataset / "velodyne").glob("*.bin"))
    assert len(scans) == 10
    poses = read_kitti_poses((dataset / "poses.txt").read_text()).poses
    assert len(poses) == 10
    xi = np.array([0.2, 0, 0, 0, 0, 0])
    for a, b in zip(poses, poses[1:]):
        assert (a @ exp_se3(xi)).allclose(b, 1e-9)
    assert "sensor.columns_per_rev = 600" in (dataset / "dataset.conf").read_text()


def test_simulate_zero_count(tmp_path):
    out = simulate(tmp_path, "empty", "--count", "0")
    assert (out / "poses.txt").read_text() == ""
    assert list((out / "velodyne").glob("*.bin")) == []


def test_static_motion_gives_identical_scans(tmp_path):
    out = simulate(tmp_path, "static", "--count", "5", "--motion", "0,0,0,0,0,0")
    blobs = {p.read_bytes() for p in (out / "velodyne").glob("*.bin")}
    assert len(blobs) == 1


def test_motion_schedule_file(tmp_path):
    sched = tmp_path / "motion.txt"
    sched.write_text("# count tx ty tz rx ry rz\n2 0 0 0 0 0 0\n3 0.2 0 0 0 0 0.05\n")
    out = simulate(tmp_path, "sched", "--motion", str(sched))
    poses = read_kitti_poses((out / "poses.txt").read_text()).poses
    assert len(poses) == 5
    assert poses[1].allclose(poses[0], 0.0)
    assert (poses[3] @ exp_se3([0.2, 0, 0, 0, 0, 0.05])).allclose(poses[4], 1e-9)


def test_bad_scene_reports_line(tmp_path, capsys):
    scene = tmp_path / "bad.scene"
    scene.write_text("plane 0 0 0 0 0 1 5 5\nplane 1 2 3\n")
    assert main(["simulate", "--scene", str(scene), "--output", str(tmp_path / "x")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_run_writes_outputs_and_is_deterministic(dataset, tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--scans", str(dataset), "--output", str(out),
                     "--gt", str(dataset / "poses.txt"), "--lengths", "1"]) == 0
        outs.append(out)
    traj = (outs[0] / "trajectory.txt").read_text().splitlines()
    assert len(traj) == 10
    for f in ("trajectory.txt", "run.log", "summary.txt"):
        assert (outs[0] / f).exists()
    for f in ("trajectory.txt", "run.log"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    summary = (outs[0] / "summary.txt").read_text()
    assert "scans 10" in summary and "mean_ms_per_scan" in summary and "ate" in summary
    assert len((outs[0] / "run.log").read_text().splitlines()) == 10


def test_run_failures(tmp_path, capsys):
    assert main(["run", "--scans", str(tmp_path / "missing")]) == 1
    assert "missing" in capsys.readouterr().err
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["run", "--scans", str(empty), "--output", str(tmp_path / "o")]) == 1
    assert "no scans found" in capsys.readouterr().err
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "000000.bin").write_bytes(b"\x00" * 10)
    assert main(["run", "--scans", str(bad), "--output", str(tmp_path / "o")]) == 1
    assert "000000.bin" in capsys.readouterr().err


def test_run_rejects_bad_config(dataset, tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("map.edge_leaf = 0.3\nmap.unknown = 2\n")
    assert main(["run", "--scans", str(dataset), "--config", str(conf), "--output", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_eval_identical_and_mismatched(dataset, tmp_path, capsys):
    gt = str(dataset / "poses.txt")
    assert main(["eval", "--est", gt, "--gt", gt, "--lengths", "1,1.5"]) == 0
    out = capsys.readouterr().out
    assert "ate 0.000%" in out and "are 0.0000 deg/m" in out
    short = tmp_path / "short.txt"
    short.write_text("\n".join((dataset / "poses.txt").read_text().splitlines()[:5]) + "\n")
    assert main(["eval", "--est", str(short), "--gt", gt]) == 1


def test_eval_overshoot_fixture(tmp_path, capsys):
    gt, est = tmp_path / "gt.txt", tmp_path / "est.txt"
    gt.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 100 0 1 0 0 0 0 1 0\n")
    est.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 101 0 1 0 0 0 0 1 0\n")
    assert main(["eval", "--est", str(est), "--gt", str(gt), "--lengths", "100"]) == 0
    assert "ate 1.000%" in capsys.readouterr().out


@pytest.fixture(scope="module")
def still_table(tmp_path_factory):
    root = tmp_path_factory.mktemp("ablate")
    data = root / "still"
    assert main(["simulate", "--output", str(data), *FAST, "--count", "4", "--motion", "0,0,0,0,0,0"]) == 0
    out = root / "table"
    assert main(["ablate", "--scans", str(data), "--gt", str(data / "poses.txt"), "--lengths", "1",
                 "--output", str(out)]) == 0
    return (out / "ablation.txt").read_text().splitlines()


def test_ablate_table_format(still_table):
    assert still_table[0].split() == ["mode", "ms/frame", "rmse_m", "ate_%", "are_deg/m"]
    assert len(still_table) == 3
    assert still_table[1].split()[0] == "none" and still_table[2].split()[0] == "two-stage"


@pytest.mark.xfail(reason="voxel-centroid landmarks bias the static optimum by millimetres, "
                          "so the two modes see slightly different predicted twists", strict=False)
def test_ablate_modes_match_without_motion(still_table):
    assert still_table[1].split()[2:] == still_table[2].split()[2:]


def test_help_lists_every_key():
    out = subprocess.run([sys.executable, "-m", "lidarodom.cli", "run", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for key in DEFAULTS:
        assert key in out
    assert "[m]" in out

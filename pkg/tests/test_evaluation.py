import math

import numpy as np
import pytest

from lidarodom.evaluation import (PoseParseError, evaluate, path_distances, read_kitti_calib, read_kitti_poses, rmse,
                                  to_camera_frame)
from lidarodom.geometry import Pose, exp_se3
from lidarodom.pipeline import Trajectory

from conftest import random_pose


def winding_path(n=120, step=1.0, seed=0):
    rng = np.random.default_rng(seed)
    poses, T = [Pose.identity()], Pose.identity()
    for _ in range(n - 1):
        T = T @ exp_se3([step, rng.normal(0, 0.05), 0, 0, 0, rng.normal(0, 0.05)])
        poses.append(T)
    return poses


def noisy(poses, seed=1, scale=0.02):
    rng = np.random.default_rng(seed)
    out, T = [poses[0]], poses[0]
    for a, b in zip(poses, poses[1:]):
        T = T @ (a.inverse() @ b) @ exp_se3(rng.normal(0, scale, 6) * [1, 1, 1, 0.1, 0.1, 0.1])
        out.append(T)
    return out


def test_identical_trajectories_have_zero_error():
    gt = winding_path()
    r = evaluate(gt, gt, [10, 20])
    assert r.ate == 0.0 and r.are == 0.0 and r.pairs > 0


def test_common_gauge_is_invisible():
    gt = winding_path()
    G = exp_se3([5, -3, 2, 0.3, -0.2, 1.0])
    r = evaluate([G @ p for p in gt], gt, [10, 20])
    assert r.ate < 1e-9 and r.are < 1e-9
    est = noisy(gt)
    base = evaluate(est, gt, [10, 20])
    H = exp_se3([1, 2, 3, 0.5, 0.1, -0.7])
    moved = evaluate([H @ p for p in est], [H @ p for p in gt], [10, 20])
    assert abs(moved.ate - base.ate) < 1e-9 and abs(moved.are - base.are) < 1e-9


def test_one_percent_overshoot():
    gt = [Pose.identity(), Pose(np.eye(3), np.array([100.0, 0, 0]))]
    est = [Pose.identity(), Pose(np.eye(3), np.array([101.0, 0, 0]))]
    r = evaluate(est, gt, [100])
    assert r.ate == pytest.approx(1.0, abs=1e-12)
    assert r.are == 0.0 and r.pairs == 1


def test_doubling_deviation_doubles_error():
    gt = [Pose(np.eye(3), np.array([float(k), 0, 0])) for k in range(61)]
    for d in (0.01, 0.03):
        est1 = [Pose(np.eye(3), np.array([k * (1 + d), 0.5 * d * k, 0])) for k in range(61)]
        est2 = [Pose(np.eye(3), np.array([k * (1 + 2 * d), d * k, 0])) for k in range(61)]
        a, b = evaluate(est1, gt, [10, 20]), evaluate(est2, gt, [10, 20])
        assert b.ate == pytest.approx(2 * a.ate, rel=1e-6)


def test_segment_end_is_first_frame_reaching_length():
    gt = [Pose(np.eye(3), np.array([x, 0, 0])) for x in (0, 4, 9, 10, 16)]
    est = [Pose(np.eye(3), np.array([x, 0, 0])) for x in (0, 4, 9, 11, 16)]
    r = evaluate(est, gt, [10])
    # frame 0 pairs with frame 3 (1 m off), frame 1 with frame 4 (exact); frame 2 has no partner
    assert r.pairs == 2
    assert r.ate == pytest.approx(100 * (1 / 10) / 2)


def test_rotation_error_per_metre():
    gt = [Pose(np.eye(3), np.array([x, 0, 0])) for x in range(11)]
    est = list(gt)
    est[10] = Pose(exp_se3([0, 0, 0, 0, 0, math.radians(1.0)]).rotation, gt[10].translation)
    r = evaluate(est, gt, [10])
    assert r.are == pytest.approx(0.1, abs=1e-12)


def test_too_long_segments_are_skipped_with_notice():
    gt = winding_path(20)
    with pytest.warns(UserWarning):
        r = evaluate(gt, gt, [5, 1000])
    assert r.skipped == [1000.0] and 5.0 in r.by_length
    assert "notice" in r.to_text()


def test_mismatched_trajectories_raise():
    gt = winding_path(10)
    with pytest.raises(ValueError):
        evaluate(gt[:-1], gt, [2])
    a = Trajectory(list(enumerate(gt)))
    b = Trajectory([(k + 1, p) for k, p in enumerate(gt)])
    with pytest.raises(ValueError):
        evaluate(a, b, [2])


def test_report_values_are_non_negative_and_keyed_by_length():
    gt = winding_path()
    r = evaluate(noisy(gt), gt, [5, 10, 20])
    assert r.ate > 0 and r.are > 0
    assert sorted(r.by_length) == [5.0, 10.0, 20.0]
    kv = dict(item.split("=") for item in r.to_kv().split())
    assert float(kv["ate"]) == pytest.approx(r.ate, abs=1e-6)
    assert "ate_10" in kv


def test_read_poses_cases():
    traj = read_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 0\n\n")
    assert len(traj) == 1 and traj[0][1].allclose(Pose.identity(), 0.0)
    with pytest.raises(PoseParseError) as info:
        read_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n")
    assert info.value.line == 2 and "line 2" in str(info.value)
    with pytest.raises(PoseParseError):
        read_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 zero\n")


def test_rmse_and_path_distance():
    gt = [Pose(np.eye(3), np.array([x, 0, 0])) for x in (0.0, 3.0, 7.0)]
    assert np.allclose(path_distances(gt), [0, 3, 7])
    est = [Pose(np.eye(3), p.translation + [0, 0.3, 0.4]) for p in gt]
    assert rmse(est, gt) == pytest.approx(0.5)
    rng = np.random.default_rng(2)
    T = random_pose(rng)
    assert rmse([T], [T]) == 0.0


def test_kitti_calib_parse_and_conjugation():
    text = ("P0: " + " ".join(["0"] * 12) + "\n"
            "Tr: 0 -1 0 0.1 0 0 -1 -0.08 1 0 0 -0.27\n")
    tr = read_kitti_calib(text)
    assert np.allclose(tr.matrix[:3, 3], [0.1, -0.08, -0.27])
    assert np.allclose(tr.rotation @ tr.rotation.T, np.eye(3), atol=1e-12)
    # a forward step along sensor x becomes a step along camera z
    step = to_camera_frame([Pose.identity(), exp_se3([1.0, 0, 0, 0, 0, 0])], tr)
    assert np.allclose(step[0].matrix, np.eye(4), atol=1e-12)
    assert np.allclose(step[1].translation, [0, 0, 1.0], atol=1e-12)


def test_kitti_calib_missing_transform_raises():
    with pytest.raises(PoseParseError):
        read_kitti_calib("P0: 1 2 3\n")
    with pytest.raises(PoseParseError):
        read_kitti_calib("Tr: 1 2 3\n")

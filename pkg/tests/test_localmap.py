import math

import numpy as np
import pytest

from lidarodom.features import FeatureCloud, FeatureSet
from lidarodom.geometry import Pose, exp_se3
from lidarodom.localmap import (
    FeatureMap, KeyframePolicy, MapConfig, fit_line, fit_lines_batch, fit_plane, fit_planes_batch,
    maybe_insert, voxel_downsample,
)

from conftest import random_pose


def cloud(edges, planes):
    mk = lambda P: FeatureSet(P, np.zeros(len(P)), np.zeros(len(P)), np.zeros(len(P), int))
    return FeatureCloud(mk(np.asarray(edges, float).reshape(-1, 3)), mk(np.asarray(planes, float).reshape(-1, 3)))


def angle_deg(a, b):
    return math.degrees(math.acos(min(1.0, abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))))


def test_config_validation():
    with pytest.raises(ValueError):
        MapConfig(edge_leaf=0)
    with pytest.raises(ValueError):
        MapConfig(neighbors=2)
    with pytest.raises(ValueError):
        MapConfig(gate_on="middle")
    with pytest.raises(ValueError):
        KeyframePolicy(translation_threshold=0)


def test_knn_trivial_cases():
    fmap = FeatureMap(MapConfig(edge_leaf=0.01))
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0]], float)
    fmap.add_points(edges=pts)
    found, dist = fmap.knn("edge", [1, 0, 0], 1)
    assert np.array_equal(found[0], [1, 0, 0]) and dist[0] == 0.0
    found, dist = fmap.knn("edge", [0, 0, 0], 10)
    assert len(found) == 3 and np.all(np.diff(dist) >= 0)
    found, dist = fmap.knn("plane", [0, 0, 0], 3)
    assert len(found) == 0


def test_knn_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-20, 20, (10_000, 3))
    fmap = FeatureMap(MapConfig(plane_leaf=1e-6))
    fmap.add_points(planes=pts)
    stored = fmap.points("plane")
    assert len(stored) == 10_000
    for q in rng.uniform(-25, 25, (200, 3)):
        found, dist = fmap.knn("plane", q, 5)
        brute = np.linalg.norm(stored - q, axis=1)
        order = np.argsort(brute, kind="stable")[:5]
        assert np.allclose(dist, brute[order], rtol=0, atol=1e-12)
        assert np.array_equal(found, stored[order])


def test_fit_line_exact_collinear():
    d = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    pts = np.outer([-2, -1, 0, 1, 3], d) + [1, 2, 3]
    line = fit_line(pts)
    assert line is not None
    assert abs(abs(line.direction @ d) - 1) < 1e-12
    assert np.allclose(line.center, pts.mean(axis=0), atol=1e-12)
    assert abs(np.linalg.norm(line.direction) - 1) < 1e-9


def test_fit_line_rejects_planar_spread_and_coincident_points():
    square = np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0], [0, 0, 0]], float)
    assert fit_line(square) is None
    assert fit_line(np.ones((5, 3))) is None
    with pytest.raises(ValueError):
        fit_line(np.zeros((2, 3)))


def test_fit_line_noisy_direction():
    rng = np.random.default_rng(1)
    d = np.array([0.3, -0.5, 0.8])
    d /= np.linalg.norm(d)
    pts = np.outer(np.linspace(-0.5, 0.5, 20), d) + rng.normal(0, 0.01, (20, 3))
    assert angle_deg(fit_line(pts).direction, d) < 2.0


def test_fit_plane_exact_and_degenerate():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 2, 0], [-1, 0.5, 0]], float)
    plane = fit_plane(pts)
    assert abs(abs(plane.normal[2]) - 1) < 1e-12
    assert np.abs((pts - plane.center) @ plane.normal).max() < 1e-9
    line = np.outer(np.arange(5), [1.0, 2.0, 0.5])
    assert fit_plane(line) is None


def test_fit_plane_noisy_normal():
    rng = np.random.default_rng(2)
    n = np.array([0.2, 0.1, 1.0])
    n /= np.linalg.norm(n)
    u = np.cross(n, [1, 0, 0])
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    uv = rng.uniform(-1, 1, (30, 2))
    sigma = 0.005
    pts = uv[:, :1] * u + uv[:, 1:] * v + rng.normal(0, sigma, (30, 1)) * n
    plane = fit_plane(pts)
    assert angle_deg(plane.normal, n) < 2.0
    assert np.abs((pts - plane.center) @ plane.normal).max() < 5 * sigma


def test_fits_are_rigid_invariant():
    rng = np.random.default_rng(3)
    for _ in range(50):
        T = random_pose(rng, max_translation=50)
        line_pts = np.outer(rng.uniform(-2, 2, 6), rng.normal(size=3)) + rng.normal(0, 0.01, (6, 3))
        plane_pts = np.c_[rng.uniform(-2, 2, (6, 2)), rng.normal(0, 0.01, 6)]
        for fit, pts, attr in ((fit_line, line_pts, "direction"), (fit_plane, plane_pts, "normal")):
            a, b = fit(pts), fit(T @ pts)
            assert np.allclose(T @ a.center, b.center, atol=1e-9)
            assert abs(abs((T.rotation @ getattr(a, attr)) @ getattr(b, attr)) - 1) < 1e-9


def test_batch_fits_match_single_fits():
    rng = np.random.default_rng(4)
    groups = rng.normal(size=(200, 5, 3)) * [3, 0.4, 0.1]
    c, d, ok = fit_lines_batch(groups)
    for i in range(len(groups)):
        single = fit_line(groups[i])
        assert ok[i] == (single is not None)
        if single is not None:
            assert np.allclose(c[i], single.center) and abs(abs(d[i] @ single.direction) - 1) < 1e-9
    c, n, ok = fit_planes_batch(groups)
    for i in range(len(groups)):
        single = fit_plane(groups[i])
        assert ok[i] == (single is not None)
        if single is not None:
            assert abs(abs(n[i] @ single.normal) - 1) < 1e-9


def test_fit_tolerance_rejects_mixed_neighbourhoods():
    # four points on the floor and one on the wall of a corner: rank-2 but not one plane
    group = np.array([[[0, 0, 0], [0.3, 0, 0], [0, 0.3, 0], [0.3, 0.3, 0], [0.3, 0.15, 0.2]]], float)
    assert fit_planes_batch(group, 3.0, 0.0)[2][0]
    assert not fit_planes_batch(group, 3.0, 0.05)[2][0]
    flat = group.copy()
    flat[0, 4, 2] = 0.0
    assert fit_planes_batch(flat, 3.0, 0.05)[2][0]


def test_voxel_downsample_cases():
    pts = np.array([[0.1, 0.1, 0.1], [0.2, 0.3, 0.4], [0.05, 0.45, 0.2]])
    out = voxel_downsample(pts, 0.5)
    assert np.allclose(out, [pts.mean(axis=0)])
    grid = np.stack(np.meshgrid(*[np.arange(4) * 1.0 + 0.25] * 3, indexing="ij"), -1).reshape(-1, 3)
    out = voxel_downsample(grid, 0.5)
    assert np.array_equal(out, grid[np.lexsort(grid.T[::-1])])
    with pytest.raises(ValueError):
        voxel_downsample(pts, 0.0)


def test_voxel_count_matches_hash_set_oracle():
    rng = np.random.default_rng(5)
    for leaf in (0.1, 0.4, 1.3):
        pts = rng.uniform(-5, 5, (5000, 3))
        keys = {tuple(int(math.floor(c / leaf)) for c in p) for p in pts}
        out = voxel_downsample(pts, leaf)
        assert len(out) == len(keys)
        # at most one retained point per voxel, each inside its own voxel
        out_keys = {tuple(int(math.floor(c / leaf)) for c in p) for p in out}
        assert out_keys == keys


def test_keyframe_policy():
    policy = KeyframePolicy(0.5, 0.175)
    fmap = FeatureMap()
    c = cloud([[1, 0, 0]], [[0, 1, 0], [0, 2, 0]])
    T = exp_se3([1, 2, 3, 0, 0, 0.3])
    assert not maybe_insert(fmap, c, T, T, policy)
    assert fmap.size() == 0
    moved = T @ Pose(np.eye(3), np.array([0.6, 0, 0]))
    assert maybe_insert(fmap, c, moved, T, policy)
    assert fmap.size("edge") == 1 and fmap.size("plane") == 2
    turned = T @ exp_se3([0, 0, 0, 0, 0, 0.2])
    assert maybe_insert(fmap, c, turned, T, policy)
    assert maybe_insert(fmap, c, T, T, KeyframePolicy(every_frame=True))


def test_repeated_insertion_keeps_map_size_stable():
    rng = np.random.default_rng(6)
    c = cloud(rng.uniform(-10, 10, (300, 3)), rng.uniform(-10, 10, (2000, 3)))
    fmap = FeatureMap()
    T = exp_se3([0.5, 0.2, 0, 0, 0, 0.1])
    fmap.insert(c, T)
    sizes = [(fmap.size("edge"), fmap.size("plane"))]
    for _ in range(3):
        fmap.insert(c, T)
        sizes.append((fmap.size("edge"), fmap.size("plane")))
    assert sizes[1] == sizes[2] == sizes[3]
    cfg = fmap.config
    world = T @ c.planars.points
    bound = len({tuple(k) for k in np.floor(world / cfg.plane_leaf).astype(int).tolist()})
    assert fmap.size("plane") <= bound


def test_dump_format():
    fmap = FeatureMap()
    fmap.add_points(edges=[[0.1, 0.1, 0.1]], planes=[[1.1, 1.1, 1.1]])
    lines = fmap.dump().splitlines()
    assert lines[0].startswith("E ") and lines[1].startswith("S ")
    assert [float(v) for v in lines[1].split()[1:]] == pytest.approx([1.1, 1.1, 1.1])

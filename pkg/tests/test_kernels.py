import numpy as np
import pytest

from lidarodom import _kernels
from lidarodom.features import FeatureConfig
from lidarodom.geometry import exp_se3
from lidarodom.pointcloud import SensorConfig
from lidarodom.simulate import corridor_room_scene, simulate_scan

BACKENDS = _kernels.backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")


@pytest.fixture(scope="module")
def scan():
    cfg = SensorConfig.vlp16(columns_per_rev=900)
    return simulate_scan(corridor_room_scene(), exp_se3([20, 0.5, 0, 0, 0, 0.3]),
                         [0.2, 0, 0, 0, 0, 0.05], cfg).scan


def test_backend_name():
    assert _kernels.BACKEND in BACKENDS


@needs_both
@pytest.mark.parametrize("literal", [False, True])
def test_smoothness_backends_agree(scan, literal):
    py, cy = (BACKENDS[b].scan_smoothness(scan.points, scan.ring_offsets, 5, literal, 1.5)
              for b in ("python", "cython"))
    assert np.allclose(py[0], cy[0], atol=1e-12)
    assert np.array_equal(py[1], cy[1]) and np.array_equal(py[2], cy[2])


@needs_both
@pytest.mark.parametrize("suppress", [False, True])
def test_selection_backends_agree(scan, suppress):
    cfg = FeatureConfig()
    sigma, valid, edge_ok = BACKENDS["python"].scan_smoothness(scan.points, scan.ring_offsets, 5, False, 1.5)
    args = (sigma, valid, edge_ok, scan.azimuth, scan.ring_offsets, cfg.sectors_per_ring,
            cfg.max_edges_per_sector, cfg.max_planars_per_sector, cfg.edge_sigma_min,
            cfg.planar_sigma_max, 5, suppress)
    py, cy = BACKENDS["python"].select_features(*args), BACKENDS["cython"].select_features(*args)
    assert np.array_equal(py[0], cy[0]) and np.array_equal(py[1], cy[1])


@needs_both
@pytest.mark.parametrize("huber", [0.0, 0.05])
def test_normal_equations_backends_agree(huber):
    rng = np.random.default_rng(0)
    n = 500
    R = exp_se3(rng.normal(size=6)).rotation
    t = rng.normal(size=3)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    kinds = rng.integers(0, 2, n).astype(np.int64)
    kinds = np.where(kinds == 0, _kernels.EDGE, _kernels.PLANE)
    args = (rng.normal(size=(n, 3)), R, t, rng.normal(size=(n, 3)), dirs, kinds, rng.uniform(0, 1, n), huber)
    a = BACKENDS["python"].normal_equations(*args)
    b = BACKENDS["cython"].normal_equations(*args)
    assert np.allclose(a[0], b[0], atol=1e-10) and np.allclose(a[1], b[1], atol=1e-10)
    assert a[2] == pytest.approx(b[2], rel=1e-12)


@needs_both
def test_covariance_eigen_backends_agree():
    rng = np.random.default_rng(1)
    groups = rng.normal(size=(2000, 5, 3)) * rng.uniform(0.01, 3, (2000, 1, 3))
    groups[:10] = groups[:10, :1]  # coincident points
    ca, va, ea = BACKENDS["python"].covariance_eigen(groups)
    cb, vb, eb = BACKENDS["cython"].covariance_eigen(groups)
    assert np.allclose(ca, cb, atol=1e-12)
    assert np.allclose(va, vb, atol=1e-10)
    assert np.all(np.diff(vb, axis=1) <= 0)
    # eigenvectors agree up to sign where eigenvalues are well separated
    gap = np.minimum(va[:, 0] - va[:, 1], va[:, 1] - va[:, 2]) > 1e-6 * np.maximum(va[:, 0], 1e-300)
    dots = np.abs(np.einsum("nij,nij->nj", ea, eb))[gap]
    assert np.allclose(dots, 1.0, atol=1e-8)
    # and each backend's output is a valid decomposition
    cov = np.einsum("nki,nkj->nij", groups - cb[:, None], groups - cb[:, None]) / groups.shape[1]
    recon = np.einsum("nij,nj,nkj->nik", eb, vb, eb)
    assert np.allclose(recon, cov, atol=1e-9)

"""Time the compiled kernels against the numpy fallback on a simulated 64-ring scan.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from lidarodom import _kernels
from lidarodom.features import FeatureConfig
from lidarodom.pointcloud import SensorConfig
from lidarodom.simulate import corridor_room_scene, simulate_scan
from lidarodom.geometry import Pose


def workloads(scan, cfg):
    w = cfg.neighbor_half_width
    rng = np.random.default_rng(0)
    n = 10000
    pts = rng.normal(size=(n, 3)) * 5
    centers = pts + rng.normal(scale=0.05, size=(n, 3))
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    kinds = (rng.random(n) < 0.9).astype(np.int64)
    weights = np.full(n, 1.0 / n)
    groups = rng.normal(size=(n, 5, 3)) * [1.0, 0.5, 0.01]
    R, t = np.eye(3), np.zeros(3)

    def smooth(k):
        return lambda: k.scan_smoothness(scan.points, scan.ring_offsets, w, False, cfg.discontinuity_ratio)

    def select(k):
        sigma, valid, edge_ok = k.scan_smoothness(scan.points, scan.ring_offsets, w, False, cfg.discontinuity_ratio)
        return lambda: k.select_features(sigma, valid, edge_ok, scan.azimuth, scan.ring_offsets,
                                         cfg.sectors_per_ring, cfg.max_edges_per_sector,
                                         cfg.max_planars_per_sector, cfg.edge_sigma_min,
                                         cfg.planar_sigma_max, w, True)

    def normal(k):
        return lambda: k.normal_equations(pts, R, t, centers, dirs, kinds, weights, 0.0)

    def eig(k):
        return lambda: k.covariance_eigen(groups)

    return {"scan_smoothness": smooth, "select_features": select,
            "normal_equations (10k rows)": normal, "covariance_eigen (10k groups)": eig}


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    sensor = SensorConfig.hdl64()
    scan = simulate_scan(corridor_room_scene(), Pose.identity(), np.zeros(6), sensor).scan
    cfg = FeatureConfig()
    backends = _kernels.backends()
    print(f"scan: {len(scan)} points, {sensor.ring_count} rings; backends: {', '.join(backends)}")
    print(f"{'kernel':<32}" + "".join(f"{name + ' ms':>14}" for name in backends) + f"{'speed-up':>10}")
    for label, make in workloads(scan, cfg).items():
        times = {}
        for name, mod in backends.items():
            fn = make(mod)
            fn()
            times[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        ratio = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<32}" + "".join(f"{times[n]:>14.2f}" for n in backends) + f"{ratio:>10.1f}")


if __name__ == "__main__":
    main()

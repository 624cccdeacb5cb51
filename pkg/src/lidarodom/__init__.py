"""Feature-based LiDAR odometry with two-stage motion compensation."""

from ._kernels import BACKEND
from .compensation import predict_twist, recompute_undistort, undistort
from .config import RunConfig
from .evaluation import ErrorReport, evaluate, read_kitti_poses, rmse
from .features import FeatureCloud, FeatureConfig, extract_features
from .geometry import Pose, exp_se3, log_se3
from .localmap import FeatureMap, KeyframePolicy, MapConfig
from .pipeline import OdometryConfig, Trajectory, process_scan, run_sequence, write_trajectory
from .pointcloud import Scan, SensorConfig, read_kitti_bin
from .registration import DegeneracyError, GNConfig, align

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DegeneracyError", "ErrorReport", "FeatureCloud", "FeatureConfig", "FeatureMap",
    "GNConfig", "KeyframePolicy", "MapConfig", "OdometryConfig", "Pose", "RunConfig", "Scan",
    "SensorConfig", "Trajectory", "align", "evaluate", "exp_se3", "extract_features", "log_se3",
    "predict_twist", "process_scan", "read_kitti_bin", "read_kitti_poses", "recompute_undistort",
    "rmse", "run_sequence", "undistort", "write_trajectory",
]

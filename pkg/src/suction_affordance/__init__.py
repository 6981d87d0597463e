"""Analytic suction-grasp affordance labels for synthetic bin-picking depth scenes."""

__version__ = "0.1.0"

from .camera import (CameraExtrinsics, CameraIntrinsics, NormalMap, PointCloud, Pose6D, approach_vector,
                     backproject_depth, estimate_normals, project_point, rotate_cloud)
from .errors import ConfigError, DomainError, FormatError, NoGraspError
from .evaluation import (BenchmarkReport, SealOracleConfig, TrialResult, affordance_huber_loss, huber_loss,
                         run_benchmark, seal_oracle)
from .labels import AffordanceLabels, AngleGrid, generate_labels, score_map_for_angles
from .policy import centroid_grasp, select_grasp
from .scene import PrimitiveObject, SceneConfig, SceneSpec, intersect_ray, render_depth, sample_scene
from .scoring import ScoreBreakdown, ScoreConfig, ScoreWeights, SuctionCupModel, score_pixel

"""Camera relocalization from single frames with regression forests.

Train a forest that maps image patches to world coordinates, then recover
camera poses by feeding its per-pixel predictions to a preemptive RANSAC
over minimal pose solvers. Works on RGB-D frames (3D-3D alignment) and on
RGB keypoints against a 3D reconstruction (2D-3D reprojection).
"""

from .config import ForestConfig, RansacConfig, RunConfig, SynthConfig
from .errors import (
    BehindCameraError,
    DataError,
    DegenerateConfigurationError,
    EmptyFrameError,
    InsufficientDataError,
    InvalidDepthError,
    InvalidInputError,
    InvalidPoseError,
    NoSolutionError,
    RelocForestError,
)
from .forest import (
    Forest,
    LeafNode,
    Prediction,
    RegressionTree,
    SampleSet,
    SplitNode,
    TrainingSample,
    WeakLearnerParams,
    build_tree,
    forest_predict,
    forest_predict_batch,
    load_forest,
    predict_backtracking,
    predict_greedy,
    save_forest,
    train_forest,
)
from .geometry import Intrinsics, kabsch, pose_error, refine_pose_2d3d
from .modes import ForestMode, descriptor_length
from .pipeline import (
    RelocalizationResult,
    SequenceMetrics,
    associate_sfm_points,
    build_training_set,
    evaluate_sequence,
    harvest_indoor_samples,
    relocalize_frame,
    relocalize_sequence,
)
from .ransac import (
    Correspondence,
    CorrespondenceSet,
    RansacResult,
    SolveMode,
    preemptive_ransac,
)
from .synth import SyntheticScene, make_scene, render_frame, sample_trajectory

__version__ = "0.1.0"

__all__ = [
    "BehindCameraError",
    "Correspondence",
    "CorrespondenceSet",
    "DataError",
    "DegenerateConfigurationError",
    "EmptyFrameError",
    "Forest",
    "ForestConfig",
    "ForestMode",
    "InsufficientDataError",
    "Intrinsics",
    "InvalidDepthError",
    "InvalidInputError",
    "InvalidPoseError",
    "LeafNode",
    "NoSolutionError",
    "Prediction",
    "RansacConfig",
    "RansacResult",
    "RegressionTree",
    "RelocForestError",
    "RelocalizationResult",
    "RunConfig",
    "SampleSet",
    "SequenceMetrics",
    "SolveMode",
    "SplitNode",
    "SyntheticScene",
    "SynthConfig",
    "TrainingSample",
    "WeakLearnerParams",
    "associate_sfm_points",
    "build_training_set",
    "build_tree",
    "descriptor_length",
    "evaluate_sequence",
    "forest_predict",
    "forest_predict_batch",
    "harvest_indoor_samples",
    "kabsch",
    "load_forest",
    "make_scene",
    "pose_error",
    "predict_backtracking",
    "predict_greedy",
    "preemptive_ransac",
    "refine_pose_2d3d",
    "relocalize_frame",
    "relocalize_sequence",
    "render_frame",
    "sample_trajectory",
    "save_forest",
    "train_forest",
    "__version__",
]

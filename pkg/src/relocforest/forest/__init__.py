"""Regression-forest training and backtracking prediction."""

from .objectives import balanced_objective, spatial_variance, variance_objective
from .samples import SampleSet, TrainingSample
from .tree import (
    LeafNode,
    NoSplit,
    Prediction,
    RegressionTree,
    SplitNode,
    WeakLearnerParams,
    build_tree,
    choose_split,
    evaluate_weak_learner,
    predict_backtracking,
    predict_greedy,
)
from .batch import FlatTree, predict_batch
from .model import Forest, forest_predict, forest_predict_batch, train_forest
from .io import load_forest, save_forest

__all__ = [
    "FlatTree",
    "Forest",
    "LeafNode",
    "NoSplit",
    "Prediction",
    "RegressionTree",
    "SampleSet",
    "SplitNode",
    "TrainingSample",
    "WeakLearnerParams",
    "balanced_objective",
    "build_tree",
    "choose_split",
    "evaluate_weak_learner",
    "forest_predict",
    "forest_predict_batch",
    "load_forest",
    "predict_backtracking",
    "predict_batch",
    "predict_greedy",
    "save_forest",
    "spatial_variance",
    "train_forest",
    "variance_objective",
]

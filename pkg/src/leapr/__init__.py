"""LeaPR models: programmatic features proposed as code + decision-tree predictors."""

from .data import Dataset, Example, Feature, load_dataset, split_holdout
from .did3 import DID3Params, did3_train
from .execution import FeatureMatrix, NativeExecutor, WorkerExecutor, evaluate_matrix, validate_feature
from .explain import Attribution, forest_shap, report_top_features, tree_shap
from .f2 import F2Params, Representation, f2_train
from .fixtures import fixture_eval, make_synthetic_task
from .trees import (
    DecisionTree,
    Forest,
    ForestParams,
    Split,
    best_split,
    grow_tree,
    impurity,
    mdi_importance,
    predict,
    train_forest,
)

__version__ = "0.1.0"

__all__ = [
    "Attribution", "DID3Params", "Dataset", "DecisionTree", "Example", "F2Params",
    "Feature", "FeatureMatrix", "Forest", "ForestParams", "NativeExecutor",
    "Representation", "Split", "WorkerExecutor", "best_split", "did3_train",
    "evaluate_matrix", "f2_train", "fixture_eval", "forest_shap", "grow_tree",
    "impurity", "load_dataset", "make_synthetic_task", "mdi_importance", "predict",
    "report_top_features", "split_holdout", "train_forest", "tree_shap",
    "validate_feature",
]

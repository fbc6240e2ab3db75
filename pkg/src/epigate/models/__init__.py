from .base import (CapabilityError, TrainingError, f1, input_gradient, per_member_proba,
                   predict_logits, predict_proba, softmax)
from .forest import DecisionTree, ForestConfig, RandomForest, random_forest, random_tree, train_random_forest
from .io import load_model, save_model
from .linear import (BootstrapLogistic, LinearClassifier, LogisticConfig, fit_logistic,
                     train_bootstrap_logistic, train_logistic)
from .mlp import MlpClassifier, MlpConfig, init_mlp, train_mlp

__all__ = [
    "BootstrapLogistic", "CapabilityError", "DecisionTree", "ForestConfig", "LinearClassifier",
    "LogisticConfig", "MlpClassifier", "MlpConfig", "RandomForest", "TrainingError",
    "f1", "fit_logistic", "init_mlp", "input_gradient", "load_model", "per_member_proba",
    "predict_logits", "predict_proba", "random_forest", "random_tree", "save_model", "softmax",
    "train_bootstrap_logistic", "train_logistic", "train_mlp", "train_random_forest",
]

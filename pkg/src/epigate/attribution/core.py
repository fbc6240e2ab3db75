"""Attribution record type, value functions and ranking."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

METHODS = ("kernel_shap", "tree_shap", "lime", "ig", "smoothgrad", "smooth_ig", "exact_shapley", "gradient")


@dataclass
class AttributionVector:
    values: np.ndarray
    target_class: int
    method: str
    model_evals: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("attribution values must be a vector")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("attribution values must be finite")

    def __len__(self):
        return self.values.shape[0]


class CountingOutput:
    """``X -> f(X)[:, target]`` with a running count of evaluated rows.

    ``model`` may also be a bare callable returning one value per row, in
    which case ``target`` is ignored.
    """

    def __init__(self, model, target=None, space="proba"):
        self.model = model
        self.target = target
        self.space = space
        self.calls = 0

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.calls += X.shape[0]
        if not hasattr(self.model, "predict_proba"):
            return np.asarray(self.model(X), dtype=float).reshape(X.shape[0])
        out = self.model.predict_logits(X) if self.space == "logit" else self.model.predict_proba(X)
        return out[:, self.target]


def predicted_class(model, x) -> int:
    """Argmax class of ``model`` at the single input ``x`` (0 for bare callables)."""
    if not hasattr(model, "predict_proba"):
        return 0
    return int(np.argmax(model.predict_proba(np.atleast_2d(x))[0]))


def sample_background(X_train, size: int = 100, seed: int = 0) -> np.ndarray:
    """Fixed background rows drawn without replacement from the training split."""
    X_train = np.asarray(X_train, dtype=float)
    n = X_train.shape[0]
    if n <= size:
        return X_train.copy()
    idx = np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))
    return X_train[idx]


def abs_ranking(phi) -> np.ndarray:
    """Ranks of ``|phi|`` (1 = smallest magnitude), ties get their average rank."""
    values = phi.values if isinstance(phi, AttributionVector) else np.asarray(phi, dtype=float)
    return rankdata(np.abs(values), method="average")


def sample_rng(seed, key) -> np.random.Generator:
    """Independent generator per (experiment seed, sample key)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(key)]))

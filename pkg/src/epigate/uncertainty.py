"""Epistemic uncertainty as the variance of member predictions."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .models.base import CapabilityError, per_member_proba

SOURCES = ("tree_variance", "bootstrap", "mc_dropout", "rf_surrogate")
REDUCTIONS = ("predicted_class", "mean_over_classes")
_NATIVE_SOURCE = {"rf": "tree_variance", "lr_bootstrap": "bootstrap", "mlp": "mc_dropout"}


@dataclass
class EpistemicScores:
    """Per-sample epistemic scores plus how they were obtained."""

    values: np.ndarray
    source: str
    class_reduction: str = "predicted_class"
    n_members: int = 0
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "value", "source"])
            for i, v in enumerate(self.values):
                w.writerow([i, repr(float(v)), self.source])


def ensemble_epistemic(member_probas, reduction: str = "predicted_class") -> np.ndarray:
    """Population variance across members, reduced to one scalar per sample.

    ``predicted_class`` takes the variance at the argmax of the mean
    probability; ``mean_over_classes`` averages the per-class variances.
    """
    P = np.asarray(member_probas, dtype=float)
    if P.ndim != 3:
        raise ValueError("member probabilities must have shape [M, n, K]")
    if P.shape[0] < 2:
        raise ValueError("need at least 2 members")
    var = P.var(axis=0)  # [n, K], ddof=0
    var[np.all(P == P[0], axis=0)] = 0.0  # the mean of equal values can be off by an ulp
    if reduction == "predicted_class":
        k = P.mean(axis=0).argmax(axis=1)
        return var[np.arange(var.shape[0]), k]
    if reduction == "mean_over_classes":
        return var.mean(axis=1)
    raise ValueError(f"unknown reduction {reduction!r}")


def native_epistemic(model, X, reduction: str = "predicted_class", seed: int = 0) -> EpistemicScores:
    """Score ``X`` with the model's own ensemble (trees, bootstrap or MC dropout)."""
    if not getattr(model, "has_members", False):
        raise CapabilityError(f"{type(model).__name__} has no native estimator; use surrogate_epistemic")
    P = per_member_proba(model, X, seed=seed)
    source = _NATIVE_SOURCE.get(model.kind, "tree_variance")
    return EpistemicScores(ensemble_epistemic(P, reduction), source, reduction, P.shape[0],
                           seed if getattr(model, "stochastic_members", False) else None)


def surrogate_epistemic(surrogate, X, reduction: str = "predicted_class") -> EpistemicScores:
    """Tree-variance scores from a random forest trained beside an opaque model."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != surrogate.n_features:
        raise ValueError(f"schema mismatch: surrogate expects {surrogate.n_features} features, got {X.shape[1]}")
    P = surrogate.per_member_proba(X)
    return EpistemicScores(ensemble_epistemic(P, reduction), "rf_surrogate", reduction, P.shape[0])


@dataclass(frozen=True)
class EpistemicSummary:
    mean: float
    std: float
    cv: float  # NaN when the mean is zero
    cv_defined: bool


def epistemic_summary(scores) -> EpistemicSummary:
    """Mean, population std and coefficient of variation of the scores."""
    v = np.asarray(scores, dtype=float)
    if v.size == 0:
        raise ValueError("empty score sequence")
    mean, std = float(v.mean()), float(v.std())
    if np.ptp(v) == 0:
        mean, std = float(v.flat[0]), 0.0
    if mean > 0:
        return EpistemicSummary(mean, std, std / mean, True)
    return EpistemicSummary(mean, std, math.nan, False)


class UncertaintySource:
    """Callable ``X -> scores`` bound to a model (native) or a surrogate forest."""

    def __init__(self, model, surrogate=None, reduction="predicted_class", seed=0):
        if surrogate is None and not getattr(model, "has_members", False):
            raise CapabilityError("model has no native estimator and no surrogate was given")
        self.model = model
        self.surrogate = surrogate
        self.reduction = reduction
        self.seed = seed

    @property
    def source(self) -> str:
        return "rf_surrogate" if self.surrogate is not None else _NATIVE_SOURCE.get(self.model.kind, "tree_variance")

    @property
    def evals_per_sample(self) -> int:
        """Model evaluations one score costs (1 for a forest: variance is a by-product)."""
        if self.surrogate is not None:
            return 1
        if getattr(self.model, "stochastic_members", False):
            return self.model.mc_samples
        if self.model.kind == "lr_bootstrap":
            return len(self.model.members)
        return 1

    @property
    def native_ensemble(self) -> bool:
        return self.surrogate is None and self.model.kind == "rf"

    def __call__(self, X) -> np.ndarray:
        if self.surrogate is not None:
            return surrogate_epistemic(self.surrogate, X, self.reduction).values
        return native_epistemic(self.model, X, self.reduction, self.seed).values

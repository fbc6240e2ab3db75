"""Shared predictor plumbing: softmax, capability checks, dispatch helpers."""
from __future__ import annotations

import numpy as np


class CapabilityError(TypeError):
    """The model lacks a capability (members, gradients or logits)."""


class TrainingError(RuntimeError):
    """Training could not produce a usable model."""

    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def log_softmax(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    m = Z.max(axis=-1, keepdims=True)
    return Z - m - np.log(np.exp(Z - m).sum(axis=-1, keepdims=True))


def check_input(model, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ValueError(f"dimension mismatch: model expects {model.n_features} features, got {X.shape[1]}")
    return X


def check_labels(y, n_classes=None) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if np.unique(y).size < 2:
        raise TrainingError("training labels contain a single class")
    if n_classes is not None and y.max() >= n_classes:
        raise TrainingError("label outside the declared class range")
    return y


def predict_proba(model, X) -> np.ndarray:
    return model.predict_proba(X)


def predict_logits(model, X) -> np.ndarray:
    if not getattr(model, "has_logits", False):
        raise CapabilityError(f"{type(model).__name__} exposes no logits")
    return model.predict_logits(X)


def per_member_proba(model, X, seed=None) -> np.ndarray:
    """Member probabilities ``[M, n, K]``; MC-dropout models take a ``seed``."""
    if not getattr(model, "has_members", False):
        raise CapabilityError(
            f"{type(model).__name__} has no ensemble members; use a random-forest surrogate "
            "(epigate.uncertainty.surrogate_epistemic) instead")
    if getattr(model, "stochastic_members", False):
        return model.per_member_proba(X, seed=seed)
    return model.per_member_proba(X)


def input_gradient(model, x, target) -> np.ndarray:
    """Gradient of logit ``target`` with respect to the input (rows of ``x``)."""
    if not getattr(model, "has_gradients", False):
        raise CapabilityError(f"{type(model).__name__} provides no input gradients")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = check_input(model, x)
    t = np.broadcast_to(np.asarray(target, dtype=np.int64), (X.shape[0],))
    V = np.zeros((X.shape[0], model.n_classes))
    V[np.arange(X.shape[0]), t] = 1.0
    G = model.input_vjp(X, V)
    return G[0] if single else G


def f1(y_true, y_pred, average: str = "weighted") -> float:
    """Support-weighted F1 over classes by default (``average`` is passed to scikit-learn)."""
    from sklearn.metrics import f1_score
    return float(f1_score(y_true, y_pred, average=average, zero_division=0))

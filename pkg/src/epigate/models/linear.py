"""L2-regularized logistic regression and its bootstrap ensemble."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .base import TrainingError, check_input, check_labels, log_softmax, softmax


_ABSENT_CLASS_BIAS = 50.0


@dataclass(frozen=True)
class LogisticConfig:
    C: float = 1.0
    tol: float = 1e-6
    max_iter: int = 2000
    seed: int = 0


@dataclass
class LinearClassifier:
    """Softmax-linear classifier.

    Binary models are stored in the symmetric two-row form
    ``[-w/2; w/2]`` so that the softmax reproduces ``sigmoid(w·x + b)`` and
    each class owns a weight row.
    """

    weights: np.ndarray  # [K, d]
    bias: np.ndarray  # [K]
    l2_strength: float = 1.0
    meta: dict = field(default_factory=dict)

    has_members = False
    has_gradients = True
    has_logits = True
    kind = "lr"

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def predict_logits(self, X) -> np.ndarray:
        X = check_input(self, X)
        return X @ self.weights.T + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.predict_logits(X))

    def input_vjp(self, X, V) -> np.ndarray:
        return np.asarray(V) @ self.weights

    @classmethod
    def from_binary(cls, w, b, l2_strength=1.0, meta=None):
        w = np.asarray(w, dtype=float)
        return cls(np.stack([-w / 2, w / 2]), np.array([-b / 2, b / 2], dtype=float), l2_strength, meta or {})

    def params(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}


def _objective(theta, X, Y, n_classes, binary, lam):
    """Mean cross-entropy + lam/(2n)·||W||² (bias unpenalized), with gradient."""
    n, d = X.shape
    if binary:
        w, b = theta[:d], theta[d]
        z = X @ w + b
        # log(1 + e^z) - y z, evaluated stably
        loss = np.logaddexp(0.0, z) - Y[:, 1] * z
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        r = (p - Y[:, 1]) / n
        f = loss.mean() + 0.5 * lam / n * w @ w
        g = np.concatenate([X.T @ r + lam / n * w, [r.sum()]])
        return f, g
    W = theta[: n_classes * d].reshape(n_classes, d)
    b = theta[n_classes * d:]
    Z = X @ W.T + b
    L = log_softmax(Z)
    f = -(Y * L).sum() / n + 0.5 * lam / n * (W * W).sum()
    R = (np.exp(L) - Y) / n
    gW = R.T @ X + lam / n * W
    return f, np.concatenate([gW.ravel(), R.sum(axis=0)])


def fit_logistic(X, y, n_classes: int, config: LogisticConfig = LogisticConfig()) -> LinearClassifier:
    """Minimize the C-scaled regularized log-loss with L-BFGS.

    The objective is ``sum_i CE_i + 1/(2C)·||W||²`` divided by ``n``; its
    minimizer matches the usual ``C`` parameterization.  Convergence is
    declared when the gradient infinity-norm is below ``config.tol``.
    """
    X = np.asarray(X, dtype=float)
    y = check_labels(y, n_classes)
    present = np.unique(y)
    if present.size < n_classes:
        # classes absent from the training labels get a prohibitive bias
        sub = fit_logistic(X, np.searchsorted(present, y), present.size, config)
        W = np.zeros((n_classes, X.shape[1]))
        b = np.full(n_classes, -_ABSENT_CLASS_BIAS)
        W[present], b[present] = sub.weights, sub.bias
        return LinearClassifier(W, b, sub.l2_strength, {**sub.meta, "absent_classes": sorted(set(range(n_classes)) - set(present.tolist()))})
    n, d = X.shape
    binary = n_classes == 2
    Y = np.eye(n_classes)[y]
    lam = 1.0 / config.C
    theta0 = np.zeros(d + 1 if binary else n_classes * (d + 1))
    res = minimize(_objective, theta0, args=(X, Y, n_classes, binary, lam), jac=True,
                   method="L-BFGS-B",
                   options={"maxiter": config.max_iter, "gtol": config.tol * 1e-2, "ftol": 0.0, "maxcor": 20})
    _, g = _objective(res.x, X, Y, n_classes, binary, lam)
    gnorm = float(np.abs(g).max())
    if not np.isfinite(gnorm) or gnorm > config.tol:
        raise TrainingError(f"logistic regression did not converge (grad norm {gnorm:.3e})", grad_norm=gnorm)
    meta = {"grad_norm": gnorm, "n_iter": int(res.nit), "C": config.C, "seed": config.seed}
    if binary:
        return LinearClassifier.from_binary(res.x[:d], res.x[d], lam, meta)
    W = res.x[: n_classes * d].reshape(n_classes, d)
    return LinearClassifier(W.copy(), res.x[n_classes * d:].copy(), lam, meta)


def train_logistic(train, val=None, config: LogisticConfig = LogisticConfig()) -> LinearClassifier:
    """Fit on ``train`` (a TabularDataset); ``val`` is accepted for interface symmetry."""
    return fit_logistic(train.features, train.labels, train.n_classes, config)


@dataclass
class BootstrapLogistic:
    """Ensemble of logistic models fit on bootstrap resamples of the train split."""

    members: list
    seed: int = 0

    has_members = True
    has_gradients = False
    has_logits = False
    stochastic_members = False
    kind = "lr_bootstrap"

    @property
    def n_features(self) -> int:
        return self.members[0].n_features

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes

    def per_member_proba(self, X) -> np.ndarray:
        return np.stack([m.predict_proba(X) for m in self.members])

    def predict_proba(self, X) -> np.ndarray:
        return self.per_member_proba(X).mean(axis=0)


def train_bootstrap_logistic(train, n_members: int = 20, config: LogisticConfig = LogisticConfig()) -> BootstrapLogistic:
    rng = np.random.default_rng(config.seed)
    n = len(train)
    members = []
    for _ in range(n_members):
        for _attempt in range(100):
            idx = rng.integers(0, n, size=n)
            if np.unique(train.labels[idx]).size >= 2:
                break
        members.append(fit_logistic(train.features[idx], train.labels[idx], train.n_classes, config))
    return BootstrapLogistic(members, config.seed)

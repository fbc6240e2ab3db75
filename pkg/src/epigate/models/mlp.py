"""Two-hidden-layer ReLU network with dropout, trained by Adam in numpy.

Backpropagation is written out by hand; ``loss_and_grads`` and ``input_vjp``
are the two entry points the tests check against finite differences.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .base import TrainingError, check_input, check_labels, log_softmax, softmax


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (128, 64)
    dropout: float = 0.3
    lr: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    init: str = "uniform_fan_in"
    mc_samples: int = 50
    seed: int = 0


@dataclass
class MlpClassifier:
    weights: list  # W_l with shape [fan_in, fan_out]
    biases: list
    dropout: float = 0.3
    mc_samples: int = 50
    meta: dict = field(default_factory=dict)

    has_members = True
    has_gradients = True
    has_logits = True
    stochastic_members = True
    kind = "mlp"

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> list:
        return [self.n_features] + [W.shape[1] for W in self.weights]

    # -- forward / backward ------------------------------------------------

    def _forward(self, X, masks=None):
        """Return logits and the activations needed for backprop.

        ``masks`` holds one inverted-dropout multiplier array per hidden layer
        (broadcastable to that layer's activations) or ``None`` for eval mode.
        """
        acts = [X]
        pre = []
        h = X
        n_layers = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            if i == n_layers - 1:
                return z, acts, pre
            pre.append(z)
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
            acts.append(h)

    def _backward(self, dZ, acts, pre, masks=None, want_input=False):
        grads_W, grads_b = [None] * len(self.weights), [None] * len(self.weights)
        g = dZ
        for i in range(len(self.weights) - 1, -1, -1):
            grads_W[i] = acts[i].T @ g
            grads_b[i] = g.sum(axis=0)
            if i == 0 and not want_input:
                break
            g = g @ self.weights[i].T
            if i > 0:
                if masks is not None:
                    g = g * masks[i - 1]
                g = g * (pre[i - 1] > 0)
        return grads_W, grads_b, (g if want_input else None)

    def predict_logits(self, X) -> np.ndarray:
        X = check_input(self, X)
        return self._forward(X)[0]

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.predict_logits(X))

    def predict(self, X) -> np.ndarray:
        return self.predict_logits(X).argmax(axis=1)

    def input_vjp(self, X, V) -> np.ndarray:
        """Gradient of ``sum(V * logits)`` with respect to each input row."""
        X = check_input(self, X)
        Z, acts, pre = self._forward(X)
        return self._backward(np.asarray(V, dtype=float), acts, pre, want_input=True)[2]

    def loss_and_grads(self, X, y, masks=None):
        """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
        X = check_input(self, X)
        y = np.asarray(y, dtype=np.int64)
        Z, acts, pre = self._forward(X, masks)
        L = log_softmax(Z)
        n = X.shape[0]
        loss = -L[np.arange(n), y].mean()
        dZ = np.exp(L)
        dZ[np.arange(n), y] -= 1.0
        dZ /= n
        gW, gb, _ = self._backward(dZ, acts, pre, masks)
        return loss, gW, gb

    # -- MC dropout ---------------------------------------------------------

    def dropout_masks(self, rng, shape_prefix=()):
        keep = 1.0 - self.dropout
        sizes = [W.shape[1] for W in self.weights[:-1]]
        if self.dropout <= 0:
            return [np.ones(shape_prefix + (s,)) for s in sizes]
        return [(rng.random(shape_prefix + (s,)) < keep) / keep for s in sizes]

    def per_member_proba(self, X, seed=0, n_samples=None) -> np.ndarray:
        """Probabilities from ``n_samples`` dropout-thinned networks.

        Member ``m`` uses one mask per hidden layer shared by all rows, so a
        row's member predictions do not depend on the rest of the batch.
        """
        X = check_input(self, X)
        M = self.mc_samples if n_samples is None else n_samples
        rng = np.random.default_rng(seed)
        out = np.empty((M, X.shape[0], self.n_classes))
        for m in range(M):
            masks = self.dropout_masks(rng)
            out[m] = softmax(self._forward(X, masks)[0])
        return out

    def params(self) -> dict:
        p = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            p[f"W{i}"], p[f"b{i}"] = W, b
        return p


def init_mlp(d: int, n_classes: int, config: MlpConfig = MlpConfig(), rng=None) -> MlpClassifier:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    sizes = [d, *config.hidden, n_classes]
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        Ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpClassifier(Ws, bs, config.dropout, config.mc_samples, {"config": asdict(config)})


def _val_loss(model, X, y) -> float:
    L = log_softmax(model.predict_logits(X))
    return float(-L[np.arange(len(y)), y].mean())


def train_mlp(train, val, config: MlpConfig = MlpConfig()) -> MlpClassifier:
    """Adam with minibatches, dropout on, early stopping on validation loss.

    The parameters with the lowest validation loss are restored at the end.
    """
    X, y = train.features, check_labels(train.labels, train.n_classes)
    rng = np.random.default_rng(config.seed)
    model = init_mlp(train.n_features, train.n_classes, config, rng)
    params = model.weights + model.biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    best = (np.inf, [p.copy() for p in params], 0)
    history = []
    since_best = 0
    n = X.shape[0]
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            masks = model.dropout_masks(rng, (len(idx),))
            loss, gW, gb = model.loss_and_grads(X[idx], y[idx], masks)
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch} (loss {loss})")
            step += 1
            c1 = 1.0 - config.beta1 ** step
            c2 = 1.0 - config.beta2 ** step
            for p, g, a, v in zip(params, gW + gb, m1, m2):
                a *= config.beta1
                a += (1.0 - config.beta1) * g
                v *= config.beta2
                v += (1.0 - config.beta2) * g * g
                p -= config.lr * (a / c1) / (np.sqrt(v / c2) + config.adam_eps)
        vl = _val_loss(model, val.features, val.labels)
        if not np.isfinite(vl):
            raise TrainingError(f"validation loss diverged at epoch {epoch}")
        history.append(vl)
        if vl < best[0]:
            best = (vl, [p.copy() for p in params], epoch + 1)
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    if history:
        for p, b in zip(params, best[1]):
            p[...] = b
    model.meta.update({"val_loss_history": history, "best_epoch": best[2], "epochs_run": len(history)})
    return model

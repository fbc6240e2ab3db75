"""Natural perturbations and gradient-based attacks on standardized tabular inputs.

All operations are deterministic given their seed.  Attacks work in the
standardized feature space with no box constraint beyond the norm ball.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .models.base import CapabilityError

KINDS = ("gaussian", "missing", "permute", "bim", "pgd", "cw")
LEVEL_GRIDS = {
    "gaussian": (0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0),
    "missing": (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5),
    "permute": (0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25),
    "bim": (0.01, 0.05, 0.1, 0.2),
    "pgd": (0.01, 0.05, 0.1, 0.2),
    "cw": (0.1, 1.0, 10.0),
}
ATTACK_KINDS = ("bim", "pgd", "cw")


class ImputationFallbackWarning(UserWarning):
    """A column was fully masked and imputed with the training median."""


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.level < 0:
            raise ValueError("perturbation level must be nonnegative")

    @property
    def on_grid(self) -> bool:
        """True if ``level`` is one of the standard sweep levels (or the identity 0)."""
        return self.level == 0 or any(math.isclose(self.level, g) for g in LEVEL_GRIDS[self.kind])


@dataclass(frozen=True)
class AttackConfig:
    """Attack schedules; step sizes follow ``alpha = 2.5 / n_iter * eps``."""

    bim_iters: int = 10
    pgd_iters: int = 20
    pgd_restarts: int = 1
    step_scale: float = 2.5
    cw_iters: int = 100
    cw_lr: float = 0.01
    cw_kappa: float = 0.0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    label: str = "predicted"  # or "true"

    def bim_alpha(self, eps: float) -> float:
        return self.step_scale / self.bim_iters * eps

    def pgd_alpha(self, eps: float) -> float:
        return self.step_scale / self.pgd_iters * eps


# ---------------------------------------------------------------------------
# natural perturbations


def gaussian_noise(X, sigma: float, seed: int = 0, std=None) -> np.ndarray:
    """``X + sigma * std_j * eps`` with ``eps = default_rng(seed).standard_normal(X.shape)``.

    ``std`` defaults to the per-feature population std of ``X`` itself.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("empty batch")
    std = X.std(axis=0) if std is None else np.asarray(std, dtype=float)
    eps = np.random.default_rng(seed).standard_normal(X.shape)
    return X + sigma * std * eps


def missing_values(X, p: float, seed: int = 0, fallback_median=None) -> np.ndarray:
    """Mask entries i.i.d. with probability ``p`` and impute column medians.

    Medians come from the unmasked entries of the batch.  A fully masked
    column takes ``fallback_median`` (the training median) and raises an
    :class:`ImputationFallbackWarning`.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    X = np.asarray(X, dtype=float)
    mask = np.random.default_rng(seed).random(X.shape) < p
    out = X.copy()
    for j in np.flatnonzero(mask.any(axis=0)):
        keep = ~mask[:, j]
        if keep.any():
            fill = np.median(X[keep, j])
        else:
            if fallback_median is None:
                raise ValueError(f"column {j} fully masked and no fallback median given")
            fill = float(np.asarray(fallback_median, dtype=float)[j])
            warnings.warn(f"column {j} fully masked; imputed training median", ImputationFallbackWarning)
        out[mask[:, j], j] = fill
    return out


def n_permuted(f: float, d: int) -> int:
    return min(d, math.ceil(f * d - 1e-9))


def permute_features(X, f: float, seed: int = 0) -> np.ndarray:
    """Shuffle ``ceil(f d)`` uniformly chosen columns across rows."""
    if not 0.0 <= f <= 1.0:
        raise ValueError("f must lie in [0, 1]")
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows to permute across")
    rng = np.random.default_rng(seed)
    cols = np.sort(rng.choice(d, size=n_permuted(f, d), replace=False))
    out = X.copy()
    for j in cols:
        out[:, j] = X[rng.permutation(n), j]
    return out


# ---------------------------------------------------------------------------
# attacks


def _require_gradients(model):
    if not getattr(model, "has_gradients", False):
        raise CapabilityError(f"{type(model).__name__} provides no input gradients; attacks need them")


def _labels(model, X, y, cfg: AttackConfig):
    if y is None or cfg.label == "predicted":
        return model.predict_logits(X).argmax(axis=1)
    return np.broadcast_to(np.asarray(y, dtype=np.int64), (X.shape[0],))


def _ce_grad(model, X, y) -> np.ndarray:
    P = model.predict_proba(X)
    P[np.arange(X.shape[0]), y] -= 1.0
    return model.input_vjp(X, P)


def project_linf(X_adv, X, eps: float) -> np.ndarray:
    """Clip into the closed l-inf ball, nudging rounding overshoot back inside."""
    out = np.clip(X_adv, X - eps, X + eps)
    over = np.abs(out - X) > eps
    while over.any():
        out[over] = np.nextafter(out[over], X[over])
        over = np.abs(out - X) > eps
    return out


def _signed_ascent(model, X, y, eps, alpha, n_iter, start):
    Xa = start
    for _ in range(n_iter):
        Xa = project_linf(Xa + alpha * np.sign(_ce_grad(model, Xa, y)), X, eps)
    return Xa


def bim_attack(model, x, y=None, eps: float = 0.1, cfg: AttackConfig = AttackConfig()) -> np.ndarray:
    """Basic iterative method: signed gradient ascent on cross-entropy from ``x``."""
    _require_gradients(model)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    out = _signed_ascent(model, X, _labels(model, X, y, cfg), eps, cfg.bim_alpha(eps), cfg.bim_iters, X.copy())
    return out.reshape(np.shape(x))


def pgd_attack(model, x, y=None, eps: float = 0.1, cfg: AttackConfig = AttackConfig(), seed: int = 0) -> np.ndarray:
    """Projected gradient descent from a uniform random start in the ball."""
    _require_gradients(model)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    labels = _labels(model, X, y, cfg)
    rng = np.random.default_rng(seed)
    best, best_loss = None, None
    for _ in range(cfg.pgd_restarts):
        start = project_linf(X + rng.uniform(-eps, eps, X.shape), X, eps)
        Xa = _signed_ascent(model, X, labels, eps, cfg.pgd_alpha(eps), cfg.pgd_iters, start)
        loss = -np.log(np.maximum(model.predict_proba(Xa)[np.arange(X.shape[0]), labels], 1e-300))
        if best is None:
            best, best_loss = Xa, loss
        else:
            better = loss > best_loss
            best[better], best_loss[better] = Xa[better], loss[better]
    return best.reshape(np.shape(x))


def cw_objective(model, X, delta, y, c, kappa=0.0):
    """Per-row ``||delta||^2 + c max(Z_y - max_{j != y} Z_j, -kappa)`` and the runner-up classes."""
    Z = model.predict_logits(X + delta)
    rows = np.arange(X.shape[0])
    zy = Z[rows, y]
    Zo = Z.copy()
    Zo[rows, y] = -np.inf
    j = Zo.argmax(axis=1)
    margin = zy - Zo[rows, j]
    return np.sum(delta ** 2, axis=1) + c * np.maximum(margin, -kappa), j, margin


def cw_attack(model, x, c: float = 1.0, y=None, cfg: AttackConfig = AttackConfig(), return_info: bool = False):
    """Untargeted l2 Carlini-Wagner attack with additive ``delta`` and Adam.

    Returns the lowest-objective iterate per row (``delta = 0`` is iterate 0).
    With ``return_info`` also returns ``{"objective", "l2", "history"}``,
    where ``history`` holds the best-so-far objective after each step.
    """
    _require_gradients(model)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    n = X.shape[0]
    labels = _labels(model, X, y, cfg)
    rows = np.arange(n)
    b1, b2 = cfg.adam_betas
    delta = np.zeros_like(X)
    m = np.zeros_like(X)
    v = np.zeros_like(X)
    best = delta.copy()
    best_obj, j, margin = cw_objective(model, X, delta, labels, c, cfg.cw_kappa)
    history = [best_obj.copy()]
    for t in range(1, cfg.cw_iters + 1):
        active = (margin > -cfg.cw_kappa) & (c != 0)
        V = np.zeros((n, model.n_classes))
        V[rows, labels] = c * active
        V[rows, j] -= c * active
        g = 2.0 * delta + model.input_vjp(X + delta, V)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        delta = delta - cfg.cw_lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + cfg.adam_eps)
        obj, j, margin = cw_objective(model, X, delta, labels, c, cfg.cw_kappa)
        better = obj < best_obj
        best[better], best_obj[better] = delta[better], obj[better]
        history.append(best_obj.copy())
    out = (X + best).reshape(np.shape(x))
    if return_info:
        return out, {"objective": best_obj, "l2": np.linalg.norm(best, axis=1), "history": np.array(history)}
    return out


# ---------------------------------------------------------------------------
# dispatch and export


def perturb(spec: PerturbationSpec, X, model=None, labels=None, std=None, fallback_median=None,
            attack_config: AttackConfig = AttackConfig()) -> np.ndarray:
    """Apply ``spec`` to the batch ``X``; attacks need a gradient-capable ``model``."""
    X = np.asarray(X, dtype=float)
    k, lam, seed = spec.kind, spec.level, spec.seed
    if k == "gaussian":
        return gaussian_noise(X, lam, seed, std)
    if k == "missing":
        return missing_values(X, lam, seed, fallback_median)
    if k == "permute":
        return permute_features(X, lam, seed)
    if model is None:
        raise ValueError(f"{k} attack needs a model")
    if k == "bim":
        return bim_attack(model, X, labels, lam, attack_config)
    if k == "pgd":
        return pgd_attack(model, X, labels, lam, attack_config, seed)
    return cw_attack(model, X, lam, labels, attack_config)


def export_perturbed(path, X, spec: PerturbationSpec, feature_names=None):
    """CSV with a ``# key=value`` provenance header naming kind, level and seed."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    names = feature_names or [f"x{j}" for j in range(X.shape[1])]
    with open(path, "w") as fh:
        for key, val in asdict(spec).items():
            fh.write(f"# {key}={val}\n")
        fh.write(",".join(names) + "\n")
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_perturbed(path) -> tuple[np.ndarray, PerturbationSpec]:
    meta = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    for ln in lines:
        if ln.startswith("# "):
            key, val = ln[2:].split("=", 1)
            meta[key] = val
    rows = [[float(v) for v in ln.split(",")] for ln in body[1:] if ln]
    spec = PerturbationSpec(meta["kind"], float(meta["level"]), int(meta["seed"]))
    return np.array(rows, dtype=float).reshape(len(rows), -1), spec

"""Gradient attributions on the target-class logit: vanilla, IG, SmoothGrad, Smooth-IG."""
from __future__ import annotations

import numpy as np

from ..models.base import CapabilityError, input_gradient
from .core import AttributionVector


def _target(model, x, target):
    if target is not None:
        return int(target)
    return int(np.argmax(model.predict_logits(x[None, :])[0]))


def _require_gradients(model):
    if not getattr(model, "has_gradients", False):
        raise CapabilityError(f"{type(model).__name__} provides no input gradients")


def vanilla_gradient(model, x, target=None) -> AttributionVector:
    _require_gradients(model)
    x = np.asarray(x, dtype=float)
    t = _target(model, x, target)
    return AttributionVector(input_gradient(model, x, t), t, "gradient", 1)


def _ig_values(model, x, baseline, steps, t):
    alphas = (np.arange(steps) + 0.5) / steps  # midpoint rule
    path = baseline + alphas[:, None] * (x - baseline)
    grads = input_gradient(model, path, t)
    # shifted mean: exact when all path gradients coincide (linear logits)
    return (x - baseline) * (grads[0] + (grads - grads[0]).mean(axis=0))


def integrated_gradients(model, x, baseline=0.0, steps: int = 50, target=None) -> AttributionVector:
    """Path integral of the logit gradient from ``baseline`` to ``x``."""
    _require_gradients(model)
    x = np.asarray(x, dtype=float)
    baseline = np.broadcast_to(np.asarray(baseline, dtype=float), x.shape)
    t = _target(model, x, target)
    return AttributionVector(_ig_values(model, x, baseline, steps, t), t, "ig", steps,
                             {"steps": steps, "quadrature": "midpoint"})


def smooth(base_method: str, model, x, n_noise: int, sigma: float = 0.1, seed=0, target=None,
           steps: int = 50, rng=None) -> AttributionVector:
    """Average ``base_method`` ("gradient" or "ig") over ``x + N(0, sigma^2 I)`` draws.

    The target class is fixed to the clean input's prediction for every draw.
    """
    _require_gradients(model)
    x = np.asarray(x, dtype=float)
    t = _target(model, x, target)
    rng = np.random.default_rng(seed) if rng is None else rng
    noise = sigma * rng.standard_normal((n_noise, x.shape[0]))
    if base_method == "gradient":
        vals = input_gradient(model, x + noise, t).mean(axis=0)
        return AttributionVector(vals, t, "smoothgrad", n_noise, {"sigma": sigma, "n_noise": n_noise})
    if base_method == "ig":
        zero = np.zeros_like(x)
        vals = np.mean([_ig_values(model, x + e, zero, steps, t) for e in noise], axis=0)
        return AttributionVector(vals, t, "smooth_ig", n_noise * steps,
                                 {"sigma": sigma, "n_noise": n_noise, "steps": steps})
    raise ValueError(f"unknown base method {base_method!r}")


def smoothgrad(model, x, n_noise: int = 20, sigma: float = 0.1, seed=0, target=None, rng=None):
    return smooth("gradient", model, x, n_noise, sigma, seed, target, rng=rng)


def smooth_ig(model, x, n_noise: int = 50, sigma: float = 0.1, seed=0, target=None, steps=50, rng=None):
    return smooth("ig", model, x, n_noise, sigma, seed, target, steps, rng=rng)

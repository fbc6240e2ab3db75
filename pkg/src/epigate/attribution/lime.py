"""LIME for tabular inputs: Gaussian perturbations, exponential kernel, ridge fit."""
from __future__ import annotations

import numpy as np

from .core import AttributionVector, CountingOutput, predicted_class


def weighted_ridge(X, y, w, alpha: float = 1.0) -> tuple[np.ndarray, float]:
    """Ridge with an unpenalized intercept; returns ``(coef, intercept)``."""
    sw = w / w.sum()
    xm = sw @ X
    ym = sw @ y
    Xc, yc = X - xm, y - ym
    G = (Xc * w[:, None]).T @ Xc + alpha * np.eye(X.shape[1])
    coef = np.linalg.solve(G, (Xc * w[:, None]).T @ yc)
    return coef, float(ym - xm @ coef)


def lime(model, x, train_stats, target_class=None, n_samples: int = 5000, top_k: int = 10,
         kernel_width=None, ridge: float = 1.0, seed=0, rng=None) -> AttributionVector:
    """Local linear surrogate around ``x``.

    Perturbations are ``x + eps * std`` with ``eps ~ N(0, I)`` and ``std`` the
    training per-feature scale (``train_stats`` is a Standardizer or anything
    with a ``stds`` attribute).  The first sample is ``x`` itself.  Samples
    are weighted by ``exp(-dist^2 / width^2)`` with ``dist`` the Euclidean
    distance in std units and ``width = 0.75 sqrt(d)``.  Coefficients outside
    the ``top_k`` largest magnitudes are zeroed.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    stds = np.asarray(getattr(train_stats, "stds", train_stats), dtype=float)
    if stds.shape != (d,) or not np.any(stds > 0) or n_samples < 2:
        raise ValueError("degenerate perturbations: need positive feature scales and n_samples >= 2")
    target = predicted_class(model, x) if target_class is None else int(target_class)
    f = CountingOutput(model, target, "proba")
    rng = np.random.default_rng(seed) if rng is None else rng
    eps = rng.standard_normal((n_samples, d))
    eps[0] = 0.0
    Z = x + eps * stds
    y = f(Z)
    width = 0.75 * np.sqrt(d) if kernel_width is None else float(kernel_width)
    weights = np.exp(-np.sum(eps ** 2, axis=1) / width ** 2)
    coef, intercept = weighted_ridge(eps, y, weights, ridge)
    keep = np.zeros(d, dtype=bool)
    keep[np.argsort(-np.abs(coef), kind="stable")[:top_k]] = True
    values = np.where(keep, coef, 0.0)
    return AttributionVector(values, target, "lime", f.calls,
                             {"mask": keep, "intercept": intercept, "kernel_width": width})

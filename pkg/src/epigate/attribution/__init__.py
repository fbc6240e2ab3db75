"""Feature attributions at several cost tiers plus a brute-force Shapley oracle."""
from __future__ import annotations

import csv
import json

import numpy as np

from .core import (METHODS, AttributionVector, CountingOutput, abs_ranking, predicted_class,
                   sample_background, sample_rng)
from .gradients import integrated_gradients, smooth, smooth_ig, smoothgrad, vanilla_gradient
from .lime import lime
from .shapley import exact_shapley_oracle, kernel_shap, sample_coalitions, shapley_weights
from .treeshap import tree_shap, tree_shap_batch


class Explainer:
    """Batch front end: ``explain(X, targets, keys) -> (values [n, d], evals [n])``.

    ``keys`` identify samples for seeding, so a clean input and its perturbed
    copy can share the explainer's internal randomness.
    """

    def __init__(self, method, model, background=None, train_stats=None, seed=0, **params):
        if method not in METHODS:
            raise ValueError(f"unknown attribution method {method!r}")
        if method in ("kernel_shap", "tree_shap", "exact_shapley") and background is None:
            raise ValueError(f"{method} needs a background set")
        if method == "lime" and train_stats is None:
            raise ValueError("lime needs training statistics")
        self.method = method
        self.model = model
        self.background = None if background is None else np.asarray(background, dtype=float)
        self.train_stats = train_stats
        self.seed = seed
        self.params = params

    def default_targets(self, X):
        if self.method in ("ig", "smoothgrad", "smooth_ig", "gradient"):
            return self.model.predict_logits(X).argmax(axis=1)
        return self.model.predict_proba(X).argmax(axis=1)

    def explain(self, X, targets=None, keys=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        targets = self.default_targets(X) if targets is None else np.broadcast_to(np.asarray(targets), (n,))
        keys = np.arange(n) if keys is None else np.asarray(keys)
        if self.method == "tree_shap":
            return tree_shap_batch(self.model, X, self.background, targets)
        values = np.empty_like(X)
        evals = np.empty(n, dtype=np.int64)
        for i in range(n):
            a = self.explain_one(X[i], int(targets[i]), int(keys[i]))
            values[i], evals[i] = a.values, a.model_evals
        return values, evals

    def explain_one(self, x, target=None, key=0) -> AttributionVector:
        p, m = self.params, self.method
        if m == "tree_shap":
            return tree_shap(self.model, x, self.background, target)
        if m == "exact_shapley":
            return exact_shapley_oracle(self.model, x, self.background, target)
        rng = sample_rng(self.seed, key)
        if m == "kernel_shap":
            return kernel_shap(self.model, x, self.background, target, p.get("n_coalitions", "auto"), rng=rng)
        if m == "lime":
            return lime(self.model, x, self.train_stats, target, p.get("n_samples", 5000), p.get("top_k", 10), rng=rng)
        if m == "ig":
            return integrated_gradients(self.model, x, 0.0, p.get("steps", 50), target)
        if m == "gradient":
            return vanilla_gradient(self.model, x, target)
        if m == "smoothgrad":
            return smoothgrad(self.model, x, p.get("n_noise", 20), p.get("sigma", 0.1), target=target, rng=rng)
        return smooth_ig(self.model, x, p.get("n_noise", 50), p.get("sigma", 0.1), target=target,
                         steps=p.get("steps", 50), rng=rng)

    def __call__(self, X, targets=None, keys=None) -> np.ndarray:
        return self.explain(X, targets, keys)[0]


def export_attributions(path, values, method, targets, evals, fmt=None):
    """Write attributions as CSV (one row per sample) or JSON (list of records)."""
    values = np.atleast_2d(values)
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    records = [{"index": i, "method": method, "target_class": int(t), "model_evals": int(e),
                "values": [float(v) for v in row]} for i, (row, t, e) in enumerate(zip(values, targets, evals))]
    with open(path, "w", newline="") as fh:
        if fmt == "json":
            json.dump(records, fh, indent=1)
            return
        w = csv.writer(fh)
        w.writerow(["index", "method", "target_class", "model_evals"] + [f"phi_{j}" for j in range(values.shape[1])])
        for r in records:
            w.writerow([r["index"], r["method"], r["target_class"], r["model_evals"]] + [repr(v) for v in r["values"]])


__all__ = [
    "METHODS", "AttributionVector", "CountingOutput", "Explainer", "abs_ranking", "exact_shapley_oracle",
    "export_attributions", "integrated_gradients", "kernel_shap", "lime", "predicted_class",
    "sample_background", "sample_coalitions", "sample_rng", "shapley_weights", "smooth", "smooth_ig",
    "smoothgrad", "tree_shap", "tree_shap_batch", "vanilla_gradient",
]

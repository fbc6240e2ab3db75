"""Epistemic gating of post-hoc explanations for tabular classifiers."""

__version__ = "0.1.0"

from . import attribution, data, gating, models, perturbation, stability, uncertainty  # noqa: E402

__all__ = ["__version__", "attribution", "data", "gating", "models", "perturbation", "stability", "uncertainty"]

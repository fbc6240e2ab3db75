"""Epistemic gate: percentile calibration, routing decisions, detection quality and cost."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

MODES = ("route", "defer")
DECISIONS = {"route": ("cheap", "expensive"), "defer": ("explain", "defer")}
STABLE_TAU = 0.7


@dataclass
class GatePolicy:
    """Threshold plus the exact deferred set of the calibration population.

    ``deferred`` marks which calibration samples were deferred; new scores
    are gated by comparison with ``threshold`` (ties count as high).
    """

    threshold: float
    nu: float
    mode: str = "defer"
    deferred: np.ndarray | None = None
    calibration: str = "population"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown gate mode {self.mode!r}")
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError("deferral rate must lie in [0, 1]")

    @property
    def accepted(self) -> np.ndarray:
        return ~self.deferred


def n_deferred(n: int, nu: float) -> int:
    """``round(nu n)`` with halves rounded up."""
    return min(n, int(math.floor(nu * n + 0.5 + 1e-9)))


def calibrate_threshold(scores, nu: float, mode: str = "defer", calibration: str = "population") -> GatePolicy:
    """Defer exactly the ``round(nu n)`` highest scores.

    Equal scores are ordered by sample index, the later sample counting as
    higher.  The threshold is the smallest deferred score (``+inf`` if none).
    """
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("cannot calibrate on an empty score sequence")
    if not 0.0 <= nu <= 1.0:
        raise ValueError("deferral rate must lie in [0, 1]")
    k = n_deferred(s.size, nu)
    order = np.lexsort((np.arange(s.size), s))  # ascending by (score, index)
    deferred = np.zeros(s.size, dtype=bool)
    if k:
        deferred[order[-k:]] = True
    threshold = float(s[order[-k]]) if k else math.inf
    return GatePolicy(threshold, nu, mode, deferred, calibration)


def gate(policy: GatePolicy, score) -> str:
    """Decision for one new score: at or above the threshold is the high-uncertainty branch."""
    low, high = DECISIONS[policy.mode]
    return high if float(score) >= policy.threshold else low


def gate_many(policy: GatePolicy, scores) -> np.ndarray:
    low, high = DECISIONS[policy.mode]
    return np.where(np.asarray(scores, dtype=float) >= policy.threshold, high, low)


def stability_label(tau) -> np.ndarray | str:
    """"stable" iff ``tau >= 0.7``."""
    t = np.asarray(tau, dtype=float)
    out = np.where(t >= STABLE_TAU, "stable", "unstable")
    return str(out) if out.ndim == 0 else out


def precision_recall(accepted, stable) -> tuple[float, float]:
    """Precision and recall of the accepted set for detecting stable samples.

    NaN (with a warning) when nothing is accepted or nothing is stable.
    """
    acc = np.asarray(accepted, dtype=bool)
    st = np.asarray(stable, dtype=bool)
    if acc.shape != st.shape:
        raise ValueError("decisions and labels differ in length")
    hit = int(np.sum(acc & st))
    if acc.sum() == 0:
        warnings.warn("no accepted samples; precision undefined", RuntimeWarning)
        precision = math.nan
    else:
        precision = hit / int(acc.sum())
    recall = hit / int(st.sum()) if st.sum() else math.nan
    return precision, recall


@dataclass(frozen=True)
class CostModel:
    m: float
    d_evals: float
    native_ensemble: bool = False

    def __post_init__(self):
        if self.m < 1 or self.d_evals < 1:
            raise ValueError("evaluation counts must be >= 1")

    @classmethod
    def from_counts(cls, uq_evals, xai_evals, native_ensemble=False) -> "CostModel":
        """Cost model from audited per-sample evaluation counts (means)."""
        return cls(float(np.mean(uq_evals)), float(np.mean(xai_evals)), native_ensemble)


def relative_cost(cost: CostModel, nu: float) -> float:
    """``m/d + (1 - nu)``, or ``1/d + (1 - nu)`` for a native ensemble."""
    if not 0.0 <= nu <= 1.0:
        raise ValueError("deferral rate must lie in [0, 1]")
    overhead = 1.0 if cost.native_ensemble else cost.m
    return overhead / cost.d_evals + (1.0 - nu)


@dataclass
class GateReport:
    scores: np.ndarray
    decisions: np.ndarray
    nu_requested: float
    nu_achieved: float
    threshold: float
    precision: float = math.nan
    recall: float = math.nan
    q: float = math.nan
    taus: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"nu_requested": self.nu_requested, "nu_achieved": self.nu_achieved,
                "threshold": self.threshold, "precision": self.precision, "recall": self.recall,
                "q": self.q, "n": int(self.scores.shape[0]), **self.meta}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(_finite(self.summary()), fh, indent=1, sort_keys=True)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "epistemic", "decision", "tau"])
            for i, (s, dec) in enumerate(zip(self.scores, self.decisions)):
                tau = "" if self.taus is None else repr(float(self.taus[i]))
                w.writerow([i, repr(float(s)), dec, tau])


def _finite(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            out[k] = None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        elif isinstance(v, np.generic):
            out[k] = v.item()
        else:
            out[k] = v
    return out


def gate_report(scores, nu: float, mode: str = "defer", taus=None, cost: CostModel | None = None) -> GateReport:
    """Calibrate on ``scores``, decide every sample and aggregate."""
    policy = calibrate_threshold(scores, nu, mode)
    low, high = DECISIONS[mode]
    decisions = np.where(policy.deferred, high, low)
    s = np.asarray(scores, dtype=float)
    rep = GateReport(s, decisions, nu, float(policy.deferred.mean()), policy.threshold,
                     meta={"mode": mode, "calibration": policy.calibration})
    if taus is not None:
        taus = np.asarray(taus, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep.precision, rep.recall = precision_recall(policy.accepted, taus >= STABLE_TAU)
        rep.taus = taus
    if cost is not None:
        rep.q = relative_cost(cost, nu)
    return rep

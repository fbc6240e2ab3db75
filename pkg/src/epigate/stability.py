"""Rank agreement between attributions and its link to epistemic growth.

``kendall_tau`` is the tie-corrected tau-b and ``spearman_rho`` uses average
ranks; both reduce to their textbook closed forms on tie-free input and
return NaN where the coefficient is undefined (a constant vector).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from .perturbation import PerturbationSpec, perturb


class UndefinedCorrelationWarning(UserWarning):
    """A rank correlation was requested on a constant vector."""


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise ValueError("need at least 2 elements")
    return a, b


def concordance_counts(r1, r2) -> tuple[int, int, int, int]:
    """``(C, D, ties_1, ties_2)`` over all unordered pairs."""
    a, b = _pair(r1, r2)
    iu = np.triu_indices(a.shape[0], k=1)
    s1 = np.sign(a[:, None] - a[None, :])[iu]
    s2 = np.sign(b[:, None] - b[None, :])[iu]
    prod = s1 * s2
    return int(np.sum(prod > 0)), int(np.sum(prod < 0)), int(np.sum(s1 == 0)), int(np.sum(s2 == 0))


def kendall_tau(r1, r2) -> float:
    """Kendall tau-b; NaN if either input is constant."""
    a, b = _pair(r1, r2)
    C, D, t1, t2 = concordance_counts(a, b)
    n0 = a.shape[0] * (a.shape[0] - 1) // 2
    denom = math.sqrt((n0 - t1) * (n0 - t2))
    if denom == 0:
        return math.nan
    return (C - D) / denom


def spearman_rho(a, b) -> float:
    """Pearson correlation of average ranks; NaN (with a warning) on constant input."""
    a, b = _pair(a, b)
    ra = rankdata(a) - (a.shape[0] + 1) / 2.0
    rb = rankdata(b) - (a.shape[0] + 1) / 2.0
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denom == 0:
        warnings.warn("rank correlation undefined for a constant vector", UndefinedCorrelationWarning)
        return math.nan
    n = a.shape[0]
    if len(np.unique(a)) == n and len(np.unique(b)) == n:
        # tie-free: the rank-difference form is exact in floating point
        return 1.0 - 6.0 * float(np.sum((ra - rb) ** 2)) / (n * (n * n - 1))
    return float(ra @ rb) / denom


def attribution_tau(phi_clean, phi_pert) -> float:
    """tau between the magnitude rankings of two attribution vectors."""
    return kendall_tau(np.abs(phi_clean), np.abs(phi_pert))


def attribution_taus(Phi_clean, Phi_pert) -> np.ndarray:
    """Row-wise ``attribution_tau``."""
    return np.array([attribution_tau(a, b) for a, b in zip(np.atleast_2d(Phi_clean), np.atleast_2d(Phi_pert))])


# ---------------------------------------------------------------------------
# explanation degradation and epistemic growth


@dataclass
class StabilityRecord:
    index: int
    tau: float
    method: str
    perturbation: PerturbationSpec
    n_seeds: int

    def __post_init__(self):
        if not (math.isfinite(self.tau) and -1.0 - 1e-12 <= self.tau <= 1.0 + 1e-12):
            raise ValueError(f"tau out of range: {self.tau}")


@dataclass
class Degradation:
    """Mean tau over samples (XD) plus per-sample detail and exclusion count."""

    value: float
    taus: np.ndarray
    n_excluded: int
    model_evals: np.ndarray
    records: list = field(default_factory=list)


def explanation_degradation(explainer, X, spec: PerturbationSpec, n_seeds: int = 1, clean=None,
                            keys=None, perturb_kwargs=None) -> Degradation:
    """Mean tau between clean and perturbed attributions of the rows of ``X``.

    ``clean`` may pass precomputed ``(values, targets)``; perturbed inputs are
    explained for the clean target class.  Seeds ``spec.seed + s`` for
    ``s < n_seeds`` are averaged per sample.  Samples whose tau is undefined
    or whose explanation fails are excluded and counted.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    keys = np.arange(n) if keys is None else np.asarray(keys)
    kw = dict(perturb_kwargs or {})
    kw.setdefault("model", explainer.model if spec.kind in ("bim", "pgd", "cw") else None)
    if clean is None:
        targets = explainer.default_targets(X)
        phi0, _ = explainer.explain(X, targets, keys)
    else:
        phi0, targets = clean
    taus = np.full((n_seeds, n), np.nan)
    evals = np.zeros(n, dtype=np.int64)
    for s in range(n_seeds):
        Xp = perturb(replace(spec, seed=spec.seed + s), X, **kw)
        phi1, ev = _explain_safely(explainer, Xp, targets, keys)
        evals += ev
        taus[s] = [attribution_tau(a, b) if np.all(np.isfinite(b)) else np.nan for a, b in zip(phi0, phi1)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        per_sample = np.nanmean(taus, axis=0)
    ok = np.isfinite(per_sample)
    records = [StabilityRecord(int(keys[i]), float(per_sample[i]), explainer.method, spec, n_seeds)
               for i in np.flatnonzero(ok)]
    value = float(per_sample[ok].mean()) if ok.any() else math.nan
    return Degradation(value, per_sample, int((~ok).sum()), evals, records)


def _explain_safely(explainer, X, targets, keys):
    try:
        return explainer.explain(X, targets, keys)
    except Exception:
        vals = np.full(X.shape, np.nan)
        evals = np.zeros(X.shape[0], dtype=np.int64)
        for i in range(X.shape[0]):
            try:
                a = explainer.explain_one(X[i], int(targets[i]), int(keys[i]))
                vals[i], evals[i] = a.values, a.model_evals
            except Exception:
                pass
        return vals, evals


def epistemic_growth(u_clean, u_pert, mode: str = "ratio") -> float:
    """``sum U(x~) / sum U(x)`` (``mode="ratio"``) or ``mean U(x~)`` (``"absolute"``).

    A zero clean sum makes the ratio undefined; the absolute mean is returned
    with a warning.
    """
    u_clean = np.asarray(u_clean, dtype=float)
    u_pert = np.asarray(u_pert, dtype=float)
    if mode == "absolute":
        return float(u_pert.mean())
    if mode != "ratio":
        raise ValueError(f"unknown growth mode {mode!r}")
    total = float(u_clean.sum())
    if total <= 0:
        warnings.warn("zero clean epistemic mass; using absolute mean", UndefinedCorrelationWarning)
        return float(u_pert.mean())
    return float(u_pert.sum()) / total


# ---------------------------------------------------------------------------
# sweep curves


@dataclass
class SweepCurve:
    levels: np.ndarray
    xd: np.ndarray
    eg: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.xd = np.asarray(self.xd, dtype=float)
        self.eg = np.asarray(self.eg, dtype=float)
        if not (self.levels.shape == self.xd.shape == self.eg.shape):
            raise ValueError("levels, xd and eg must have the same length")
        if np.any(self.eg < 0):
            raise ValueError("epistemic growth must be nonnegative")

    def __len__(self):
        return self.levels.shape[0]


def xec(curve: SweepCurve) -> float:
    """Spearman rho between the XD and EG sequences (NaN when undefined)."""
    if len(curve) < 3:
        raise ValueError("XEC needs at least 3 levels")
    return spearman_rho(curve.xd, curve.eg)


def write_records_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "tau", "method", "kind", "level", "seed", "n_seeds"])
        for r in records:
            p = r.perturbation
            w.writerow([r.index, repr(r.tau), r.method, p.kind, p.level, p.seed, r.n_seeds])


def write_curve_csv(path, curve: SweepCurve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "xd", "eg"])
        for row in zip(curve.levels, curve.xd, curve.eg):
            w.writerow([repr(float(v)) for v in row])

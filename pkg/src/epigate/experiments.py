"""End-to-end studies linking epistemic uncertainty to explanation stability and faithfulness.

Each ``run_*`` function takes an :class:`ExperimentConfig` (plus an optional
preloaded dataset) and returns an :class:`ExperimentReport` whose tables are
plain lists of dicts, written as CSV next to a JSON summary.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .attribution import Explainer, sample_background
from .data import DatasetSchema, TabularDataset, fit_standardizer, load_named, prepare, synth_blobs, synth_linear_dataset
from .gating import STABLE_TAU, CostModel, calibrate_threshold, precision_recall, relative_cost
from .models import (LogisticConfig, MlpConfig, train_bootstrap_logistic, train_logistic, train_mlp,
                     train_random_forest)
from .perturbation import ATTACK_KINDS, LEVEL_GRIDS, PerturbationSpec, perturb
from .stability import SweepCurve, attribution_taus, epistemic_growth, xec
from .uncertainty import UncertaintySource, epistemic_summary

STUDIES = ("correlation", "stratified", "gating", "removal", "signal_mass")
STRATA = ("low", "medium", "high")
SYNTHETIC = ("synth_linear", "synth_blobs")


@dataclass(frozen=True)
class ExperimentConfig:
    study: str = "correlation"
    dataset: str = "wine"
    model: str = "rf"  # rf | lr | mlp
    explainer: str = "tree_shap"
    uq: str = "native"  # native | surrogate
    reduction: str = "predicted_class"
    seed: int = 0  # split, training and subset selection
    noise_seed: int = 0  # first perturbation seed
    # correlation study
    kinds: tuple = ("gaussian",)
    levels: tuple = ()  # overrides the grid when a single kind is swept
    n_eval: int = 100
    sweep_seeds: int = 1
    eg_mode: str = "ratio"
    # stratified validation
    strat_sigmas: tuple = (0.01, 0.05, 0.1)
    strat_seeds: int = 10
    group_size: int = 50
    # mixed-noise gating
    gate_samples: int = 500
    gate_sigmas: tuple = tuple(round(0.02 * k, 2) for k in range(1, 11))
    gate_versions: int = 5
    nu_pr: tuple = (0.9, 0.7, 0.5, 0.3, 0.1)
    nu_cost: tuple = (0.7, 0.5, 0.3, 0.0)
    # faithfulness
    removal_k: int = 5
    noise_ratios: tuple = ()  # empty: (1, 2, 5, 10) for rf, (1, 2, 3) otherwise
    # model and explainer sizes
    n_trees: int = 100
    max_depth: int = 15
    n_background: int = 100
    lime_samples: int = 5000
    kernel_coalitions: str = "auto"
    mlp_hidden: tuple = (128, 64)
    mlp_epochs: int = 100
    n_bootstrap: int = 20
    synth_n: int = 600
    synth_d: int = 6

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; choose from {STUDIES}")
        if self.model not in ("rf", "lr", "mlp"):
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.explainer == "tree_shap" and self.model != "rf":
            raise ValueError("tree_shap needs model = rf")
        if self.uq not in ("native", "surrogate"):
            raise ValueError(f"unknown uq source {self.uq!r}")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in known:
                raise ValueError(f"unknown config key {k!r}")
            kw[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)

    def content_hash(self, dataset: TabularDataset | None = None) -> str:
        h = hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode())
        if dataset is not None:
            h.update(np.ascontiguousarray(dataset.features).tobytes())
            h.update(np.ascontiguousarray(dataset.labels).tobytes())
        return h.hexdigest()


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    config_hash: str
    summary: dict
    tables: dict = field(default_factory=dict)  # csv file name -> list of row dicts

    def to_json(self) -> str:
        body = {"config": self.config.to_dict(), "config_hash": self.config_hash,
                "version": __version__, "summary": _jsonable(self.summary),
                "tables": sorted(self.tables)}
        return json.dumps(body, indent=1, sort_keys=True)

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / f"report_{self.config.study}.json"]
        written[0].write_text(self.to_json())
        for name, rows in sorted(self.tables.items()):
            path = out / name
            write_rows(path, rows)
            written.append(path)
        return written


def write_rows(path, rows):
    cols = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else str(obj)
    return obj


# ---------------------------------------------------------------------------
# shared setup


@dataclass
class Workbench:
    """Prepared splits, trained model, uncertainty source and explainer."""

    config: ExperimentConfig
    dataset: TabularDataset
    train: TabularDataset
    val: TabularDataset
    test: TabularDataset
    model: object
    uq: UncertaintySource
    explainer: Explainer
    train_median: np.ndarray


def load_experiment_dataset(cfg: ExperimentConfig, root=None) -> TabularDataset:
    if cfg.dataset == "synth_linear":
        return synth_linear_dataset(cfg.synth_d, cfg.synth_n, seed=cfg.seed)
    if cfg.dataset == "synth_blobs":
        rng = np.random.default_rng(cfg.seed)
        return synth_blobs(cfg.synth_n, rng.standard_normal((3, cfg.synth_d)) * 1.5, 1.0, cfg.seed)
    return load_named(cfg.dataset, root)


def train_model(cfg: ExperimentConfig, train: TabularDataset, val: TabularDataset):
    if cfg.model == "rf":
        return train_random_forest(train, cfg.n_trees, cfg.max_depth, cfg.seed)
    if cfg.model == "lr":
        return train_logistic(train, val, LogisticConfig(seed=cfg.seed))
    return train_mlp(train, val, MlpConfig(hidden=tuple(cfg.mlp_hidden), max_epochs=cfg.mlp_epochs, seed=cfg.seed))


def build_uq(cfg: ExperimentConfig, model, train: TabularDataset) -> UncertaintySource:
    if cfg.uq == "surrogate":
        surrogate = train_random_forest(train, cfg.n_trees, cfg.max_depth, cfg.seed)
        return UncertaintySource(model, surrogate, cfg.reduction, cfg.seed)
    if cfg.model == "lr":
        boot = train_bootstrap_logistic(train, cfg.n_bootstrap, LogisticConfig(seed=cfg.seed))
        return UncertaintySource(boot, None, cfg.reduction, cfg.seed)
    return UncertaintySource(model, None, cfg.reduction, cfg.seed)


def build_workbench(cfg: ExperimentConfig, dataset: TabularDataset | None = None, root=None) -> Workbench:
    ds = load_experiment_dataset(cfg, root) if dataset is None else dataset
    train, val, test, _ = prepare(ds, cfg.seed)
    model = train_model(cfg, train, val)
    uq = build_uq(cfg, model, train)
    background = sample_background(train.features, cfg.n_background, cfg.seed)
    params = {}
    if cfg.explainer == "lime":
        params["n_samples"] = cfg.lime_samples
    if cfg.explainer == "kernel_shap":
        params["n_coalitions"] = cfg.kernel_coalitions
    explainer = Explainer(cfg.explainer, model, background, fit_standardizer(train.features), cfg.seed, **params)
    return Workbench(cfg, ds, train, val, test, model, uq, explainer, np.median(train.features, axis=0))


def eval_subset(n_total: int, n: int, seed: int) -> np.ndarray:
    """Sorted indices of a fixed random subset of size ``min(n, n_total)``."""
    if n >= n_total:
        return np.arange(n_total)
    return np.sort(np.random.default_rng(seed).choice(n_total, size=n, replace=False))


def tertiles(scores) -> list[np.ndarray]:
    """Equal-sized (within one) low/medium/high bins by ascending score, ties by index."""
    order = np.argsort(np.asarray(scores, dtype=float), kind="stable")
    return np.array_split(order, 3)


def epistemic_groups(scores, size: int, seed: int) -> dict:
    """Lowest ``size``, highest ``size`` and ``size`` random others, by index into ``scores``."""
    s = np.asarray(scores, dtype=float)
    if s.shape[0] < 3 * size:
        raise ValueError(f"need at least {3 * size} samples for three groups of {size}")
    order = np.argsort(s, kind="stable")
    low, high = order[:size], order[-size:]
    rest = order[size:-size]
    rand = np.sort(np.random.default_rng(seed).choice(rest, size=size, replace=False))
    return {"low": low, "high": high, "random": rand}


def _perturb_kwargs(bench: Workbench, kind: str, split_std):
    kw = {"fallback_median": bench.train_median}
    if kind == "gaussian":
        kw["std"] = split_std
    if kind in ATTACK_KINDS:
        kw["model"] = bench.model
    return kw


def _taus_and_scores(bench, X, phi0, targets, keys, spec, n_seeds, split_std):
    """Per-seed tau matrix ``[S, n]``, epistemic matrix ``[S, n]`` and XAI evals per sample."""
    kw = _perturb_kwargs(bench, spec.kind, split_std)
    taus = np.empty((n_seeds, X.shape[0]))
    u = np.empty((n_seeds, X.shape[0]))
    evals = np.zeros(X.shape[0], dtype=np.int64)
    for s in range(n_seeds):
        Xp = perturb(replace(spec, seed=spec.seed + s), X, **kw)
        phi1, ev = bench.explainer.explain(Xp, targets, keys)
        taus[s] = attribution_taus(phi0, phi1)
        u[s] = bench.uq(Xp)
        evals += ev
    return taus, u, evals


def _nanmean(a, axis=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(a, axis=axis)


# ---------------------------------------------------------------------------
# studies


def run_correlation_study(cfg: ExperimentConfig, dataset=None, bench: Workbench | None = None) -> ExperimentReport:
    """XD and EG sweeps per perturbation kind on a fixed subset, and their XEC."""
    bench = bench or build_workbench(cfg, dataset)
    test = bench.test
    idx = eval_subset(len(test), cfg.n_eval, cfg.seed)
    X = test.features[idx]
    split_std = test.features.std(axis=0)
    targets = bench.explainer.default_targets(X)
    phi0, evals0 = bench.explainer.explain(X, targets, idx)
    u0 = bench.uq(X)
    cells, curves = [], []
    for kind in cfg.kinds:
        if kind in ATTACK_KINDS and not getattr(bench.model, "has_gradients", False):
            cells.append(_cell_row(cfg, kind, math.nan, [], "model has no gradients", 0, len(idx), 0.0))
            continue
        levels = tuple(cfg.levels) if cfg.levels and len(cfg.kinds) == 1 else LEVEL_GRIDS[kind]
        xd, eg, excluded = [], [], 0
        for lam in levels:
            spec = PerturbationSpec(kind, lam, cfg.noise_seed)
            taus, u, ev = _taus_and_scores(bench, X, phi0, targets, idx, spec, cfg.sweep_seeds, split_std)
            per_sample = _nanmean(taus, axis=0)
            ok = np.isfinite(per_sample)
            excluded = max(excluded, int((~ok).sum()))
            xd.append(float(per_sample[ok].mean()) if ok.any() else math.nan)
            eg.append(float(np.mean([epistemic_growth(u0, u[s], cfg.eg_mode) for s in range(cfg.sweep_seeds)])))
            curves.append({"dataset": cfg.dataset, "model": cfg.model, "method": cfg.explainer, "kind": kind,
                           "level": lam, "xd": xd[-1], "eg": eg[-1], "n_excluded": int((~ok).sum()),
                           "xai_evals": float(ev.mean() / cfg.sweep_seeds), "uq_evals": bench.uq.evals_per_sample})
        curve = SweepCurve(levels, xd, eg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            value = xec(curve) if np.all(np.isfinite(curve.xd)) else math.nan
        cells.append(_cell_row(cfg, kind, value, levels, "", excluded, len(idx), float(evals0.mean())))
    summary = {"n_eval": len(idx), "xai_evals_mean": float(evals0.mean()),
               "uq_evals_per_sample": bench.uq.evals_per_sample,
               "xec": {c["kind"]: c["xec"] for c in cells}}
    return ExperimentReport(cfg, cfg.content_hash(bench.dataset), summary,
                            {"fig2_xec.csv": cells, "fig2_curves.csv": curves})


def _cell_row(cfg, kind, value, levels, note, excluded, n, xai_evals):
    return {"dataset": cfg.dataset, "model": cfg.model, "method": cfg.explainer, "kind": kind,
            "xec": value, "xec_defined": bool(np.isfinite(value)), "strong": bool(value < -0.6),
            "n_levels": len(levels), "n": n, "n_excluded": excluded, "xai_evals": xai_evals, "note": note}


def run_stratified_validation(cfg: ExperimentConfig, dataset=None, bench: Workbench | None = None) -> ExperimentReport:
    """Per-stratum tau distributions under low-level Gaussian noise."""
    bench = bench or build_workbench(cfg, dataset)
    test = bench.test
    u_clean = bench.uq(test.features)
    bins = tertiles(u_clean)
    if min(len(b) for b in bins) < cfg.group_size:
        raise ValueError(f"insufficient samples per stratum: {min(len(b) for b in bins)} < {cfg.group_size}")
    rng = np.random.default_rng(cfg.seed)
    chosen = {name: np.sort(rng.choice(b, size=cfg.group_size, replace=False)) for name, b in zip(STRATA, bins)}
    idx = np.concatenate([chosen[s] for s in STRATA])
    stratum = np.repeat(STRATA, cfg.group_size)
    X = test.features[idx]
    split_std = test.features.std(axis=0)
    targets = bench.explainer.default_targets(X)
    phi0, evals0 = bench.explainer.explain(X, targets, idx)
    rows, stats = [], []
    for sigma in cfg.strat_sigmas:
        spec = PerturbationSpec("gaussian", sigma, cfg.noise_seed)
        taus, _, ev = _taus_and_scores(bench, X, phi0, targets, idx, spec, cfg.strat_seeds, split_std)
        per_sample = _nanmean(taus, axis=0)
        for i, s, t, e in zip(idx, stratum, per_sample, ev):
            rows.append({"sigma": sigma, "stratum": s, "index": int(i), "epistemic": float(u_clean[i]), "tau": float(t),
                         "xai_evals": int(e)})
        for s in STRATA:
            v = per_sample[stratum == s]
            v = v[np.isfinite(v)]
            stats.append({"sigma": sigma, "stratum": s, "mean": float(v.mean()), "median": float(np.median(v)),
                          "std": float(v.std()), "n": int(v.size),
                          "xai_evals": float(ev[stratum == s].sum() + evals0[stratum == s].sum())})
    summary = {"bin_sizes": [len(b) for b in bins], "strata": stats,
               "epistemic_cv": epistemic_summary(u_clean).cv}
    return ExperimentReport(cfg, cfg.content_hash(bench.dataset), summary,
                            {"fig3_strata.csv": rows, "fig3_summary.csv": stats})


@dataclass
class MixedNoisePopulation:
    epistemic: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray
    index: np.ndarray
    uq_evals: float
    xai_evals: float
    native_ensemble: bool


def mixed_noise_population(bench: Workbench, cfg: ExperimentConfig) -> MixedNoisePopulation:
    """Per (sigma, sample) averages over perturbed versions, pooled across sigmas."""
    test = bench.test
    idx = eval_subset(len(test), cfg.gate_samples, cfg.seed)
    X = test.features[idx]
    split_std = test.features.std(axis=0)
    targets = bench.explainer.default_targets(X)
    phi0, evals0 = bench.explainer.explain(X, targets, idx)
    eps, taus, sig, index, xai = [], [], [], [], [evals0]
    for k, sigma in enumerate(cfg.gate_sigmas):
        spec = PerturbationSpec("gaussian", sigma, cfg.noise_seed + 1000 * k)
        t, u, ev = _taus_and_scores(bench, X, phi0, targets, idx, spec, cfg.gate_versions, split_std)
        eps.append(u.mean(axis=0))
        taus.append(_nanmean(t, axis=0))
        sig.append(np.full(len(idx), sigma))
        index.append(idx)
        xai.append(ev / cfg.gate_versions)
    return MixedNoisePopulation(np.concatenate(eps), np.concatenate(taus), np.concatenate(sig),
                                np.concatenate(index), float(bench.uq.evals_per_sample),
                                float(np.mean(np.concatenate(xai))), bench.uq.native_ensemble)


def gating_tables(pop: MixedNoisePopulation, cfg: ExperimentConfig, label: dict | None = None):
    """Precision/recall rows, cost-benefit rows and scatter rows for one population."""
    label = label or {}
    ok = np.isfinite(pop.tau)
    u, tau = pop.epistemic[ok], pop.tau[ok]
    stable = tau >= STABLE_TAU
    cost = CostModel(pop.uq_evals, pop.xai_evals, pop.native_ensemble)
    pr = []
    for nu in cfg.nu_pr:
        pol = calibrate_threshold(u, nu)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            p, r = precision_recall(pol.accepted, stable)
        pr.append({**label, "nu": nu, "precision": p, "recall": r, "nu_achieved": float(pol.deferred.mean()),
                   "threshold": pol.threshold, "n": int(u.size)})
    tab4 = []
    for nu in cfg.nu_cost:
        pol = calibrate_threshold(u, nu)
        acc = tau[pol.accepted]
        q_formula = relative_cost(cost, nu)
        q = 1.0 if nu == 0 else q_formula  # nu = 0 is the ungated baseline
        tab4.append({**label, "nu": nu, "stability_mean": float(acc.mean()), "stability_std": float(acc.std()),
                     "q": q, "q_rounded": round(q, 2), "q_formula": q_formula, "m": cost.m,
                     "d_evals": cost.d_evals, "native_ensemble": cost.native_ensemble, "n_accepted": int(acc.size)})
    cuts = {nu: calibrate_threshold(u, nu).threshold for nu in (0.3, 0.5, 0.7)}
    scatter = [{**label, "index": int(i), "sigma": float(s), "epistemic": float(e), "tau": float(t),
                "label": "stable" if t >= STABLE_TAU else "unstable"}
               for i, s, e, t in zip(pop.index[ok], pop.sigma[ok], u, tau)]
    return pr, tab4, scatter, cuts


def run_mixed_noise_gating(cfg: ExperimentConfig, dataset=None, bench: Workbench | None = None) -> ExperimentReport:
    bench = bench or build_workbench(cfg, dataset)
    pop = mixed_noise_population(bench, cfg)
    label = {"dataset": cfg.dataset, "model": cfg.model, "method": cfg.explainer}
    pr, tab4, scatter, cuts = gating_tables(pop, cfg, label)
    summary = {"population": int(pop.tau.size), "n_undefined_tau": int(np.sum(~np.isfinite(pop.tau))),
               "stable_fraction": float(np.mean(pop.tau[np.isfinite(pop.tau)] >= STABLE_TAU)),
               "uq_evals_per_sample": pop.uq_evals, "xai_evals_per_sample": pop.xai_evals,
               "native_ensemble": pop.native_ensemble, "cut_thresholds": cuts,
               "precision_recall": pr, "cost_benefit": tab4}
    return ExperimentReport(cfg, cfg.content_hash(bench.dataset), summary,
                            {"tab3_pr.csv": pr, "tab4_cost.csv": tab4, "figB_scatter.csv": scatter})


def log_odds(P, clip: float = 1e-6):
    """Per-class ``log(p / (1 - p))`` after clipping; returns ``(L, n_clipped_rows)``."""
    P = np.asarray(P, dtype=float)
    Pc = np.clip(P, clip, 1.0 - clip)
    clipped = int(np.sum(np.any(Pc != P, axis=-1)))
    return np.log(Pc) - np.log1p(-Pc), clipped


def removal_shift(model, X, phi, k: int, fill) -> tuple[np.ndarray, int]:
    """Log-odds MSE (averaged over classes) after replacing each row's top-``k`` |phi| features."""
    X = np.atleast_2d(X)
    L0, c0 = log_odds(model.predict_proba(X))
    if k == 0:
        return np.zeros(X.shape[0]), c0
    Xr = X.copy()
    top = np.argsort(-np.abs(phi), axis=1, kind="stable")[:, :k]
    rows = np.arange(X.shape[0])[:, None]
    Xr[rows, top] = np.asarray(fill)[top]
    L1, c1 = log_odds(model.predict_proba(Xr))
    return np.mean((L0 - L1) ** 2, axis=1), c0 + c1


def run_feature_removal(cfg: ExperimentConfig, dataset=None, bench: Workbench | None = None) -> ExperimentReport:
    """Prediction shift after median-replacing the top-k attributed features, per epistemic group."""
    bench = bench or build_workbench(cfg, dataset)
    test = bench.test
    u = bench.uq(test.features)
    groups = epistemic_groups(u, cfg.group_size, cfg.seed)
    rows = []
    for name in ("low", "high", "random"):
        idx = groups[name]
        X = test.features[idx]
        phi, ev = bench.explainer.explain(X, None, idx)
        for k in range(1, cfg.removal_k + 1):
            mse, clipped = removal_shift(bench.model, X, phi, k, bench.train_median)
            rows.append({"group": name, "k": k, "mse_mean": float(mse.mean()), "mse_std": float(mse.std()),
                         "n": int(mse.size), "n_clipped": clipped, "epistemic_mean": float(u[idx].mean()),
                         "xai_evals": float(ev.mean()), "model_evals": 2 * int(mse.size)})
    summary = {"groups": {g: v.tolist() for g, v in groups.items()}, "rows": rows}
    return ExperimentReport(cfg, cfg.content_hash(bench.dataset), summary, {"fig4_removal.csv": rows})


def signal_mass(phi, n_signal: int) -> np.ndarray:
    """Share of ``|phi|`` on the first ``n_signal`` columns (NaN for zero total)."""
    a = np.abs(np.atleast_2d(phi))
    tot = a.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, a[:, :n_signal].sum(axis=1) / tot, np.nan)


def augment_with_noise(ds: TabularDataset, ratio: int, seed: int) -> TabularDataset:
    """Append ``ratio * d`` standard-normal columns (the data are already standardized)."""
    d = ds.n_features
    noise = np.random.default_rng(seed).standard_normal((len(ds), ratio * d))
    names = tuple(ds.schema.feature_names) + tuple(f"noise{j}" for j in range(ratio * d))
    schema = DatasetSchema(ds.schema.name, names, ds.schema.n_classes)
    return TabularDataset(np.hstack([ds.features, noise]), ds.labels.copy(), schema, dict(ds.meta))


def run_signal_mass(cfg: ExperimentConfig, dataset=None) -> ExperimentReport:
    """Attribution share on genuine features after adding noise columns and retraining."""
    ds = load_experiment_dataset(cfg) if dataset is None else dataset
    train, val, test, _ = prepare(ds, cfg.seed)
    d = ds.n_features
    ratios = cfg.noise_ratios or ((1, 2, 5, 10) if cfg.model == "rf" else (1, 2, 3))
    rows = []
    for r in ratios:
        tr, va, te = (augment_with_noise(part, r, cfg.seed + 7919 * r + j) for j, part in enumerate((train, val, test)))
        model = train_model(cfg, tr, va)
        uq = build_uq(cfg, model, tr)
        background = sample_background(tr.features, cfg.n_background, cfg.seed)
        params = {"n_samples": cfg.lime_samples} if cfg.explainer == "lime" else {}
        explainer = Explainer(cfg.explainer, model, background, fit_standardizer(tr.features), cfg.seed, **params)
        u = uq(te.features)
        groups = epistemic_groups(u, cfg.group_size, cfg.seed)
        for name in ("low", "high", "random"):
            idx = groups[name]
            phi, ev = explainer.explain(te.features[idx], None, idx)
            sm = signal_mass(phi, d)
            ok = np.isfinite(sm)
            rows.append({"ratio": r, "group": name, "signal_mass": float(sm[ok].mean()) if ok.any() else math.nan,
                         "noise_mass": float(1 - sm[ok].mean()) if ok.any() else math.nan,
                         "std": float(sm[ok].std()) if ok.any() else math.nan,
                         "n": int(ok.sum()), "n_flagged": int((~ok).sum()), "xai_evals": float(ev.mean())})
    return ExperimentReport(cfg, cfg.content_hash(ds), {"rows": rows, "d_signal": d}, {"figC_signalmass.csv": rows})


RUNNERS = {
    "correlation": run_correlation_study,
    "stratified": run_stratified_validation,
    "gating": run_mixed_noise_gating,
    "removal": run_feature_removal,
    "signal_mass": run_signal_mass,
}


def run(cfg: ExperimentConfig, dataset=None) -> ExperimentReport:
    return RUNNERS[cfg.study](cfg, dataset)

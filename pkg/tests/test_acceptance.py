"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Criteria 4 to 9 need the public datasets under ``$EPIGATE_DATA_DIR``; without
them they fail with the loader's message. Run directly with
``python3 tests/test_acceptance.py`` or through pytest.
"""
import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
import conftest  # noqa: E402

from epigate import oracles  # noqa: E402
from epigate.attribution import integrated_gradients  # noqa: E402
from epigate.data import DatasetError, prepare, synth_blobs  # noqa: E402
from epigate.experiments import ExperimentConfig, load_experiment_dataset, run, train_model  # noqa: E402
from epigate.gating import CostModel, relative_cost  # noqa: E402
from epigate.models import LinearClassifier, MlpConfig, f1, train_mlp  # noqa: E402
from epigate.perturbation import LEVEL_GRIDS, AttackConfig, bim_attack, cw_attack, pgd_attack  # noqa: E402
from epigate.stability import SweepCurve, epistemic_growth, xec  # noqa: E402

pytestmark = pytest.mark.acceptance


def _record(number, title, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2} {title}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)


def criterion(number, title):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
                _record(number, title, False, msg)
                raise
            _record(number, title, True, detail or "ok")
        return wrapper
    return deco


@functools.lru_cache(maxsize=None)
def report(study, dataset, **kw):
    return run(ExperimentConfig(study=study, dataset=dataset, **kw))


def per_dataset(fn, names):
    """``{name: result or exception}`` so one missing dataset does not hide the others."""
    out = {}
    for name in names:
        try:
            out[name] = fn(name)
        except DatasetError as exc:
            out[name] = exc
    return out


def _fmt(results):
    return "; ".join(f"{k}: {v}" for k, v in results.items())


# ---------------------------------------------------------------------------


@criterion(1, "oracle equivalence")
def test_criterion_1_oracle_equivalence():
    start = time.perf_counter()
    tree, kernel = oracles.shapley_checks(n_forests=100, seed=0)
    elapsed = time.perf_counter() - start
    assert tree["max_diff"] < 1e-9, f"tree_shap max diff {tree['max_diff']:.3e}"
    assert kernel["max_diff"] < 1e-6, f"kernel_shap max diff {kernel['max_diff']:.3e}"
    assert elapsed < 120, f"runtime {elapsed:.1f}s"
    return f"tree {tree['max_diff']:.1e}, kernel {kernel['max_diff']:.1e}, {elapsed:.1f}s"


@criterion(2, "numerical checks")
def test_criterion_2_numerical_checks():
    checks = {c["name"]: c for c in oracles.gradient_checks(seed=0, n_coords=24) + oracles.ig_checks(seed=0, steps=500)}
    for name in ("mlp_param_grad_fd", "mlp_input_grad_fd"):
        assert checks[name]["coords"] >= 20
        assert checks[name]["max_diff"] < 1e-4, f"{name} rel err {checks[name]['max_diff']:.2e}"
    assert checks["ig_completeness"]["max_diff"] < 1e-2, f"IG rel err {checks['ig_completeness']['max_diff']:.2e}"
    rng = np.random.default_rng(11)
    lin = LinearClassifier(rng.standard_normal((3, 6)), rng.standard_normal(3))
    for _ in range(20):
        x = rng.standard_normal(6)
        a = integrated_gradients(lin, x, 0.0, int(rng.integers(1, 500)))
        assert np.array_equal(a.values, lin.weights[a.target_class] * x), "IG on a linear logit is not w*x"
    return (f"grad {max(checks['mlp_param_grad_fd']['max_diff'], checks['mlp_input_grad_fd']['max_diff']):.1e}, "
            f"IG {checks['ig_completeness']['max_diff']:.1e}, linear exact")


@criterion(3, "metric correctness")
def test_criterion_3_metric_correctness():
    tau, rho = oracles.rank_checks(seed=0, n=200)
    assert tau["max_diff"] == 0.0, f"tau differs by {tau['max_diff']:.1e}"
    assert rho["max_diff"] == 0.0, f"rho differs by {rho['max_diff']:.1e}"
    rng = np.random.default_rng(5)
    for _ in range(50):
        n_levels = int(rng.integers(3, 9))
        u_clean = rng.uniform(0.01, 1, 40)
        u_pert = [u_clean * rng.uniform(0.5, 3, 40) for _ in range(n_levels)]
        xd = rng.uniform(-1, 1, n_levels)
        ratio = [epistemic_growth(u_clean, u, "ratio") for u in u_pert]
        absolute = [epistemic_growth(u_clean, u, "absolute") for u in u_pert]
        levels = np.arange(n_levels)
        assert xec(SweepCurve(levels, xd, ratio)) == xec(SweepCurve(levels, xd, absolute))
    return "tau and rho exact on 200 permutations; XEC identical on 50 sweeps"


REFERENCE_F1 = {("wine", "lr"): (0.736, 0.05), ("wine", "rf"): (0.810, 0.05), ("rice", "rf"): (0.919, 0.05),
                ("wine", "mlp"): (0.764, 0.06), ("rice", "mlp"): (0.930, 0.06)}


@criterion(4, "model quality")
def test_criterion_4_model_quality():
    scores = {}
    for (name, kind), (target, tol) in REFERENCE_F1.items():
        cfg = ExperimentConfig(dataset=name, model=kind, explainer="ig" if kind != "rf" else "tree_shap")
        train, val, test, _ = prepare(load_experiment_dataset(cfg), cfg.seed)
        model = train_model(cfg, train, val)
        scores[(name, kind)] = f1(test.labels, model.predict(test.features))
    bad = {k: v for k, v in scores.items() if abs(v - REFERENCE_F1[k][0]) > REFERENCE_F1[k][1]}
    assert not bad, f"F1 out of tolerance: {bad}"
    return ", ".join(f"{n}/{k} {v:.3f}" for (n, k), v in scores.items())


@criterion(5, "XEC reproduction")
def test_criterion_5_xec():
    def one(name):
        start = time.perf_counter()
        rep = report("correlation", name, kinds=("gaussian",), levels=LEVEL_GRIDS["gaussian"], n_eval=100)
        elapsed = time.perf_counter() - start
        assert elapsed < 30 * 60, f"{name} took {elapsed:.0f}s"
        return rep.tables["fig2_xec.csv"][0]["xec"]

    res = per_dataset(one, ("wine", "bean", "rice"))
    hits = [k for k, v in res.items() if not isinstance(v, Exception) and v < -0.6]
    assert len(hits) >= 2, f"XEC < -0.6 on {len(hits)} of 3 ({_fmt(res)})"
    return _fmt(res)


@criterion(6, "stratified ordering")
def test_criterion_6_stratified():
    def one(name):
        stats = report("stratified", name).tables["fig3_summary.csv"]
        means = {(r["sigma"], r["stratum"]): r["mean"] for r in stats}
        for sigma in (0.01, 0.05, 0.1):
            lo, mid, hi = (means[(sigma, s)] for s in ("low", "medium", "high"))
            assert lo > mid > hi, f"{name} sigma={sigma}: {lo:.3f}, {mid:.3f}, {hi:.3f}"
        gap = means[(0.1, "low")] - means[(0.1, "high")]
        assert gap >= 0.05, f"{name} gap {gap:.3f}"
        return f"gap {gap:.3f}"

    res = {name: one(name) for name in ("bean", "rice")}
    return _fmt(res)


@criterion(7, "gating trade-off")
def test_criterion_7_gating():
    def at_half(name):
        return next(r for r in report("gating", name).tables["tab3_pr.csv"] if r["nu"] == 0.5)

    bean, rice = at_half("bean"), at_half("rice")
    assert bean["precision"] >= 0.95, f"bean precision {bean['precision']:.3f}"
    assert abs(bean["recall"] - 0.614) <= 0.10, f"bean recall {bean['recall']:.3f}"
    assert rice["precision"] >= 0.95, f"rice precision {rice['precision']:.3f}"
    return f"bean P {bean['precision']:.3f} R {bean['recall']:.3f}; rice P {rice['precision']:.3f}"


def _audited_q(model, explainer):
    """Cost rows from a small gating run whose model_evals are counted, not assumed."""
    cfg = ExperimentConfig(study="gating", dataset="synth_blobs", model=model, explainer=explainer, gate_samples=20,
                           gate_versions=1, gate_sigmas=(0.05, 0.1), n_trees=20, max_depth=6, mlp_hidden=(16,),
                           mlp_epochs=10, n_background=20, lime_samples=5000)
    rows = run(cfg).tables["tab4_cost.csv"]
    for r in rows:
        cost = CostModel(r["m"], r["d_evals"], r["native_ensemble"])
        overhead = 1.0 if r["native_ensemble"] else r["m"]
        assert r["q_formula"] == relative_cost(cost, r["nu"]) == overhead / r["d_evals"] + (1 - r["nu"])
    return rows


@criterion(8, "cost-benefit")
def test_criterion_8_cost():
    native = _audited_q("rf", "tree_shap")
    lime = _audited_q("mlp", "lime")
    assert [r["q_rounded"] for r in native] == [0.30, 0.50, 0.70, 1.00]
    assert lime[0]["m"] / lime[0]["d_evals"] == 0.01
    assert [r["q_rounded"] for r in lime] == [0.31, 0.51, 0.71, 1.00]
    rows = {r["nu"]: r for r in report("gating", "rice").tables["tab4_cost.csv"]}
    half, base = rows[0.5]["stability_mean"], rows[0.0]["stability_mean"]
    assert abs(half - 0.965) <= 0.05, f"rice tau at nu=0.5 is {half:.3f}"
    assert half > base, f"rice tau {half:.3f} not above ungated {base:.3f}"
    return f"q native/lime match; rice tau {half:.3f} vs {base:.3f}"


@criterion(9, "faithfulness properties")
def test_criterion_9_faithfulness():
    rows = report("removal", "bean").tables["fig4_removal.csv"]
    mse = {(r["group"], r["k"]): r["mse_mean"] for r in rows}
    for k in range(1, 6):
        assert mse[("low", k)] > mse[("high", k)], f"bean k={k}: {mse[('low', k)]:.3f} <= {mse[('high', k)]:.3f}"

    def one(name):
        sm = {(r["ratio"], r["group"]): r["signal_mass"] for r in report("signal_mass", name).tables["figC_signalmass.csv"]}
        ratios = sorted({r for r, _ in sm})
        return all(sm[(r, "low")] > sm[(r, "high")] for r in ratios)

    res = per_dataset(one, ("wine", "bean", "rice"))
    ok = [k for k, v in res.items() if v is True]
    assert len(ok) >= 2, f"signal mass ordering holds on {len(ok)} of 3 ({_fmt(res)})"
    return f"removal ordered for k=1..5; signal mass {_fmt(res)}"


@criterion(10, "attack contracts")
def test_criterion_10_attacks():
    train, val, test, _ = prepare(synth_blobs(600, np.eye(3, 5) * 2.5, 1.0, seed=1), seed=0)
    net = train_mlp(train, val, MlpConfig(hidden=(16,), max_epochs=20, seed=0))
    X = test.features[:60]
    cfg = AttackConfig()
    for eps in LEVEL_GRIDS["bim"]:
        assert cfg.bim_alpha(eps) == 0.25 * eps and cfg.pgd_alpha(eps) == 0.125 * eps
        for Xa in (bim_attack(net, X, eps=eps), pgd_attack(net, X, eps=eps, seed=3)):
            worst = float(np.max(np.abs(Xa - X)))
            assert worst <= eps, f"linf {worst!r} > {eps}"
    assert np.array_equal(cw_attack(net, X, c=0.0), X)
    return "linf bound exact, alpha 0.25eps/0.125eps, C&W c=0 identity"


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(int(code))

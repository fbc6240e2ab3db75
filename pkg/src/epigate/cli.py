"""``epigate`` command line: train, explain, uncertainty, gate, experiment, oracle-check.

Exit codes: 0 success, 1 runtime failure (an ``error.json`` record is written
to the output directory and echoed on stderr), 2 usage or configuration error.
Every successful run writes ``manifest.json`` beside its outputs.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import platform
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
EXPERIMENT_ALIASES = {
    "correlation": "correlation", "fig2": "correlation",
    "stratified": "stratified", "fig3": "stratified",
    "gating": "gating", "table3": "gating", "table4": "gating", "figB": "gating",
    "removal": "removal", "fig4": "removal",
    "signal_mass": "signal_mass", "figC": "signal_mass",
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _versions() -> dict:
    import numba
    import scipy
    import sklearn
    return {"epigate": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__, "numba": numba.__version__}


def write_manifest(out: Path, command: str, args: dict, outputs, seeds: dict, config: dict | None = None):
    manifest = {"command": command, "args": args, "config": config or {}, "seeds": seeds,
                "outputs": sorted(str(Path(p).name) for p in outputs), "versions": _versions()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str))


def _set_jobs(jobs):
    import numba
    n = jobs or os.cpu_count() or 1
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _splits(dataset: str, seed: int):
    """``(train, val, test, standardizer)`` exactly as the experiments prepare them."""
    from .data import prepare
    from .experiments import ExperimentConfig, load_experiment_dataset
    return prepare(load_experiment_dataset(ExperimentConfig(dataset=dataset, seed=seed)), seed)


def _read_matrix(path) -> np.ndarray:
    with open(path) as fh:
        rows = [r for r in csv.reader(ln for ln in fh if not ln.startswith("#"))]
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    return np.array([[float(v) for v in r] for r in rows if r], dtype=float)


def _coerce(value: str, default):
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        items = [v.strip() for v in value.split(",") if v.strip()]
        out = []
        for v in items:
            try:
                out.append(int(v))
            except ValueError:
                try:
                    out.append(float(v))
                except ValueError:
                    out.append(v)
        return tuple(out)
    return value.strip()


def read_experiment_config(path) -> dict:
    """Keys of the ``[experiment]`` INI section, coerced to the config field types."""
    from .experiments import ExperimentConfig
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise UsageError(f"cannot read config file {path}")
    if "experiment" not in parser:
        raise UsageError("config file needs an [experiment] section")
    defaults = {f.name: f.default for f in fields(ExperimentConfig)}
    out = {}
    for key, value in parser["experiment"].items():
        if key not in defaults:
            raise UsageError(f"unknown config key {key!r}")
        out[key] = _coerce(value, defaults[key])
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_train(args, out: Path):
    from .models import LogisticConfig, save_model, train_bootstrap_logistic
    from .experiments import ExperimentConfig, train_model
    train, val, _, std = _splits(args.dataset, args.seed)
    if args.model == "lr_bootstrap":
        model = train_bootstrap_logistic(train, args.members, LogisticConfig(seed=args.seed))
    else:
        cfg = ExperimentConfig(dataset=args.dataset, model=args.model, seed=args.seed, explainer="kernel_shap",
                               n_trees=args.trees, max_depth=args.max_depth)
        model = train_model(cfg, train, val)
    extra = {"dataset": args.dataset, "seed": args.seed, "means": std.means, "stds": std.stds,
             "n_train": len(train), "n_val": len(val)}
    path = save_model(model, out / f"{args.dataset}_{args.model}.zip", extra)
    return [path], {"seed": args.seed}


def _model_and_data(args):
    from .models import load_model
    model, header = load_model(args.model)
    extra = header["extra"]
    dataset = args.dataset or extra.get("dataset")
    seed = extra.get("seed", 0)
    train, val, test, _ = _splits(dataset, seed)
    data = {"train": train, "val": val, "test": test}[args.split]
    if args.data:
        X = (_read_matrix(args.data) - np.array(extra["means"])) / np.array(extra["stds"])
    else:
        X = data.features
    if args.n is not None:
        X = X[: args.n]
    return model, header, X, train


def cmd_explain(args, out: Path):
    from .attribution import Explainer, export_attributions, sample_background
    from .data import fit_standardizer
    model, header, X, train = _model_and_data(args)
    background = sample_background(train.features, args.background, args.seed)
    params = {"n_samples": args.lime_samples} if args.method == "lime" else {}
    if args.method == "kernel_shap":
        params["n_coalitions"] = args.coalitions if args.coalitions == "auto" else int(args.coalitions)
    explainer = Explainer(args.method, model, background, fit_standardizer(train.features), args.seed, **params)
    targets = explainer.default_targets(X)
    values, evals = explainer.explain(X, targets)
    path = out / f"attributions_{args.method}.{args.format}"
    export_attributions(path, values, args.method, targets, evals, args.format)
    return [path], {"seed": args.seed, "background_seed": args.seed}


def cmd_uncertainty(args, out: Path):
    from .models import load_model
    from .uncertainty import epistemic_summary, native_epistemic, surrogate_epistemic
    model, _, X, _ = _model_and_data(args)
    if args.surrogate:
        scores = surrogate_epistemic(load_model(args.surrogate)[0], X, args.reduction)
    else:
        scores = native_epistemic(model, X, args.reduction, args.seed)
    path = out / "epistemic.csv"
    scores.to_csv(path)
    s = epistemic_summary(scores.values)
    spath = out / "epistemic_summary.json"
    spath.write_text(json.dumps({"mean": s.mean, "std": s.std, "cv": s.cv if s.cv_defined else None,
                                 "source": scores.source, "reduction": scores.class_reduction,
                                 "n_members": scores.n_members}, indent=1, sort_keys=True))
    return [path, spath], {"seed": args.seed}


def _read_column(path, name):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows or name not in rows[0]:
        raise UsageError(f"{path} has no column {name!r}")
    return np.array([float(r[name]) for r in rows])


def cmd_gate(args, out: Path):
    from .gating import CostModel, gate_report
    scores = _read_column(args.scores, args.score_column)
    taus = _read_column(args.taus, "tau") if args.taus else None
    cost = CostModel(args.m, args.d_evals, args.native) if args.d_evals else None
    rep = gate_report(scores, args.nu, args.mode, taus, cost)
    jp, cp = out / "gate_report.json", out / "gate_decisions.csv"
    rep.to_json(jp)
    rep.to_csv(cp)
    return [jp, cp], {}


def cmd_experiment(args, out: Path):
    from .experiments import ExperimentConfig, run
    conf = read_experiment_config(args.config) if args.config else {}
    if args.name:
        conf["study"] = EXPERIMENT_ALIASES[args.name]
    for key in ("dataset", "model", "explainer"):
        if getattr(args, key):
            conf[key] = getattr(args, key)
    if args.seed is not None:
        conf["seed"] = args.seed
    try:
        cfg = ExperimentConfig.from_dict(conf)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e
    report = run(cfg)
    written = report.write(out)
    return written, {"seed": cfg.seed, "noise_seed": cfg.noise_seed}, cfg.to_dict()


def cmd_oracle_check(args, out: Path):
    from . import oracles
    results = oracles.run_all(n_forests=args.forests, seed=args.seed or 0)
    path = out / "oracle_check.json"
    path.write_text(json.dumps(results, indent=1, sort_keys=True))
    for r in results["checks"]:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: max_diff={r['max_diff']:.3e} "
              f"(tol {r['tol']:.0e})")
    if not results["passed"]:
        raise OracleMismatch("; ".join(r["name"] for r in results["checks"] if not r["passed"]))
    return [path], {"seed": args.seed or 0}


class OracleMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epigate", description="Uncertainty-gated explanations for tabular classifiers.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=None, help="worker threads (default: logical cores)")
    common.add_argument("--out", default="epigate_out", help="output directory")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a model and save it")
    t.add_argument("--dataset", required=True)
    t.add_argument("--model", choices=("rf", "lr", "lr_bootstrap", "mlp"), required=True)
    t.add_argument("--trees", type=int, default=100)
    t.add_argument("--max-depth", type=int, default=15)
    t.add_argument("--members", type=int, default=20)

    for name, helptext in (("explain", "attributions for a data split"),
                           ("uncertainty", "epistemic scores for a data split")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--model", required=True, help="model file written by train")
        s.add_argument("--dataset", default=None, help="defaults to the dataset recorded in the model")
        s.add_argument("--split", choices=("train", "val", "test"), default="test")
        s.add_argument("--data", default=None, help="CSV of raw features instead of a split")
        s.add_argument("--n", type=int, default=None, help="only the first n rows")
        if name == "explain":
            s.add_argument("--method", required=True,
                           choices=("kernel_shap", "tree_shap", "lime", "ig", "smoothgrad", "smooth_ig", "exact_shapley"))
            s.add_argument("--background", type=int, default=100)
            s.add_argument("--coalitions", default="auto")
            s.add_argument("--lime-samples", type=int, default=5000)
            s.add_argument("--format", choices=("csv", "json"), default="csv")
        else:
            s.add_argument("--surrogate", default=None, help="random-forest model file for opaque models")
            s.add_argument("--reduction", choices=("predicted_class", "mean_over_classes"), default="predicted_class")

    g = sub.add_parser("gate", parents=[common], help="calibrate a gate and decide every sample")
    g.add_argument("--scores", required=True, help="CSV with a score column (e.g. epistemic.csv)")
    g.add_argument("--score-column", default="value")
    g.add_argument("--taus", default=None, help="CSV with a tau column, for precision/recall")
    g.add_argument("--nu", type=float, required=True)
    g.add_argument("--mode", choices=("route", "defer"), default="defer")
    g.add_argument("--m", type=float, default=1.0, help="UQ model evaluations per sample")
    g.add_argument("--d-evals", type=float, default=None, help="XAI model evaluations per sample")
    g.add_argument("--native", action="store_true", help="the explained model is itself the ensemble")

    e = sub.add_parser("experiment", parents=[common], help="run a study and write its report")
    e.add_argument("--name", choices=sorted(EXPERIMENT_ALIASES), default=None)
    e.add_argument("--config", default=None, help="INI file with an [experiment] section")
    e.add_argument("--dataset", default=None)
    e.add_argument("--model", default=None)
    e.add_argument("--explainer", default=None)

    o = sub.add_parser("oracle-check", parents=[common], help="run brute-force oracle checks")
    o.add_argument("--forests", type=int, default=100)
    return p


COMMANDS = {"train": cmd_train, "explain": cmd_explain, "uncertainty": cmd_uncertainty, "gate": cmd_gate,
            "experiment": cmd_experiment, "oracle-check": cmd_oracle_check}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    if args.command == "experiment" and not (args.name or args.config):
        parser.error("experiment needs --name or --config")
    if args.command in ("train", "explain", "uncertainty") and args.seed is None:
        args.seed = 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        _set_jobs(args.jobs)
        result = COMMANDS[args.command](args, out)
    except UsageError as exc:
        _error(out, exc, EXIT_USAGE)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        _error(out, exc, EXIT_RUNTIME)
        return EXIT_RUNTIME
    outputs, seeds = result[0], result[1]
    config = result[2] if len(result) > 2 else None
    write_manifest(out, args.command, {k: v for k, v in vars(args).items() if k != "command"}, outputs, seeds, config)
    print(f"{args.command}: wrote {len(outputs)} file(s) to {out} in {time.perf_counter() - start:.1f}s")
    return EXIT_OK


def _error(out: Path, exc: Exception, code: int):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    (out / "error.json").write_text(json.dumps(record, indent=1, sort_keys=True))
    print(json.dumps(record), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

import json
import subprocess
import sys

import numpy as np
import pytest

from epigate import oracles
from epigate.cli import main, read_experiment_config


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert run_cli("train", "--dataset", "synth_blobs", "--model", "rf", "--trees", 10, "--max-depth", 5,
                   "--out", out) == 0
    return out


def test_train_writes_model_and_manifest(trained):
    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["outputs"] == ["synth_blobs_rf.zip"] and manifest["seeds"] == {"seed": 0}
    assert "numpy" in manifest["versions"]


def test_train_is_byte_reproducible(trained, tmp_path):
    assert run_cli("train", "--dataset", "synth_blobs", "--model", "rf", "--trees", 10, "--max-depth", 5,
                   "--out", tmp_path) == 0
    assert (tmp_path / "synth_blobs_rf.zip").read_bytes() == (trained / "synth_blobs_rf.zip").read_bytes()


def test_explain_records_model_evals(trained, tmp_path):
    model = trained / "synth_blobs_rf.zip"
    assert run_cli("explain", "--model", model, "--method", "tree_shap", "--n", 7, "--background", 20,
                   "--format", "json", "--out", tmp_path) == 0
    js = json.loads((tmp_path / "attributions_tree_shap.json").read_text())
    rows = js["rows"] if isinstance(js, dict) and "rows" in js else js
    assert len(rows) == 7 and all(r["model_evals"] > 0 for r in rows)


def test_uncertainty_and_gate(trained, tmp_path):
    model = trained / "synth_blobs_rf.zip"
    assert run_cli("uncertainty", "--model", model, "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "epistemic_summary.json").read_text())
    assert summary["source"] == "tree_variance" and summary["n_members"] == 10
    assert run_cli("gate", "--scores", tmp_path / "epistemic.csv", "--nu", 0.5, "--d-evals", 1e4, "--native",
                   "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "gate_report.json").read_text())
    assert rep["q"] == pytest.approx(0.5001) and rep["nu_achieved"] == pytest.approx(0.5, abs=1 / rep["n"])


def test_experiment_alias_precision_recall(tmp_path):
    ini = tmp_path / "small.ini"
    ini.write_text("[experiment]\ndataset = synth_blobs\nsynth_d = 5\nn_trees = 15\nmax_depth = 5\n"
                   "n_background = 15\ngate_samples = 40\ngate_versions = 2\ngate_sigmas = 0.04, 0.3\n")
    assert read_experiment_config(ini)["gate_sigmas"] == (0.04, 0.3)
    assert run_cli("experiment", "--name", "table3", "--config", ini, "--out", tmp_path) == 0
    lines = (tmp_path / "tab3_pr.csv").read_text().splitlines()
    header = lines[0].split(",")
    nus = [float(ln.split(",")[header.index("nu")]) for ln in lines[1:]]
    assert nus == [0.9, 0.7, 0.5, 0.3, 0.1]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["study"] == "gating"


def test_oracle_check_passes(tmp_path, capsys):
    assert run_cli("oracle-check", "--forests", 10, "--out", tmp_path) == 0
    assert "PASS tree_shap_vs_exact" in capsys.readouterr().out


def test_corrupted_tree_shap_is_caught():
    from epigate.attribution import tree_shap_batch

    def off_by_a_bit(forest, X, Z, targets):
        vals, evals = tree_shap_batch(forest, X, Z, targets)
        return vals + 1e-6, evals

    res = oracles.run_all(n_forests=5, tree_shap_fn=off_by_a_bit)
    assert not res["passed"]
    assert [c["name"] for c in res["checks"] if not c["passed"]] == ["tree_shap_vs_exact"]


def test_bad_arguments_exit_two(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["train", "--model", "rf"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["experiment", "--out", str(tmp_path)])
    assert e.value.code == 2
    ini = tmp_path / "bad.ini"
    ini.write_text("[experiment]\nwhatever = 1\n")
    assert run_cli("experiment", "--config", ini, "--out", tmp_path) == 2
    assert json.loads((tmp_path / "error.json").read_text())["exit_code"] == 2


def test_missing_data_exit_one(tmp_path, monkeypatch):
    monkeypatch.setenv("EPIGATE_DATA_DIR", str(tmp_path / "empty"))
    assert run_cli("train", "--dataset", "wine", "--model", "lr", "--out", tmp_path) == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["exit_code"] == 1 and "wine" in err["message"].lower()
    assert not (tmp_path / "manifest.json").exists()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "epigate", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()

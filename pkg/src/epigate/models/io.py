"""Model files: a zip of ``.npy`` arrays plus a ``model.json`` header.

Entries carry a fixed timestamp so that identical models give identical bytes.
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .forest import DecisionTree, RandomForest
from .linear import BootstrapLogistic, LinearClassifier
from .mlp import MlpClassifier

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _arrays(model) -> tuple[dict, dict]:
    if isinstance(model, LinearClassifier):
        return {"weights": model.weights, "bias": model.bias}, {"l2_strength": model.l2_strength}
    if isinstance(model, BootstrapLogistic):
        arrays = {}
        for i, m in enumerate(model.members):
            arrays[f"m{i}_weights"], arrays[f"m{i}_bias"] = m.weights, m.bias
        return arrays, {"n_members": len(model.members), "seed": model.seed,
                        "l2_strength": model.members[0].l2_strength}
    if isinstance(model, RandomForest):
        arrays = {}
        for i, t in enumerate(model.trees):
            for name in ("children_left", "children_right", "feature", "threshold", "value"):
                arrays[f"t{i}_{name}"] = getattr(t, name)
        return arrays, {"n_trees": len(model.trees), "n_features": model.n_features,
                        "n_classes": model.n_classes, "seed": model.seed}
    if isinstance(model, MlpClassifier):
        return model.params(), {"n_layers": len(model.weights), "dropout": model.dropout,
                                "mc_samples": model.mc_samples, "layer_sizes": model.layer_sizes}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_model(model, path, extra: dict | None = None) -> Path:
    """Write ``model`` to ``path``; ``extra`` lands in the JSON header (seeds, standardizer...)."""
    arrays, arch = _arrays(model)
    header = {"format_version": FORMAT_VERSION, "kind": model.kind, "architecture": arch,
              "meta": _jsonable(getattr(model, "meta", {})), "extra": _jsonable(extra or {})}
    path = Path(path)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("model.json", date_time=_EPOCH)
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, json.dumps(header, sort_keys=True, indent=1))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())
    return path


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(model, header)``."""
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("model.json"))
        arrays = {n[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(n)), allow_pickle=False)
                  for n in zf.namelist() if n.endswith(".npy")}
    kind, arch, meta = header["kind"], header["architecture"], header["meta"]
    if kind == "lr":
        model = LinearClassifier(arrays["weights"], arrays["bias"], arch["l2_strength"], meta)
    elif kind == "lr_bootstrap":
        members = [LinearClassifier(arrays[f"m{i}_weights"], arrays[f"m{i}_bias"], arch["l2_strength"])
                   for i in range(arch["n_members"])]
        model = BootstrapLogistic(members, arch["seed"])
    elif kind == "rf":
        trees = [DecisionTree(*(arrays[f"t{i}_{n}"] for n in
                                ("children_left", "children_right", "feature", "threshold", "value")))
                 for i in range(arch["n_trees"])]
        model = RandomForest(trees, arch["n_features"], arch["n_classes"], arch["seed"], meta)
    elif kind == "mlp":
        n = arch["n_layers"]
        model = MlpClassifier([arrays[f"W{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)],
                              arch["dropout"], arch["mc_samples"], meta)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return model, header

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from epigate.data import (
    DatasetError,
    DatasetSchema,
    SplitSpec,
    TabularDataset,
    apply_standardizer,
    builtin_schema,
    fit_standardizer,
    load_dataset,
    load_named,
    read_schema,
    split,
    split_sizes,
    synth_linear_dataset,
)
from epigate.models import LogisticConfig, TrainingError, train_logistic


def _toy(n, d=2, k=2, seed=0):
    rng = np.random.default_rng(seed)
    schema = DatasetSchema("toy", tuple(f"x{i}" for i in range(d)), k)
    return TabularDataset(rng.standard_normal((n, d)), rng.integers(0, k, n), schema)


# --- split sizes ----------------------------------------------------------

@pytest.mark.parametrize("n, sizes", [
    (6497, (4547, 975, 975)),   # Wine
    (13611, (9527, 2042, 2042)),  # Dry Bean
    (3810, (2667, 571, 572)),   # Rice
    (336, (235, 50, 51)),       # Ecoli
    (10, (7, 1, 2)),
])
def test_split_sizes_match_dataset_table(n, sizes):
    assert split_sizes(n) == sizes


def test_split_is_deterministic():
    ds = _toy(10)
    a = split(ds, SplitSpec(seed=4))
    b = split(ds, SplitSpec(seed=4))
    assert [len(p) for p in a] == [7, 1, 2]
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.meta["indices"], q.meta["indices"])
        np.testing.assert_array_equal(p.features, q.features)


def test_split_membership_depends_on_row_order():
    ds = _toy(100)
    perm = np.random.default_rng(1).permutation(100)
    a = split(ds, SplitSpec(seed=0))[0]
    b = split(ds.subset(perm), SplitSpec(seed=0))[0]
    rows_a = {tuple(r) for r in a.features}
    rows_b = {tuple(r) for r in b.features}
    assert rows_a != rows_b


def test_split_rejects_tiny():
    with pytest.raises(DatasetError):
        split(_toy(2))


def test_split_fractions_must_sum_to_one():
    with pytest.raises(DatasetError):
        SplitSpec(0.7, 0.2, 0.2)


@given(n=st.integers(3, 400), seed=st.integers(0, 2**31))
def test_split_partition_property(n, seed):
    parts = split(_toy(n), SplitSpec(seed=seed))
    idx = np.concatenate([p.meta["indices"] for p in parts])
    assert np.array_equal(np.sort(idx), np.arange(n))


# --- standardizer ---------------------------------------------------------

def test_standardizer_population_std():
    s = fit_standardizer(np.array([[0.0], [2.0]]))
    assert s.means[0] == 1.0 and s.stds[0] == 1.0
    np.testing.assert_array_equal(s.apply([[0.0], [2.0]]).ravel(), [-1.0, 1.0])


def test_standardizer_constant_column_is_zero():
    X = np.column_stack([np.full(5, 3.7), np.arange(5.0)])
    s = fit_standardizer(X)
    assert np.all(s.apply(X)[:, 0] == 0.0)
    assert s.stds[0] == 1.0


def test_standardizer_does_not_refit_on_test():
    s = fit_standardizer(np.array([[0.0], [2.0]]))
    out = apply_standardizer(s, np.array([[10.0], [12.0]]))
    np.testing.assert_array_equal(out.ravel(), [9.0, 11.0])
    assert s.means[0] == 1.0


def test_standardizer_empty_raises():
    with pytest.raises(DatasetError):
        fit_standardizer(np.zeros((0, 3)))


@given(arrays(float, (12, 3), elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardizer_round_trip(X):
    s = fit_standardizer(X)
    Z = s.apply(X)
    np.testing.assert_allclose(s.inverse(Z), X, atol=1e-9, rtol=0)
    varying = X.std(axis=0) > 1e-6 * (1 + np.abs(X).max(axis=0))
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-9)
    np.testing.assert_allclose(Z.std(axis=0)[varying], 1.0, atol=1e-9)


# --- ingestion ------------------------------------------------------------

def _write_wine(path, n=8):
    schema = builtin_schema("wine")
    rows = ";".join(f'"{c}"' for c in schema.feature_names + ("quality",))
    rng = np.random.default_rng(0)
    lines = [rows]
    for i in range(n):
        vals = rng.uniform(0, 10, 11)
        lines.append(";".join(f"{v:.3f}" for v in vals) + f";{3 + i % 6}")
    path.write_text("\n".join(lines) + "\n")


def test_wine_schema_and_binarize(tmp_path):
    schema = builtin_schema("wine")
    assert schema.n_features == 11 and schema.n_classes == 2
    assert schema.label_transform == "wine_binarize"
    _write_wine(tmp_path / "winequality-red.csv", 8)
    _write_wine(tmp_path / "winequality-white.csv", 6)
    ds = load_named("wine", tmp_path)
    assert len(ds) == 14 and ds.n_features == 11
    quality = np.array([3 + i % 6 for i in range(8)] + [3 + i % 6 for i in range(6)])
    np.testing.assert_array_equal(ds.labels, (quality >= 6).astype(int))
    assert set(np.unique(ds.labels)) == {0, 1}


@pytest.mark.parametrize("name, d, k", [("wine", 11, 2), ("bean", 16, 7), ("rice", 7, 2), ("ecoli", 7, 8)])
def test_builtin_schemas(name, d, k):
    s = builtin_schema(name)
    assert (s.n_features, s.n_classes) == (d, k)


def test_unknown_schema():
    with pytest.raises(DatasetError):
        builtin_schema("nope")


def test_missing_file(tmp_path):
    with pytest.raises(DatasetError, match="missing file"):
        load_dataset(tmp_path / "absent.csv", builtin_schema("rice"))


def test_column_mismatch(tmp_path):
    p = tmp_path / "three.csv"
    p.write_text("a;b;quality\n1;2;5\n")
    with pytest.raises(DatasetError, match="column mismatch"):
        load_dataset(p, builtin_schema("wine"))


def test_empty_dataset(tmp_path):
    schema = builtin_schema("wine")
    p = tmp_path / "empty.csv"
    p.write_text(";".join(schema.feature_names + ("quality",)) + "\n")
    with pytest.raises(DatasetError, match="empty dataset"):
        load_dataset(p, schema)


def test_unparseable_rows_are_counted(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text("a,b,label\n1,2,0\nx,3,1\n4,5,1\n6,inf,0\n")
    schema = DatasetSchema("toy", ("a", "b"), 2)
    ds = load_dataset(p, schema)
    assert len(ds) == 2 and ds.meta["rejected_rows"] == 2


def test_custom_schema_file(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text("[dataset]\nname = t\nfeature_names = a, b\nn_classes = 3\nclasses = u, v, w\n")
    s = read_schema(ini)
    p = tmp_path / "t.csv"
    p.write_text("a,b,label\n1,2,w\n3,4,u\n")
    ds = load_dataset(p, s)
    np.testing.assert_array_equal(ds.labels, [2, 0])


def test_dataset_rejects_nan_and_bad_labels():
    schema = DatasetSchema("t", ("a",), 2)
    with pytest.raises(DatasetError):
        TabularDataset([[np.nan]], [0], schema)
    with pytest.raises(DatasetError):
        TabularDataset([[1.0]], [2], schema)
    with pytest.raises(DatasetError):
        TabularDataset([[1.0], [2.0]], [0], schema)


def test_schema_invariants():
    with pytest.raises(DatasetError):
        DatasetSchema("t", (), 2)
    with pytest.raises(DatasetError):
        DatasetSchema("t", ("a",), 1)


# --- synthetic ------------------------------------------------------------

def test_synth_linear_deterministic():
    a = synth_linear_dataset(4, 50, seed=9)
    b = synth_linear_dataset(4, 50, seed=9)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    np.testing.assert_array_equal(a.meta["w"], b.meta["w"])


def test_synth_linear_labels_follow_w():
    w = np.array([1.0, -2.0, 0.5])
    ds = synth_linear_dataset(3, 200, w=w, seed=0)
    np.testing.assert_array_equal(ds.labels, (ds.features @ w > 0).astype(int))


def test_zero_weights_give_single_class_rejected_by_training():
    ds = synth_linear_dataset(3, 40, w=np.zeros(3), seed=0)
    assert np.unique(ds.labels).size == 1
    with pytest.raises(TrainingError):
        train_logistic(ds, None, LogisticConfig())


def test_synth_linear_needs_features():
    with pytest.raises(DatasetError):
        synth_linear_dataset(0, 5)

import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from epigate.models import CapabilityError, LinearClassifier
from epigate.perturbation import (
    LEVEL_GRIDS,
    AttackConfig,
    ImputationFallbackWarning,
    PerturbationSpec,
    bim_attack,
    cw_attack,
    gaussian_noise,
    missing_values,
    n_permuted,
    permute_features,
    perturb,
    pgd_attack,
    project_linf,
    read_perturbed,
    export_perturbed,
)

batches = arrays(float, st.tuples(st.integers(2, 12), st.integers(1, 6)), elements=st.floats(-50, 50))


# --- natural perturbations ------------------------------------------------

def test_gaussian_zero_sigma_identity():
    X = np.random.default_rng(0).standard_normal((6, 3))
    np.testing.assert_array_equal(gaussian_noise(X, 0.0, seed=1), X)


def test_gaussian_formula_with_pinned_eps():
    X = np.array([[0.0, 1.0], [4.0, 1.0]])  # column stds 2 and 0
    eps = np.random.default_rng(7).standard_normal(X.shape)
    out = gaussian_noise(X, 0.5, seed=7)
    np.testing.assert_allclose(out - X, 0.5 * np.array([2.0, 0.0]) * eps, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(out[:, 1], X[:, 1])


def test_gaussian_explicit_std():
    X = np.zeros((3, 2))
    out = gaussian_noise(X, 1.0, seed=0, std=np.array([1.0, 0.0]))
    assert np.all(out[:, 1] == 0) and np.any(out[:, 0] != 0)


def test_gaussian_statistics():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((10_000, 3)) * [1.0, 2.0, 0.5]
    std = X.std(axis=0)
    D = gaussian_noise(X, 0.3, seed=3) - X
    assert np.all(np.abs(D.mean(axis=0)) < 0.05 * 0.3 * std)
    np.testing.assert_allclose(D.std(axis=0), 0.3 * std, rtol=0.05)


def test_missing_identity_and_hand_median():
    X = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(missing_values(X, 0.0, seed=0), X)
    X = np.array([[1.0, 0.0], [7.0, 0.0], [5.0, 0.0]])
    # find a seed masking only entry (1, 0)
    for seed in range(10_000):
        mask = np.random.default_rng(seed).random(X.shape) < 0.2
        if mask.sum() == 1 and mask[1, 0]:
            break
    out = missing_values(X, 0.2, seed=seed)
    assert out[1, 0] == 3.0 and out[0, 0] == 1.0


def test_missing_full_mask_uses_fallback():
    X = np.random.default_rng(0).standard_normal((5, 3))
    with pytest.warns(ImputationFallbackWarning):
        out = missing_values(X, 1.0, seed=0, fallback_median=[1.0, 2.0, 3.0])
    np.testing.assert_array_equal(out, np.tile([1.0, 2.0, 3.0], (5, 1)))
    with pytest.raises(ValueError):
        missing_values(X, 1.0, seed=0)
    with pytest.raises(ValueError):
        missing_values(X, 1.5)


def test_permute_identity_and_count():
    X = np.random.default_rng(0).standard_normal((20, 10))
    np.testing.assert_array_equal(permute_features(X, 0.0, seed=0), X)
    assert n_permuted(0.25, 10) == 3
    out = permute_features(X, 0.25, seed=4)
    changed = np.flatnonzero(np.any(out != X, axis=0))
    assert len(changed) <= 3
    assert len(changed) == 3  # continuous values: a shuffle almost surely moves something


def test_permute_single_row_raises():
    with pytest.raises(ValueError):
        permute_features(np.ones((1, 3)), 0.5)


@given(batches, st.sampled_from(LEVEL_GRIDS["permute"] + (1.0,)), st.integers(0, 1000))
def test_permute_preserves_marginals(X, f, seed):
    out = permute_features(X, f, seed)
    np.testing.assert_array_equal(np.sort(out, axis=0), np.sort(X, axis=0))


@given(batches, st.sampled_from(("gaussian", "missing", "permute")), st.floats(0, 1), st.integers(0, 1000))
def test_natural_perturbations_deterministic(X, kind, level, seed):
    spec = PerturbationSpec(kind, level, seed)
    med = np.median(X, axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ImputationFallbackWarning)
        a = perturb(spec, X, fallback_median=med)
        b = perturb(spec, X, fallback_median=med)
    assert a.tobytes() == b.tobytes()


def test_spec_validation():
    with pytest.raises(ValueError):
        PerturbationSpec("blur", 0.1)
    with pytest.raises(ValueError):
        PerturbationSpec("gaussian", -1.0)
    assert PerturbationSpec("gaussian", 0.3).on_grid and not PerturbationSpec("gaussian", 0.33).on_grid


# --- attacks --------------------------------------------------------------

def test_attack_step_sizes():
    cfg = AttackConfig()
    assert cfg.bim_alpha(0.1) == pytest.approx(0.025)
    assert cfg.pgd_alpha(0.1) == pytest.approx(0.0125)
    assert (cfg.bim_iters, cfg.pgd_iters, cfg.pgd_restarts) == (10, 20, 1)
    assert (cfg.cw_iters, cfg.cw_lr, cfg.cw_kappa) == (100, 0.01, 0.0)


@pytest.mark.parametrize("attack", [bim_attack, pgd_attack])
def test_zero_eps_identity(attack, mlp, blobs):
    X = blobs[2].features[:8]
    np.testing.assert_array_equal(attack(mlp, X, eps=0.0), X)


@pytest.mark.parametrize("eps", LEVEL_GRIDS["bim"])
def test_linf_constraint(eps, mlp, blobs):
    X = blobs[2].features[:30]
    for Xa in (bim_attack(mlp, X, eps=eps), pgd_attack(mlp, X, eps=eps, seed=1)):
        assert np.max(np.abs(Xa - X)) <= eps + 1e-9


@given(arrays(float, (5, 3), elements=st.floats(-1e6, 1e6)), st.floats(0, 10))
def test_project_linf_exact(X, eps):
    Y = X + np.random.default_rng(0).uniform(-3 * eps - 1, 3 * eps + 1, X.shape)
    assert np.all(np.abs(project_linf(Y, X, eps) - X) <= eps)


def test_bim_raises_loss(mlp, blobs):
    X = blobs[2].features[:50]
    y = mlp.predict(X)
    p0 = mlp.predict_proba(X)[np.arange(50), y]
    p1 = mlp.predict_proba(bim_attack(mlp, X, eps=0.2))[np.arange(50), y]
    assert p1.mean() < p0.mean()


def test_pgd_seeded(mlp, blobs):
    X = blobs[2].features[:5]
    np.testing.assert_array_equal(pgd_attack(mlp, X, eps=0.1, seed=3), pgd_attack(mlp, X, eps=0.1, seed=3))


def test_attack_single_vector_shape(mlp, blobs):
    x = blobs[2].features[0]
    assert bim_attack(mlp, x, eps=0.1).shape == x.shape
    assert cw_attack(mlp, x, c=1.0).shape == x.shape


def test_attacks_need_gradients(rf):
    for fn in (bim_attack, pgd_attack):
        with pytest.raises(CapabilityError):
            fn(rf, np.zeros((1, 5)), eps=0.1)
    with pytest.raises(CapabilityError):
        cw_attack(rf, np.zeros((1, 5)))
    with pytest.raises(ValueError):
        perturb(PerturbationSpec("bim", 0.1), np.zeros((1, 5)))


def test_cw_zero_c_identity(mlp, blobs):
    X = blobs[2].features[:5]
    np.testing.assert_array_equal(cw_attack(mlp, X, c=0.0), X)


def test_cw_best_objective_nonincreasing(mlp, blobs):
    _, info = cw_attack(mlp, blobs[2].features[:20], c=1.0, return_info=True)
    H = info["history"]
    assert H.shape == (101, 20)
    assert np.all(np.diff(H, axis=0) <= 0)
    assert np.all(info["l2"] ** 2 <= info["objective"] + 1e-12)


def test_cw_misclassifies_more_than_clean(mlp, blobs):
    X, y = blobs[2].features, blobs[2].labels
    clean_err = np.mean(mlp.predict(X) != y)
    adv_err = np.mean(mlp.predict(cw_attack(mlp, X, c=10.0)) != y)
    assert adv_err > clean_err


def test_cw_linear_reaches_boundary():
    # with kappa = 0 the minimizer sits on the decision boundary
    m = LinearClassifier(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.zeros(2))
    x = np.array([[0.05, 0.0]])
    out, info = cw_attack(m, x, c=10.0, return_info=True)
    Z = m.predict_logits(out)[0]
    assert abs(Z[1] - Z[0]) < 1e-3
    assert info["objective"][0] < 10.0 * 0.1


def test_true_label_option(mlp, blobs):
    X, y = blobs[2].features[:10], blobs[2].labels[:10]
    a = bim_attack(mlp, X, y, 0.1, AttackConfig(label="true"))
    assert np.max(np.abs(a - X)) <= 0.1 + 1e-12


# --- export ---------------------------------------------------------------

def test_export_round_trip(tmp_path):
    X = np.random.default_rng(0).standard_normal((4, 3))
    spec = PerturbationSpec("missing", 0.2, 9)
    export_perturbed(tmp_path / "p.csv", X, spec)
    text = (tmp_path / "p.csv").read_text()
    assert text.startswith("# kind=missing\n# level=0.2\n# seed=9\n")
    Y, spec2 = read_perturbed(tmp_path / "p.csv")
    assert spec2 == spec
    np.testing.assert_array_equal(Y, X)

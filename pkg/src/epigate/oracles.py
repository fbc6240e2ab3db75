"""Brute-force reference checks shared by ``epigate oracle-check`` and the test suite."""
from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .attribution import exact_shapley_oracle, integrated_gradients, kernel_shap, tree_shap_batch
from .models import LinearClassifier, MlpConfig, init_mlp, input_gradient, random_forest
from .stability import kendall_tau, spearman_rho

TREE_TOL = 1e-9
KERNEL_TOL = 1e-6
GRAD_RTOL = 1e-4
IG_RTOL = 1e-2


def _check(name, diff, tol, **extra) -> dict:
    """``diff`` is an absolute or relative deviation depending on the check."""
    return {"name": name, "max_diff": float(diff), "tol": tol, "passed": bool(diff < tol), **extra}


def forest_suite(n_forests: int = 100, seed: int = 0):
    """Random ``(forest, x, background)`` triples: d <= 10, <= 5 trees, depth <= 3, B <= 20."""
    rng = np.random.default_rng(seed)
    for i in range(n_forests):
        d = int(rng.integers(2, 11))
        forest = random_forest(d, int(rng.integers(1, 6)), int(rng.integers(1, 4)),
                               int(rng.integers(2, 4)), seed=seed * 100_003 + i)
        yield forest, rng.standard_normal(d), rng.standard_normal((int(rng.integers(1, 21)), d))


def shapley_checks(n_forests: int = 100, seed: int = 0, tree_shap_fn=None) -> list[dict]:
    """Max deviations of tree and full-enumeration kernel Shapley values from the exact oracle."""
    tree_shap_fn = tree_shap_fn or tree_shap_batch
    worst_tree = worst_kernel = 0.0
    for forest, x, Z in forest_suite(n_forests, seed):
        target = int(forest.predict_proba(x[None])[0].argmax())
        exact = exact_shapley_oracle(forest, x, Z, target).values
        tree, _ = tree_shap_fn(forest, x[None], Z, [target])
        full = kernel_shap(forest, x, Z, target, n_coalitions=2 ** x.shape[0]).values
        worst_tree = max(worst_tree, float(np.max(np.abs(tree[0] - exact))))
        worst_kernel = max(worst_kernel, float(np.max(np.abs(full - exact))))
    return [_check("tree_shap_vs_exact", worst_tree, TREE_TOL, n=n_forests),
            _check("kernel_shap_full_vs_exact", worst_kernel, KERNEL_TOL, n=n_forests)]


def _rel(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def small_mlp(d=5, k=3, seed=0):
    return init_mlp(d, k, MlpConfig(hidden=(8, 6), dropout=0.0, seed=seed), np.random.default_rng(seed))


def gradient_checks(seed: int = 0, n_coords: int = 24, h: float = 1e-6) -> list[dict]:
    """Central finite differences against MLP parameter and input gradients."""
    rng = np.random.default_rng(seed)
    net = small_mlp(seed=seed)
    X = rng.standard_normal((7, 5))
    y = rng.integers(0, 3, 7)
    loss, gW, gb = net.loss_and_grads(X, y)
    params = [(w, g) for w, g in zip(net.weights, gW)] + [(b, g) for b, g in zip(net.biases, gb)]
    worst_p = 0.0
    for _ in range(n_coords):
        p, g = params[rng.integers(len(params))]
        idx = tuple(rng.integers(s) for s in p.shape)
        orig = p[idx]
        p[idx] = orig + h
        lp = net.loss_and_grads(X, y)[0]
        p[idx] = orig - h
        lm = net.loss_and_grads(X, y)[0]
        p[idx] = orig
        worst_p = max(worst_p, _rel((lp - lm) / (2 * h), g[idx]))
    worst_x = 0.0
    for _ in range(n_coords):
        x = rng.standard_normal(5)
        t = int(rng.integers(3))
        j = int(rng.integers(5))
        g = input_gradient(net, x, t)
        e = np.zeros(5)
        e[j] = h
        fd = (net.predict_logits((x + e)[None])[0, t] - net.predict_logits((x - e)[None])[0, t]) / (2 * h)
        worst_x = max(worst_x, _rel(fd, g[j]))
    return [_check("mlp_param_grad_fd", worst_p, GRAD_RTOL, coords=n_coords),
            _check("mlp_input_grad_fd", worst_x, GRAD_RTOL, coords=n_coords)]


def ig_checks(seed: int = 0, steps: int = 500) -> list[dict]:
    rng = np.random.default_rng(seed)
    net = small_mlp(seed=seed + 1)
    net.weights = [3.0 * w for w in net.weights]  # logits that move visibly along the path
    worst = 0.0
    done = 0
    for _ in range(1000):
        x = 2.0 * rng.standard_normal(5)
        a = integrated_gradients(net, x, 0.0, steps)
        f = net.predict_logits(np.stack([x, np.zeros(5)]))[:, a.target_class]
        if abs(f[0] - f[1]) < 0.5:
            continue  # relative error is ill-conditioned when the logit barely moves
        worst = max(worst, _rel(a.values.sum(), f[0] - f[1], floor=1e-12))
        done += 1
        if done == 10:
            break
    if done < 10:
        worst = math.inf
    lin = LinearClassifier(rng.standard_normal((3, 5)), rng.standard_normal(3))
    worst_lin = 0.0
    for _ in range(10):
        x = rng.standard_normal(5)
        a = integrated_gradients(lin, x, 0.0, 50)
        worst_lin = max(worst_lin, float(np.max(np.abs(a.values - lin.weights[a.target_class] * x))))
    return [_check("ig_completeness", worst, IG_RTOL, steps=steps),
            _check("ig_linear_exact", worst_lin, 1e-300)]


def tau_closed_form(r1, r2) -> float:
    """``(C - D) / C(d, 2)`` by explicit pair enumeration."""
    C = D = 0
    for i, j in combinations(range(len(r1)), 2):
        s = (r1[i] - r1[j]) * (r2[i] - r2[j])
        C += s > 0
        D += s < 0
    return (C - D) / math.comb(len(r1), 2)


def rho_closed_form(r1, r2) -> float:
    d = len(r1)
    return 1.0 - 6.0 * float(np.sum((np.asarray(r1) - np.asarray(r2)) ** 2)) / (d * (d * d - 1))


def rank_checks(seed: int = 0, n: int = 200) -> list[dict]:
    rng = np.random.default_rng(seed)
    worst_t = worst_r = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 13))
        r1, r2 = rng.permutation(d) + 1, rng.permutation(d) + 1
        worst_t = max(worst_t, abs(kendall_tau(r1, r2) - tau_closed_form(r1, r2)))
        worst_r = max(worst_r, abs(spearman_rho(r1, r2) - rho_closed_form(r1, r2)))
    return [_check("kendall_tau_closed_form", worst_t, 1e-300, n=n),
            _check("spearman_rho_closed_form", worst_r, 1e-300, n=n)]


def run_all(n_forests: int = 100, seed: int = 0, tree_shap_fn=None) -> dict:
    checks = (shapley_checks(n_forests, seed, tree_shap_fn) + gradient_checks(seed) + ig_checks(seed)
              + rank_checks(seed))
    return {"passed": all(c["passed"] for c in checks), "checks": checks}

"""Exact interventional Shapley values for tree ensembles.

For one tree and one background row ``z`` the game ``S -> tree(x_S, z_~S)``
is a sum of leaf indicators.  A leaf is reached iff every feature in a set
``A`` (where only ``x`` satisfies the path) is in ``S`` and every feature in
``B`` (only ``z`` satisfies it) is not; features on which ``x`` and ``z``
agree are null players.  Such an indicator game has closed-form Shapley
values, so a depth-first walk that branches only where ``x`` and ``z``
disagree gives the exact answer in time proportional to the visited nodes.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .core import AttributionVector

# prefer OpenMP; the system TBB is too old for numba and only produces a warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_EXIT = -2


def _weight_table(d: int) -> np.ndarray:
    """``W[s, n] = s!(n-s-1)!/n!`` for ``0 <= s < n <= d``."""
    W = np.zeros((d + 1, d + 1))
    for n in range(1, d + 1):
        for s in range(n):
            W[s, n] = math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
    return W


@numba.njit(cache=True)
def _shap_pair(x, z, root, left, right, feature, threshold, value, target, W, phi,
               fstate, path, st_node, st_a, st_b, st_f, st_v):
    """Accumulate the Shapley values of one (tree, background row) game into ``phi``.

    Returns the number of leaves reached (tree traversals performed).
    """
    sp = 0
    path_len = 0
    leaves = 0
    st_node[0] = root
    st_a[0] = 0
    st_b[0] = 0
    st_f[0] = -1
    st_v[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        if node == -2:
            path_len -= 1
            fstate[st_f[sp]] = 0
            continue
        na = st_a[sp]
        nb = st_b[sp]
        f_set = st_f[sp]
        if f_set >= 0:
            fstate[f_set] = st_v[sp]
            path[path_len] = f_set
            path_len += 1
            st_node[sp] = -2
            sp += 1
        if left[node] == -1:
            leaves += 1
            n = na + nb
            if n == 0:
                continue
            v = value[node, target]
            wa = v * W[na - 1, n] if na > 0 else 0.0
            wb = v * W[na, n] if nb > 0 else 0.0
            for k in range(path_len):
                f = path[k]
                if fstate[f] == 1:
                    phi[f] += wa
                else:
                    phi[f] -= wb
            continue
        f = feature[node]
        thr = threshold[node]
        x_left = x[f] <= thr
        z_left = z[f] <= thr
        s = fstate[f]
        if s == 1 or (s == 0 and x_left == z_left):
            nxt = left[node] if x_left else right[node]
            st_node[sp] = nxt
            st_a[sp] = na
            st_b[sp] = nb
            st_f[sp] = -1
            sp += 1
        elif s == 2:
            nxt = left[node] if z_left else right[node]
            st_node[sp] = nxt
            st_a[sp] = na
            st_b[sp] = nb
            st_f[sp] = -1
            sp += 1
        else:
            # x-branch: f joins A; z-branch: f joins B
            st_node[sp] = left[node] if x_left else right[node]
            st_a[sp] = na + 1
            st_b[sp] = nb
            st_f[sp] = f
            st_v[sp] = 1
            sp += 1
            st_node[sp] = left[node] if z_left else right[node]
            st_a[sp] = na
            st_b[sp] = nb + 1
            st_f[sp] = f
            st_v[sp] = 2
            sp += 1
    return leaves


@numba.njit(cache=True, parallel=True)
def _tree_shap_batch(X, targets, Z, roots, left, right, feature, threshold, value, W, stack_size):
    n, d = X.shape
    T = roots.shape[0]
    B = Z.shape[0]
    out = np.zeros((n, d))
    evals = np.zeros(n, dtype=np.int64)
    for i in numba.prange(n):
        fstate = np.zeros(d, dtype=np.int8)
        path = np.zeros(d, dtype=np.int64)
        st_node = np.empty(stack_size, dtype=np.int64)
        st_a = np.empty(stack_size, dtype=np.int64)
        st_b = np.empty(stack_size, dtype=np.int64)
        st_f = np.empty(stack_size, dtype=np.int64)
        st_v = np.empty(stack_size, dtype=np.int8)
        phi = np.zeros(d)
        cnt = 0
        for t in range(T):
            for b in range(B):
                cnt += _shap_pair(X[i], Z[b], roots[t], left, right, feature, threshold, value, targets[i],
                                  W, phi, fstate, path, st_node, st_a, st_b, st_f, st_v)
        out[i] = phi / (T * B)
        evals[i] = cnt
    return out, evals


def tree_shap_batch(forest, X, background, targets=None):
    """Interventional tree Shapley values for each row of ``X``.

    Returns ``(values [n, d], model_evals [n])``; ``model_evals`` counts the
    root-to-leaf tree traversals performed.  Default targets are the forest's
    predicted classes.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    Z = np.ascontiguousarray(np.atleast_2d(background), dtype=float)
    if X.shape[1] != forest.n_features or Z.shape[1] != forest.n_features:
        raise ValueError("schema mismatch between forest, inputs and background")
    if targets is None:
        targets = forest.predict_proba(X).argmax(axis=1)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (X.shape[0],)).copy()
    left, right, feature, threshold, value, roots = forest.packed()
    max_depth = max(t.depth() for t in forest.trees)
    stack = 3 * (max_depth + 2)
    W = _weight_table(forest.n_features)
    return _tree_shap_batch(X, targets, Z, roots, left, right, feature, threshold, value, W, stack)


def tree_shap(forest, x, background, target_class=None) -> AttributionVector:
    x = np.asarray(x, dtype=float)
    target = int(np.argmax(forest.predict_proba(x[None, :])[0])) if target_class is None else int(target_class)
    vals, evals = tree_shap_batch(forest, x[None, :], background, [target])
    return AttributionVector(vals[0], target, "tree_shap", int(evals[0]),
                             {"evals_unit": "tree traversals", "n_background": int(np.atleast_2d(background).shape[0])})

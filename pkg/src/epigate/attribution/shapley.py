"""Interventional Shapley values: brute-force enumeration and KernelSHAP.

Both use the same value function: ``v(S)`` is the mean model output over the
background rows with the features in ``S`` set to the explained input.
"""
from __future__ import annotations

import math

import numpy as np

from .core import AttributionVector, CountingOutput, predicted_class

MAX_EXACT_FEATURES = 16
_CHUNK_ROWS = 200_000


def shapley_weights(d: int) -> np.ndarray:
    """``w[s] = s!(d-s-1)!/d!`` for coalition sizes ``s = 0..d-1``."""
    return np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)])


def _coalition_values(f, x, background, masks) -> np.ndarray:
    """Mean of ``f`` over background rows with masked features taken from ``x``."""
    B = background.shape[0]
    out = np.empty(masks.shape[0])
    per_chunk = max(1, _CHUNK_ROWS // B)
    for start in range(0, masks.shape[0], per_chunk):
        m = masks[start:start + per_chunk]
        rows = np.where(m[:, None, :], x[None, None, :], background[None, :, :])
        out[start:start + per_chunk] = f(rows.reshape(-1, x.shape[0])).reshape(m.shape[0], B).mean(axis=1)
    return out


def _all_masks(d: int) -> np.ndarray:
    codes = np.arange(2 ** d, dtype=np.int64)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def exact_shapley_oracle(model, x, background, target_class=None, output="proba") -> AttributionVector:
    """Shapley values by enumerating all ``2^d`` coalitions (``d <= 16``)."""
    x = np.asarray(x, dtype=float)
    background = np.atleast_2d(np.asarray(background, dtype=float))
    d = x.shape[0]
    if d > MAX_EXACT_FEATURES:
        raise ValueError(f"exact enumeration limited to d <= {MAX_EXACT_FEATURES}, got {d}")
    target = predicted_class(model, x) if target_class is None else int(target_class)
    f = CountingOutput(model, target, output)
    masks = _all_masks(d)
    v = _coalition_values(f, x, background, masks)
    w = shapley_weights(d)
    sizes = masks.sum(axis=1)
    codes = np.arange(2 ** d)
    phi = np.zeros(d)
    for i in range(d):
        without = ~masks[:, i]
        S = codes[without]
        phi[i] = np.sum(w[sizes[without]] * (v[S | (1 << i)] - v[S]))
    return AttributionVector(phi, target, "exact_shapley", f.calls,
                             {"base_value": v[0], "full_value": v[-1]})


def kernel_weight(d: int, s) -> np.ndarray:
    """Shapley kernel ``(d-1) / (C(d,s) s (d-s))`` for a coalition of size ``s``."""
    s = np.asarray(s)
    return (d - 1) / (np.vectorize(math.comb)(d, s) * s * (d - s))


def sample_coalitions(d: int, budget: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Coalition masks and regression weights for KernelSHAP.

    Size pairs ``(s, d-s)`` are enumerated exhaustively from the edges inward
    while they fit in the budget; the rest of the budget is drawn by kernel
    mass per size, each draw weighted by an equal share of the leftover mass.
    """
    total = 2 ** d - 2
    if budget >= total:
        masks = _all_masks(d)[1:-1]
        return masks, kernel_weight(d, masks.sum(axis=1))
    masks, weights = [], []
    left = budget
    remaining_sizes = list(range(1, d))
    for s in range(1, d // 2 + 1):
        pair = [s] if 2 * s == d else [s, d - s]
        count = sum(math.comb(d, k) for k in pair)
        if count > left:
            break
        for k in pair:
            for combo in _combinations_masks(d, k):
                masks.append(combo)
                weights.append(kernel_weight(d, k))
            remaining_sizes.remove(k)
        left -= count
    if remaining_sizes and left > 0:
        sizes = np.array(remaining_sizes)
        mass = np.array([math.comb(d, k) * kernel_weight(d, k) for k in sizes])
        draws = rng.choice(sizes, size=left, p=mass / mass.sum())
        share = mass.sum() / left
        for k in draws:
            m = np.zeros(d, dtype=bool)
            m[rng.choice(d, size=k, replace=False)] = True
            masks.append(m)
            weights.append(share)
    return np.array(masks, dtype=bool).reshape(-1, d), np.array(weights, dtype=float)


def _combinations_masks(d, k):
    from itertools import combinations
    for c in combinations(range(d), k):
        m = np.zeros(d, dtype=bool)
        m[list(c)] = True
        yield m


def kernel_shap(model, x, background, target_class=None, n_coalitions="auto", seed=0,
                output="proba", rng=None) -> AttributionVector:
    """Weighted least squares over coalitions with the efficiency constraint.

    ``n_coalitions="auto"`` uses ``2d + 2048``; when that covers all
    ``2^d - 2`` proper coalitions the result is the exact Shapley vector.
    """
    x = np.asarray(x, dtype=float)
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if background.shape[0] == 0:
        raise ValueError("background set is empty")
    d = x.shape[0]
    target = predicted_class(model, x) if target_class is None else int(target_class)
    f = CountingOutput(model, target, output)
    fx = float(f(x[None, :])[0])
    base = float(f(background).mean())
    delta = fx - base
    meta = {"base_value": base, "output_value": fx, "ridge_stabilized": False}
    if d == 1:
        return AttributionVector(np.array([delta]), target, "kernel_shap", f.calls, meta)
    budget = 2 * d + 2048 if n_coalitions == "auto" else int(n_coalitions)
    rng = np.random.default_rng(seed) if rng is None else rng
    masks, w = sample_coalitions(d, budget, rng)
    y = _coalition_values(f, x, background, masks) - base
    Z = masks.astype(float)
    # eliminate the last feature through sum(phi) = delta
    A = Z[:, :-1] - Z[:, -1:]
    b = y - Z[:, -1] * delta
    sw = np.sqrt(w)
    Aw, bw = A * sw[:, None], b * sw
    sol, _, rank, _ = np.linalg.lstsq(Aw, bw, rcond=None)
    if rank < d - 1:
        lam = 1e-6
        sol = np.linalg.solve(Aw.T @ Aw + lam * np.eye(d - 1), Aw.T @ bw)
        meta["ridge_stabilized"] = True
    phi = np.append(sol, delta - sol.sum())
    meta["n_coalitions"] = int(masks.shape[0])
    return AttributionVector(phi, target, "kernel_shap", f.calls, meta)

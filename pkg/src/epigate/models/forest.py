"""Random forest with tree-variance epistemic uncertainty.

Trees are fit by scikit-learn and then copied into plain node arrays, which is
the representation the tree Shapley code and the model files work with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .base import check_input

LEAF = -1


@dataclass
class DecisionTree:
    """Binary tree in array form; ``x[feature] <= threshold`` goes left.

    ``value`` holds class frequencies per node (rows sum to 1); only leaf rows
    are used for prediction.
    """

    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray  # [n_nodes, K]

    def __post_init__(self):
        self.children_left = np.asarray(self.children_left, dtype=np.int64)
        self.children_right = np.asarray(self.children_right, dtype=np.int64)
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.value = np.asarray(self.value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return self.children_left.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.children_left == LEAF

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # parents precede children in both builders
            if self.children_left[i] != LEAF:
                depth[self.children_left[i]] = depth[i] + 1
                depth[self.children_right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _tree_apply(X, self.children_left, self.children_right, self.feature, self.threshold)

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


@numba.njit(cache=True)
def _tree_apply(X, left, right, feature, threshold):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while left[node] != -1:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass
class RandomForest:
    trees: list
    n_features: int
    n_classes: int
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    has_members = True
    has_gradients = False
    has_logits = False
    stochastic_members = False
    kind = "rf"

    def per_member_proba(self, X) -> np.ndarray:
        X = check_input(self, X)
        return np.stack([t.predict_proba(X) for t in self.trees])

    def predict_proba(self, X) -> np.ndarray:
        return self.per_member_proba(X).mean(axis=0)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def packed(self):
        """Concatenated node arrays plus per-tree root offsets (cached)."""
        cache = self.__dict__.get("_packed")
        if cache is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
            left = np.concatenate([np.where(t.children_left == LEAF, LEAF, t.children_left + o)
                                   for t, o in zip(self.trees, offsets)])
            right = np.concatenate([np.where(t.children_right == LEAF, LEAF, t.children_right + o)
                                    for t, o in zip(self.trees, offsets)])
            feature = np.concatenate([t.feature for t in self.trees])
            threshold = np.concatenate([t.threshold for t in self.trees])
            value = np.concatenate([t.value for t in self.trees])
            cache = (left, right, feature, threshold, value, offsets[:-1].astype(np.int64))
            self.__dict__["_packed"] = cache
        return cache


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 15
    seed: int = 0


def train_random_forest(train, n_trees: int = 100, max_depth: int = 15, seed: int = 0) -> RandomForest:
    """Bootstrap forest with Gini splits and ceil(sqrt(d)) candidate features per split."""
    X, y = train.features, train.labels
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    d, K = train.n_features, train.n_classes
    skl = RandomForestClassifier(
        n_estimators=n_trees, max_depth=max_depth, criterion="gini",
        max_features=min(d, math.ceil(math.sqrt(d))), bootstrap=True,
        random_state=seed, n_jobs=1)
    skl.fit(X, y)
    # forest-level classes_ are the label values present in y; map into [0, K)
    present = skl.classes_.astype(int)
    trees = []
    for est in skl.estimators_:
        t = est.tree_
        value = np.zeros((t.node_count, K))
        value[:, present] = t.value[:, 0, :]
        value /= value.sum(axis=1, keepdims=True)
        leaf = t.children_left == LEAF
        trees.append(DecisionTree(t.children_left.copy(), t.children_right.copy(),
                                  np.where(leaf, -2, t.feature), np.where(leaf, 0.0, t.threshold), value))
    return RandomForest(trees, d, K, seed, {"n_trees": n_trees, "max_depth": max_depth,
                                            "max_features": min(d, math.ceil(math.sqrt(d)))})


def random_tree(d: int, depth: int, n_classes: int, rng, leaf_prob: float = 0.2) -> DecisionTree:
    """Random tree with standard-normal thresholds and random leaf distributions.

    Used to build small oracle-test forests without any training data.
    """
    left, right, feat, thr = [], [], [], []

    def grow(level):
        i = len(left)
        left.append(LEAF), right.append(LEAF), feat.append(-2), thr.append(0.0)
        if level < depth and (level == 0 or rng.random() > leaf_prob):
            feat[i] = int(rng.integers(d))
            thr[i] = float(rng.standard_normal())
            left[i] = grow(level + 1)
            right[i] = grow(level + 1)
        return i

    grow(0)
    n = len(left)
    value = rng.dirichlet(np.ones(n_classes), size=n)
    return DecisionTree(left, right, feat, thr, value)


def random_forest(d: int, n_trees: int, depth: int, n_classes: int = 2, seed: int = 0) -> RandomForest:
    rng = np.random.default_rng(seed)
    return RandomForest([random_tree(d, depth, n_classes, rng) for _ in range(n_trees)], d, n_classes, seed)

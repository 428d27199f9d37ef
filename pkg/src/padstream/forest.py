"""Gini decision trees and a bootstrap random forest on dense numpy arrays.

Class labels are integer codes 0..n_classes-1. Each leaf stores the class
frequency vector of the training rows that reached it; the forest predicts
the mean of those vectors over its trees. Per split, the candidate features
are drawn without replacement from those that vary within the node.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels

_NO_LIMIT = 2**62


def n_split_features(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    if isinstance(max_features, float):
        return max(1, int(max_features * d))
    return max(1, min(int(max_features), d))


class RandomForest:
    """Bootstrap-aggregated Gini trees with per-split feature subsampling."""

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int | None = 20,
        min_leaf: int = 1,
        max_features="sqrt",
        bootstrap: bool = True,
        seed: int | np.random.SeedSequence = 0,
    ):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y, n_classes: int | None = None) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        m, d = X.shape
        if m == 0:
            raise ValueError("cannot fit on zero rows")
        self.n_classes_ = int(n_classes if n_classes is not None else y.max() + 1)
        k = n_split_features(self.max_features, d)
        # columns constant over the whole sample can never be split on
        cols = np.flatnonzero(X.max(axis=0) > X.min(axis=0))
        Xv = np.ascontiguousarray(X[:, cols])
        rng = np.random.default_rng(self.seed)
        if self.bootstrap:
            draws = rng.integers(0, m, size=(self.n_trees, m))
            weights = np.zeros((self.n_trees, m))
            np.add.at(weights, (np.arange(self.n_trees)[:, None], draws), 1.0)
        else:
            weights = np.ones((self.n_trees, m))
        seeds = rng.integers(0, 2**63, size=self.n_trees, dtype=np.uint64)
        binary = np.all((Xv == 0.0) | (Xv == 1.0), axis=0)
        depth = _NO_LIMIT if self.max_depth is None else int(self.max_depth)
        (feature, self.threshold_, self.left_, self.right_,
         self.value_, self.roots_) = _kernels.grow_forest(
            Xv, y, self.n_classes_, weights, depth, int(self.min_leaf), k, seeds, binary
        )
        self.feature_ = feature.copy()
        split = feature >= 0
        self.feature_[split] = cols[feature[split]]
        return self

    @property
    def n_nodes(self) -> int:
        return len(self.feature_)

    def predict_proba(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _kernels.forest_proba(
            X, self.feature_, self.threshold_, self.left_, self.right_, self.value_, self.roots_
        )

    def predict_proba_one(self, x) -> np.ndarray:
        return self.predict_proba(np.asarray(x, dtype=np.float64)[None, :])[0]

    def apply(self, X) -> np.ndarray:
        """Leaf index of every (row, tree) pair."""
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _kernels.forest_leaves(
            X, self.feature_, self.threshold_, self.left_, self.right_, self.roots_, False
        )


class DecisionTree(RandomForest):
    """A single CART tree on the full sample, no bootstrap."""

    def __init__(self, max_depth=None, min_leaf=1, max_features=None, seed=0):
        super().__init__(1, max_depth, min_leaf, max_features, False, seed)

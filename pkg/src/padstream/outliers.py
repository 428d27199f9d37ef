"""Isolation forest and local outlier factor on dense feature matrices."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import cdist

from . import _kernels

EULER_GAMMA = 0.5772156649015329


def average_path_length(n) -> np.ndarray:
    """Expected unsuccessful-search path length in a BST of ``n`` points.

    c(n) = 2 H(n-1) - 2 (n-1) / n with H(i) ~ ln(i) + gamma; c(2) = 1 and
    c(n) = 0 for n <= 1.
    """
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros_like(n)
    big = n > 2
    out[n == 2] = 1.0
    m = n[big]
    out[big] = 2.0 * (np.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m
    return out


class IsolationForest:
    """Isolation forest fitted to the empirical distribution of the rows.

    Duplicate rows are collapsed to distinct rows with multiplicities; each
    tree draws ``psi = min(max_samples, n_distinct)`` rows with replacement,
    weighted by multiplicity. The fitted forest therefore only depends on
    the empirical distribution, not on the row count or order.
    """

    def __init__(self, n_trees: int = 100, max_samples: int = 256, height_limit="auto", seed=0):
        self.n_trees = n_trees
        self.max_samples = max_samples
        self.height_limit = height_limit
        self.seed = seed

    def fit(self, X: np.ndarray) -> "IsolationForest":
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise ValueError("cannot fit an isolation forest on zero rows")
        uniq, counts = np.unique(X, axis=0, return_counts=True)
        self.columns_ = np.flatnonzero(uniq.max(axis=0) > uniq.min(axis=0))
        U = uniq[:, self.columns_]
        psi = min(self.max_samples, U.shape[0])
        self.psi_ = psi
        if self.height_limit == "auto":
            limit = max(0, math.ceil(math.log2(psi))) if psi > 1 else 0
        elif self.height_limit is None:
            limit = 2**62
        else:
            limit = int(self.height_limit)
        rng = np.random.default_rng(self.seed)
        T = self.n_trees
        rows = rng.choice(U.shape[0], size=(T, psi), p=counts / counts.sum())
        u = rng.random((T, 2 * psi + 2))
        (self.feature_, self.threshold_, self.left_, self.right_,
         self.size_, self.depth_, self.roots_) = _kernels.grow_isolation_forest(
            np.ascontiguousarray(U), rows, limit, u
        )
        self.leaf_path_ = self.depth_ + average_path_length(self.size_)
        self.norm_ = float(average_path_length(psi)) or 1.0
        return self

    def _leaves(self, X: np.ndarray) -> np.ndarray:
        """Leaf node of every (row, tree) pair."""
        Q = np.ascontiguousarray(X[:, self.columns_])
        return _kernels.forest_leaves(
            Q, self.feature_, self.threshold_, self.left_, self.right_, self.roots_, True
        )

    def path_length(self, X) -> np.ndarray:
        """Mean adjusted path length over trees for each row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.leaf_path_[self._leaves(X)].mean(axis=1)

    def score(self, X) -> np.ndarray:
        """Anomaly score 2^(-E[h(x)] / c(psi)); higher is more anomalous."""
        return np.power(2.0, -self.path_length(X) / self.norm_)


class LocalOutlierFactor:
    """k-NN local outlier factor with Euclidean distance.

    Neighbours are exactly the k nearest rows, ties broken by row index.
    Local reachability density uses 1 / (mean reach distance + 1e-10) so
    duplicate points give finite scores.
    """

    EPS = 1e-10

    def __init__(self, k: int = 10):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k

    def fit(self, X) -> "LocalOutlierFactor":
        X = np.asarray(X, dtype=np.float64)
        m = X.shape[0]
        if m <= self.k:
            raise ValueError(f"LOF with k={self.k} needs more than {self.k} rows, got {m}")
        self.X_ = X
        D = cdist(X, X)
        np.fill_diagonal(D, np.inf)
        nn = np.argsort(D, axis=1, kind="stable")[:, : self.k]
        nd = np.take_along_axis(D, nn, axis=1)
        self.k_distance_ = nd[:, -1]
        reach = np.maximum(self.k_distance_[nn], nd)
        self.lrd_ = 1.0 / (reach.mean(axis=1) + self.EPS)
        self.train_scores_ = self.lrd_[nn].mean(axis=1) / self.lrd_
        return self

    def score(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        D = cdist(Q, self.X_)
        nn = np.argsort(D, axis=1, kind="stable")[:, : self.k]
        nd = np.take_along_axis(D, nn, axis=1)
        reach = np.maximum(self.k_distance_[nn], nd)
        lrd = 1.0 / (reach.mean(axis=1) + self.EPS)
        return self.lrd_[nn].mean(axis=1) / lrd

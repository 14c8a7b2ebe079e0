"""Homogeneous pixel transformation: K-nearest-neighbor kernel regression.

A query is predicted as the weighted mean of its K nearest training targets
with weights ``exp(-gamma * d)``, where ``d`` is the query-to-neighbor
distance divided by a normalizer. With ``normalization="absolute"`` the
normalizer is one global constant set at fit time: the largest distance from
any training input to one of its own K nearest training neighbors. With
``"relative"`` each query uses the largest of its own K distances.

Weights are renormalized to sum to one. Targets are averaged in their
original units; only the inputs are standardized, since a convex
combination commutes with any per-column affine map.
"""

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, RegressorMixin

from .base import check_query, check_training_data, column_stats, iter_chunks, sq_distances

BRUTE_FORCE_LIMIT = 50_000


def _brute_kneighbors(Q, X, k, chunk_size):
    dist = np.empty((len(Q), k))
    ind = np.empty((len(Q), k), dtype=np.int64)
    for sl in iter_chunks(len(Q), chunk_size):
        d2 = sq_distances(Q[sl], X)
        if k < X.shape[0]:
            cand = np.argpartition(d2, k - 1, axis=1)[:, :k]
        else:
            cand = np.broadcast_to(np.arange(X.shape[0]), d2.shape)
        # exact distances for the candidates, then a deterministic order
        exact = np.sqrt(np.sum((Q[sl, None, :] - X[cand]) ** 2, axis=2))
        order = np.lexsort((cand, exact), axis=1)
        dist[sl] = np.take_along_axis(exact, order, axis=1)
        ind[sl] = np.take_along_axis(cand, order, axis=1)
    return dist, ind


def kernel_weights(dist, normalizer, gamma):
    """Row-normalized ``exp(-gamma * dist / normalizer)``.

    Each row is shifted by its smallest distance before exponentiating,
    which cancels in the normalization and avoids underflow to 0/0.
    """
    d = dist / normalizer
    w = np.exp(-gamma * (d - d.min(axis=1, keepdims=True)))
    return w / w.sum(axis=1, keepdims=True)


class HPTRegressor(RegressorMixin, BaseEstimator):
    """Exponentially weighted K-nearest-neighbor regression.

    Parameters
    ----------
    n_neighbors : int, default 50
        Capped at the number of training samples.
    gamma : float, default 100
        Decay of the weights with normalized distance; 0 gives the plain
        neighbor mean.
    normalization : {"absolute", "relative"}, default "absolute"
    algorithm : {"auto", "brute", "kd_tree"}, default "auto"
        "auto" uses brute force below 50 000 training samples.
    """

    def __init__(self, n_neighbors=50, gamma=100.0, normalization="absolute",
                 algorithm="auto", standardize=True, chunk_size=2048):
        self.n_neighbors = n_neighbors
        self.gamma = gamma
        self.normalization = normalization
        self.algorithm = algorithm
        self.standardize = standardize
        self.chunk_size = chunk_size

    def fit(self, X, y):
        X, Y = check_training_data(X, y)
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.normalization not in ("absolute", "relative"):
            raise ValueError("normalization must be 'absolute' or 'relative'")
        if self.algorithm not in ("auto", "brute", "kd_tree"):
            raise ValueError("algorithm must be 'auto', 'brute' or 'kd_tree'")
        self.n_features_in_ = X.shape[1]
        self.x_mean_, self.x_scale_ = column_stats(X, self.standardize)
        self.X_train_ = (X - self.x_mean_) / self.x_scale_
        self.y_train_ = Y
        self.n_neighbors_ = min(self.n_neighbors, len(X))
        use_tree = self.algorithm == "kd_tree" or (
            self.algorithm == "auto" and len(X) >= BRUTE_FORCE_LIMIT
        )
        self.tree_ = cKDTree(self.X_train_) if use_tree else None
        if self.normalization == "absolute":
            dist, _ = self.kneighbors(self.X_train_, standardized=True)
            self.normalizer_ = float(dist.max()) if dist.max() > 0 else 1.0
        else:
            self.normalizer_ = None
        return self

    def kneighbors(self, X, standardized=False):
        """Distances (ascending) and indices of the nearest training samples."""
        if not standardized:
            X = (check_query(self, X) - self.x_mean_) / self.x_scale_
        k = self.n_neighbors_
        if self.tree_ is None:
            return _brute_kneighbors(X, self.X_train_, k, self.chunk_size)
        dist, ind = self.tree_.query(X, k=k)
        return dist.reshape(len(X), k), ind.reshape(len(X), k).astype(np.int64)

    def predict(self, X):
        X = check_query(self, X)
        Xs = (X - self.x_mean_) / self.x_scale_
        out = np.empty((len(X), self.y_train_.shape[1]))
        for sl in iter_chunks(len(X), self.chunk_size):
            dist, ind = self.kneighbors(Xs[sl], standardized=True)
            if self.normalizer_ is None:
                norm = dist.max(axis=1, keepdims=True)
                norm[norm == 0] = 1.0
            else:
                norm = self.normalizer_
            w = kernel_weights(dist, norm, self.gamma)
            out[sl] = np.einsum("nk,nkq->nq", w, self.y_train_[ind])
        return out

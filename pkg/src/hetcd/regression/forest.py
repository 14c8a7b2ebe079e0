"""Random forest regression with multi-output CART trees.

Splits minimize the summed within-child squared error over all outputs.
Trees are grown until a node is pure, cannot be split, or holds fewer than
``2 * min_samples_leaf`` samples. Each tree sees a bootstrap sample and, at
every node, ``max_features`` randomly chosen non-constant features.
"""

import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .base import check_query, check_training_data


@numba.njit(cache=True)
def _best_split(X, Y, idx, start, end, feature, min_leaf, order_buf):
    # returns (sse, threshold) of the best split on one feature, sse = inf if none
    m = end - start
    q = Y.shape[1]
    vals = np.empty(m)
    for i in range(m):
        vals[i] = X[idx[start + i], feature]
    order = np.argsort(vals, kind="mergesort")
    if vals[order[0]] == vals[order[m - 1]]:
        return np.inf, 0.0
    for i in range(m):
        order_buf[i] = idx[start + order[i]]
    total_sum = np.zeros(q)
    total_sq = 0.0
    for i in range(m):
        s = order_buf[i]
        for c in range(q):
            total_sum[c] += Y[s, c]
            total_sq += Y[s, c] * Y[s, c]
    left_sum = np.zeros(q)
    left_sq = 0.0
    best = np.inf
    best_thr = 0.0
    for i in range(1, m):
        s = order_buf[i - 1]
        for c in range(q):
            left_sum[c] += Y[s, c]
            left_sq += Y[s, c] * Y[s, c]
        if i < min_leaf or m - i < min_leaf:
            continue
        lo = vals[order[i - 1]]
        hi = vals[order[i]]
        if lo == hi:
            continue
        ls = 0.0
        rs = 0.0
        for c in range(q):
            ls += left_sum[c] * left_sum[c]
            r = total_sum[c] - left_sum[c]
            rs += r * r
        sse = (left_sq - ls / i) + ((total_sq - left_sq) - rs / (m - i))
        if sse < best:
            best = sse
            thr = 0.5 * (lo + hi)
            if thr >= hi:
                thr = lo
            best_thr = thr
    return best, best_thr


@numba.njit(cache=True)
def _build_tree(X, Y, sample_idx, max_features, min_leaf, seed):
    np.random.seed(seed)
    n = sample_idx.shape[0]
    p = X.shape[1]
    q = Y.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, q))
    idx = sample_idx.copy()
    buf = np.empty(n, dtype=np.int64)
    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        m = end - start
        for i in range(start, end):
            for c in range(q):
                value[node, c] += Y[idx[i], c]
        for c in range(q):
            value[node, c] /= m
        if m < 2 * min_leaf:
            continue
        pure = True
        first = idx[start]
        for i in range(start + 1, end):
            for c in range(q):
                if Y[idx[i], c] != Y[first, c]:
                    pure = False
                    break
            if not pure:
                break
        if pure:
            continue
        best = np.inf
        best_feat = -1
        best_thr = 0.0
        tried = 0
        for f in np.random.permutation(p):
            if tried >= max_features:
                break
            sse, thr = _best_split(X, Y, idx, start, end, f, min_leaf, buf)
            if sse == np.inf:
                # constant feature or no admissible split: does not count
                continue
            tried += 1
            if sse < best:
                best = sse
                best_feat = f
                best_thr = thr
        if best_feat < 0:
            continue
        # stable partition of idx[start:end] into <= thr and > thr
        nl = 0
        nr = 0
        for i in range(start, end):
            s = idx[i]
            if X[s, best_feat] <= best_thr:
                idx[start + nl] = s
                nl += 1
            else:
                buf[nr] = s
                nr += 1
        for i in range(nr):
            idx[start + nl + i] = buf[i]
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes + 1
        stack_start[top] = start + nl
        stack_end[top] = end
        top += 1
        stack_node[top] = n_nodes
        stack_start[top] = start
        stack_end[top] = start + nl
        top += 1
        n_nodes += 2
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True)
def _apply_forest(X, feature, threshold, left, right, value, offsets):
    # tree-major order keeps one tree's nodes hot in cache
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    q = value.shape[1]
    out = np.zeros((n, q))
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = base
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            for c in range(q):
                out[i, c] += value[node, c]
    for i in range(n):
        for c in range(q):
            out[i, c] /= n_trees
    return out


def resolve_max_features(max_features, n_features):
    if max_features in (None, "all"):
        return n_features
    if max_features == "third":
        return max(1, n_features // 3)
    if max_features == "log2":
        return max(1, int(np.log2(n_features)))
    r = int(max_features)
    if not 1 <= r <= n_features:
        raise ValueError(f"max_features must lie in [1, {n_features}], got {r}")
    return r


class RandomForest(RegressorMixin, BaseEstimator):
    """Bagged multi-output regression trees; prediction is the mean tree output.

    Parameters
    ----------
    n_estimators : int, default 64
    max_features : {"third", "log2", "all"} or int, default "third"
        Features examined per node; "third" is ``max(1, floor(P / 3))``.
    min_samples_leaf : int, default 1
    bootstrap : bool, default True
    random_state : int, default 0
    oob_score : bool, default False
        Also compute out-of-bag predictions and their mean squared error.
    """

    def __init__(self, n_estimators=64, max_features="third", min_samples_leaf=1,
                 bootstrap=True, random_state=0, oob_score=False):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.oob_score = oob_score

    def fit(self, X, y):
        X, Y = check_training_data(X, y)
        if self.n_estimators < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_estimators and min_samples_leaf must be >= 1")
        if self.oob_score and not self.bootstrap:
            raise ValueError("out-of-bag estimates need bootstrap=True")
        m, p = X.shape
        self.n_features_in_ = p
        self.max_features_ = resolve_max_features(self.max_features, p)
        X = np.ascontiguousarray(X)
        Y = np.ascontiguousarray(Y)
        seeds = np.random.SeedSequence(self.random_state).spawn(self.n_estimators)
        trees = []
        in_bag = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            if self.bootstrap:
                sample = np.sort(rng.integers(0, m, m))
            else:
                sample = np.arange(m)
            seed = int(rng.integers(0, 2 ** 31 - 1))
            trees.append(_build_tree(X, Y, sample, self.max_features_,
                                     self.min_samples_leaf, seed))
            in_bag.append(sample)
        sizes = [len(t[0]) for t in trees]
        self.tree_offsets_ = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.node_feature_ = np.concatenate([t[0] for t in trees])
        self.node_threshold_ = np.concatenate([t[1] for t in trees])
        self.node_left_ = np.concatenate([t[2] for t in trees])
        self.node_right_ = np.concatenate([t[3] for t in trees])
        self.node_value_ = np.concatenate([t[4] for t in trees])
        if self.oob_score:
            self._set_oob(X, Y, in_bag)
        return self

    def _tree_predict(self, X, t):
        sl = slice(self.tree_offsets_[t], self.tree_offsets_[t + 1])
        return _apply_forest(
            X, self.node_feature_[sl], self.node_threshold_[sl], self.node_left_[sl],
            self.node_right_[sl], self.node_value_[sl],
            np.array([0, sl.stop - sl.start], dtype=np.int64),
        )

    def _set_oob(self, X, Y, in_bag):
        m = len(X)
        total = np.zeros_like(Y)
        counts = np.zeros(m)
        for t, sample in enumerate(in_bag):
            oob = np.ones(m, dtype=bool)
            oob[sample] = False
            if oob.any():
                total[oob] += self._tree_predict(X[oob], t)
                counts[oob] += 1
        seen = counts > 0
        pred = np.full_like(Y, np.nan)
        pred[seen] = total[seen] / counts[seen, None]
        self.oob_prediction_ = pred
        self.oob_error_ = float(np.mean((pred[seen] - Y[seen]) ** 2)) if seen.any() else np.nan

    @property
    def n_nodes_(self):
        return len(self.node_feature_)

    def predict(self, X):
        X = np.ascontiguousarray(check_query(self, X))
        return _apply_forest(
            X, self.node_feature_, self.node_threshold_, self.node_left_,
            self.node_right_, self.node_value_, self.tree_offsets_,
        )

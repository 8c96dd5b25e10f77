"""Gini decision trees and random forests on dense numeric features.

Trees are stored as flat arrays (feature, threshold, left, right, counts),
which keeps prediction vectorized and serialization trivial. A sample goes
left when ``x[feature] <= threshold``.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

LEAF = -1


class RankedMatrix:
    """Per-column dense ranks of a feature matrix plus the sorted unique values.

    Splitting on ranks is equivalent to splitting on values, and sorting
    16-bit ranks is much cheaper than sorting floats.
    """

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        dtype = np.uint16 if n <= np.iinfo(np.uint16).max else np.uint32
        self.ranks = np.empty((n, d), dtype=dtype)
        self.uniques = []
        for j in range(d):
            u, inv = np.unique(X[:, j], return_inverse=True)
            self.ranks[:, j] = inv
            self.uniques.append(u)
        self.shape = (n, d)


def _split_scores(R: RankedMatrix, idx: np.ndarray, y: np.ndarray, n_classes: int, features: np.ndarray):
    """Best midpoint split of rows ``idx`` over ``features`` (ascending).

    Returns (feature, threshold) or None when every candidate is constant.
    Maximizes sum_c l_c^2 / n_l + sum_c r_c^2 / n_r, which is the same as
    minimizing the weighted Gini impurity of the two children. Ties go to the
    lowest feature index, then the lowest threshold.
    """
    n = len(idx)
    Rs = R.ranks[np.ix_(idx, features)]
    order = np.argsort(Rs, axis=0, kind="stable")
    vals = np.take_along_axis(Rs, order, axis=0)
    valid = vals[1:] > vals[:-1]  # (n-1, m)
    if not valid.any():
        return None
    ys = y[idx][order[:-1]]
    total = np.bincount(y[idx], minlength=n_classes)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    # with l_c the left counts and T_c the node totals:
    # sum (T_c - l_c)^2 = sum T_c^2 - 2 sum T_c l_c + sum l_c^2  (exact in integers)
    itype = np.int32 if n < 46000 else np.int64  # n^2 must fit
    sq = np.zeros(valid.shape, dtype=itype)
    cross = np.zeros(valid.shape, dtype=itype)
    tmp = np.empty(valid.shape, dtype=itype)
    for c in np.flatnonzero(total):
        left = (ys == c).cumsum(axis=0, dtype=itype)
        np.multiply(left, left, out=tmp)
        sq += tmp
        left *= total[c]
        cross += left
    right_sq = int(total @ total) - 2 * cross + sq
    score = sq / n_left + right_sq / (n - n_left)
    score[~valid] = -np.inf
    flat = np.argmax(score.T)  # feature-major: lowest feature wins ties
    f, pos = divmod(int(flat), n - 1)
    col = features[f]
    lo, hi = R.uniques[col][vals[pos, f]], R.uniques[col][vals[pos + 1, f]]
    thr = lo + (hi - lo) / 2.0
    if not (lo <= thr < hi):
        thr = lo
    return int(col), float(thr), int(vals[pos, f])


class DecisionTree:
    """CART classifier grown to purity (unless ``max_depth`` stops it)."""

    def __init__(self, max_features: Optional[int] = None, max_depth: Optional[int] = None, seed: int = 0):
        self.max_features = max_features
        self.max_depth = max_depth
        self.seed = seed

    def fit(self, X, y: np.ndarray, n_classes: int, rng=None, rows: Optional[np.ndarray] = None) -> "DecisionTree":
        """Grow on ``X[rows]`` (all rows by default; repeats allowed).

        ``X`` may be a prebuilt :class:`RankedMatrix` so a forest ranks once.
        """
        R = X if isinstance(X, RankedMatrix) else RankedMatrix(X)
        y = np.asarray(y, dtype=np.int64)
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        n, d = R.shape
        rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
        m = d if self.max_features is None else max(1, min(d, int(self.max_features)))
        self.n_classes = n_classes
        self.n_features = d
        # columns constant over the training rows can never split; subsampling
        # draws from the others (the subset size still derives from all d)
        if m < d:
            sub = R.ranks[rows]
            usable = np.flatnonzero(sub.min(axis=0) < sub.max(axis=0))
        else:
            usable = np.arange(d)

        feature, threshold, left, right, counts = [], [], [], [], []

        def new_node(idx):
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            counts.append(np.bincount(y[idx], minlength=n_classes))
            return len(feature) - 1

        stack = [(new_node(rows), rows, 0)]
        while stack:
            node, idx, depth = stack.pop()
            if np.count_nonzero(counts[node]) <= 1 or len(idx) < 2:
                continue
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            if m == d:
                split = _split_scores(R, idx, y, n_classes, usable)
            else:
                perm = usable[rng.permutation(len(usable))]
                split = None
                for start in range(0, len(perm), m):
                    split = _split_scores(R, idx, y, n_classes, np.sort(perm[start:start + m]))
                    if split is not None:
                        break
            if split is None:
                continue  # identical rows with mixed labels
            f, thr, rank = split
            go_left = R.ranks[idx, f] <= rank
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = f, thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold, dtype=np.float64)
        self.left_ = np.array(left, dtype=np.int64)
        self.right_ = np.array(right, dtype=np.int64)
        self.counts_ = np.array(counts, dtype=np.int64).reshape(len(feature), n_classes)
        return self

    @property
    def node_count(self) -> int:
        return len(self.feature_)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature_[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature_[cur]] <= self.threshold_[cur]
            node[active] = np.where(go_left, self.left_[cur], self.right_[cur])
            active = active[self.feature_[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum: majority ties go to the lowest class index
        return np.argmax(self.counts_[self.apply(X)], axis=1)

    def to_state(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "feature": self.feature_.tolist(),
            "threshold": self.threshold_.tolist(),
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "counts": self.counts_.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "DecisionTree":
        tree = cls()
        tree.n_classes = state["n_classes"]
        tree.n_features = state["n_features"]
        tree.feature_ = np.array(state["feature"], dtype=np.int64)
        tree.threshold_ = np.array(state["threshold"], dtype=np.float64)
        tree.left_ = np.array(state["left"], dtype=np.int64)
        tree.right_ = np.array(state["right"], dtype=np.int64)
        tree.counts_ = np.array(state["counts"], dtype=np.int64).reshape(-1, tree.n_classes)
        return tree


class RandomForest:
    """Bagged CART trees with per-split feature subsampling and hard voting."""

    def __init__(self, n_trees: int = 100, max_features="sqrt", bootstrap: bool = True,
                 max_depth: Optional[int] = None, seed: int = 0):
        self.n_trees = n_trees
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.max_depth = max_depth
        self.seed = seed

    def _resolve_max_features(self, d: int) -> Optional[int]:
        mf = self.max_features
        if mf is None or mf == "all":
            return None
        if mf == "sqrt":
            return max(1, int(math.sqrt(d)))
        if mf == "log2":
            return max(1, int(math.log2(d)))
        return int(mf)

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "RandomForest":
        R = X if isinstance(X, RankedMatrix) else RankedMatrix(X)
        y = np.asarray(y, dtype=np.int64)
        n, d = R.shape
        m = self._resolve_max_features(d)
        self.n_classes = n_classes
        self.trees_ = []
        for child in np.random.SeedSequence(self.seed).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            rows = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(max_features=m, max_depth=self.max_depth)
            self.trees_.append(tree.fit(R, y, n_classes, rng=rng, rows=rows))
        return self

    def votes(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees_:
            np.add.at(out, (rows, tree.predict(X)), 1)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def to_state(self) -> dict:
        return {"n_classes": self.n_classes, "trees": [t.to_state() for t in self.trees_]}

    @classmethod
    def from_state(cls, state: dict) -> "RandomForest":
        rf = cls(n_trees=len(state["trees"]))
        rf.n_classes = state["n_classes"]
        rf.trees_ = [DecisionTree.from_state(t) for t in state["trees"]]
        return rf

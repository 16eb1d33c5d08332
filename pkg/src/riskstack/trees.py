"""Array-based decision trees used by the forest and boosting learners.

Trees are stored as preorder node lists (feature index, threshold, left and
right child offsets, leaf value); feature index -1 marks a leaf. Split
search is vectorized across the candidate features of a node. Tie-breaking
is pinned: equal-gain splits resolve to the lowest feature index, then the
lowest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    importances: np.ndarray  # per-feature accumulated impurity decrease

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                return self.value[node]
            cur = node[active]
            go_left = X[active, feat[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])

    def to_arrays(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @staticmethod
    def from_arrays(payload: dict, n_features: int) -> "Tree":
        return Tree(
            feature=np.asarray(payload["feature"], dtype=np.int64),
            threshold=np.asarray(payload["threshold"], dtype=float),
            left=np.asarray(payload["left"], dtype=np.int64),
            right=np.asarray(payload["right"], dtype=np.int64),
            value=np.asarray(payload["value"], dtype=float),
            importances=np.zeros(n_features),
        )


@dataclass
class _Builder:
    X: np.ndarray
    y: np.ndarray
    criterion: str  # "gini" | "variance"
    max_depth: int | None
    min_leaf: int
    max_features: int | None  # None = all features at every split
    random_thresholds: bool
    rng: np.random.Generator | None
    hess: np.ndarray | None = None
    leaf_lambda: float = 0.0

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def _leaf_value(self, idx: np.ndarray) -> float:
        if self.hess is not None:
            denom = float(self.hess[idx].sum()) + self.leaf_lambda
            return float(self.y[idx].sum() / denom) if denom > 0 else 0.0
        return float(self.y[idx].mean())

    def _impurity(self, idx: np.ndarray) -> float:
        yv = self.y[idx]
        if self.criterion == "gini":
            p = yv.mean()
            return 2.0 * p * (1.0 - p)
        return float(yv.var())

    def _candidates(self, d: int) -> np.ndarray:
        if self.max_features is None or self.max_features >= d:
            return np.arange(d)
        feats = self.rng.choice(d, size=self.max_features, replace=False)
        feats.sort()
        return feats

    def _best_split(self, idx: np.ndarray):
        """Return (feature, threshold, left_mask) or None. Exhaustive search
        over sorted values, or one uniform-random threshold per candidate
        feature when random_thresholds is set."""
        m = idx.size
        feats = self._candidates(self.X.shape[1])
        sub = self.X[np.ix_(idx, feats)]
        yv = self.y[idx]

        if self.random_thresholds:
            lo = sub.min(axis=0)
            hi = sub.max(axis=0)
            draws = self.rng.random(feats.size)
            thr = lo + draws * (hi - lo)
            left = sub <= thr
            n_l = left.sum(axis=0)
            n_r = m - n_l
            ok = (hi > lo) & (n_l >= self.min_leaf) & (n_r >= self.min_leaf)
            if not ok.any():
                return None
            if self.criterion == "gini":
                pos_l = (left * yv[:, None]).sum(axis=0)
                pos_r = yv.sum() - pos_l
                with np.errstate(invalid="ignore", divide="ignore"):
                    score = pos_l * (n_l - pos_l) / n_l + pos_r * (n_r - pos_r) / n_r
            else:
                sum_l = (left * yv[:, None]).sum(axis=0)
                sum_r = yv.sum() - sum_l
                with np.errstate(invalid="ignore", divide="ignore"):
                    score = -(sum_l**2 / n_l + sum_r**2 / n_r)
            score = np.where(ok, score, np.inf)
            best = np.min(score)
            if not np.isfinite(best):
                return None
            ties = np.nonzero(score == best)[0]
            j = min(ties, key=lambda c: (feats[c], thr[c]))
            return int(feats[j]), float(thr[j]), left[:, j]

        order = np.argsort(sub, axis=0, kind="stable")
        xs = np.take_along_axis(sub, order, axis=0)
        ys = yv[order]
        cum = np.cumsum(ys, axis=0)
        total = float(yv.sum())
        n_l = np.arange(1, m)[:, None].astype(float)
        n_r = m - n_l
        valid = xs[:-1] < xs[1:]
        if self.min_leaf > 1:
            valid &= (n_l >= self.min_leaf) & (n_r >= self.min_leaf)
        if not valid.any():
            return None
        agg_l = cum[:-1]
        agg_r = total - agg_l
        if self.criterion == "gini":
            score = agg_l * (n_l - agg_l) / n_l + agg_r * (n_r - agg_r) / n_r
        else:
            score = -(agg_l**2 / n_l + agg_r**2 / n_r)
        score = np.where(valid, score, np.inf)
        best = np.min(score)
        if not np.isfinite(best):
            return None
        rows, cols = np.nonzero(score == best)
        thr = (xs[rows, cols] + xs[rows + 1, cols]) / 2.0
        j = min(range(rows.size), key=lambda c: (feats[cols[c]], thr[c]))
        f = int(feats[cols[j]])
        t = float(thr[j])
        return f, t, self.X[idx, f] <= t

    def build(self) -> Tree:
        importances = np.zeros(self.X.shape[1])
        n_root = len(self.y) if self.hess is None else None
        root_idx = np.arange(len(self.y))
        # stack entries: (idx, depth, parent_node, is_left); right pushed first
        stack: list[tuple[np.ndarray, int, int, bool]] = [(root_idx, 0, -1, False)]
        m_root = root_idx.size
        while stack:
            idx, depth, parent, is_left = stack.pop()
            node = len(self.feature)
            if parent >= 0:
                if is_left:
                    self.left[parent] = node
                else:
                    self.right[parent] = node
            yv = self.y[idx]
            m = idx.size
            pure = yv.min() == yv.max()
            capped = self.max_depth is not None and depth >= self.max_depth
            if pure or capped or m < 2 * self.min_leaf:
                split = None
            else:
                split = self._best_split(idx)
            if split is None:
                self.feature.append(-1)
                self.threshold.append(0.0)
                self.left.append(-1)
                self.right.append(-1)
                self.value.append(self._leaf_value(idx))
                continue
            f, t, left_mask = split
            li = idx[left_mask]
            ri = idx[~left_mask]
            imp = self._impurity(idx)
            imp_l = self._impurity(li)
            imp_r = self._impurity(ri)
            importances[f] += (m / m_root) * (
                imp - (li.size / m) * imp_l - (ri.size / m) * imp_r
            )
            self.feature.append(f)
            self.threshold.append(t)
            self.left.append(-1)
            self.right.append(-1)
            self.value.append(0.0)
            stack.append((ri, depth + 1, node, False))
            stack.append((li, depth + 1, node, True))
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=float),
            importances=importances,
        )


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    criterion: str = "gini",
    max_depth: int | None = None,
    min_leaf: int = 1,
    max_features: int | None = None,
    random_thresholds: bool = False,
    rng: np.random.Generator | None = None,
    hess: np.ndarray | None = None,
    leaf_lambda: float = 0.0,
) -> Tree:
    if criterion not in ("gini", "variance"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if (max_features is not None or random_thresholds) and rng is None:
        raise ValueError("feature subsampling and random thresholds need an rng")
    builder = _Builder(
        X=np.asarray(X, dtype=float),
        y=np.asarray(y, dtype=float),
        criterion=criterion,
        max_depth=max_depth,
        min_leaf=min_leaf,
        max_features=max_features,
        random_thresholds=random_thresholds,
        rng=rng,
        hess=hess,
        leaf_lambda=leaf_lambda,
    )
    return builder.build()

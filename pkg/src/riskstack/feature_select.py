"""Random-forest variable ranking and the cross-validated top-k sweep.

Importance defaults to mean decrease in Gini impurity across trees,
normalized to sum one. The ranking forest considers every feature at every
split so that, tie-breaks aside, the ranking does not depend on column
order. A permutation-based importance is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data import BalancePlan, FoldPlan
from .evaluation import CrossvalResult, MetricReport, crossval_run
from .learners import LearnerSpec, train


class FeatureSelectError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureRanking:
    entries: tuple[tuple[str, float], ...]  # (name, score), nonincreasing
    method: str
    trees: int
    seed: int

    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def top(self, k: int) -> list[str]:
        return self.names()[:k]


def rank_features(
    X: np.ndarray,
    y: np.ndarray,
    names: Sequence[str],
    trees: int = 200,
    seed: int = 0,
    method: str = "gini",
) -> FeatureRanking:
    """Rank by forest importance; deterministic for a fixed seed.

    Scores are clipped at zero (permutation importances can dip below) and
    normalized to sum one. Ties keep the original feature order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise FeatureSelectError("need at least two classes to rank features")
    if X.shape[1] != len(names):
        raise FeatureSelectError("one name per column required")
    if np.isnan(X).any():
        raise FeatureSelectError("feature ranking requires a complete matrix")

    spec = LearnerSpec(
        algorithm="random_forest",
        seed=seed,
        trees=trees,
        max_features="all",
        min_leaf=2,
    )
    model = train(spec, X, y)

    if method == "gini":
        raw = model.params["importances"].copy()
    elif method == "permutation":
        rng = np.random.default_rng(seed)
        base = float((model.predict(X) == y).mean())
        raw = np.zeros(X.shape[1])
        for j in range(X.shape[1]):
            drops = []
            for _ in range(5):
                shuffled = X.copy()
                shuffled[:, j] = rng.permutation(shuffled[:, j])
                drops.append(base - float((model.predict(shuffled) == y).mean()))
            raw[j] = np.mean(drops)
    else:
        raise FeatureSelectError(f"unknown importance method {method!r}")

    raw = np.maximum(raw, 0.0)
    total = raw.sum()
    scores = raw / total if total > 0 else np.full_like(raw, 1.0 / len(raw))
    order = sorted(range(len(names)), key=lambda j: (-scores[j], j))
    entries = tuple((names[j], float(scores[j])) for j in order)
    return FeatureRanking(entries=entries, method=method, trees=trees, seed=seed)


@dataclass(frozen=True)
class SweepRow:
    k: int
    features: tuple[str, ...]
    report: MetricReport


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    best_k: int

    def to_csv_rows(self) -> list[dict]:
        out = []
        for row in self.rows:
            r = {"k": row.k, "features": "|".join(row.features)}
            r.update(row.report.as_row())
            out.append(r)
        return out


def topk_sweep(
    ids: Sequence[str],
    X: np.ndarray,
    y: np.ndarray,
    names: Sequence[str],
    ranking: FeatureRanking,
    folds: FoldPlan,
    k_range: Sequence[int] | None = None,
    spec: LearnerSpec | None = None,
    balance: BalancePlan | None = None,
) -> SweepTable:
    """Cross-validate the reference classifier on the top-k features for each
    k; the winner maximizes weighted F1, ties going to the smaller k."""
    names = list(names)
    ranked = ranking.names()
    missing = set(ranked) - set(names)
    if missing:
        raise FeatureSelectError(f"ranking names not in the matrix: {sorted(missing)}")
    if k_range is None:
        k_range = range(1, min(10, len(ranked)) + 1)
    if spec is None:
        spec = LearnerSpec(algorithm="gradient_boosting", seed=ranking.seed)
    col_of = {name: j for j, name in enumerate(names)}

    rows = []
    for k in k_range:
        if not 1 <= k <= len(ranked):
            raise FeatureSelectError(f"k={k} outside 1..{len(ranked)}")
        cols = [col_of[name] for name in ranked[:k]]
        Xk = X[:, cols]

        def trainer(train_ids, X_train, y_train, fold, _spec=spec):
            model = train(_spec, X_train, y_train)
            return model.predict_proba

        result: CrossvalResult = crossval_run(ids, Xk, y, folds, trainer, balance)
        rows.append(SweepRow(k=k, features=tuple(ranked[:k]), report=result.report))

    best = max(rows, key=lambda r: (r.report.f1, -r.k))
    return SweepTable(rows=tuple(rows), best_k=best.k)

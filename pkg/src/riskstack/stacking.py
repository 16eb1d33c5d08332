"""Out-of-fold stacking.

Base learners are scored by cross-validated weighted F1, the best three are
kept, their out-of-fold probabilities form the meta-feature matrix, and a
near-unregularized logistic meta-learner is fitted on it. Base models are
then refit on the full training data for test-time prediction. Every
out-of-fold entry carries provenance that is checked structurally: the
producing model's training folds never include the entry's own fold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import glm
from .data import BalancePlan, FoldPlan, balance_by_replication
from .evaluation import LeakageAudit, binary_report
from .learners import (
    LearnerSpec,
    TrainedLearner,
    learner_from_dict,
    learner_to_dict,
    train,
)

META_L2 = 1e-6


class StackingError(ValueError):
    pass


@dataclass(frozen=True)
class StackingModel:
    specs: tuple[LearnerSpec, ...]
    base_models: tuple[TrainedLearner, ...]  # refit on the full training set
    meta_weights: np.ndarray
    meta_intercept: float
    oof_fold_of_row: tuple[int, ...]
    k_folds: int
    selection_f1: tuple[float, ...] | None = None

    def base_scores(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([m.predict_proba(X) for m in self.base_models])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        scores = self.base_scores(X)
        z = scores @ self.meta_weights + self.meta_intercept
        return np.clip(glm.sigmoid(z), 0.0, 1.0)

    def audit(self) -> LeakageAudit:
        """Reconstruct the out-of-fold provenance log for verification."""
        log = LeakageAudit()
        for i, fold in enumerate(self.oof_fold_of_row):
            trained = [f for f in range(self.k_folds) if f != fold]
            for spec in self.specs:
                log.note(f"row{i}/{spec.name}", fold, trained)
        return log

    def to_dict(self) -> dict:
        return {
            "base_models": [learner_to_dict(m) for m in self.base_models],
            "meta_weights": self.meta_weights.tolist(),
            "meta_intercept": self.meta_intercept,
            "oof_fold_of_row": list(self.oof_fold_of_row),
            "k_folds": self.k_folds,
            "selection_f1": list(self.selection_f1) if self.selection_f1 else None,
        }

    @staticmethod
    def from_dict(payload: dict) -> "StackingModel":
        models = tuple(learner_from_dict(p) for p in payload["base_models"])
        sel = payload.get("selection_f1")
        return StackingModel(
            specs=tuple(m.spec for m in models),
            base_models=models,
            meta_weights=np.asarray(payload["meta_weights"], dtype=float),
            meta_intercept=float(payload["meta_intercept"]),
            oof_fold_of_row=tuple(int(f) for f in payload["oof_fold_of_row"]),
            k_folds=int(payload["k_folds"]),
            selection_f1=tuple(sel) if sel else None,
        )


def generate_oof(
    specs: Sequence[LearnerSpec],
    ids: Sequence[str],
    X: np.ndarray,
    y: np.ndarray,
    folds: FoldPlan,
    balance: BalancePlan | None = None,
) -> tuple[np.ndarray, LeakageAudit]:
    """Out-of-fold probability matrix: entry (i, j) comes from spec j trained
    on every fold except the one holding row i. Training partitions may be
    balanced by replication; predicted rows never are."""
    ids = list(ids)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    row_of = {rid: i for i, rid in enumerate(ids)}
    labels_by_id = {rid: int(y[i]) for i, rid in enumerate(ids)}
    P = np.full((len(ids), len(specs)), np.nan)
    audit = LeakageAudit()
    for fold in range(folds.k):
        train_ids = folds.train_ids(fold, ids)
        test_ids = folds.test_ids(fold, ids)
        balanced = balance_by_replication(train_ids, labels_by_id, balance)
        rows = [row_of[r] for r in balanced]
        test_rows = [row_of[r] for r in test_ids]
        trained_folds = [f for f in range(folds.k) if f != fold]
        for j, spec in enumerate(specs):
            model = train(spec, X[rows], y[rows])
            P[test_rows, j] = model.predict_proba(X[test_rows])
            for rid in test_ids:
                audit.note(f"{rid}/{spec.name}", fold, trained_folds)
    if np.isnan(P).any():
        raise StackingError("fold plan did not cover every row")
    audit.verify()
    return P, audit


def select_top3(
    specs: Sequence[LearnerSpec],
    ids: Sequence[str],
    X: np.ndarray,
    y: np.ndarray,
    folds: FoldPlan,
    balance: BalancePlan | None = None,
) -> tuple[list[LearnerSpec], list[float]]:
    """Rank candidates by weighted F1 over concatenated CV test predictions;
    ties resolve by accuracy, then declaration order."""
    if len(specs) < 3:
        raise StackingError("need at least 3 candidate specs")
    P, _ = generate_oof(specs, ids, X, y, folds, balance)
    ranked = []
    for j, spec in enumerate(specs):
        report = binary_report(y, (P[:, j] >= 0.5).astype(int))
        ranked.append((-report.f1, -report.accuracy, j, spec))
    ranked.sort(key=lambda t: t[:3])
    chosen = [spec for _, _, _, spec in ranked[:3]]
    f1s = [-t[0] for t in ranked[:3]]
    return chosen, f1s


def fit_stacking(
    specs: Sequence[LearnerSpec],
    ids: Sequence[str],
    X: np.ndarray,
    y: np.ndarray,
    folds: FoldPlan,
    balance: BalancePlan | None = None,
    selection_f1: Sequence[float] | None = None,
) -> StackingModel:
    """Meta logistic regression on the out-of-fold matrix; base learners
    refit on the full (balanced) training data."""
    if len(specs) != 3:
        raise StackingError("stacking uses exactly three base specs")
    ids = list(ids)
    y = np.asarray(y)
    P, _ = generate_oof(specs, ids, X, y, folds, balance)
    w, b = glm.logistic_fit(P, y.astype(float), l2=META_L2, tol=1e-10, max_iter=200)

    labels_by_id = {rid: int(y[i]) for i, rid in enumerate(ids)}
    balanced = balance_by_replication(ids, labels_by_id, balance)
    row_of = {rid: i for i, rid in enumerate(ids)}
    rows = [row_of[r] for r in balanced]
    Xf = np.asarray(X, dtype=float)
    base_models = tuple(train(spec, Xf[rows], y[rows]) for spec in specs)

    return StackingModel(
        specs=tuple(specs),
        base_models=base_models,
        meta_weights=w,
        meta_intercept=b,
        oof_fold_of_row=tuple(int(f) for f in folds.fold_of(ids)),
        k_folds=folds.k,
        selection_f1=tuple(selection_f1) if selection_f1 is not None else None,
    )


def predict_stacking(model: StackingModel, X: np.ndarray) -> np.ndarray:
    return model.predict_proba(np.asarray(X, dtype=float))


def stacking_trainer(
    specs: Sequence[LearnerSpec],
    inner_k: int,
    inner_seed: int,
):
    """Adapter for the cross-validation harness: each outer fold fits a full
    stacking model (inner OOF plan included) on its training partition.

    Rows arrive positionally (the outer harness already applied balancing),
    so the inner plan is built over positional ids.
    """

    def trainer(train_ids, X_train, y_train, outer_fold):
        positional = [f"r{i}" for i in range(len(train_ids))]
        plan = _plan_from_labels(positional, y_train, inner_k, inner_seed + outer_fold)
        model = fit_stacking(specs, positional, X_train, y_train, plan, balance=None)
        return lambda X: predict_stacking(model, X)

    return trainer


def _plan_from_labels(ids, y, k, seed) -> FoldPlan:
    from .rng import Xoshiro256StarStar

    gen = Xoshiro256StarStar(seed)
    assignments: dict[str, int] = {}
    for cls in (0, 1):
        members = [rid for rid, lab in zip(ids, y) if lab == cls]
        if len(members) < k:
            raise StackingError(f"class {cls} smaller than inner fold count {k}")
        gen.shuffle(members)
        for pos, rid in enumerate(members):
            assignments[rid] = pos % k
    ordered = {rid: assignments[rid] for rid in ids}
    return FoldPlan(k=k, seed=seed, stratify_on="given", assignments=ordered)

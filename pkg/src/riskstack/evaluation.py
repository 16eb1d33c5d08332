"""Classification metrics, ROC/AUC, calibration and decision curves,
exact and asymptotic significance tests, cohort profiling, and the
cross-validated reporting harness with a structural leakage audit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import BalancePlan, FoldPlan, balance_by_replication

Z95 = 1.96


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Confusion-matrix metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise EvaluationError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def swapped(self) -> "ConfusionMatrix":
        """The same predictions with the other class treated as positive."""
        return ConfusionMatrix(tp=self.tn, tn=self.tp, fp=self.fn, fn=self.fp)

    @staticmethod
    def from_predictions(y_true: np.ndarray, y_pred: np.ndarray, positive: int = 1) -> "ConfusionMatrix":
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        pos = y_true == positive
        predicted_pos = y_pred == positive
        return ConfusionMatrix(
            tp=int((pos & predicted_pos).sum()),
            tn=int((~pos & ~predicted_pos).sum()),
            fp=int((~pos & predicted_pos).sum()),
            fn=int((pos & ~predicted_pos).sum()),
        )


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    accuracy_ci: float
    precision_ci: float
    recall_ci: float
    f1_ci: float
    specificity_ci: float
    support: int
    auc: float | None = None
    weighted: bool = False
    degenerate: tuple[str, ...] = ()

    def as_row(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "accuracy_ci": self.accuracy_ci,
            "precision": self.precision,
            "precision_ci": self.precision_ci,
            "recall": self.recall,
            "recall_ci": self.recall_ci,
            "f1": self.f1,
            "f1_ci": self.f1_ci,
            "specificity": self.specificity,
            "specificity_ci": self.specificity_ci,
            "auc": self.auc,
        }


def _ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def _ci(metric: float, n: int) -> float:
    # normal-approximation binomial half-width
    if n <= 0:
        return 0.0
    return Z95 * math.sqrt(metric * (1.0 - metric) / n)


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """Accuracy, precision, recall/sensitivity, F1 and specificity for one
    positive class, with 95% normal-approximation half-widths.

    Zero-denominator metrics come back as 0 and are listed in
    ``degenerate``.
    """
    if cm.total == 0:
        raise EvaluationError("empty confusion matrix")
    degenerate = []
    accuracy, _ = _ratio(cm.tp + cm.tn, cm.total)
    precision, deg_p = _ratio(cm.tp, cm.tp + cm.fp)
    recall, deg_r = _ratio(cm.tp, cm.tp + cm.fn)
    specificity, deg_s = _ratio(cm.tn, cm.tn + cm.fp)
    if deg_p:
        degenerate.append("precision")
    if deg_r:
        degenerate.append("recall")
    if deg_s:
        degenerate.append("specificity")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return MetricReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=specificity,
        accuracy_ci=_ci(accuracy, cm.total),
        precision_ci=_ci(precision, cm.tp + cm.fp),
        recall_ci=_ci(recall, cm.tp + cm.fn),
        f1_ci=_ci(f1, cm.total),
        specificity_ci=_ci(specificity, cm.tn + cm.fp),
        support=cm.tp + cm.fn,
        degenerate=tuple(degenerate),
    )


def weighted_report(reports: Sequence[MetricReport], supports: Sequence[int]) -> MetricReport:
    """Support-weighted average of per-class reports.

    In the binary case each per-class accuracy already equals the pooled
    accuracy, so the weighted accuracy is the overall accuracy.
    """
    if len(reports) != len(supports) or not reports:
        raise EvaluationError("need one support per report")
    total = sum(supports)
    if total == 0:
        raise EvaluationError("all supports are zero")
    w = [s / total for s in supports]

    def avg(attr: str) -> float:
        return sum(wi * getattr(r, attr) for wi, r in zip(w, reports))

    return MetricReport(
        accuracy=avg("accuracy"),
        precision=avg("precision"),
        recall=avg("recall"),
        f1=avg("f1"),
        specificity=avg("specificity"),
        accuracy_ci=avg("accuracy_ci"),
        precision_ci=avg("precision_ci"),
        recall_ci=avg("recall_ci"),
        f1_ci=avg("f1_ci"),
        specificity_ci=avg("specificity_ci"),
        support=total,
        weighted=True,
    )


def binary_report(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    scores: np.ndarray | None = None,
) -> MetricReport:
    """Weighted two-class report; AUC attached when scores are given."""
    y_true = np.asarray(y_true)
    cm_pos = ConfusionMatrix.from_predictions(y_true, y_pred, positive=1)
    per_class = [metrics(cm_pos.swapped()), metrics(cm_pos)]
    supports = [int((y_true == 0).sum()), int((y_true == 1).sum())]
    report = weighted_report(per_class, supports)
    if scores is not None and len(np.unique(y_true)) == 2:
        auc = roc_auc(scores, y_true).auc
        report = MetricReport(**{**report.__dict__, "auc": auc})
    return report


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ROCCurve:
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    auc: float


@dataclass(frozen=True)
class CalibrationCurve:
    bin_mean_predicted: tuple[float, ...]
    bin_observed: tuple[float, ...]
    bin_count: tuple[int, ...]
    gap: float  # max |predicted - observed| over nonempty bins


@dataclass(frozen=True)
class DecisionCurve:
    thresholds: tuple[float, ...]
    net_benefit: tuple[float, ...]
    treat_all: tuple[float, ...]
    treat_none: tuple[float, ...]


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> ROCCurve:
    """Threshold-swept ROC; score ties step diagonally (AUC counts a tie
    between a positive and a negative as one half)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    fpr = [0.0]
    tpr = [0.0]
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int((sorted_labels[i:j] == 1).sum())
        fp += int((sorted_labels[i:j] == 0).sum())
        fpr.append(fp / n_neg)
        tpr.append(tp / n_pos)
        i = j
    auc = float(np.trapezoid(tpr, fpr))
    return ROCCurve(fpr=tuple(fpr), tpr=tuple(tpr), auc=auc)


def calibration_curve(
    probabilities: np.ndarray, outcomes: np.ndarray, bins: int = 10
) -> CalibrationCurve:
    """Equal-width bins on [0, 1]; empty bins are omitted."""
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    idx = np.minimum((p * bins).astype(int), bins - 1)
    mean_pred, observed, counts = [], [], []
    for b in range(bins):
        sel = idx == b
        c = int(sel.sum())
        if c == 0:
            continue
        mean_pred.append(float(p[sel].mean()))
        observed.append(float(y[sel].mean()))
        counts.append(c)
    gap = max(
        (abs(mp - ob) for mp, ob in zip(mean_pred, observed)), default=0.0
    )
    return CalibrationCurve(
        bin_mean_predicted=tuple(mean_pred),
        bin_observed=tuple(observed),
        bin_count=tuple(counts),
        gap=gap,
    )


def decision_curve(
    probabilities: np.ndarray,
    outcomes: np.ndarray,
    thresholds: Sequence[float] | None = None,
) -> DecisionCurve:
    """Net benefit NB(pt) = TP/N - (FP/N) * pt/(1-pt), against treat-all
    and treat-none policies."""
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(outcomes)
    if thresholds is None:
        thresholds = np.linspace(0.01, 0.95, 95)
    thresholds = [float(t) for t in thresholds]
    if any(not 0.0 < t < 1.0 for t in thresholds):
        raise EvaluationError("thresholds must lie strictly inside (0, 1)")
    n = len(y)
    prevalence = float((y == 1).mean())
    nb, all_nb = [], []
    for t in thresholds:
        odds = t / (1.0 - t)
        pred = p >= t
        tp = int((pred & (y == 1)).sum())
        fp = int((pred & (y == 0)).sum())
        nb.append(tp / n - (fp / n) * odds)
        all_nb.append(prevalence - (1.0 - prevalence) * odds)
    return DecisionCurve(
        thresholds=tuple(thresholds),
        net_benefit=tuple(nb),
        treat_all=tuple(all_nb),
        treat_none=tuple(0.0 for _ in thresholds),
    )


# ---------------------------------------------------------------------------
# Significance tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StatTestResult:
    test: str
    statistic: float
    p_value: float
    n: int


def _normal_two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def fisher_exact(table: Sequence[Sequence[int]]) -> StatTestResult:
    """Two-sided Fisher test: sum of hypergeometric probabilities no larger
    than the observed table's, computed in exact rational arithmetic."""
    (a, b), (c, d) = ((int(x) for x in row) for row in table)
    if min(a, b, c, d) < 0:
        raise EvaluationError("counts must be nonnegative")
    r1, r2 = a + b, c + d
    c1 = a + c
    n = r1 + r2
    if n == 0:
        raise EvaluationError("empty table")
    denom = math.comb(n, c1)

    def prob(x: int) -> Fraction:
        return Fraction(math.comb(r1, x) * math.comb(r2, c1 - x), denom)

    lo = max(0, c1 - r2)
    hi = min(r1, c1)
    p_obs = prob(a)
    p = sum((q for x in range(lo, hi + 1) if (q := prob(x)) <= p_obs), Fraction(0))
    odds = (a * d) / (b * c) if b * c > 0 else math.inf
    return StatTestResult(test="fisher_exact", statistic=float(odds), p_value=float(min(p, Fraction(1))), n=n)


def chi_square(table: Sequence[Sequence[int]]) -> StatTestResult:
    """Pearson chi-square on a 2x2 table without continuity correction."""
    obs = np.asarray(table, dtype=float)
    if obs.shape != (2, 2):
        raise EvaluationError("chi-square expects a 2x2 table")
    if (obs < 0).any():
        raise EvaluationError("counts must be nonnegative")
    n = obs.sum()
    rows = obs.sum(axis=1)
    cols = obs.sum(axis=0)
    if n == 0 or (rows == 0).any() or (cols == 0).any():
        raise EvaluationError("degenerate margins")
    expected = np.outer(rows, cols) / n
    stat = float(((obs - expected) ** 2 / expected).sum())
    # 1 degree of freedom for a 2x2 table
    p = math.erfc(math.sqrt(stat / 2.0))
    return StatTestResult(test="chi_square", statistic=stat, p_value=p, n=int(n))


def _ranks_with_ties(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Midranks plus the tie-correction sum of (t^3 - t)."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    tie_sum = 0.0
    i = 0
    while i < len(values):
        j = i
        while j < len(values) and values[order[j]] == values[order[i]]:
            j += 1
        mid = (i + j + 1) / 2.0  # average of 1-based ranks i+1 .. j
        ranks[order[i:j]] = mid
        t = j - i
        tie_sum += t**3 - t
        i = j
    return ranks, tie_sum


def wilcoxon_rank_sum(sample_a: Sequence[float], sample_b: Sequence[float]) -> StatTestResult:
    """Rank-sum Z with tie correction, two-sided normal-approximation p."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise EvaluationError("both samples must be nonempty")
    combined = np.concatenate([a, b])
    ranks, tie_sum = _ranks_with_ties(combined)
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    w = float(ranks[:n_a].sum())
    mean_w = n_a * (n + 1) / 2.0
    var_w = n_a * n_b / 12.0 * ((n + 1) - tie_sum / (n * (n - 1)))
    if var_w <= 0:
        return StatTestResult(test="wilcoxon_rank_sum", statistic=0.0, p_value=1.0, n=n)
    z = (w - mean_w) / math.sqrt(var_w)
    return StatTestResult(
        test="wilcoxon_rank_sum", statistic=z, p_value=_normal_two_sided_p(z), n=n
    )


# ---------------------------------------------------------------------------
# Leakage audit and the cross-validation harness
# ---------------------------------------------------------------------------


@dataclass
class LeakageAudit:
    """Per-prediction provenance: which fold produced the row and which
    folds trained the producing model. ``verify`` proves no model scored a
    row it saw in training."""

    entries: list[tuple[str, int, frozenset[int]]] = field(default_factory=list)

    def note(self, row_id: str, fold: int, trained_folds: Sequence[int]) -> None:
        self.entries.append((row_id, fold, frozenset(trained_folds)))

    def verify(self) -> bool:
        for row_id, fold, trained in self.entries:
            if fold in trained:
                raise EvaluationError(
                    f"leakage: row {row_id!r} of fold {fold} was predicted by a "
                    f"model trained on folds {sorted(trained)}"
                )
        return True


@dataclass
class CrossvalResult:
    report: MetricReport
    per_class: tuple[MetricReport, MetricReport]
    per_fold: list[MetricReport]
    roc: ROCCurve
    calibration: CalibrationCurve
    decision: DecisionCurve
    ids: list[str]
    scores: np.ndarray
    labels: np.ndarray
    audit: LeakageAudit


Trainer = Callable[[list[str], np.ndarray, np.ndarray, int], Callable[[np.ndarray], np.ndarray]]


def crossval_run(
    ids: Sequence[str],
    X: np.ndarray,
    y: np.ndarray,
    folds: FoldPlan,
    trainer: Trainer,
    balance: BalancePlan | None = None,
    cutoff: float = 0.5,
) -> CrossvalResult:
    """Train on each fold complement (balanced by replication when a plan is
    given), predict the untouched test fold, and pool all test predictions
    into one report plus curves. Every prediction is logged in a leakage
    audit that is verified before returning.
    """
    ids = list(ids)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    row_of = {rid: i for i, rid in enumerate(ids)}
    labels_by_id = {rid: int(y[i]) for i, rid in enumerate(ids)}
    scores = np.full(len(ids), np.nan)
    audit = LeakageAudit()
    per_fold_reports: list[MetricReport] = []

    for fold in range(folds.k):
        train_ids = folds.train_ids(fold, ids)
        test_ids = folds.test_ids(fold, ids)
        balanced = balance_by_replication(train_ids, labels_by_id, balance)
        rows = [row_of[r] for r in balanced]
        predict = trainer(balanced, X[rows], y[rows], fold)
        test_rows = [row_of[r] for r in test_ids]
        fold_scores = np.asarray(predict(X[test_rows]), dtype=float)
        trained_folds = [f for f in range(folds.k) if f != fold]
        for rid, s in zip(test_ids, fold_scores):
            scores[row_of[rid]] = s
            audit.note(rid, fold, trained_folds)
        fold_true = y[test_rows]
        per_fold_reports.append(
            binary_report(fold_true, (fold_scores >= cutoff).astype(int), fold_scores)
        )

    if np.isnan(scores).any():
        raise EvaluationError("some rows never received a test prediction")
    audit.verify()
    y_pred = (scores >= cutoff).astype(int)
    cm_pos = ConfusionMatrix.from_predictions(y, y_pred, positive=1)
    per_class = (metrics(cm_pos.swapped()), metrics(cm_pos))
    pooled = binary_report(y, y_pred, scores)
    return CrossvalResult(
        report=pooled,
        per_class=per_class,
        per_fold=per_fold_reports,
        roc=roc_auc(scores, y),
        calibration=calibration_curve(scores, y),
        decision=decision_curve(scores, y),
        ids=ids,
        scores=scores,
        labels=y,
        audit=audit,
    )


# ---------------------------------------------------------------------------
# Cohort profiling (statistical characteristics table)
# ---------------------------------------------------------------------------


def profile_cohort(cohort, label: str = "risk") -> list[dict]:
    """Per-variable summary split by class: observed counts, missing counts,
    mean and SD, and a significance test (chi-square for gender, rank-sum
    for every numeric variable)."""
    y = cohort.labels(label)
    rows: list[dict] = []

    genders = np.array(
        [1.0 if r.gender.value == "male" else 0.0 if r.gender.value == "female" else np.nan
         for r in cohort.records]
    )
    male0 = int(np.nansum(genders[y == 0] == 1.0))
    female0 = int(np.nansum(genders[y == 0] == 0.0))
    male1 = int(np.nansum(genders[y == 1] == 1.0))
    female1 = int(np.nansum(genders[y == 1] == 0.0))
    try:
        test = chi_square([[male0, male1], [female0, female1]])
        stat, p = test.statistic, test.p_value
    except EvaluationError:
        stat, p = math.nan, math.nan
    rows.append(
        {
            "variable": "Gender",
            "test": "chi_square",
            "statistic": stat,
            "p_value": p,
            "class0_summary": f"male {male0} / female {female0}",
            "class1_summary": f"male {male1} / female {female1}",
        }
    )

    matrix = cohort.clinical_matrix()
    names = cohort.clinical_feature_names()
    for j, name in enumerate(names):
        if name == "Gender":
            continue
        col = matrix[:, j]
        a = col[(y == 0) & ~np.isnan(col)]
        b = col[(y == 1) & ~np.isnan(col)]
        if len(a) and len(b):
            test = wilcoxon_rank_sum(a, b)
            stat, p = test.statistic, test.p_value
        else:
            stat, p = math.nan, math.nan
        rows.append(
            {
                "variable": name,
                "test": "wilcoxon_rank_sum",
                "statistic": stat,
                "p_value": p,
                "class0_summary": _summary(a, int((y == 0).sum())),
                "class1_summary": _summary(b, int((y == 1).sum())),
            }
        )
    return rows


def _summary(values: np.ndarray, class_n: int) -> str:
    if len(values) == 0:
        return f"0 ({class_n})"
    return (
        f"{len(values)} ({class_n - len(values)}) "
        f"{values.mean():.2f}+/-{values.std():.2f}"
    )

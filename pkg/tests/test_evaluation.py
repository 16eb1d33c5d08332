import math
from fractions import Fraction

import numpy as np
import pytest

from riskstack.data import BalancePlan, FoldPlan
from riskstack.evaluation import (
    ConfusionMatrix,
    EvaluationError,
    LeakageAudit,
    binary_report,
    calibration_curve,
    chi_square,
    crossval_run,
    decision_curve,
    fisher_exact,
    metrics,
    roc_auc,
    weighted_report,
    wilcoxon_rank_sum,
)


# ---------------------------------------------------------------------------
# confusion-matrix metrics
# ---------------------------------------------------------------------------


def test_metrics_training_cohort_table():
    # death-positive confusion counts of the published training cohort
    rep = metrics(ConfusionMatrix(tp=125, fn=11, fp=11, tn=280))
    assert rep.recall == pytest.approx(125 / 136)
    assert rep.recall == pytest.approx(0.919, abs=5e-4)
    assert rep.support == 136


def test_metrics_testing_cohort_table():
    rep = metrics(ConfusionMatrix(tp=31, fn=3, fp=5, tn=68))
    assert rep.recall == pytest.approx(31 / 34)
    assert rep.recall == pytest.approx(0.9118, abs=5e-4)


def test_metrics_perfect_classifier():
    rep = metrics(ConfusionMatrix(tp=40, tn=60, fp=0, fn=0))
    for attr in ("accuracy", "precision", "recall", "f1", "specificity"):
        assert getattr(rep, attr) == 1.0
    assert rep.degenerate == ()


def test_metrics_match_independent_arithmetic():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        tp, tn, fp, fn = (int(v) for v in rng.integers(0, 50, size=4))
        if tp + tn + fp + fn == 0:
            continue
        rep = metrics(ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn))
        total = tp + tn + fp + fn
        assert rep.accuracy == (tp + tn) / total
        assert rep.precision == (tp / (tp + fp) if tp + fp else 0.0)
        assert rep.recall == (tp / (tp + fn) if tp + fn else 0.0)
        assert rep.specificity == (tn / (tn + fp) if tn + fp else 0.0)
        if rep.precision + rep.recall > 0:
            expected_f1 = 2 * rep.precision * rep.recall / (rep.precision + rep.recall)
            assert rep.f1 == pytest.approx(expected_f1, abs=1e-12)


def test_metrics_degenerate_flags():
    rep = metrics(ConfusionMatrix(tp=0, tn=10, fp=0, fn=0))
    assert "precision" in rep.degenerate
    assert "recall" in rep.degenerate
    assert rep.precision == 0.0


def test_weighted_report_arithmetic():
    a = metrics(ConfusionMatrix(tp=30, tn=50, fp=10, fn=10))
    b = metrics(ConfusionMatrix(tp=50, tn=30, fp=10, fn=10))
    merged = weighted_report([a, b], [40, 60])
    assert merged.f1 == pytest.approx(0.4 * a.f1 + 0.6 * b.f1, abs=1e-12)
    assert merged.weighted

    equal = weighted_report([a, b], [10, 10])
    assert equal.recall == pytest.approx((a.recall + b.recall) / 2)

    only_b = weighted_report([a, b], [0, 25])
    assert only_b.f1 == b.f1


# ---------------------------------------------------------------------------
# ROC / AUC
# ---------------------------------------------------------------------------


def _auc_pairwise(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def test_auc_perfect_ranking():
    scores = np.array([0.9, 0.8, 0.7, 0.2, 0.1])
    labels = np.array([1, 1, 1, 0, 0])
    curve = roc_auc(scores, labels)
    assert curve.auc == 1.0
    assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
    assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0


def test_auc_null_distribution():
    aucs = []
    for seed in (0, 1, 4, 5, 6):
        rng = np.random.default_rng(seed)
        scores = rng.random(200)
        labels = (rng.random(200) < 0.5).astype(int)
        aucs.append(roc_auc(scores, labels).auc)
    assert all(0.4 <= a <= 0.6 for a in aucs)


def test_auc_equals_pairwise_concordance_with_ties():
    rng = np.random.default_rng(1)
    for n in (10, 57, 200):
        scores = np.round(rng.random(n), 1)  # coarse grid forces ties
        labels = (rng.random(n) < 0.4).astype(int)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        curve = roc_auc(scores, labels)
        assert curve.auc == pytest.approx(_auc_pairwise(scores, labels), abs=1e-9)
        assert all(np.diff(curve.fpr) >= 0) and all(np.diff(curve.tpr) >= 0)


def test_auc_single_class_errors():
    with pytest.raises(EvaluationError):
        roc_auc(np.array([0.1, 0.2]), np.array([1, 1]))


# ---------------------------------------------------------------------------
# calibration and decision curves
# ---------------------------------------------------------------------------


def test_calibration_simulated_bernoulli_gap():
    rng = np.random.default_rng(2)
    p = rng.random(10000)
    y = (rng.random(10000) < p).astype(int)
    curve = calibration_curve(p, y)
    assert curve.gap < 0.05
    assert sum(curve.bin_count) == 10000


def test_calibration_constant_and_perfect_predictions():
    y = np.array([0, 1] * 50)
    curve = calibration_curve(np.full(100, 0.5), y)
    assert len(curve.bin_count) == 1
    assert curve.bin_observed[0] == pytest.approx(0.5)

    perfect = calibration_curve(y.astype(float), y)
    assert len(curve.bin_count) <= 2
    assert perfect.gap == 0.0


def test_decision_curve_perfect_classifier_and_limits():
    y = np.array([1] * 30 + [0] * 70)
    prevalence = 0.3
    perfect = decision_curve(y.astype(float), y, thresholds=[0.1, 0.5, 0.9])
    assert all(nb == pytest.approx(prevalence) for nb in perfect.net_benefit)
    assert all(v == 0.0 for v in perfect.treat_none)

    # an always-positive classifier approaches prevalence as pt -> 0+
    all_pos = decision_curve(np.ones(100), y, thresholds=[0.001])
    expected = prevalence - 0.7 * 0.001 / 0.999
    assert all_pos.net_benefit[0] == pytest.approx(expected)
    assert all_pos.net_benefit[0] == pytest.approx(prevalence, abs=1e-3)

    with pytest.raises(EvaluationError):
        decision_curve(np.ones(4), np.array([0, 1, 0, 1]), thresholds=[0.0])


def test_decision_curve_hand_counted_example():
    # 6 patients, probabilities and outcomes tallied by hand at pt = 0.5:
    # predictions >= 0.5: rows 0,1,2 -> TP = 2 (rows 0,1), FP = 1 (row 2)
    p = np.array([0.9, 0.6, 0.55, 0.4, 0.3, 0.1])
    y = np.array([1, 1, 0, 1, 0, 0])
    curve = decision_curve(p, y, thresholds=[0.5])
    assert curve.net_benefit[0] == pytest.approx(2 / 6 - (1 / 6) * 1.0)
    assert curve.treat_all[0] == pytest.approx(0.5 - 0.5 * 1.0)


def test_decision_curve_dominated_by_perfect_model():
    rng = np.random.default_rng(3)
    y = (rng.random(300) < 0.4).astype(int)
    noisy = np.clip(y * 0.7 + rng.random(300) * 0.3, 0, 1)
    grid = np.linspace(0.05, 0.9, 18)
    model = decision_curve(noisy, y, thresholds=grid)
    perfect = decision_curve(y.astype(float), y, thresholds=grid)
    assert all(m <= p + 1e-12 for m, p in zip(model.net_benefit, perfect.net_benefit))


# ---------------------------------------------------------------------------
# significance tests
# ---------------------------------------------------------------------------


def _fisher_oracle(a, b, c, d):
    """Independent enumeration with factorial-product hypergeometric pmf."""
    r1, r2, c1, n = a + b, c + d, a + c, a + b + c + d
    f = math.factorial

    def pmf(x):
        return Fraction(
            f(r1) * f(r2) * f(c1) * f(n - c1),
            f(x) * f(r1 - x) * f(c1 - x) * f(r2 - c1 + x) * f(n),
        )

    lo, hi = max(0, c1 - r2), min(r1, c1)
    p_obs = pmf(a)
    return float(sum(p for x in range(lo, hi + 1) if (p := pmf(x)) <= p_obs))


def test_fisher_exact_small_table():
    res = fisher_exact([[1, 9], [11, 3]])
    # frozen from the enumeration oracle (sum of tables no more probable
    # than the observed one)
    assert res.p_value == pytest.approx(0.0027594561852200836, abs=1e-15)
    assert res.p_value == _fisher_oracle(1, 9, 11, 3)


def test_fisher_exact_independence_table():
    res = fisher_exact([[5, 5], [5, 5]])
    assert res.p_value == 1.0


def test_fisher_exact_training_cohort_significance():
    res = fisher_exact([[280, 11], [11, 125]])
    assert res.p_value < 0.001


def test_fisher_matches_enumeration_oracle_everywhere():
    rng = np.random.default_rng(4)
    for _ in range(60):
        a, b, c, d = (int(v) for v in rng.integers(0, 16, size=4))
        if (a + b == 0) or (c + d == 0) or (a + c == 0) or (b + d == 0):
            continue
        assert fisher_exact([[a, b], [c, d]]).p_value == _fisher_oracle(a, b, c, d)


def test_chi_square_gender_counts():
    # male/female by class: [[159, 149], [237, 385]]
    res = chi_square([[159, 149], [237, 385]])
    # Pearson formula oracle: n (ad - bc)^2 / (r1 r2 c1 c2)
    n = 930
    expected = n * (159 * 385 - 149 * 237) ** 2 / (308 * 622 * 396 * 534)
    assert res.statistic == pytest.approx(expected, rel=1e-12)
    assert res.statistic == pytest.approx(15.4, abs=0.05)
    assert res.p_value < 0.05


def test_chi_square_degenerate_margins():
    with pytest.raises(EvaluationError):
        chi_square([[0, 0], [3, 4]])


def test_wilcoxon_identical_samples():
    res = wilcoxon_rank_sum([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert abs(res.statistic) < 1e-12
    assert res.p_value == pytest.approx(1.0)


def test_wilcoxon_fully_separated_samples():
    res = wilcoxon_rank_sum([1.0, 2.0, 3.0], [10.0, 11.0, 12.0])
    # smallest attainable two-sided normal-approximation p for n = 3, 3
    assert res.p_value < 0.05
    assert res.statistic == pytest.approx(-1.9640, abs=1e-3)


def test_wilcoxon_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    # untied data: ranksums uses the same plain normal approximation
    a = np.arange(10.0)
    b = np.arange(10.0) + 0.5
    mine = wilcoxon_rank_sum(a, b)
    ref = scipy_stats.ranksums(a, b)
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-12)
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-12)

    # tied data: the tie-corrected two-sided p matches the asymptotic
    # Mann-Whitney U without continuity correction
    rng = np.random.default_rng(5)
    a = np.round(rng.normal(size=40), 1)
    b = np.round(rng.normal(0.5, 1.0, size=35), 1)
    mine = wilcoxon_rank_sum(a, b)
    mwu = scipy_stats.mannwhitneyu(
        a, b, alternative="two-sided", use_continuity=False, method="asymptotic"
    )
    assert mine.p_value == pytest.approx(mwu.pvalue, rel=1e-9)


# ---------------------------------------------------------------------------
# cross-validation harness
# ---------------------------------------------------------------------------


def _toy_setup(n=60, seed=6):
    rng = np.random.default_rng(seed)
    ids = [f"r{i}" for i in range(n)]
    X = rng.normal(size=(n, 3))
    y = (X[:, 0] > 0).astype(int)
    assignments = {}
    for cls in (0, 1):
        members = [i for i in ids if y[ids.index(i)] == cls]
        for pos, rid in enumerate(members):
            assignments[rid] = pos % 3
    plan = FoldPlan(k=3, seed=0, stratify_on="risk", assignments=assignments)
    return ids, X, y, plan


def test_crossval_oracle_pipeline_hits_ceiling():
    ids, X, y, plan = _toy_setup()
    X_leaky = np.column_stack([X, y])  # label leaked as a feature

    def trainer(train_ids, X_train, y_train, fold):
        return lambda Xq: Xq[:, -1].astype(float)

    result = crossval_run(ids, X_leaky, y, plan, trainer)
    assert result.report.accuracy == 1.0
    assert result.audit.verify()


def test_crossval_deterministic_and_balanced_training():
    ids, X, y, plan = _toy_setup()
    sizes = []

    def trainer(train_ids, X_train, y_train, fold):
        sizes.append(len(train_ids))
        mean1 = X_train[y_train == 1].mean(axis=0)
        mean0 = X_train[y_train == 0].mean(axis=0)
        return lambda Xq: 1.0 / (
            1.0 + np.exp(-(Xq @ (mean1 - mean0)))
        )

    balance = BalancePlan({0: 2, 1: 3})
    a = crossval_run(ids, X, y, plan, trainer, balance)
    b = crossval_run(ids, X, y, plan, trainer, balance)
    assert np.array_equal(a.scores, b.scores)
    # replication factors applied inside every training partition
    n0, n1 = (y == 0).sum(), (y == 1).sum()
    for fold in range(plan.k):
        tr = plan.train_ids(fold, ids)
        expect = 2 * sum(1 for t in tr if y[ids.index(t)] == 0) + 3 * sum(
            1 for t in tr if y[ids.index(t)] == 1
        )
        assert sizes[fold] == expect


def test_crossval_detects_leaky_fold_plan():
    audit = LeakageAudit()
    audit.note("x", 2, [0, 1, 2])
    with pytest.raises(EvaluationError, match="leakage"):
        audit.verify()


def test_binary_report_attaches_auc():
    y = np.array([0, 0, 1, 1])
    scores = np.array([0.1, 0.4, 0.35, 0.8])
    rep = binary_report(y, (scores >= 0.5).astype(int), scores)
    assert rep.auc == pytest.approx(_auc_pairwise(scores, y))

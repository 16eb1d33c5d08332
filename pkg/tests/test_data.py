import numpy as np
import pytest

from riskstack.data import (
    BalancePlan,
    Cohort,
    DataError,
    Gender,
    OutcomeLabel,
    PatientRecord,
    RiskLabel,
    balance_by_replication,
    load_clinical_csv,
    load_feature_csv,
    merge_features,
    plan_folds,
    save_clinical_csv,
    save_feature_csv,
)


def make_cohort(n_low, n_high, biomarkers=("ldh", "crp"), seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_low + n_high):
        risk = RiskLabel.LOW if i < n_low else RiskLabel.HIGH
        outcome = None
        if risk == RiskLabel.HIGH:
            outcome = OutcomeLabel.DEATH if rng.random() < 0.3 else OutcomeLabel.SURVIVED
        records.append(
            PatientRecord(
                id=f"p{i:04d}",
                gender=Gender.MALE if rng.random() < 0.5 else Gender.FEMALE,
                age=float(rng.integers(20, 95)),
                biomarkers={b: float(rng.normal()) for b in biomarkers},
                risk_label=risk,
                outcome_label=outcome,
            )
        )
    return Cohort(records=tuple(records), biomarker_names=tuple(biomarkers))


def test_record_outcome_requires_high_risk():
    with pytest.raises(DataError):
        PatientRecord(id="a", risk_label=RiskLabel.LOW, outcome_label=OutcomeLabel.DEATH)
    with pytest.raises(DataError):
        PatientRecord(id="a", outcome_label=OutcomeLabel.SURVIVED)


def test_cohort_rejects_duplicate_ids():
    rec = PatientRecord(id="a", biomarkers={"x": 1.0})
    with pytest.raises(DataError):
        Cohort(records=(rec, rec), biomarker_names=("x",))


def test_missing_marker_distinct_from_zero(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text(
        "id,gender,age,risk_label,outcome_label,ldh,crp\n"
        "p1,male,50,low,,,0\n",
        encoding="utf-8",
    )
    cohort = load_clinical_csv(path)
    rec = cohort.records[0]
    assert rec.biomarkers["ldh"] is None
    assert rec.biomarkers["crp"] == 0.0


def test_load_clinical_csv_counts(tmp_path):
    # cohort with the study's label split: 396 low / 534 high
    cohort = make_cohort(396, 534)
    path = tmp_path / "c.csv"
    save_clinical_csv(cohort, path)
    loaded = load_clinical_csv(path, biomarker_names=("ldh", "crp"))
    assert loaded.label_counts("risk") == (396, 534)
    assert len(loaded) == 930


def test_load_empty_file_with_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("id,gender,age,risk_label,outcome_label,ldh\n", encoding="utf-8")
    cohort = load_clinical_csv(path)
    assert len(cohort) == 0
    assert cohort.biomarker_names == ("ldh",)


def test_load_errors_name_row_and_column(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text(
        "id,gender,age,risk_label,outcome_label,ldh\n"
        "p1,male,50,low,,bad\n",
        encoding="utf-8",
    )
    with pytest.raises(DataError, match="row 2.*'ldh'"):
        load_clinical_csv(path)

    path.write_text(
        "id,gender,age,risk_label,outcome_label,ldh\n"
        "p1,male,50,low,,1\n"
        "p1,male,51,low,,2\n",
        encoding="utf-8",
    )
    with pytest.raises(DataError, match="duplicate"):
        load_clinical_csv(path)


def test_gender_parsed_case_insensitively(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text(
        "id,gender,age,risk_label,outcome_label,ldh\n"
        "p1,MALE,50,low,,1\n"
        "p2,Female,60,high,death,2\n"
        "p3,,70,high,survived,3\n",
        encoding="utf-8",
    )
    cohort = load_clinical_csv(path)
    assert [r.gender for r in cohort.records] == [Gender.MALE, Gender.FEMALE, Gender.UNKNOWN]


def test_clinical_round_trip(tmp_path):
    cohort = make_cohort(40, 60)
    # punch some missing values in
    records = list(cohort.records)
    r0 = records[0]
    records[0] = PatientRecord(
        id=r0.id, gender=Gender.UNKNOWN, age=None,
        biomarkers={"ldh": None, "crp": 0.0},
        risk_label=r0.risk_label, outcome_label=r0.outcome_label,
    )
    cohort = Cohort(records=tuple(records), biomarker_names=cohort.biomarker_names)
    path = tmp_path / "c.csv"
    save_clinical_csv(cohort, path)
    reloaded = load_clinical_csv(path)
    assert reloaded == cohort


def test_feature_csv_round_trip(tmp_path):
    cohort = make_cohort(5, 5)
    rng = np.random.default_rng(1)
    feats = {rid: tuple(float(v) for v in rng.normal(size=8)) for rid in cohort.ids()}
    cohort = merge_features(cohort, feats)
    path = tmp_path / "f.csv"
    save_feature_csv(cohort, path)
    loaded = load_feature_csv(path)
    assert loaded == feats
    again = merge_features(make_cohort(5, 5), loaded)
    assert again.feature_length == 8
    assert again == cohort


def test_merge_features_length_mismatch():
    cohort = make_cohort(3, 3)
    feats = {"p0000": (1.0, 2.0), "p0001": (1.0, 2.0, 3.0)}
    with pytest.raises(DataError):
        merge_features(cohort, feats)


# ---------------------------------------------------------------------------
# fold planning
# ---------------------------------------------------------------------------


def test_plan_folds_study_counts():
    cohort = make_cohort(396, 534)
    plan = plan_folds(cohort, k=5, label="risk", seed=11)
    y = dict(zip(cohort.ids(), cohort.labels("risk")))
    for fold in range(5):
        test = plan.test_ids(fold, cohort.ids())
        lows = sum(1 for t in test if y[t] == 0)
        highs = sum(1 for t in test if y[t] == 1)
        assert lows in (79, 80)
        assert highs in (106, 107)


def test_plan_folds_even_split():
    cohort = make_cohort(10, 10)
    plan = plan_folds(cohort, k=5, label="risk", seed=3)
    y = dict(zip(cohort.ids(), cohort.labels("risk")))
    for fold in range(5):
        test = plan.test_ids(fold, cohort.ids())
        assert sum(1 for t in test if y[t] == 0) == 2
        assert sum(1 for t in test if y[t] == 1) == 2


def test_plan_folds_deterministic_and_partitioning():
    cohort = make_cohort(37, 53)
    a = plan_folds(cohort, k=5, label="risk", seed=42)
    b = plan_folds(cohort, k=5, label="risk", seed=42)
    assert a.assignments == b.assignments
    c = plan_folds(cohort, k=5, label="risk", seed=43)
    assert c.assignments != a.assignments
    # union of test folds is everything, pairwise disjoint
    seen = set()
    for fold in range(5):
        test = set(a.test_ids(fold))
        assert not (seen & test)
        seen |= test
    assert seen == set(cohort.ids())


def test_plan_folds_small_class_errors():
    cohort = make_cohort(4, 50)
    with pytest.raises(DataError, match="fewer than k"):
        plan_folds(cohort, k=5, label="risk", seed=0)


# ---------------------------------------------------------------------------
# replication balancing
# ---------------------------------------------------------------------------


def test_balance_reproduces_published_counts():
    # 317 low x4 / 427 high x3 and 291 survived x4 / 136 death x9
    ids_low = [f"l{i}" for i in range(317)]
    ids_high = [f"h{i}" for i in range(427)]
    labels = {**{i: 0 for i in ids_low}, **{i: 1 for i in ids_high}}
    out = balance_by_replication(ids_low + ids_high, labels, BalancePlan({0: 4, 1: 3}))
    assert sum(1 for i in out if labels[i] == 0) == 1268
    assert sum(1 for i in out if labels[i] == 1) == 1281

    ids_s = [f"s{i}" for i in range(291)]
    ids_d = [f"d{i}" for i in range(136)]
    labels = {**{i: 0 for i in ids_s}, **{i: 1 for i in ids_d}}
    out = balance_by_replication(ids_s + ids_d, labels, BalancePlan({0: 4, 1: 9}))
    assert sum(1 for i in out if labels[i] == 0) == 1164
    assert sum(1 for i in out if labels[i] == 1) == 1224


def test_balance_identity_and_order():
    ids = ["a", "b", "c"]
    labels = {"a": 0, "b": 1, "c": 0}
    assert balance_by_replication(ids, labels, BalancePlan({0: 1, 1: 1})) == ids
    assert balance_by_replication(ids, labels, None) == ids
    out = balance_by_replication(ids, labels, BalancePlan({0: 2, 1: 3}))
    assert out == ["a", "a", "b", "b", "b", "c", "c"]
    assert set(out) == set(ids)  # never introduces a new id


def test_balance_rejects_zero_factor():
    with pytest.raises(DataError):
        BalancePlan({0: 0})

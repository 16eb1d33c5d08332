"""Patient data model, CSV ingestion, fold planning and class rebalancing.

A cohort is a list of patient records sharing one ordered biomarker schema.
Missing values are represented by ``None`` on records and by NaN inside
matrices, never by a sentinel number, so a missing lab is always
distinguishable from a measured zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rng import Xoshiro256StarStar


class DataError(ValueError):
    """Raised for malformed input files or inconsistent cohorts."""


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class RiskLabel(str, Enum):
    LOW = "low"
    HIGH = "high"


class OutcomeLabel(str, Enum):
    SURVIVED = "survived"
    DEATH = "death"


# Binary encodings used across the package: the "positive" class is the
# adverse one in both experiments.
RISK_POSITIVE = RiskLabel.HIGH
OUTCOME_POSITIVE = OutcomeLabel.DEATH

FIXED_COLUMNS = ("id", "gender", "age", "risk_label", "outcome_label")


@dataclass(frozen=True)
class PatientRecord:
    """One patient: demographics, biomarker map, optional image features."""

    id: str
    gender: Gender = Gender.UNKNOWN
    age: float | None = None
    biomarkers: Mapping[str, float | None] = field(default_factory=dict)
    image_features: tuple[float, ...] | None = None
    risk_label: RiskLabel | None = None
    outcome_label: OutcomeLabel | None = None

    def __post_init__(self):
        if self.age is not None and self.age < 0:
            raise DataError(f"record {self.id!r}: negative age {self.age}")
        if self.outcome_label is not None and self.risk_label != RiskLabel.HIGH:
            raise DataError(
                f"record {self.id!r}: outcome label present but risk label is "
                f"{self.risk_label.value if self.risk_label else 'absent'}"
            )


@dataclass(frozen=True)
class Cohort:
    records: tuple[PatientRecord, ...]
    biomarker_names: tuple[str, ...]
    feature_length: int = 0

    def __post_init__(self):
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise DataError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            if tuple(rec.biomarkers.keys()) != self.biomarker_names:
                raise DataError(
                    f"record {rec.id!r}: biomarker keys do not match the cohort schema"
                )
            if rec.image_features is not None and len(rec.image_features) != self.feature_length:
                raise DataError(
                    f"record {rec.id!r}: image feature length "
                    f"{len(rec.image_features)} != {self.feature_length}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def by_id(self, record_id: str) -> PatientRecord:
        for rec in self.records:
            if rec.id == record_id:
                return rec
        raise KeyError(record_id)

    def subset(self, ids: Sequence[str]) -> "Cohort":
        """New cohort restricted to ``ids``, keeping the given order."""
        table = {r.id: r for r in self.records}
        return Cohort(
            records=tuple(table[i] for i in ids),
            biomarker_names=self.biomarker_names,
            feature_length=self.feature_length,
        )

    # -- model-facing views -------------------------------------------------

    def clinical_feature_names(self) -> list[str]:
        """Candidate clinical variables: age, gender, then the biomarkers."""
        return ["Age", "Gender"] + list(self.biomarker_names)

    def clinical_matrix(self) -> np.ndarray:
        """n x (2 + biomarkers) float matrix, NaN where a value is missing.

        Gender is encoded male=1, female=0, unknown=NaN so it can be imputed
        like any other variable.
        """
        n = len(self.records)
        out = np.full((n, 2 + len(self.biomarker_names)), np.nan)
        for i, rec in enumerate(self.records):
            if rec.age is not None:
                out[i, 0] = rec.age
            if rec.gender == Gender.MALE:
                out[i, 1] = 1.0
            elif rec.gender == Gender.FEMALE:
                out[i, 1] = 0.0
            for j, name in enumerate(self.biomarker_names):
                v = rec.biomarkers[name]
                if v is not None:
                    out[i, 2 + j] = v
        return out

    def image_matrix(self) -> np.ndarray:
        """n x feature_length matrix; rows without features are all-NaN."""
        out = np.full((len(self.records), self.feature_length), np.nan)
        for i, rec in enumerate(self.records):
            if rec.image_features is not None:
                out[i, :] = rec.image_features
        return out

    def labels(self, which: str) -> np.ndarray:
        """Binary labels (low/survived=0, high/death=1); errors on absences."""
        vals = np.empty(len(self.records), dtype=np.int64)
        for i, rec in enumerate(self.records):
            if which == "risk":
                if rec.risk_label is None:
                    raise DataError(f"record {rec.id!r} has no risk label")
                vals[i] = 1 if rec.risk_label == RiskLabel.HIGH else 0
            elif which == "outcome":
                if rec.outcome_label is None:
                    raise DataError(f"record {rec.id!r} has no outcome label")
                vals[i] = 1 if rec.outcome_label == OutcomeLabel.DEATH else 0
            else:
                raise ValueError(f"unknown label {which!r}")
        return vals

    def label_counts(self, which: str) -> tuple[int, int]:
        y = self.labels(which)
        return int((y == 0).sum()), int((y == 1).sum())


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _parse_float(cell: str, row: int, column: str) -> float | None:
    cell = cell.strip()
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: cannot parse {cell!r} as a number")


def _parse_gender(cell: str, row: int) -> Gender:
    cell = cell.strip().lower()
    if cell == "":
        return Gender.UNKNOWN
    try:
        return Gender(cell)
    except ValueError:
        raise DataError(f"row {row}, column 'gender': unknown gender {cell!r}")


def _parse_enum(cell: str, enum_cls, row: int, column: str):
    cell = cell.strip().lower()
    if cell == "":
        return None
    try:
        return enum_cls(cell)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: unknown value {cell!r}")


def load_clinical_csv(path: str | Path, biomarker_names: Sequence[str] | None = None) -> Cohort:
    """Load the clinical table. When ``biomarker_names`` is omitted the
    schema is taken from the header (every column after the fixed five).

    Empty cells become missing markers; row numbers in error messages count
    the header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        if tuple(header[: len(FIXED_COLUMNS)]) != FIXED_COLUMNS:
            raise DataError(
                f"{path}: header must start with {', '.join(FIXED_COLUMNS)}"
            )
        schema = tuple(header[len(FIXED_COLUMNS):])
        if biomarker_names is not None and tuple(biomarker_names) != schema:
            raise DataError(
                f"{path}: biomarker columns {list(schema)} do not match the "
                f"requested schema {list(biomarker_names)}"
            )

        records = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"row {row_no}: expected {len(header)} cells, found {len(row)}"
                )
            rid = row[0].strip()
            if not rid:
                raise DataError(f"row {row_no}, column 'id': empty id")
            risk = _parse_enum(row[3], RiskLabel, row_no, "risk_label")
            outcome = _parse_enum(row[4], OutcomeLabel, row_no, "outcome_label")
            biomarkers = {
                name: _parse_float(row[len(FIXED_COLUMNS) + j], row_no, name)
                for j, name in enumerate(schema)
            }
            try:
                records.append(
                    PatientRecord(
                        id=rid,
                        gender=_parse_gender(row[1], row_no),
                        age=_parse_float(row[2], row_no, "age"),
                        biomarkers=biomarkers,
                        risk_label=risk,
                        outcome_label=outcome,
                    )
                )
            except DataError as exc:
                raise DataError(f"row {row_no}: {exc}") from None
    return Cohort(records=tuple(records), biomarker_names=schema, feature_length=0)


def load_feature_csv(path: str | Path) -> dict[str, tuple[float, ...]]:
    """Image-feature table: column ``id`` then one numeric column per dim."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required")
        if not header or header[0].strip() != "id":
            raise DataError(f"{path}: first column must be 'id'")
        width = len(header) - 1
        out: dict[str, tuple[float, ...]] = {}
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"row {row_no}: expected {len(header)} cells, found {len(row)}"
                )
            rid = row[0].strip()
            if rid in out:
                raise DataError(f"row {row_no}: duplicate id {rid!r}")
            vec = []
            for j in range(width):
                v = _parse_float(row[1 + j], row_no, header[1 + j])
                if v is None:
                    raise DataError(
                        f"row {row_no}, column {header[1 + j]!r}: image features "
                        "cannot be missing"
                    )
                vec.append(v)
            out[rid] = tuple(vec)
    return out


def merge_features(cohort: Cohort, features: Mapping[str, tuple[float, ...]]) -> Cohort:
    """Attach image-feature vectors (keyed by id) to a clinical cohort."""
    lengths = {len(v) for v in features.values()}
    if len(lengths) > 1:
        raise DataError(f"inconsistent feature lengths {sorted(lengths)}")
    feature_length = lengths.pop() if lengths else 0
    unknown = set(features) - set(cohort.ids())
    if unknown:
        raise DataError(f"feature rows for unknown ids: {sorted(unknown)[:5]}")
    records = tuple(
        PatientRecord(
            id=r.id,
            gender=r.gender,
            age=r.age,
            biomarkers=r.biomarkers,
            image_features=features.get(r.id),
            risk_label=r.risk_label,
            outcome_label=r.outcome_label,
        )
        for r in cohort.records
    )
    return Cohort(records=records, biomarker_names=cohort.biomarker_names,
                  feature_length=feature_length)


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def save_clinical_csv(cohort: Cohort, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(FIXED_COLUMNS) + list(cohort.biomarker_names))
        for rec in cohort.records:
            writer.writerow(
                [
                    rec.id,
                    rec.gender.value,
                    _fmt(rec.age),
                    rec.risk_label.value if rec.risk_label else "",
                    rec.outcome_label.value if rec.outcome_label else "",
                ]
                + [_fmt(rec.biomarkers[name]) for name in cohort.biomarker_names]
            )


def save_feature_csv(cohort: Cohort, path: str | Path) -> None:
    path = Path(path)
    width = cohort.feature_length
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f{j:04d}" for j in range(width)])
        for rec in cohort.records:
            if rec.image_features is None:
                continue
            writer.writerow([rec.id] + [repr(float(v)) for v in rec.image_features])


# ---------------------------------------------------------------------------
# Fold planning and replication balancing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Stratified k-fold assignment of record ids to test folds."""

    k: int
    seed: int
    stratify_on: str
    assignments: Mapping[str, int]

    def test_ids(self, fold: int, ordered_ids: Sequence[str] | None = None) -> list[str]:
        ids = ordered_ids if ordered_ids is not None else list(self.assignments)
        return [i for i in ids if self.assignments[i] == fold]

    def train_ids(self, fold: int, ordered_ids: Sequence[str] | None = None) -> list[str]:
        ids = ordered_ids if ordered_ids is not None else list(self.assignments)
        return [i for i in ids if self.assignments[i] != fold]

    def fold_of(self, ids: Sequence[str]) -> np.ndarray:
        return np.array([self.assignments[i] for i in ids], dtype=np.int64)


def plan_folds(cohort: Cohort, k: int, label: str, seed: int) -> FoldPlan:
    """Deal each class round-robin into k folds after a seeded shuffle.

    The shuffle runs on xoshiro256** so the plan depends only on the seed.
    Per-fold class counts differ from one another by at most one record.
    """
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    y = cohort.labels(label)
    ids = cohort.ids()
    gen = Xoshiro256StarStar(seed)
    assignments: dict[str, int] = {}
    for cls in (0, 1):
        members = [i for i, lab in zip(ids, y) if lab == cls]
        if len(members) < k:
            raise DataError(
                f"class {cls} has {len(members)} records, fewer than k={k}"
            )
        gen.shuffle(members)
        for pos, rid in enumerate(members):
            assignments[rid] = pos % k
    # present assignments in cohort order
    ordered = {rid: assignments[rid] for rid in ids}
    return FoldPlan(k=k, seed=seed, stratify_on=label, assignments=ordered)


@dataclass(frozen=True)
class BalancePlan:
    """Per-class whole-record replication factors (training partitions only)."""

    factors: Mapping[int, int]

    def __post_init__(self):
        for cls, f in self.factors.items():
            if int(f) != f or f < 1:
                raise DataError(f"replication factor for class {cls} must be an integer >= 1")

    def factor(self, cls: int) -> int:
        return int(self.factors.get(cls, 1))


def balance_by_replication(
    train_ids: Sequence[str],
    labels: Mapping[str, int],
    plan: BalancePlan | None,
) -> list[str]:
    """Replicate each training id by its class factor, repeats adjacent.

    The output preserves the incoming order, so the expansion is
    deterministic and bit-exact: class counts multiply exactly by the
    configured factors.
    """
    if plan is None:
        return list(train_ids)
    out: list[str] = []
    for rid in train_ids:
        out.extend([rid] * plan.factor(labels[rid]))
    return out

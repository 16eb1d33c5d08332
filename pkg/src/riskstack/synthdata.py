"""Seeded generator of desk-scale multimodal cohorts with known ground truth.

Both modalities carry independent class signal: the clinical block has a
handful of informative Gaussian biomarkers among noise columns, and the
image block embeds class-separated latent factors into a high-dimensional
feature vector through a random orthogonal map plus isotropic noise. Because
the generative model is Gaussian with a shared covariance per modality, the
exact posterior probability of the positive class is available in closed
form for every row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    Cohort,
    Gender,
    OutcomeLabel,
    PatientRecord,
    RiskLabel,
)
from .glm import sigmoid
from .rng import spawned_rng


@dataclass(frozen=True)
class SynthSpec:
    n_per_class: tuple[int, int] = (450, 450)
    informative: int = 5
    noise_features: int = 15
    clinical_separation: float = 1.0  # per-informative-feature mean gap, in SDs
    image_latents: int = 4
    image_separation: float = 2.0  # latent mean distance between classes
    image_noise_sd: float = 1.0
    feature_length: int = 64
    missing_rate: float = 0.1
    label_noise: float = 0.0
    outcome_gain: float = 1.5  # log-odds slope of the secondary outcome signal
    seed: int = 0

    def __post_init__(self):
        if min(self.n_per_class) < 1:
            raise ValueError("need at least one record per class")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing rate must lie in [0, 1)")
        if not 0.0 <= self.label_noise <= 0.5:
            raise ValueError("label noise must lie in [0, 0.5]")
        if self.informative < 1 or self.image_latents < 1:
            raise ValueError("need at least one informative direction per modality")
        if self.feature_length < self.image_latents:
            raise ValueError("feature_length must hold all image latents")


@dataclass(frozen=True)
class GroundTruth:
    informative_features: tuple[str, ...]
    posterior: dict[str, float]  # P(high | x) including label noise
    outcome_posterior: dict[str, float]  # P(death | x), high-risk rows only
    clinical_log_odds: dict[str, float]
    image_log_odds: dict[str, float]

    def to_json(self) -> str:
        return json.dumps(
            {
                "informative_features": list(self.informative_features),
                "posterior": self.posterior,
                "outcome_posterior": self.outcome_posterior,
                "clinical_log_odds": self.clinical_log_odds,
                "image_log_odds": self.image_log_odds,
            },
            sort_keys=True,
            indent=2,
        )


def generate(spec: SynthSpec) -> tuple[Cohort, GroundTruth]:
    """Deterministic cohort plus per-row exact posterior record."""
    rng = spawned_rng(spec.seed, 0)
    n0, n1 = spec.n_per_class
    n = n0 + n1
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])

    d_inf, d_noise = spec.informative, spec.noise_features
    biomarker_names = tuple(
        [f"marker_{j + 1:02d}" for j in range(d_inf)]
        + [f"noise_{j + 1:02d}" for j in range(d_noise)]
    )

    # clinical block: informative columns shift by the separation for class 1
    clin = rng.normal(size=(n, d_inf + d_noise))
    clin[labels == 1, :d_inf] += spec.clinical_separation

    # image block: latent factors with mean gap `image_separation` along the
    # diagonal direction, pushed through a random orthogonal embedding
    r = spec.image_latents
    direction = np.ones(r) / math.sqrt(r)
    latents = rng.normal(size=(n, r))
    latents[labels == 1] += spec.image_separation * direction
    embed = np.linalg.qr(rng.normal(size=(spec.feature_length, r)))[0]  # d x r
    images = latents @ embed.T + spec.image_noise_sd * rng.normal(
        size=(n, spec.feature_length)
    )

    # exact class-1 log-odds per modality (shared covariance per block)
    prior = math.log(n1 / n0)
    clin_gap = np.zeros(d_inf + d_noise)
    clin_gap[:d_inf] = spec.clinical_separation
    clin_mid = clin_gap / 2.0
    clin_logodds = (clin - clin_mid) @ clin_gap

    img_gap = embed @ (spec.image_separation * direction)  # mean difference in x
    img_mid = img_gap / 2.0
    # covariance = embed embed^T + sd^2 I, whose action on embed is (1 + sd^2)
    img_w = img_gap / (1.0 + spec.image_noise_sd**2)
    img_logodds = (images - img_mid) @ img_w

    total_logodds = clin_logodds + img_logodds + prior
    posterior = sigmoid(total_logodds)
    if spec.label_noise > 0:
        flips = rng.random(n) < spec.label_noise
        labels = np.where(flips, 1 - labels, labels)
        posterior = (1 - spec.label_noise) * posterior + spec.label_noise * (1 - posterior)

    # secondary outcome signal among high-risk rows, driven by the clean
    # clinical log-odds so the death label is learnable but noisy
    centered = clin_logodds - clin_logodds.mean()
    scale = centered.std() or 1.0
    death_p = sigmoid(spec.outcome_gain * centered / scale)
    death_draw = rng.random(n) < death_p

    # MCAR missingness on the biomarker block and age
    miss = rng.random((n, d_inf + d_noise)) < spec.missing_rate
    age = np.clip(rng.normal(64.0, 15.0, size=n), 18.0, 100.0)
    age_miss = rng.random(n) < spec.missing_rate
    genders = rng.random(n) < 0.5

    records = []
    post_map: dict[str, float] = {}
    outcome_map: dict[str, float] = {}
    clin_map: dict[str, float] = {}
    img_map: dict[str, float] = {}
    for i in range(n):
        rid = f"p{i:04d}"
        risk = RiskLabel.HIGH if labels[i] == 1 else RiskLabel.LOW
        outcome = None
        if risk == RiskLabel.HIGH:
            outcome = OutcomeLabel.DEATH if death_draw[i] else OutcomeLabel.SURVIVED
            outcome_map[rid] = float(death_p[i])
        biomarkers = {
            name: (None if miss[i, j] else float(clin[i, j]))
            for j, name in enumerate(biomarker_names)
        }
        records.append(
            PatientRecord(
                id=rid,
                gender=Gender.MALE if genders[i] else Gender.FEMALE,
                age=None if age_miss[i] else float(age[i]),
                biomarkers=biomarkers,
                image_features=tuple(float(v) for v in images[i]),
                risk_label=risk,
                outcome_label=outcome,
            )
        )
        post_map[rid] = float(posterior[i])
        clin_map[rid] = float(clin_logodds[i])
        img_map[rid] = float(img_logodds[i])

    cohort = Cohort(
        records=tuple(records),
        biomarker_names=biomarker_names,
        feature_length=spec.feature_length,
    )
    truth = GroundTruth(
        informative_features=biomarker_names[:d_inf],
        posterior=post_map,
        outcome_posterior=outcome_map,
        clinical_log_odds=clin_map,
        image_log_odds=img_map,
    )
    return cohort, truth


def write_synth(spec: SynthSpec, out_dir: str | Path) -> tuple[Path, Path, Path]:
    """Emit clinical.csv, features.csv and truth.json under ``out_dir``."""
    from .data import save_clinical_csv, save_feature_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cohort, truth = generate(spec)
    clinical = out / "clinical.csv"
    features = out / "features.csv"
    truth_path = out / "truth.json"
    save_clinical_csv(cohort, clinical)
    save_feature_csv(cohort, features)
    truth_path.write_text(truth.to_json(), encoding="utf-8")
    return clinical, features, truth_path

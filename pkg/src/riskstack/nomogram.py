"""Logistic-regression nomogram over base-learner probability scores.

The fitted model is an intercept plus one signed coefficient per base
score. The linear prediction is a plain affine map; the death probability
is its sigmoid; the point axes rescale each predictor's contribution so the
largest-swing predictor spans exactly [0, 100] points, and the total-points
axis inverts back to a probability. Coefficient inference comes from a
seeded bootstrap (SE, Wald z, two-sided p, 95% CI).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import glm
from .glm import PerfectSeparationError


class NomogramError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientInference:
    names: tuple[str, ...]  # predictors then "intercept"
    estimates: tuple[float, ...]
    bootstrap_se: tuple[float, ...]
    z: tuple[float, ...]
    p: tuple[float, ...]
    ci_low: tuple[float, ...]
    ci_high: tuple[float, ...]
    resamples: int
    seed: int


@dataclass(frozen=True)
class NomogramModel:
    intercept: float
    coefficients: tuple[float, ...]
    predictor_names: tuple[str, ...] = ()
    ranges: tuple[tuple[float, float], ...] = ()
    points_scale: float = 100.0
    cutoff: float = 0.5
    inference: CoefficientInference | None = None

    def __post_init__(self):
        if not self.predictor_names:
            object.__setattr__(
                self,
                "predictor_names",
                tuple(f"score_{i + 1}" for i in range(len(self.coefficients))),
            )
        if not self.ranges:
            object.__setattr__(self, "ranges", tuple((0.0, 1.0) for _ in self.coefficients))
        if len(self.coefficients) != len(self.predictor_names) or len(self.coefficients) != len(self.ranges):
            raise NomogramError("coefficients, names and ranges must align")
        if not all(math.isfinite(c) for c in (*self.coefficients, self.intercept)):
            raise NomogramError("coefficients must be finite")
        if not 0.0 <= self.cutoff < 1.0:
            raise NomogramError(f"cutoff must lie in [0, 1), got {self.cutoff}")

    def to_dict(self) -> dict:
        payload = {
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
            "predictor_names": list(self.predictor_names),
            "ranges": [list(r) for r in self.ranges],
            "points_scale": self.points_scale,
            "cutoff": self.cutoff,
            "inference": None,
        }
        if self.inference is not None:
            inf = self.inference
            payload["inference"] = {
                "names": list(inf.names),
                "estimates": list(inf.estimates),
                "bootstrap_se": list(inf.bootstrap_se),
                "z": list(inf.z),
                "p": list(inf.p),
                "ci_low": list(inf.ci_low),
                "ci_high": list(inf.ci_high),
                "resamples": inf.resamples,
                "seed": inf.seed,
            }
        return payload

    @staticmethod
    def from_dict(payload: dict) -> "NomogramModel":
        inference = None
        if payload.get("inference"):
            raw = payload["inference"]
            inference = CoefficientInference(
                names=tuple(raw["names"]),
                estimates=tuple(raw["estimates"]),
                bootstrap_se=tuple(raw["bootstrap_se"]),
                z=tuple(raw["z"]),
                p=tuple(raw["p"]),
                ci_low=tuple(raw["ci_low"]),
                ci_high=tuple(raw["ci_high"]),
                resamples=int(raw["resamples"]),
                seed=int(raw["seed"]),
            )
        return NomogramModel(
            intercept=float(payload["intercept"]),
            coefficients=tuple(float(c) for c in payload["coefficients"]),
            predictor_names=tuple(payload["predictor_names"]),
            ranges=tuple((float(a), float(b)) for a, b in payload["ranges"]),
            points_scale=float(payload["points_scale"]),
            cutoff=float(payload["cutoff"]),
            inference=inference,
        )


def fit_nomogram(
    base_scores: np.ndarray,
    outcome: np.ndarray,
    resamples: int = 1000,
    seed: int = 0,
    l2: float = 0.0,
    predictor_names: tuple[str, ...] | None = None,
    cutoff: float = 0.5,
) -> NomogramModel:
    """Maximum-likelihood logistic fit (IRLS, tol 1e-10) with bootstrap SE.

    The bootstrap SE of each coefficient is the standard deviation over
    ``resamples`` seeded resamples refit with the same settings; z = beta/SE,
    p is the two-sided normal tail and the CI is beta +/- 1.96 SE. Perfect
    separation in the primary fit raises with advice to pass a ridge weight.
    """
    X = np.asarray(base_scores, dtype=float)
    y = np.asarray(outcome, dtype=float)
    if X.ndim != 2:
        raise NomogramError("base_scores must be a matrix")
    n, d = X.shape
    if n < 10:
        raise NomogramError(f"need at least 10 rows, got {n}")
    if len(np.unique(y)) < 2:
        raise NomogramError("both outcomes must be present")
    try:
        w, b = glm.logistic_fit(X, y, l2=l2, tol=1e-10, max_iter=200)
    except PerfectSeparationError as exc:
        raise NomogramError(
            f"{exc}; pass l2 > 0 to fit_nomogram for a regularized refit"
        ) from None

    rng = np.random.default_rng(seed)
    draws = np.empty((resamples, d + 1))
    for i in range(resamples):
        idx = rng.integers(0, n, size=n)
        yi = y[idx]
        if yi.min() == yi.max():  # degenerate resample: keep point estimate
            draws[i, :d] = w
            draws[i, d] = b
            continue
        # replicate fits keep the same ridge but never raise on separation
        wi, bi = glm.logistic_fit(X[idx], yi, l2=l2, tol=1e-10, max_iter=200,
                                  guard=math.inf)
        draws[i, :d] = wi
        draws[i, d] = bi
    se = draws.std(axis=0, ddof=1) if resamples > 1 else np.zeros(d + 1)
    estimates = np.concatenate([w, [b]])
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, estimates / se, np.inf * np.sign(estimates))
    p = np.array([math.erfc(abs(v) / math.sqrt(2)) if math.isfinite(v) else 0.0 for v in z])
    names = tuple(predictor_names or (f"score_{i + 1}" for i in range(d)))
    inference = CoefficientInference(
        names=names + ("intercept",),
        estimates=tuple(float(v) for v in estimates),
        bootstrap_se=tuple(float(v) for v in se),
        z=tuple(float(v) for v in z),
        p=tuple(float(v) for v in p),
        ci_low=tuple(float(v - 1.96 * s) for v, s in zip(estimates, se)),
        ci_high=tuple(float(v + 1.96 * s) for v, s in zip(estimates, se)),
        resamples=resamples,
        seed=seed,
    )
    return NomogramModel(
        intercept=float(b),
        coefficients=tuple(float(v) for v in w),
        predictor_names=names,
        cutoff=cutoff,
        inference=inference,
    )


def _check_inputs(model: NomogramModel, values: tuple[float, ...]) -> None:
    if len(values) != len(model.coefficients):
        raise NomogramError(
            f"expected {len(model.coefficients)} scores, got {len(values)}"
        )
    for name, v, (lo, hi) in zip(model.predictor_names, values, model.ranges):
        if not lo <= v <= hi:
            raise NomogramError(f"{name} = {v} outside its range [{lo}, {hi}]")


def linear_prediction(model: NomogramModel, *scores: float) -> float:
    """Intercept plus the signed dot product with the base scores."""
    _check_inputs(model, scores)
    return model.intercept + float(
        sum(c * s for c, s in zip(model.coefficients, scores))
    )


def death_probability(model: NomogramModel, *scores: float) -> float:
    return float(glm.sigmoid(linear_prediction(model, *scores)))


def classify(model: NomogramModel, *scores: float) -> str:
    """"death" when the probability reaches the cutoff (boundary inclusive)."""
    return "death" if death_probability(model, *scores) >= model.cutoff else "survived"


# ---------------------------------------------------------------------------
# Point axes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictorAxis:
    name: str
    lo: float
    hi: float
    zero_end: float  # predictor value worth 0 points
    max_points: float
    samples: tuple[tuple[float, float], ...]  # (value, points)

    def points(self, value: float) -> float:
        if self.hi == self.lo:
            return 0.0
        span = self.max_points / (self.hi - self.lo)
        return abs(value - self.zero_end) * span


@dataclass(frozen=True)
class NomogramAxes:
    axes: tuple[PredictorAxis, ...]
    lp_at_zero_points: float
    lp_per_point: float
    total_max: float
    cutoff_points: float | None
    total_samples: tuple[tuple[float, float], ...]  # (total points, probability)

    def probability_of_total(self, total_points: float) -> float:
        return float(glm.sigmoid(self.lp_at_zero_points + self.lp_per_point * total_points))

    def total_of_probability(self, probability: float) -> float:
        lp = math.log(probability / (1.0 - probability))
        return (lp - self.lp_at_zero_points) / self.lp_per_point


def points_axes(model: NomogramModel, samples_per_axis: int = 11) -> NomogramAxes:
    """Per-predictor piecewise-linear point mappings plus the
    total-points-to-probability curve.

    points_j(x) grows away from the range endpoint that minimizes
    beta_j * x, and the largest |beta| * range predictor spans exactly
    [0, points_scale].
    """
    spans = [abs(c) * (hi - lo) for c, (lo, hi) in zip(model.coefficients, model.ranges)]
    max_span = max(spans)
    if max_span == 0:
        raise NomogramError("all coefficients are zero; no axis to draw")
    scale = model.points_scale / max_span  # points per unit of |beta * x|

    axes = []
    lp_zero = model.intercept
    for c, name, (lo, hi) in zip(model.coefficients, model.predictor_names, model.ranges):
        zero_end = lo if c >= 0 else hi
        lp_zero += c * zero_end
        max_points = abs(c) * (hi - lo) * scale
        grid = np.linspace(lo, hi, samples_per_axis)
        samples = tuple((float(v), float(abs(v - zero_end) * abs(c) * scale)) for v in grid)
        axes.append(
            PredictorAxis(
                name=name,
                lo=lo,
                hi=hi,
                zero_end=zero_end,
                max_points=max_points,
                samples=samples,
            )
        )

    lp_per_point = max_span / model.points_scale
    total_max = sum(a.max_points for a in axes)

    cutoff_points: float | None = None
    if 0.0 < model.cutoff < 1.0:
        lp_cut = math.log(model.cutoff / (1.0 - model.cutoff))
        cutoff_points = (lp_cut - lp_zero) / lp_per_point

    grid = np.linspace(0.0, total_max, 101)
    total_samples = tuple(
        (float(t), float(glm.sigmoid(lp_zero + lp_per_point * t))) for t in grid
    )
    return NomogramAxes(
        axes=tuple(axes),
        lp_at_zero_points=lp_zero,
        lp_per_point=lp_per_point,
        total_max=total_max,
        cutoff_points=cutoff_points,
        total_samples=total_samples,
    )


def predictor_points(model: NomogramModel, *scores: float) -> tuple[list[float], float]:
    """Per-predictor points for one input plus their total."""
    _check_inputs(model, scores)
    ax = points_axes(model)
    pts = [a.points(v) for a, v in zip(ax.axes, scores)]
    return pts, float(sum(pts))


def axes_json(model: NomogramModel) -> dict:
    """JSON-ready export: sampled polylines, coefficients and the cutoff."""
    ax = points_axes(model)
    return {
        "coefficients": {
            "intercept": model.intercept,
            **{n: c for n, c in zip(model.predictor_names, model.coefficients)},
        },
        "cutoff": model.cutoff,
        "points_scale": model.points_scale,
        "axes": [
            {
                "name": a.name,
                "range": [a.lo, a.hi],
                "zero_end": a.zero_end,
                "max_points": a.max_points,
                "polyline": [list(s) for s in a.samples],
            }
            for a in ax.axes
        ],
        "total_axis": {
            "max_points": ax.total_max,
            "cutoff_points": ax.cutoff_points,
            "polyline": [list(s) for s in ax.total_samples],
        },
    }


# ---------------------------------------------------------------------------
# SVG rendering (row layout: points, predictors, total, probability)
# ---------------------------------------------------------------------------

_SVG_W = 720
_MARGIN_L = 150
_MARGIN_R = 40
_ROW_H = 52


def _tick(x: float, y: float, label: str, above: bool = False) -> str:
    ty = y - 8 if above else y + 18
    return (
        f'<line x1="{x:.1f}" y1="{y - 5:.1f}" x2="{x:.1f}" y2="{y + 5:.1f}" '
        f'stroke="#333" stroke-width="1"/>'
        f'<text x="{x:.1f}" y="{ty:.1f}" font-size="10" text-anchor="middle" '
        f'fill="#333">{label}</text>'
    )


def _row(label: str, y: float) -> str:
    return (
        f'<text x="{_MARGIN_L - 12:.1f}" y="{y + 4:.1f}" font-size="12" '
        f'text-anchor="end" fill="#111">{label}</text>'
        f'<line x1="{_MARGIN_L}" y1="{y:.1f}" x2="{_SVG_W - _MARGIN_R}" '
        f'y2="{y:.1f}" stroke="#333" stroke-width="1.2"/>'
    )


def nomogram_svg(model: NomogramModel) -> str:
    """Row-layout rendering: a shared points ruler, one row per predictor,
    a total-points row and the probability row with the cutoff marked."""
    ax = points_axes(model)
    width = _SVG_W - _MARGIN_L - _MARGIN_R
    rows = 3 + len(ax.axes)
    height = _ROW_H * (rows + 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" '
        f'height="{height}" viewBox="0 0 {_SVG_W} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    y = _ROW_H * 0.8

    parts.append(_row("Points", y))
    for frac in np.linspace(0, 1, 11):
        x = _MARGIN_L + frac * width
        parts.append(_tick(x, y, f"{frac * model.points_scale:.0f}", above=True))

    for axis in ax.axes:
        y += _ROW_H
        parts.append(_row(axis.name, y))
        for value, pts in axis.samples:
            x = _MARGIN_L + (pts / model.points_scale) * width
            parts.append(_tick(x, y, f"{value:.2g}"))

    y += _ROW_H
    parts.append(_row("Total points", y))
    for frac in np.linspace(0, 1, 11):
        x = _MARGIN_L + frac * width
        parts.append(_tick(x, y, f"{frac * ax.total_max:.0f}", above=True))

    y += _ROW_H
    parts.append(_row("Death probability", y))
    for prob in (0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999):
        try:
            total = ax.total_of_probability(prob)
        except (ValueError, ZeroDivisionError):
            continue
        if 0.0 <= total <= ax.total_max:
            x = _MARGIN_L + (total / ax.total_max) * width
            parts.append(_tick(x, y, f"{prob:g}"))
    if ax.cutoff_points is not None and 0.0 <= ax.cutoff_points <= ax.total_max:
        x = _MARGIN_L + (ax.cutoff_points / ax.total_max) * width
        parts.append(
            f'<line x1="{x:.1f}" y1="{y - 16:.1f}" x2="{x:.1f}" y2="{y + 6:.1f}" '
            f'stroke="#c00" stroke-width="1.5" stroke-dasharray="4 2"/>'
            f'<text x="{x:.1f}" y="{y - 20:.1f}" font-size="10" fill="#c00" '
            f'text-anchor="middle">cutoff {model.cutoff:g}</text>'
        )
    parts.append("</svg>")
    return "".join(parts)

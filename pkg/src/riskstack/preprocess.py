"""Preprocessing: chained-equation imputation, z-scoring, gamma correction
of pixel grids, and PCA with whitening for image-feature reduction.

Matrices use NaN as the missing marker. All fitted models are frozen and
reusable on new data with the same column schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PreprocessError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Chained-equation imputation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImputationModel:
    """Per-column ridge regressions over the other columns, plus mean fills.

    ``coefficients[j]`` holds (intercept, beta over the remaining columns in
    schema order) for every column that had missing cells during fitting;
    columns complete at fit time fall back to their training mean.
    """

    columns: tuple[str, ...]
    means: np.ndarray
    coefficients: dict[int, np.ndarray]
    residual_sd: dict[int, float]
    sweeps: int
    seed: int
    noise: bool = False


def _ridge_solve(A: np.ndarray, y: np.ndarray, lam: float = 1e-6) -> np.ndarray:
    G = A.T @ A + lam * np.eye(A.shape[1])
    return np.linalg.solve(G, A.T @ y)


def _design(X: np.ndarray, j: int) -> np.ndarray:
    others = np.delete(X, j, axis=1)
    return np.column_stack([np.ones(len(X)), others])


def mice_fit(
    X: np.ndarray,
    sweeps: int = 10,
    seed: int = 0,
    columns: tuple[str, ...] | None = None,
    noise: bool = False,
) -> tuple[ImputationModel, np.ndarray]:
    """Fit chained-equation imputation and return (model, completed matrix).

    Missing cells start at the column mean, then ``sweeps`` passes re-regress
    every incomplete column on all the others (ridge 1e-6, fitted on the rows
    where the target is observed) and rewrite only the originally-missing
    cells. Deterministic unless ``noise`` is set, in which case seeded
    Gaussian residual draws are added to each imputed value.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    names = columns if columns is not None else tuple(f"col{j}" for j in range(d))
    mask = np.isnan(X)
    for j in range(d):
        observed = n - int(mask[:, j].sum())
        if observed == 0:
            raise PreprocessError(f"column {names[j]!r} has no observed values")
        if observed < 2:
            raise PreprocessError(f"column {names[j]!r} has fewer than 2 observed values")
    if sweeps < 1:
        raise PreprocessError("at least one sweep required")

    means = np.array([np.nanmean(X[:, j]) for j in range(d)])
    work = X.copy()
    for j in range(d):
        work[mask[:, j], j] = means[j]

    incomplete = [j for j in range(d) if mask[:, j].any()]
    coefficients: dict[int, np.ndarray] = {}
    residual_sd: dict[int, float] = {}
    rng = np.random.default_rng(seed)
    for _ in range(sweeps):
        for j in incomplete:
            obs = ~mask[:, j]
            A = _design(work, j)
            beta = _ridge_solve(A[obs], X[obs, j])
            pred = A[~obs] @ beta
            resid = X[obs, j] - A[obs] @ beta
            sd = float(np.sqrt(np.mean(resid**2))) if obs.sum() > 1 else 0.0
            if noise:
                pred = pred + rng.normal(0.0, sd, size=pred.shape)
            work[~obs, j] = pred
            coefficients[j] = beta
            residual_sd[j] = sd

    model = ImputationModel(
        columns=names,
        means=means,
        coefficients=coefficients,
        residual_sd=residual_sd,
        sweeps=sweeps,
        seed=seed,
        noise=noise,
    )
    return model, work


def mice_apply(model: ImputationModel, X: np.ndarray) -> np.ndarray:
    """Complete a matrix with the fitted regressions; observed cells untouched.

    Columns that were complete during fitting carry no regression and fall
    back to the training mean.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.columns):
        raise PreprocessError(
            f"expected {len(model.columns)} columns, got {X.shape[1] if X.ndim == 2 else 'non-matrix'}"
        )
    mask = np.isnan(X)
    work = X.copy()
    for j in range(X.shape[1]):
        work[mask[:, j], j] = model.means[j]
    rng = np.random.default_rng(model.seed)
    for _ in range(model.sweeps):
        for j, beta in model.coefficients.items():
            miss = mask[:, j]
            if not miss.any():
                continue
            A = _design(work, j)
            pred = A[miss] @ beta
            if model.noise:
                pred = pred + rng.normal(0.0, model.residual_sd[j], size=pred.shape)
            work[miss, j] = pred
    return work


# ---------------------------------------------------------------------------
# Z-score normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    """Per-feature mean and population (1/n) standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def constant_columns(self) -> np.ndarray:
        return self.std == 0.0


def zscore_fit(X: np.ndarray) -> Normalizer:
    X = np.asarray(X, dtype=float)
    if np.isnan(X).any():
        raise PreprocessError("normalizer must be fitted on complete data")
    return Normalizer(mean=X.mean(axis=0), std=X.std(axis=0))


def zscore_apply(norm: Normalizer, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != norm.mean.shape[0]:
        raise PreprocessError(
            f"expected {norm.mean.shape[0]} columns, got {X.shape[-1]}"
        )
    denom = np.where(norm.std == 0.0, 1.0, norm.std)
    out = (X - norm.mean) / denom
    out[..., norm.constant_columns] = 0.0
    return out


# ---------------------------------------------------------------------------
# Gamma correction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaMap:
    """Gamma as a single constant or a 256-entry lookup over grey levels."""

    gamma: float = 1.0
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.table is not None:
            if len(self.table) != 256:
                raise PreprocessError("gamma lookup table must have 256 entries")
            if any(g <= 0 for g in self.table):
                raise PreprocessError("gamma values must be positive")
        elif self.gamma <= 0:
            raise PreprocessError(f"gamma must be positive, got {self.gamma}")

    def gamma_of(self, grey: np.ndarray) -> np.ndarray:
        if self.table is None:
            return np.full(grey.shape, self.gamma)
        return np.asarray(self.table, dtype=float)[grey.astype(np.int64)]


def gamma_correct(pixels: np.ndarray, gmap: GammaMap) -> np.ndarray:
    """Map grey level G in [0,255] to 255*(G/255)**(1/gamma(G))."""
    pixels = np.asarray(pixels)
    if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
        raise PreprocessError("pixel values must lie in [0, 255]")
    g = pixels.astype(float)
    gam = gmap.gamma_of(pixels)
    return 255.0 * (g / 255.0) ** (1.0 / gam)


def read_pgm(path: str | Path) -> np.ndarray:
    """Binary (P5) 8-bit PGM reader."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise PreprocessError(f"{path}: not a binary P5 PGM file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        try:
            fields.append(int(raw[start:pos]))
        except ValueError:
            raise PreprocessError(f"{path}: malformed PGM header")
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise PreprocessError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    if data.size != width * height:
        raise PreprocessError(f"{path}: truncated pixel data")
    return data.reshape(height, width).copy()


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise PreprocessError("PGM writer expects a 2-D grid")
    arr = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + arr.tobytes())


def image_to_features(pixels: np.ndarray, feature_length: int) -> np.ndarray:
    """Block-mean pool a grey image into a fixed-length vector in [0, 1].

    The grid is pooled to the smallest g x g layout with g*g >= length and
    flattened row-major; surplus cells are dropped. This is the documented
    low-fidelity ingestion path for raw images supplied without a
    precomputed feature vector.
    """
    pixels = np.asarray(pixels, dtype=float)
    if pixels.ndim != 2:
        raise PreprocessError("expected a 2-D pixel grid")
    g = math.ceil(math.sqrt(feature_length))
    rows = np.array_split(np.arange(pixels.shape[0]), g)
    cols = np.array_split(np.arange(pixels.shape[1]), g)
    pooled = np.empty((g, g))
    for i, ri in enumerate(rows):
        band = pixels[ri, :]
        for j, cj in enumerate(cols):
            pooled[i, j] = band[:, cj].mean()
    return pooled.ravel()[:feature_length] / 255.0


# ---------------------------------------------------------------------------
# PCA with whitening
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PCAModel:
    input_dim: int
    n_components: int
    mean: np.ndarray
    components: np.ndarray  # p x d, orthonormal rows
    eigenvalues: np.ndarray  # nonincreasing, >= 0
    whiten: bool
    eps: float = 1e-10

    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        return self.eigenvalues / total if total > 0 else self.eigenvalues * 0.0


def pca_fit(X: np.ndarray, n_components: int, whiten: bool = True, eps: float = 1e-10) -> PCAModel:
    """Top components of the sample covariance (denominator n-1) via SVD.

    Sign convention: the largest-magnitude entry of every component is
    positive. Eigenvalues are clamped below ``eps`` only when dividing for
    whitening, never in the stored spectrum.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= n_components <= min(n - 1, d):
        raise PreprocessError(
            f"n_components must be in [1, {min(n - 1, d)}], got {n_components}"
        )
    mean = X.mean(axis=0)
    centered = X - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (s**2) / (n - 1)
    components = vt[:n_components].copy()
    for row in components:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    return PCAModel(
        input_dim=d,
        n_components=n_components,
        mean=mean,
        components=components,
        eigenvalues=np.maximum(eigenvalues[:n_components], 0.0),
        whiten=whiten,
        eps=eps,
    )


def pca_transform(model: PCAModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.input_dim:
        raise PreprocessError(f"expected {model.input_dim} columns, got {X.shape[-1]}")
    Z = (X - model.mean) @ model.components.T
    if model.whiten:
        Z = Z / np.sqrt(np.maximum(model.eigenvalues, model.eps))
    return Z


def pca_inverse(model: PCAModel, Z: np.ndarray) -> np.ndarray:
    """Map reduced coordinates back into the original space."""
    Z = np.asarray(Z, dtype=float)
    if model.whiten:
        Z = Z * np.sqrt(np.maximum(model.eigenvalues, model.eps))
    return Z @ model.components + model.mean

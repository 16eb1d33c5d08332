"""Base classifiers behind one fit/predict-probability abstraction.

Six algorithms are implemented from first principles: logistic regression
(Newton/IRLS), linear discriminant analysis, k-nearest neighbours, random
forest, extremely randomized trees and gradient-boosted trees with logistic
loss. Every learner is deterministic for a fixed seed and emits a positive
class probability in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import glm
from .trees import Tree, grow_tree

ALGORITHMS = (
    "logistic_regression",
    "lda",
    "knn",
    "random_forest",
    "extra_trees",
    "gradient_boosting",
)


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerSpec:
    """Algorithm choice plus hyperparameters, validated at construction.

    ``max_depth`` of None means unlimited for the forest learners and the
    boosting default of 3 for gradient_boosting. ``max_features`` may be
    "sqrt", "all" or an integer count of candidate features per split.
    """

    algorithm: str
    seed: int = 0
    name: str = ""
    # logistic regression
    l2: float = 1e-4
    tol: float = 1e-8
    max_iter: int = 100
    # lda
    ridge_scale: float = 1e-6
    # knn
    k: int = 5
    # tree ensembles
    trees: int = 200
    max_depth: int | None = None
    min_leaf: int = 1
    max_features: str | int = "sqrt"
    learning_rate: float = 0.1
    leaf_lambda: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise LearnerError(f"unknown algorithm {self.algorithm!r}")
        if not self.name:
            object.__setattr__(self, "name", self.algorithm)
        if self.k < 1:
            raise LearnerError("k must be >= 1")
        if self.trees < 1:
            raise LearnerError("tree count must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise LearnerError("learning rate must lie in (0, 1]")
        if self.max_depth is not None and self.max_depth < 1:
            raise LearnerError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise LearnerError("min_leaf must be >= 1")
        if self.l2 < 0 or self.leaf_lambda < 0 or self.ridge_scale < 0:
            raise LearnerError("regularization weights must be nonnegative")
        if isinstance(self.max_features, str) and self.max_features not in ("sqrt", "all"):
            raise LearnerError(f"max_features must be 'sqrt', 'all' or an int")
        if isinstance(self.max_features, int) and self.max_features < 1:
            raise LearnerError("max_features must be >= 1")

    def with_seed(self, seed: int) -> "LearnerSpec":
        return replace(self, seed=seed)

    def resolve_max_features(self, d: int) -> int | None:
        if self.max_features == "all":
            return None
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(d)))
        return min(int(self.max_features), d)


@dataclass(frozen=True)
class TrainedLearner:
    spec: LearnerSpec
    n_features: int
    params: dict
    staged_log_loss: tuple[float, ...] = field(default=())

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise LearnerError(
                f"expected {self.n_features} features, got "
                f"{X.shape[1] if X.ndim == 2 else 'non-matrix input'}"
            )
        return _PREDICTORS[self.spec.algorithm](self, X)

    def predict(self, X: np.ndarray, cutoff: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= cutoff).astype(np.int64)


def _check_training_data(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise LearnerError("X must be a 2-D matrix")
    if np.isnan(X).any():
        raise LearnerError("training matrix contains missing values")
    classes = np.unique(y)
    if not np.array_equal(classes, [0, 1]):
        raise LearnerError(f"labels must be binary 0/1, found {classes.tolist()}")
    for cls in (0, 1):
        if (y == cls).sum() < 2:
            raise LearnerError(f"class {cls} needs at least 2 training rows")
    return X, y.astype(np.int64)


def train(spec: LearnerSpec, X: np.ndarray, y: np.ndarray) -> TrainedLearner:
    X, y = _check_training_data(X, y)
    return _TRAINERS[spec.algorithm](spec, X, y)


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


def _train_logistic(spec: LearnerSpec, X, y) -> TrainedLearner:
    w, b = glm.logistic_fit(X, y, l2=spec.l2, tol=spec.tol, max_iter=spec.max_iter)
    return TrainedLearner(spec=spec, n_features=X.shape[1],
                          params={"weights": w, "intercept": b})


def _predict_logistic(model: TrainedLearner, X) -> np.ndarray:
    z = X @ model.params["weights"] + model.params["intercept"]
    return np.clip(glm.sigmoid(z), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Linear discriminant analysis
# ---------------------------------------------------------------------------


def _train_lda(spec: LearnerSpec, X, y) -> TrainedLearner:
    d = X.shape[1]
    X0, X1 = X[y == 0], X[y == 1]
    mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
    s0 = (X0 - mu0).T @ (X0 - mu0)
    s1 = (X1 - mu1).T @ (X1 - mu1)
    pooled = (s0 + s1) / (len(X) - 2)
    ridge = spec.ridge_scale * np.trace(pooled) / d
    pooled = pooled + ridge * np.eye(d)
    try:
        w = np.linalg.solve(pooled, mu1 - mu0)
    except np.linalg.LinAlgError:
        raise LearnerError("pooled covariance is singular even after ridging")
    log_prior = math.log(len(X1) / len(X0))
    b = -0.5 * float((mu0 + mu1) @ w) + log_prior
    return TrainedLearner(spec=spec, n_features=d,
                          params={"weights": w, "intercept": b})


_predict_lda = _predict_logistic  # shared linear-score sigmoid


# ---------------------------------------------------------------------------
# K-nearest neighbours
# ---------------------------------------------------------------------------


def _train_knn(spec: LearnerSpec, X, y) -> TrainedLearner:
    return TrainedLearner(spec=spec, n_features=X.shape[1],
                          params={"X": X.copy(), "y": y.copy()})


def _predict_knn(model: TrainedLearner, X) -> np.ndarray:
    train_X = model.params["X"]
    train_y = model.params["y"]
    k = min(model.spec.k, len(train_X))
    out = np.empty(len(X))
    for i, row in enumerate(X):
        dist = np.sqrt(((train_X - row) ** 2).sum(axis=1))
        # distance ties resolve to the lower training-row index
        order = np.lexsort((np.arange(len(train_X)), dist))
        out[i] = train_y[order[:k]].mean()
    return out


# ---------------------------------------------------------------------------
# Tree ensembles
# ---------------------------------------------------------------------------


def _tree_rngs(seed: int, count: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _train_forest(spec: LearnerSpec, X, y, random_thresholds: bool) -> TrainedLearner:
    n, d = X.shape
    mtry = spec.resolve_max_features(d)
    trees: list[Tree] = []
    for rng in _tree_rngs(spec.seed, spec.trees):
        if random_thresholds:
            Xb, yb = X, y.astype(float)
        else:
            boot = rng.integers(0, n, size=n)
            Xb, yb = X[boot], y[boot].astype(float)
        trees.append(
            grow_tree(
                Xb,
                yb,
                criterion="gini",
                max_depth=spec.max_depth,
                min_leaf=spec.min_leaf,
                max_features=mtry,
                random_thresholds=random_thresholds,
                rng=rng,
            )
        )
    importances = np.mean([t.importances for t in trees], axis=0)
    return TrainedLearner(
        spec=spec,
        n_features=d,
        params={"trees": trees, "importances": importances},
    )


def _train_random_forest(spec: LearnerSpec, X, y) -> TrainedLearner:
    return _train_forest(spec, X, y, random_thresholds=False)


def _train_extra_trees(spec: LearnerSpec, X, y) -> TrainedLearner:
    return _train_forest(spec, X, y, random_thresholds=True)


def _predict_forest(model: TrainedLearner, X) -> np.ndarray:
    # probability = mean of per-tree leaf class frequencies, kept smooth for
    # the downstream meta-learner
    acc = np.zeros(len(X))
    for tree in model.params["trees"]:
        acc += tree.predict(X)
    return np.clip(acc / len(model.params["trees"]), 0.0, 1.0)


def _train_gradient_boosting(spec: LearnerSpec, X, y) -> TrainedLearner:
    n, d = X.shape
    depth = spec.max_depth if spec.max_depth is not None else 3
    base_rate = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    f0 = math.log(base_rate / (1.0 - base_rate))
    scores = np.full(n, f0)
    yf = y.astype(float)
    staged = [glm.log_loss(yf, glm.sigmoid(scores))]
    trees: list[Tree] = []
    for _ in range(spec.trees):
        p = glm.sigmoid(scores)
        resid = yf - p
        hess = np.maximum(p * (1.0 - p), 1e-12)
        tree = grow_tree(
            X,
            resid,
            criterion="variance",
            max_depth=depth,
            min_leaf=spec.min_leaf,
            max_features=None,
            hess=hess,
            leaf_lambda=spec.leaf_lambda,
        )
        trees.append(tree)
        scores = scores + spec.learning_rate * tree.predict(X)
        staged.append(glm.log_loss(yf, glm.sigmoid(scores)))
    return TrainedLearner(
        spec=spec,
        n_features=d,
        params={"trees": trees, "initial_score": f0},
        staged_log_loss=tuple(staged),
    )


def _predict_gradient_boosting(model: TrainedLearner, X) -> np.ndarray:
    scores = np.full(len(X), model.params["initial_score"])
    for tree in model.params["trees"]:
        scores += model.spec.learning_rate * tree.predict(X)
    return np.clip(glm.sigmoid(scores), 0.0, 1.0)


_TRAINERS = {
    "logistic_regression": _train_logistic,
    "lda": _train_lda,
    "knn": _train_knn,
    "random_forest": _train_random_forest,
    "extra_trees": _train_extra_trees,
    "gradient_boosting": _train_gradient_boosting,
}

_PREDICTORS = {
    "logistic_regression": _predict_logistic,
    "lda": _predict_lda,
    "knn": _predict_knn,
    "random_forest": _predict_forest,
    "extra_trees": _predict_forest,
    "gradient_boosting": _predict_gradient_boosting,
}


# ---------------------------------------------------------------------------
# Serialization (model bundle payloads)
# ---------------------------------------------------------------------------


def learner_to_dict(model: TrainedLearner) -> dict:
    spec = model.spec
    payload: dict = {
        "spec": {
            "algorithm": spec.algorithm,
            "seed": spec.seed,
            "name": spec.name,
            "l2": spec.l2,
            "tol": spec.tol,
            "max_iter": spec.max_iter,
            "ridge_scale": spec.ridge_scale,
            "k": spec.k,
            "trees": spec.trees,
            "max_depth": spec.max_depth,
            "min_leaf": spec.min_leaf,
            "max_features": spec.max_features,
            "learning_rate": spec.learning_rate,
            "leaf_lambda": spec.leaf_lambda,
        },
        "n_features": model.n_features,
    }
    alg = spec.algorithm
    if alg in ("logistic_regression", "lda"):
        payload["weights"] = model.params["weights"].tolist()
        payload["intercept"] = model.params["intercept"]
    elif alg == "knn":
        payload["X"] = model.params["X"].tolist()
        payload["y"] = model.params["y"].tolist()
    else:
        payload["trees"] = [t.to_arrays() for t in model.params["trees"]]
        if alg == "gradient_boosting":
            payload["initial_score"] = model.params["initial_score"]
    return payload


def learner_from_dict(payload: dict) -> TrainedLearner:
    spec_d = dict(payload["spec"])
    spec = LearnerSpec(**spec_d)
    alg = spec.algorithm
    n_features = int(payload["n_features"])
    if alg in ("logistic_regression", "lda"):
        params = {
            "weights": np.asarray(payload["weights"], dtype=float),
            "intercept": float(payload["intercept"]),
        }
    elif alg == "knn":
        params = {
            "X": np.asarray(payload["X"], dtype=float),
            "y": np.asarray(payload["y"], dtype=np.int64),
        }
    else:
        params = {"trees": [Tree.from_arrays(t, n_features) for t in payload["trees"]]}
        if alg == "gradient_boosting":
            params["initial_score"] = float(payload["initial_score"])
    return TrainedLearner(spec=spec, n_features=n_features, params=params)

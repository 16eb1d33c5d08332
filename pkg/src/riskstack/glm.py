"""Newton/IRLS logistic regression shared by the base learner, the stacking
meta-learner and the nomogram fit."""

from __future__ import annotations

import numpy as np


class PerfectSeparationError(RuntimeError):
    """Unpenalized fit diverged; retry with a positive ridge weight."""


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1.0 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def logistic_nll_grad(
    weights: np.ndarray,
    intercept: float,
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
) -> tuple[float, np.ndarray, float]:
    """Penalized negative log-likelihood and its analytic gradient.

    The ridge penalty 0.5*l2*||w||^2 excludes the intercept. Returned
    gradient components are (d/dw, d/db).
    """
    z = X @ weights + intercept
    p = sigmoid(z)
    pc = np.clip(p, 1e-15, 1.0 - 1e-15)
    nll = -float(np.sum(y * np.log(pc) + (1 - y) * np.log(1 - pc)))
    nll += 0.5 * l2 * float(weights @ weights)
    grad_w = X.T @ (p - y) + l2 * weights
    grad_b = float(np.sum(p - y))
    return nll, grad_w, grad_b


def logistic_fit(
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 100,
    guard: float = 500.0,
) -> tuple[np.ndarray, float]:
    """Fit by Newton steps; converged when max |delta| < tol.

    With ``l2`` == 0 a diverging coefficient norm (beyond ``guard``) raises
    PerfectSeparationError instead of returning garbage; any positive ridge
    keeps the problem strictly convex and the guard is disabled.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    A = np.column_stack([X, np.ones(n)])
    beta = np.zeros(d + 1)
    penalty = np.full(d + 1, l2)
    penalty[-1] = 0.0  # intercept unpenalized

    for _ in range(max_iter):
        z = A @ beta
        p = sigmoid(z)
        w = np.maximum(p * (1 - p), 1e-12)
        H = (A * w[:, None]).T @ A + np.diag(penalty)
        g = A.T @ (y - p) - penalty * beta
        try:
            delta = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise PerfectSeparationError(
                "singular Hessian; data may be perfectly separated -- refit "
                "with a positive l2 ridge"
            )
        beta = beta + delta
        if l2 == 0.0 and np.max(np.abs(beta)) > guard:
            raise PerfectSeparationError(
                "coefficients diverged during unpenalized fit; data appears "
                "perfectly separated -- refit with a positive l2 ridge"
            )
        if np.max(np.abs(delta)) < tol:
            break
    return beta[:d], float(beta[d])

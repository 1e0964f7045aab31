"""Deterministic linear soft-margin SVM trained in the dual.

Solves the L2-regularized hinge-loss primal

    min_{w,b}  0.5 * (||w||^2 + b^2) + C * sum_i max(0, 1 - y_i (w.x_i + b))

with the bias folded in as a constant feature, via cyclic dual coordinate
descent: zero-initialized, no randomization, iterating until the duality
gap falls below tolerance.  The regularized bias keeps the dual a plain
box-constrained QP with a strictly positive diagonal, so every coordinate
update is closed-form and the run is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PASSED = "passed"
FAILED = "failed"


@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    c: float
    passes: int
    converged: bool
    primal_objective: float

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> list[str]:
        # a score of exactly zero takes the conservative label
        return [PASSED if score > 0 else FAILED for score in self.decision_function(X)]


def svm_objective(X: np.ndarray, y_pm: np.ndarray, weights: np.ndarray, bias: float, c: float) -> float:
    """Primal objective value for given parameters (bias regularized)."""
    margins = 1.0 - y_pm * (X @ weights + bias)
    hinge = np.maximum(margins, 0.0).sum()
    return 0.5 * (weights @ weights + bias * bias) + c * hinge


def labels_to_pm(y: list[str] | np.ndarray) -> np.ndarray:
    return np.asarray([1.0 if label == PASSED else -1.0 for label in y])


def train_svm(
    X: np.ndarray,
    y: list[str] | np.ndarray,
    c: float,
    tol: float = 1e-8,
    max_passes: int = 50_000,
) -> LinearSvmModel:
    """Train on ``"passed"`` / ``"failed"`` labels; raises on non-finite input."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature values")
    if c <= 0:
        raise ValueError("C must be positive")
    y_pm = labels_to_pm(y)
    if y_pm.shape[0] != X.shape[0]:
        raise ValueError("X and y length mismatch")

    n, d = X.shape
    augmented = np.hstack([X, np.ones((n, 1))])
    diag = np.einsum("ij,ij->i", augmented, augmented)  # >= 1, bias column
    alpha = np.zeros(n)
    w = np.zeros(d + 1)

    passes = 0
    converged = False
    while passes < max_passes:
        passes += 1
        for i in range(n):
            gradient = y_pm[i] * (augmented[i] @ w) - 1.0
            if alpha[i] <= 0.0:
                projected = min(gradient, 0.0)
            elif alpha[i] >= c:
                projected = max(gradient, 0.0)
            else:
                projected = gradient
            if projected == 0.0:
                continue
            updated = min(max(alpha[i] - gradient / diag[i], 0.0), c)
            if updated != alpha[i]:
                w += (updated - alpha[i]) * y_pm[i] * augmented[i]
                alpha[i] = updated
        w = (alpha * y_pm) @ augmented  # shed incremental float drift
        primal = svm_objective(X, y_pm, w[:d], w[d], c)
        dual = alpha.sum() - 0.5 * (w @ w)
        if primal - dual <= tol:
            converged = True
            break

    weights = w[:d].copy()
    bias = float(w[d])
    return LinearSvmModel(
        weights=weights,
        bias=bias,
        c=c,
        passes=passes,
        converged=converged,
        primal_objective=svm_objective(X, y_pm, weights, bias, c),
    )

"""Soft-margin SVM on precomputed kernels, trained by SMO.

The dual problem  max sum(a) - 1/2 aQa  s.t. 0 <= a <= C, y.a = 0  is
solved by repeatedly picking the maximal-KKT-violating pair (the argmax /
argmin of y_i - u_i over the up/low index sets) and solving the two-
variable subproblem analytically. Training stops when the violation gap
drops below ``tol``, which bounds every KKT residual by tol; the pairwise
updates keep sum(a_i y_i) = 0 to float precision throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, DegenerateModelError
from .qkernel import KernelMatrix

_BOUND_EPS = 1e-12
SERIALIZATION_VERSION = 1


@dataclass
class SvmModel:
    """dual_coefs holds a_i * y_i for support vectors only (a_i > 0)."""

    dual_coefs: np.ndarray
    support_indices: np.ndarray
    bias: float
    C: float

    def __post_init__(self):
        self.dual_coefs = np.asarray(self.dual_coefs, dtype=np.float64)
        self.support_indices = np.asarray(self.support_indices, dtype=np.int64)
        if self.dual_coefs.shape != self.support_indices.shape:
            raise ValueError("dual_coefs and support_indices lengths differ")
        if np.any(np.abs(self.dual_coefs) > self.C + 1e-9):
            raise ValueError("dual coefficients exceed the box constraint")

    def to_dict(self) -> dict:
        return {
            "version": SERIALIZATION_VERSION,
            "kind": "binary",
            "dual_coefs": self.dual_coefs.tolist(),
            "support_indices": self.support_indices.tolist(),
            "bias": self.bias,
            "C": self.C,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SvmModel":
        if data.get("version") != SERIALIZATION_VERSION:
            raise ValueError(f"unsupported model version {data.get('version')!r}")
        return cls(
            np.array(data["dual_coefs"]),
            np.array(data["support_indices"], dtype=np.int64),
            float(data["bias"]),
            float(data["C"]),
        )


def _kernel_values(kernel) -> np.ndarray:
    if isinstance(kernel, KernelMatrix):
        return kernel.values
    return np.asarray(kernel, dtype=np.float64)


def fit(
    kernel,
    y: Sequence[float],
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 100_000,
) -> SvmModel:
    """Train a binary SVM on a precomputed kernel with labels in {-1, +1}."""
    k = _kernel_values(kernel)
    y = np.asarray(y, dtype=np.float64)
    m = len(y)
    if k.shape != (m, m):
        raise ValueError(f"kernel shape {k.shape} does not match {m} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.all(y == y[0]):
        raise DegenerateModelError("all training labels belong to one class")
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")

    alpha = np.zeros(m)
    grad = -np.ones(m)  # gradient of the dual objective (to be minimized)
    pos = y > 0

    for _ in range(max_passes):
        val = -y * grad  # equals y_i - u_i
        up = (pos & (alpha < C - _BOUND_EPS)) | (~pos & (alpha > _BOUND_EPS))
        low = (~pos & (alpha < C - _BOUND_EPS)) | (pos & (alpha > _BOUND_EPS))
        up_val = np.where(up, val, -np.inf)
        low_val = np.where(low, val, np.inf)
        i = int(np.argmax(up_val))
        j = int(np.argmin(low_val))
        gap = up_val[i] - low_val[j]
        if gap <= tol:
            break
        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        step = gap / max(eta, _BOUND_EPS)
        cap_i = (C - alpha[i]) if pos[i] else alpha[i]
        cap_j = alpha[j] if pos[j] else (C - alpha[j])
        step = min(step, cap_i, cap_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        np.clip(alpha, 0.0, C, out=alpha)
        grad += step * y * (k[:, i] - k[:, j])
    else:
        raise ConvergenceError(f"SMO did not converge within {max_passes} passes (gap {gap:.3e})")

    val = -y * grad
    free = (alpha > _BOUND_EPS) & (alpha < C - _BOUND_EPS)
    if free.any():
        bias = float(np.mean(val[free]))
    else:
        up = (pos & (alpha < C - _BOUND_EPS)) | (~pos & (alpha > _BOUND_EPS))
        low = (~pos & (alpha < C - _BOUND_EPS)) | (pos & (alpha > _BOUND_EPS))
        hi = np.max(val[up]) if up.any() else 0.0
        lo = np.min(val[low]) if low.any() else 0.0
        bias = float(0.5 * (hi + lo))

    support = np.flatnonzero(alpha > _BOUND_EPS)
    return SvmModel((alpha * y)[support], support, bias, C)


def decision(model: SvmModel, kernel_row: Sequence[float]) -> float:
    """Decision value from one row of test-vs-train kernel values."""
    row = np.asarray(kernel_row, dtype=np.float64)
    return float(row[model.support_indices] @ model.dual_coefs + model.bias)


def dual_objective(kernel, y: Sequence[float], alpha: Sequence[float]) -> float:
    """Value of the dual objective sum(a) - 1/2 sum a_i a_j y_i y_j K_ij."""
    k = _kernel_values(kernel)
    y = np.asarray(y, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    coef = alpha * y
    return float(np.sum(alpha) - 0.5 * coef @ k @ coef)


def alphas_from_model(model: SvmModel, m: int) -> np.ndarray:
    """Reconstruct the full alpha vector (a_i = |dual_coef_i|, zero elsewhere)."""
    alpha = np.zeros(m)
    alpha[model.support_indices] = np.abs(model.dual_coefs)
    return alpha


@dataclass
class MulticlassModel:
    """One-vs-rest ensemble; class order is the sorted label order."""

    classes: tuple
    models: tuple[SvmModel, ...]

    def decision_matrix(self, cross) -> np.ndarray:
        rows = _kernel_values(cross)
        scores = np.empty((len(rows), len(self.classes)))
        for c, model in enumerate(self.models):
            scores[:, c] = rows[:, model.support_indices] @ model.dual_coefs + model.bias
        return scores

    def to_dict(self) -> dict:
        return {
            "version": SERIALIZATION_VERSION,
            "kind": "one_vs_rest",
            "classes": list(self.classes),
            "models": [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MulticlassModel":
        if data.get("version") != SERIALIZATION_VERSION:
            raise ValueError(f"unsupported model version {data.get('version')!r}")
        return cls(
            tuple(data["classes"]),
            tuple(SvmModel.from_dict(m) for m in data["models"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MulticlassModel":
        return cls.from_dict(json.loads(text))


def fit_multiclass(
    kernel,
    labels: Sequence,
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 100_000,
) -> MulticlassModel:
    """Train one binary model per class against the rest."""
    labels = list(labels)
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise DegenerateModelError(f"need at least 2 classes, got {classes}")
    k = _kernel_values(kernel)
    models = []
    for cls_label in classes:
        y = np.array([1.0 if lab == cls_label else -1.0 for lab in labels])
        models.append(fit(k, y, C=C, tol=tol, max_passes=max_passes))
    return MulticlassModel(classes, tuple(models))


def predict(model: MulticlassModel, cross) -> list:
    """Highest one-vs-rest score wins; ties go to the smaller class index."""
    scores = model.decision_matrix(cross)
    return [model.classes[i] for i in np.argmax(scores, axis=1)]

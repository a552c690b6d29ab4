"""Variational quantum classifier.

The circuit is a data feature map followed by L trainable layers (RY
rotations plus a CNOT ring). Class scores are read out from the first
ceil(log2 C) qubits: the 2^r marginal bitstring probabilities are dealt
round-robin onto the C classes (bitstring b -> class b mod C) and
renormalized. Training minimizes cross-entropy by gradient descent with
parameter-shift gradients (RY generators admit the exact +-pi/2 rule) or
SPSA as a cheaper seeded alternative.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, TrainingError
from .qkernel import _as_matrix
from .qsim import (
    EXACT,
    FeatureMapKind,
    ShotConfig,
    _apply_ops,
    build_feature_map,
    sample_indices,
    weight_layer,
)

SERIALIZATION_VERSION = 1
_P_FLOOR = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    method: str = "parameter_shift"
    batch_size: int | None = None
    seed: int = 0
    spsa_step: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.method not in ("parameter_shift", "spsa"):
            raise ConfigError(f"unknown gradient method {self.method!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class VqcModel:
    feature_map: FeatureMapKind
    theta: np.ndarray
    classes: tuple
    entangle: bool = True
    loss_history: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 2:
            raise ValueError(f"theta must be (layers, qubits), got shape {self.theta.shape}")
        if len(self.classes) < 2:
            raise ValueError("a classifier needs at least 2 classes")
        if self.readout_qubits > self.n_qubits:
            raise ConfigError(
                f"{len(self.classes)} classes need {self.readout_qubits} readout "
                f"qubits but the circuit has only {self.n_qubits}"
            )

    @property
    def n_qubits(self) -> int:
        return self.theta.shape[1]

    @property
    def n_layers(self) -> int:
        return self.theta.shape[0]

    @property
    def readout_qubits(self) -> int:
        return max(1, math.ceil(math.log2(len(self.classes))))

    def to_dict(self) -> dict:
        return {
            "version": SERIALIZATION_VERSION,
            "feature_map": {"variant": self.feature_map.variant, "layers": self.feature_map.layers},
            "theta": self.theta.tolist(),
            "classes": list(self.classes),
            "entangle": self.entangle,
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VqcModel":
        if data.get("version") != SERIALIZATION_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
        fm = data["feature_map"]
        return cls(
            FeatureMapKind(fm["variant"], fm["layers"]),
            np.array(data["theta"]),
            tuple(data["classes"]),
            bool(data["entangle"]),
            tuple(data.get("loss_history", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VqcModel":
        return cls.from_dict(json.loads(text))


def _class_probs(
    feature_map: FeatureMapKind,
    theta: np.ndarray,
    x: np.ndarray,
    n_classes: int,
    entangle: bool,
    shots: ShotConfig,
) -> np.ndarray:
    n = theta.shape[1]
    ops = list(build_feature_map(feature_map, x).ops)
    for layer in theta:
        ops.extend(weight_layer(layer, n, entangle).ops)
    amps = np.zeros(2 ** n, dtype=np.complex128)
    amps[0] = 1.0
    amps = _apply_ops(amps, n, ops)
    probs = np.abs(amps) ** 2
    r = max(1, math.ceil(math.log2(n_classes)))
    if shots.exact:
        marginal = probs.reshape(2 ** r, -1).sum(axis=1)
    else:
        samples = sample_indices(probs, shots.shots, shots.seed)
        groups = samples >> (n - r)
        marginal = np.bincount(groups, minlength=2 ** r) / shots.shots
    scores = np.zeros(n_classes)
    for b in range(2 ** r):
        scores[b % n_classes] += marginal[b]
    total = scores.sum()
    if total <= 0:
        return np.full(n_classes, 1.0 / n_classes)
    return scores / total


def forward(model: VqcModel, x: Sequence[float], shots: ShotConfig = EXACT) -> np.ndarray:
    """Per-class probability scores (nonnegative, summing to 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_qubits,):
        raise ValueError(f"expected {model.n_qubits} features, got shape {x.shape}")
    return _class_probs(
        model.feature_map, model.theta, x, len(model.classes), model.entangle, shots
    )


def predict(model: VqcModel, x: Sequence[float], shots: ShotConfig = EXACT):
    """Class with the highest score; ties go to the smaller class index."""
    return model.classes[int(np.argmax(forward(model, x, shots)))]


def _batch_loss(
    feature_map: FeatureMapKind,
    theta: np.ndarray,
    xs: np.ndarray,
    class_idx: np.ndarray,
    n_classes: int,
    entangle: bool,
    shots: ShotConfig,
) -> float:
    total = 0.0
    for x, c in zip(xs, class_idx):
        p = _class_probs(feature_map, theta, x, n_classes, entangle, shots)
        total += -math.log(max(p[c], _P_FLOOR))
    return total / len(xs)


def loss(model: VqcModel, xs, labels, shots: ShotConfig = EXACT) -> float:
    """Mean cross-entropy of the model on (samples, labels)."""
    xs = _as_matrix(xs)
    class_idx = _class_indices(model.classes, labels)
    return _batch_loss(
        model.feature_map, model.theta, xs, class_idx,
        len(model.classes), model.entangle, shots,
    )


def _class_indices(classes: tuple, labels) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[lab] for lab in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not among model classes {classes}") from exc


def parameter_shift_gradient(
    model: VqcModel,
    xs,
    labels,
    shots: ShotConfig = EXACT,
) -> np.ndarray:
    """Exact gradient of the mean cross-entropy w.r.t. every theta entry.

    Each RY weight parameter obeys the parameter-shift rule
    dp/dt = (p(t + pi/2) - p(t - pi/2)) / 2 for every outcome probability.
    """
    xs = _as_matrix(xs)
    class_idx = _class_indices(model.classes, labels)
    n_classes = len(model.classes)
    grad = np.zeros_like(model.theta)
    for x, c in zip(xs, class_idx):
        p_base = _class_probs(model.feature_map, model.theta, x, n_classes, model.entangle, shots)
        inv_p = -1.0 / max(p_base[c], _P_FLOOR)
        for l in range(model.n_layers):
            for q in range(model.n_qubits):
                shifted = model.theta.copy()
                shifted[l, q] += math.pi / 2.0
                p_plus = _class_probs(model.feature_map, shifted, x, n_classes, model.entangle, shots)
                shifted[l, q] -= math.pi
                p_minus = _class_probs(model.feature_map, shifted, x, n_classes, model.entangle, shots)
                grad[l, q] += inv_p * 0.5 * (p_plus[c] - p_minus[c])
    return grad / len(xs)


def _spsa_gradient(
    model: VqcModel,
    xs: np.ndarray,
    class_idx: np.ndarray,
    rng: np.random.Generator,
    c_step: float,
    shots: ShotConfig,
) -> np.ndarray:
    delta = rng.choice((-1.0, 1.0), size=model.theta.shape)
    n_classes = len(model.classes)
    up = _batch_loss(model.feature_map, model.theta + c_step * delta, xs, class_idx,
                     n_classes, model.entangle, shots)
    down = _batch_loss(model.feature_map, model.theta - c_step * delta, xs, class_idx,
                       n_classes, model.entangle, shots)
    return (up - down) / (2.0 * c_step) * delta


def train(
    xs,
    labels: Sequence,
    feature_map: FeatureMapKind,
    n_layers: int,
    opt: OptimizerConfig = OptimizerConfig(),
    entangle: bool = True,
    shots: ShotConfig = EXACT,
) -> VqcModel:
    """Gradient-descent training; theta starts at uniform(-0.1, 0.1) per seed.

    Zero epochs return the freshly initialized model. A non-finite loss
    aborts with a TrainingError naming the epoch.
    """
    xs = _as_matrix(xs)
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ConfigError(f"need at least 2 classes to train, got {classes}")
    if n_layers < 1:
        raise ConfigError(f"need at least 1 weight layer, got {n_layers}")
    n = xs.shape[1]
    rng = np.random.default_rng(opt.seed)
    theta = rng.uniform(-0.1, 0.1, size=(n_layers, n))
    model = VqcModel(feature_map, theta, classes, entangle)
    class_idx = _class_indices(classes, labels)

    history = [
        _batch_loss(feature_map, model.theta, xs, class_idx, len(classes), entangle, shots)
    ]
    for epoch in range(opt.epochs):
        if not math.isfinite(history[-1]):
            raise TrainingError("training loss diverged", epoch=epoch)
        batches = _batches(len(xs), opt.batch_size, rng)
        for batch in batches:
            if opt.method == "parameter_shift":
                grad = parameter_shift_gradient(model, xs[batch], [labels[i] for i in batch], shots)
            else:
                grad = _spsa_gradient(model, xs[batch], class_idx[batch], rng, opt.spsa_step, shots)
            model.theta = model.theta - opt.learning_rate * grad
        history.append(
            _batch_loss(feature_map, model.theta, xs, class_idx, len(classes), entangle, shots)
        )
        if not math.isfinite(history[-1]):
            raise TrainingError("training loss diverged", epoch=epoch)
    model.loss_history = tuple(history)
    return model


def _batches(m: int, batch_size: int | None, rng: np.random.Generator) -> list[np.ndarray]:
    if batch_size is None or batch_size >= m:
        return [np.arange(m)]
    order = rng.permutation(m)
    return [order[i:i + batch_size] for i in range(0, m, batch_size)]

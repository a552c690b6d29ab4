"""Kernel matrices: classical (linear, rbf) and quantum overlap kernels.

Quantum Gram matrices exploit symmetry: only the strict upper triangle is
evaluated (m(m-1)/2 overlap calls, tracked in ``eval_count``), the mirror
is copied and the diagonal is fixed at 1. Shot-mode evaluations derive a
per-pair seed from (global seed, i, j) so serial and parallel runs agree
bit for bit. Matrices can be persisted to .npz keyed by a config hash.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoding import FeatureVector
from .errors import ConfigError
from .qsim import EXACT, FeatureMapKind, ShotConfig, _overlap_from_ops, build_feature_map

KERNEL_VARIANTS = ("linear", "rbf", "quantum")


@dataclass(frozen=True)
class KernelKind:
    variant: str
    gamma: float | None = None
    feature_map: FeatureMapKind | None = None
    shots: ShotConfig = EXACT

    def __post_init__(self):
        if self.variant not in KERNEL_VARIANTS:
            raise ConfigError(f"unknown kernel {self.variant!r}, expected {KERNEL_VARIANTS}")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"rbf gamma must be positive, got {self.gamma}")
        if self.variant == "quantum" and self.feature_map is None:
            raise ConfigError("quantum kernel requires a feature map")

    @classmethod
    def linear(cls) -> "KernelKind":
        return cls("linear")

    @classmethod
    def rbf(cls, gamma: float | None = None) -> "KernelKind":
        return cls("rbf", gamma=gamma)

    @classmethod
    def quantum(cls, feature_map: FeatureMapKind, shots: ShotConfig = EXACT) -> "KernelKind":
        return cls("quantum", feature_map=feature_map, shots=shots)


@dataclass
class KernelMatrix:
    values: np.ndarray
    eval_count: int = 0


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        out = np.asarray(data, dtype=np.float64)
        if out.ndim != 2:
            raise ValueError(f"expected a 2-d sample matrix, got shape {out.shape}")
        return out
    rows = list(data)
    if rows and isinstance(rows[0], FeatureVector):
        return np.stack([fv.values for fv in rows])
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)


def pair_seed(seed: int, i: int, j: int) -> int:
    """Stable per-pair shot seed; identical across serial and parallel runs."""
    return int(np.random.SeedSequence((seed, i, j)).generate_state(1)[0])


def _quantum_rows(matrix: np.ndarray, fm: FeatureMapKind):
    forwards = [build_feature_map(fm, row).ops for row in matrix]
    adjoints = [build_feature_map(fm, row).adjoint().ops for row in matrix]
    return forwards, adjoints


def _fill_pairs(values, pairs, n_qubits, forwards, adjoints, shots, n_jobs):
    def one(pair):
        i, j = pair
        cfg = shots if shots.exact else ShotConfig(shots.shots, pair_seed(shots.seed, i, j))
        return i, j, _overlap_from_ops(n_qubits, forwards[i] + adjoints[j], cfg)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = pool.map(one, pairs, chunksize=256)
            for i, j, val in results:
                values[i, j] = val
    else:
        for pair in pairs:
            i, j, val = one(pair)
            values[i, j] = val


def gram(
    train,
    kind: KernelKind,
    n_jobs: int = 1,
) -> KernelMatrix:
    """Symmetric train-by-train kernel matrix.

    For the quantum kernel only the upper triangle is evaluated, the
    diagonal is 1 by construction and never simulated.
    """
    x = _as_matrix(train)
    m, dim = x.shape
    if kind.variant == "linear":
        return KernelMatrix(x @ x.T)
    if kind.variant == "rbf":
        gamma = kind.gamma if kind.gamma is not None else 1.0 / dim
        sq = np.sum(x ** 2, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
        return KernelMatrix(np.exp(-gamma * d2))
    forwards, adjoints = _quantum_rows(x, kind.feature_map)
    values = np.ones((m, m))
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    _fill_pairs(values, pairs, dim, forwards, adjoints, kind.shots, n_jobs)
    for i, j in pairs:
        values[j, i] = values[i, j]
    return KernelMatrix(values, eval_count=len(pairs))


def cross(
    test,
    train,
    kind: KernelKind,
    n_jobs: int = 1,
) -> KernelMatrix:
    """Rectangular test-by-train kernel matrix (all p*m pairs evaluated)."""
    xt = _as_matrix(test)
    xr = _as_matrix(train)
    if xt.shape[1] != xr.shape[1]:
        raise ValueError(f"dimension mismatch: {xt.shape[1]} vs {xr.shape[1]}")
    if kind.variant == "linear":
        return KernelMatrix(xt @ xr.T)
    if kind.variant == "rbf":
        gamma = kind.gamma if kind.gamma is not None else 1.0 / xr.shape[1]
        d2 = np.maximum(
            np.sum(xt ** 2, axis=1)[:, None]
            + np.sum(xr ** 2, axis=1)[None, :]
            - 2.0 * (xt @ xr.T),
            0.0,
        )
        return KernelMatrix(np.exp(-gamma * d2))
    forwards, _ = _quantum_rows(xt, kind.feature_map)
    _, adjoints = _quantum_rows(xr, kind.feature_map)
    p, m = len(xt), len(xr)
    values = np.empty((p, m))
    pairs = [(i, j) for i in range(p) for j in range(m)]
    _fill_pairs(values, pairs, xt.shape[1], forwards, adjoints, kind.shots, n_jobs)
    return KernelMatrix(values, eval_count=len(pairs))


def psd_repair(kernel: KernelMatrix, floor: float = 1e-9) -> KernelMatrix:
    """Symmetrize, then shift the diagonal just enough for lambda_min >= floor.

    Intended for shot-noise Gram matrices; an already-PSD matrix only gets
    the (no-op) symmetrization.
    """
    sym = 0.5 * (kernel.values + kernel.values.T)
    min_eig = float(np.linalg.eigvalsh(sym)[0])
    shift = max(0.0, floor - min_eig)
    if shift > 0.0:
        sym = sym + shift * np.eye(len(sym))
    return KernelMatrix(sym, kernel.eval_count)


def cache_key(dataset_hash: str, encoder_config: dict, kernel_config: dict, seed: int) -> str:
    payload = json.dumps(
        {
            "dataset": dataset_hash,
            "encoder": encoder_config,
            "kernel": kernel_config,
            "seed": seed,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def save_kernel(kernel: KernelMatrix, directory: str | Path, key: str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{key}.npz"
    np.savez(path, values=kernel.values, eval_count=np.int64(kernel.eval_count))
    return path


def load_kernel(directory: str | Path, key: str) -> KernelMatrix | None:
    path = Path(directory) / f"{key}.npz"
    if not path.exists():
        return None
    with np.load(path) as data:
        return KernelMatrix(data["values"], int(data["eval_count"]))

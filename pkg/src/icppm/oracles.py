"""Independent cross-checks for the statevector engine.

Everything here deliberately takes the slow road: gates become explicit
2^n x 2^n matrices via Kronecker products and circuits become matrix
products, so agreement with the stride-based engine is meaningful. Kept
out of any hot path; used by tests and the ``kernel-check`` CLI command.
"""

from __future__ import annotations

import math
from functools import reduce

import numpy as np

from . import qsim
from .errors import ConfigError
from .qsim import CircuitSpec, FeatureMapKind, GateOp

_I2 = np.eye(2, dtype=np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_P0 = np.array([[1, 0], [0, 0]], dtype=np.complex128)
_P1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)

MAX_ORACLE_QUBITS = 10


def _chain(n: int, factors: dict[int, np.ndarray]) -> np.ndarray:
    """Kronecker product with qubit 0 as the leftmost (most significant) factor."""
    return reduce(np.kron, (factors.get(q, _I2) for q in range(n)))


def _single_qubit_matrix(op: GateOp) -> np.ndarray:
    if op.kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2.0)
    if op.kind == "RY":
        c, s = math.cos(op.angle / 2.0), math.sin(op.angle / 2.0)
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if op.kind == "RZ":
        return np.array(
            [[np.exp(-0.5j * op.angle), 0], [0, np.exp(0.5j * op.angle)]],
            dtype=np.complex128,
        )
    if op.kind == "P":
        return np.array([[1, 0], [0, np.exp(1j * op.angle)]], dtype=np.complex128)
    raise ValueError(f"not a single-qubit gate: {op.kind}")


def gate_unitary(op: GateOp, n_qubits: int) -> np.ndarray:
    """Full 2^n x 2^n matrix of one gate."""
    if len(op.targets) == 1:
        return _chain(n_qubits, {op.targets[0]: _single_qubit_matrix(op)})
    if op.kind == "CNOT":
        c, t = op.targets
        return _chain(n_qubits, {c: _P0}) + _chain(n_qubits, {c: _P1, t: _X})
    if op.kind == "RZZ":
        a, b = op.targets
        dim = 2 ** n_qubits
        diag = np.empty(dim, dtype=np.complex128)
        for idx in range(dim):
            bit_a = (idx >> (n_qubits - 1 - a)) & 1
            bit_b = (idx >> (n_qubits - 1 - b)) & 1
            sign = -1.0 if bit_a == bit_b else 1.0
            diag[idx] = np.exp(0.5j * sign * op.angle)
        return np.diag(diag)
    raise ValueError(f"unhandled gate {op.kind}")


def circuit_unitary(circuit: CircuitSpec) -> np.ndarray:
    """Product of gate matrices in application order."""
    if circuit.n_qubits > MAX_ORACLE_QUBITS:
        raise ConfigError(
            f"dense oracle is capped at {MAX_ORACLE_QUBITS} qubits, got {circuit.n_qubits}"
        )
    u = np.eye(2 ** circuit.n_qubits, dtype=np.complex128)
    for op in circuit.ops:
        u = gate_unitary(op, circuit.n_qubits) @ u
    return u


def state_via_unitary(circuit: CircuitSpec, initial: np.ndarray | None = None) -> np.ndarray:
    u = circuit_unitary(circuit)
    if initial is None:
        initial = np.zeros(2 ** circuit.n_qubits, dtype=np.complex128)
        initial[0] = 1.0
    return u @ initial


def kernel_via_unitary(x, x2, kind: FeatureMapKind) -> float:
    """Kernel value computed entirely from dense unitaries."""
    circ = qsim.build_feature_map(kind, x)
    circ2 = qsim.build_feature_map(kind, x2)
    u = circuit_unitary(circ2).conj().T @ circuit_unitary(circ)
    return float(np.abs(u[0, 0]) ** 2)


def angle_kernel_closed_form(x, x2, layers: int = 1) -> float:
    """Product form of the angle-map kernel: prod cos^2(layers*(x_i - x2_i)/2)."""
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    return float(np.prod(np.cos(layers * (x - x2) / 2.0) ** 2))


def run_kernel_check(
    n_qubits: int,
    variant: str,
    layers: int = 1,
    n_samples: int = 20,
    seed: int = 0,
    perturb: float = 0.0,
) -> dict:
    """Self-check of the engine against the dense oracles.

    Returns a report dict with ``passed`` and a list of failure strings.
    ``perturb`` injects an angle error into the adjoint half of each overlap
    circuit; any nonzero value must make the check fail.
    """
    if n_qubits < 1 or n_qubits > 20:
        raise ConfigError(f"kernel-check supports 1..20 qubits, got {n_qubits}")
    kind = FeatureMapKind(variant, layers)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, math.pi, size=(n_samples, n_qubits))
    failures: list[str] = []
    dense_ok = n_qubits <= MAX_ORACLE_QUBITS

    def overlap(a, b) -> float:
        fwd = qsim.build_feature_map(kind, a)
        adj = qsim.build_feature_map(kind, b).adjoint()
        ops = list(fwd.ops + adj.ops)
        if perturb and ops:
            for pos in range(len(fwd.ops), len(ops)):
                if ops[pos].angle is not None:
                    ops[pos] = GateOp(ops[pos].kind, ops[pos].targets,
                                      ops[pos].angle + perturb)
                    break
        return qsim._overlap_from_ops(n_qubits, ops, qsim.EXACT)

    for i in range(n_samples):
        j = (i + 1) % n_samples
        k_ij = overlap(xs[i], xs[j])
        k_ji = overlap(xs[j], xs[i])
        if abs(k_ij - k_ji) > 1e-12:
            failures.append(f"symmetry violated at pair ({i},{j}): |dk|={abs(k_ij - k_ji):.3e}")
        k_ii = overlap(xs[i], xs[i])
        if abs(k_ii - 1.0) > 1e-10:
            failures.append(f"self-overlap at {i} is {k_ii!r}, expected 1")
        if dense_ok:
            ref = kernel_via_unitary(xs[i], xs[j], kind)
            if abs(k_ij - ref) > 1e-10:
                failures.append(
                    f"dense-matrix mismatch at pair ({i},{j}): |dk|={abs(k_ij - ref):.3e}"
                )
            state = qsim.run(qsim.build_feature_map(kind, xs[i]))
            ref_state = state_via_unitary(qsim.build_feature_map(kind, xs[i]))
            if np.max(np.abs(state.amplitudes - ref_state)) > 1e-10:
                failures.append(f"state mismatch against dense unitary at sample {i}")
        if variant == "angle":
            ref = angle_kernel_closed_form(xs[i], xs[j], layers)
            if abs(k_ij - ref) > 1e-10:
                failures.append(
                    f"closed-form mismatch at pair ({i},{j}): |dk|={abs(k_ij - ref):.3e}"
                )

    m = min(n_samples, 12)
    gram = np.empty((m, m))
    for i in range(m):
        gram[i, i] = 1.0
        for j in range(i + 1, m):
            gram[i, j] = gram[j, i] = overlap(xs[i], xs[j])
    min_eig = float(np.linalg.eigvalsh(gram)[0])
    if min_eig < -1e-8:
        failures.append(f"gram matrix has eigenvalue {min_eig:.3e} < -1e-8")

    return {
        "n_qubits": n_qubits,
        "feature_map": variant,
        "layers": layers,
        "samples": n_samples,
        "dense_oracle": dense_ok,
        "min_gram_eigenvalue": min_eig,
        "failures": failures,
        "passed": not failures,
    }

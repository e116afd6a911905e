"""Dense state-vector engine: states, gates, measurements and distance measures.

Conventions used throughout the package:

* Qubit indexing is little-endian: bit ``q`` of a basis index addresses
  qubit ``q``, so qubit 0 is the least significant bit.
* Gates carry their own local qubit order; ``apply_unitary(state, g, targets)``
  maps the gate's qubit ``j`` onto global qubit ``targets[j]``.
* Everything is immutable after construction and all operations are pure
  functions, so independent calls are safe to evaluate in parallel.

The dense representation is practical up to roughly 22 qubits; layouts are
capped well below that (see :mod:`dqip.network`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import LayoutError, ValidationError
from .seeding import substream

NORM_ATOL = 1e-10
UNITARY_ATOL = 1e-10
HERMITIAN_ATOL = 1e-10
TRACE_ATOL = 1e-10
EIGENVALUE_FLOOR = -1e-9
PROJECTOR_ATOL = 1e-9


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantumState:
    """A normalized pure state on ``num_qubits`` qubits."""

    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.num_qubits,):
            raise ValidationError(
                f"amplitude vector has shape {amps.shape}, expected ({2**self.num_qubits},)"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValidationError(f"state norm {norm!r} deviates from 1 beyond {NORM_ATOL}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "QuantumState":
        amps = np.zeros(2**num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "QuantumState":
        vec = np.asarray(vec, dtype=np.complex128)
        n = int(round(np.log2(vec.size)))
        if 2**n != vec.size:
            raise ValidationError(f"vector length {vec.size} is not a power of two")
        return cls(n, vec)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.num_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOperator:
    """A density matrix: Hermitian, unit trace, positive semidefinite."""

    num_qubits: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.complex128)
        dim = 2**self.num_qubits
        if mat.shape != (dim, dim):
            raise ValidationError(f"matrix shape {mat.shape} does not match {self.num_qubits} qubits")
        if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_ATOL:
            raise ValidationError("density matrix is not Hermitian within tolerance")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValidationError(f"density matrix trace {tr!r} deviates from 1 beyond {TRACE_ATOL}")
        if np.min(np.linalg.eigvalsh(mat)) < EIGENVALUE_FLOOR:
            raise ValidationError("density matrix has an eigenvalue below the PSD floor")
        object.__setattr__(self, "matrix", mat)


@dataclass(frozen=True)
class Gate:
    """A unitary on ``arity`` qubits, stored as a dense ``2^arity`` matrix."""

    arity: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.complex128)
        dim = 2**self.arity
        if mat.shape != (dim, dim):
            raise ValidationError(f"gate matrix shape {mat.shape} does not match arity {self.arity}")
        if np.max(np.abs(mat.conj().T @ mat - np.eye(dim))) > UNITARY_ATOL:
            raise ValidationError("gate matrix is not unitary within tolerance")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "Gate":
        mat = np.asarray(mat, dtype=np.complex128)
        k = int(round(np.log2(mat.shape[0])))
        return cls(k, mat)

    def dagger(self) -> "Gate":
        return Gate(self.arity, self.matrix.conj().T)


# ---------------------------------------------------------------------------
# Named gates
# ---------------------------------------------------------------------------


def _permutation_matrix(k: int, fn) -> np.ndarray:
    mat = np.zeros((2**k, 2**k), dtype=np.complex128)
    for i in range(2**k):
        mat[fn(i), i] = 1.0
    return mat


def _swap_bits(i: int, a: int, b: int) -> int:
    ba, bb = (i >> a) & 1, (i >> b) & 1
    if ba != bb:
        i ^= (1 << a) | (1 << b)
    return i


H = Gate(1, np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2))
X = Gate(1, np.array([[0, 1], [1, 0]], dtype=np.complex128))
Z = Gate(1, np.array([[1, 0], [0, -1]], dtype=np.complex128))
I2 = Gate(1, np.eye(2, dtype=np.complex128))

# Control is the gate's qubit 0 in all controlled gates below.
CNOT = Gate(2, _permutation_matrix(2, lambda i: i ^ 2 if i & 1 else i))
CZ = Gate(2, np.diag([1.0, 1.0, 1.0, -1.0]).astype(np.complex128))
SWAP = Gate(2, _permutation_matrix(2, lambda i: _swap_bits(i, 0, 1)))
CSWAP = Gate(3, _permutation_matrix(3, lambda i: _swap_bits(i, 1, 2) if i & 1 else i))


def acceptance_rotation(c: float) -> Gate:
    """Single-qubit rotation T_c with T_c|0> = sqrt(c)|0> - sqrt(1-c)|1>."""
    if not 0.0 <= c <= 1.0:
        raise ValidationError(f"rotation parameter {c!r} outside [0, 1]")
    sc, ss = np.sqrt(c), np.sqrt(1.0 - c)
    return Gate(1, np.array([[sc, ss], [-ss, sc]], dtype=np.complex128))


def controlled(gate: Gate) -> Gate:
    """Add one control qubit (gate qubit 0) in front of ``gate``."""
    dim = 2**gate.arity
    mat = np.eye(2 * dim, dtype=np.complex128)
    # Index layout: bit 0 = control, bits 1.. = original gate qubits.
    idx = [2 * j + 1 for j in range(dim)]
    mat[np.ix_(idx, idx)] = gate.matrix
    return Gate(gate.arity + 1, mat)


def identity_gate(arity: int) -> Gate:
    return Gate(arity, np.eye(2**arity, dtype=np.complex128))


# ---------------------------------------------------------------------------
# Gate application on raw vectors
# ---------------------------------------------------------------------------


def _check_targets(targets: Sequence[int], num_qubits: int, arity: int) -> None:
    if len(targets) != arity:
        raise LayoutError(f"gate arity {arity} does not match {len(targets)} targets")
    if len(set(targets)) != len(targets):
        raise LayoutError(f"duplicate targets in {list(targets)}")
    for q in targets:
        if not 0 <= q < num_qubits:
            raise LayoutError(f"target qubit {q} outside [0, {num_qubits})")


def apply_matrix_vec(vec: np.ndarray, mat: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """Apply a ``2^k x 2^k`` matrix to ``targets`` of a raw state vector.

    ``mat`` need not be unitary (measurement collapse uses projectors); bit
    ``j`` of the matrix index addresses global qubit ``targets[j]``.
    """
    n = int(round(np.log2(vec.size)))
    k = len(targets)
    _check_targets(targets, n, int(round(np.log2(mat.shape[0]))))
    tensor = vec.reshape([2] * n)
    # Axis a of the tensor holds qubit n-1-a; after the move, row bit j of the
    # flattened front block addresses targets[j].
    src = [n - 1 - q for q in targets]
    dst = [k - 1 - j for j in range(k)]
    tensor = np.moveaxis(tensor, src, dst)
    flat = tensor.reshape(2**k, -1)
    flat = mat @ flat
    tensor = flat.reshape([2] * n)
    tensor = np.moveaxis(tensor, dst, src)
    return np.ascontiguousarray(tensor.reshape(-1))


def apply_unitary(state: QuantumState, gate: Gate, targets: Sequence[int]) -> QuantumState:
    """Apply ``gate`` to the given qubits, identity elsewhere."""
    _check_targets(targets, state.num_qubits, gate.arity)
    vec = apply_matrix_vec(state.amplitudes, gate.matrix, targets)
    return QuantumState(state.num_qubits, vec)


def embed_operator(op: np.ndarray, targets: Sequence[int], num_qubits: int) -> np.ndarray:
    """Lift an operator on ``targets`` to the full ``2^n`` space.

    Built by explicit index arithmetic; serves both as the dense-operator
    constructor and as an independent oracle for the fast application path.
    """
    k = len(targets)
    _check_targets(targets, num_qubits, int(round(np.log2(op.shape[0]))))
    dim = 2**num_qubits
    full = np.zeros((dim, dim), dtype=np.complex128)
    rest = [q for q in range(num_qubits) if q not in set(targets)]
    for env in range(2 ** len(rest)):
        base = 0
        for pos, q in enumerate(rest):
            if (env >> pos) & 1:
                base |= 1 << q
        idx = []
        for g in range(2**k):
            i = base
            for j, q in enumerate(targets):
                if (g >> j) & 1:
                    i |= 1 << q
            idx.append(i)
        full[np.ix_(idx, idx)] = op
    return full


# ---------------------------------------------------------------------------
# Partial trace and measurement statistics
# ---------------------------------------------------------------------------


def _keep_block(vec: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reshape a vector to (2^k, 2^rest) with row bit j = keep[j]."""
    n = int(round(np.log2(vec.size)))
    k = len(keep)
    tensor = vec.reshape([2] * n)
    src = [n - 1 - q for q in keep]
    dst = [k - 1 - j for j in range(k)]
    tensor = np.moveaxis(tensor, src, dst)
    return tensor.reshape(2**k, -1)


def partial_trace(state, keep: Iterable[int]) -> DensityOperator:
    """Reduced state on ``keep`` (ascending qubit order), tracing out the rest.

    Accepts a :class:`QuantumState` or a :class:`DensityOperator`.  An empty
    keep set yields the 1x1 matrix ``[[1]]``.
    """
    keep = sorted(set(keep))
    if isinstance(state, QuantumState):
        n, vec = state.num_qubits, state.amplitudes
        _validate_keep(keep, n)
        if not keep:
            return DensityOperator(0, np.array([[1.0 + 0j]]))
        block = _keep_block(vec, keep)
        return DensityOperator(len(keep), block @ block.conj().T)
    if isinstance(state, DensityOperator):
        n, mat = state.num_qubits, state.matrix
        _validate_keep(keep, n)
        if not keep:
            return DensityOperator(0, np.array([[1.0 + 0j]]))
        k = len(keep)
        tensor = mat.reshape([2] * (2 * n))
        src = [n - 1 - q for q in keep] + [2 * n - 1 - q for q in keep]
        dst = [k - 1 - j for j in range(k)] + [2 * k - 1 - j for j in range(k)]
        tensor = np.moveaxis(tensor, src, dst)
        # Moved axes land as [row-keep, col-keep, row-rest, col-rest].
        tensor = tensor.reshape(2**k, 2**k, 2 ** (n - k), 2 ** (n - k))
        return DensityOperator(k, np.einsum("abrr->ab", tensor))
    raise ValidationError(f"cannot take a partial trace of {type(state).__name__}")


def _validate_keep(keep: Sequence[int], num_qubits: int) -> None:
    for q in keep:
        if not 0 <= q < num_qubits:
            raise LayoutError(f"keep qubit {q} outside [0, {num_qubits})")


def reduced_density_from_vec(vec: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Unnormalized reduced matrix of a raw (possibly unnormalized) vector."""
    keep = sorted(set(keep))
    block = _keep_block(vec, keep)
    return block @ block.conj().T


def check_projector(op: np.ndarray, atol: float = PROJECTOR_ATOL) -> None:
    if np.max(np.abs(op - op.conj().T)) > atol:
        raise ValidationError("operator is not Hermitian within tolerance")
    if np.max(np.abs(op @ op - op)) > atol:
        raise ValidationError("operator is not idempotent within tolerance")


def projector_probability(state: QuantumState, projector: np.ndarray, targets: Sequence[int]) -> float:
    """Return <psi| Pi |psi> with ``projector`` lifted to the full space."""
    projector = np.asarray(projector, dtype=np.complex128)
    check_projector(projector)
    out = apply_matrix_vec(state.amplitudes, projector, targets)
    p = float(np.real(np.vdot(state.amplitudes, out)))
    if p < -NORM_ATOL or p > 1.0 + NORM_ATOL:
        raise ValidationError(f"projector expectation {p!r} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Distance measures
# ---------------------------------------------------------------------------


EIGENVALUE_NOISE = 1e-12  # |lambda| below this is treated as an exact zero


def _clamped_eigenvalues(vals: np.ndarray) -> np.ndarray:
    if np.min(vals) < EIGENVALUE_FLOOR:
        raise ValidationError(f"eigenvalue {np.min(vals)!r} below PSD floor")
    out = vals.copy()
    # Square roots amplify eigenvalue noise around zero to ~1e-8; treating
    # sub-noise values as exact zeros keeps rank-deficient inputs accurate.
    out[out < EIGENVALUE_NOISE] = 0.0
    return out


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = _clamped_eigenvalues(vals)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Fidelity F(rho, sigma) = tr sqrt(sqrt(rho) sigma sqrt(rho)).

    For pure states this equals |<psi|phi>|.  Computed by eigendecomposition
    with eigenvalues clamped at zero (small negative drift is tolerated).
    """
    if rho.num_qubits != sigma.num_qubits:
        raise ValidationError("fidelity arguments have mismatched dimensions")
    sq = _psd_sqrt(rho.matrix)
    inner = sq @ sigma.matrix @ sq
    vals = _clamped_eigenvalues(np.linalg.eigvalsh((inner + inner.conj().T) / 2))
    f = float(np.sum(np.sqrt(vals)))
    return min(max(f, 0.0), 1.0)


def trace_distance(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Trace distance dist(rho, sigma) = (1/2) ||rho - sigma||_tr."""
    if rho.num_qubits != sigma.num_qubits:
        raise ValidationError("trace-distance arguments have mismatched dimensions")
    vals = np.linalg.eigvalsh(rho.matrix - sigma.matrix)
    d = 0.5 * float(np.sum(np.abs(vals)))
    return min(max(d, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Haar-random sampling
# ---------------------------------------------------------------------------


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed), "qcore.haar")


def haar_state(num_qubits: int, seed) -> QuantumState:
    """Haar-random pure state: normalized complex standard-normal vector."""
    if num_qubits < 1:
        raise ValidationError("haar_state needs at least one qubit")
    rng = _as_rng(seed)
    dim = 2**num_qubits
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return QuantumState(num_qubits, vec / np.linalg.norm(vec))


def haar_unitary(num_qubits: int, seed) -> Gate:
    """Haar-random unitary: QR of a complex Gaussian with phase-fixed diagonal."""
    if num_qubits < 1:
        raise ValidationError("haar_unitary needs at least one qubit")
    rng = _as_rng(seed)
    dim = 2**num_qubits
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return Gate(num_qubits, q * phases)


def haar_random(kind: str, dimension_qubits: int, seed):
    """Dispatch to :func:`haar_state` or :func:`haar_unitary` by ``kind``."""
    if kind == "state":
        return haar_state(dimension_qubits, seed)
    if kind == "unitary":
        return haar_unitary(dimension_qubits, seed)
    raise ValidationError(f"unknown haar_random kind {kind!r}")

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqip import qcore
from dqip.errors import LayoutError, ValidationError
from dqip.qcore import (
    CNOT,
    CSWAP,
    CZ,
    SWAP,
    DensityOperator,
    Gate,
    H,
    QuantumState,
    X,
    acceptance_rotation,
    apply_matrix_vec,
    apply_unitary,
    embed_operator,
    fidelity,
    haar_random,
    haar_state,
    haar_unitary,
    partial_trace,
    projector_probability,
    trace_distance,
)
from dqip.seeding import substream


def bell_pair() -> QuantumState:
    s = QuantumState.zero(2)
    s = apply_unitary(s, H, [0])
    return apply_unitary(s, CNOT, [0, 1])


def ghz3() -> QuantumState:
    s = QuantumState.zero(3)
    s = apply_unitary(s, H, [0])
    s = apply_unitary(s, CNOT, [0, 1])
    return apply_unitary(s, CNOT, [0, 2])


# ---------------------------------------------------------------------------
# apply_unitary
# ---------------------------------------------------------------------------


def test_hadamard_on_zero():
    out = apply_unitary(QuantumState.zero(1), H, [0])
    assert np.allclose(out.amplitudes, [1 / np.sqrt(2), 1 / np.sqrt(2)])


def test_acceptance_rotation_c036():
    out = apply_unitary(QuantumState.zero(1), acceptance_rotation(0.36), [0])
    assert np.allclose(out.amplitudes, [0.6, -0.8], atol=1e-12)


def brute_force_cswap() -> np.ndarray:
    # Control = qubit 0, swap qubits 1 and 2: explicit permutation on indices.
    mat = np.zeros((8, 8), dtype=complex)
    for i in range(8):
        c, a, b = i & 1, (i >> 1) & 1, (i >> 2) & 1
        j = c | ((b if c else a) << 1) | ((a if c else b) << 2) if c else i
        mat[j, i] = 1.0
    return mat


def test_controlled_swap_matches_brute_force_permutation():
    assert np.array_equal(CSWAP.matrix, brute_force_cswap())
    rng = substream(7, "test.cswap")
    psi = qcore.haar_state(1, rng)
    phi = qcore.haar_state(1, rng)
    joint = np.kron(np.kron(phi.amplitudes, psi.amplitudes), [0.0, 1.0])  # control=|1>
    out = apply_matrix_vec(joint, CSWAP.matrix, [0, 1, 2])
    expected = np.kron(np.kron(psi.amplitudes, phi.amplitudes), [0.0, 1.0])
    assert np.allclose(out, expected, atol=1e-12)


@pytest.mark.parametrize("gate", [H, X, CNOT, CZ, SWAP, CSWAP])
def test_fast_application_matches_embedded_operator(gate):
    rng = substream(11, "test.embed", gate.arity and str(gate.arity))
    n = 4
    vec = qcore.haar_state(n, rng).amplitudes
    targets = list(rng.permutation(n))[: gate.arity]
    fast = apply_matrix_vec(vec, gate.matrix, targets)
    slow = embed_operator(gate.matrix, targets, n) @ vec
    assert np.allclose(fast, slow, atol=1e-12)


def test_apply_unitary_errors():
    s = QuantumState.zero(2)
    with pytest.raises(LayoutError):
        apply_unitary(s, CNOT, [0, 2])
    with pytest.raises(LayoutError):
        apply_unitary(s, CNOT, [1, 1])
    with pytest.raises(ValidationError):
        Gate(1, np.array([[1, 0], [1, 1]], dtype=complex))


def test_norm_preserved_under_random_unitaries():
    rng = substream(3, "test.norm")
    for trial in range(20):
        n = int(rng.integers(1, 5))
        state = qcore.haar_state(n, rng)
        k = int(rng.integers(1, n + 1))
        gate = qcore.haar_unitary(k, rng)
        targets = list(rng.permutation(n)[:k])
        out = apply_unitary(state, gate, targets)
        assert abs(np.linalg.norm(out.amplitudes) - 1.0) <= 1e-10


# ---------------------------------------------------------------------------
# partial_trace
# ---------------------------------------------------------------------------


def test_partial_trace_bell_pair():
    red = partial_trace(bell_pair(), [0])
    assert np.allclose(red.matrix, np.eye(2) / 2, atol=1e-12)


def test_partial_trace_product_state():
    rng = substream(5, "test.ptrace")
    psi = qcore.haar_state(2, rng)
    phi = qcore.haar_state(1, rng)
    joint = QuantumState(3, np.kron(phi.amplitudes, psi.amplitudes))  # psi on qubits 0,1
    red = partial_trace(joint, [0, 1])
    assert np.allclose(red.matrix, np.outer(psi.amplitudes, psi.amplitudes.conj()), atol=1e-12)
    assert fidelity(red, psi.density()) >= 1 - 1e-9


def test_partial_trace_ghz_keep_two():
    # Direct computation from the 8-amplitude vector.
    vec = ghz3().amplitudes
    expected = np.zeros((4, 4), dtype=complex)
    for i in range(8):
        for j in range(8):
            if (i >> 2) == (j >> 2):
                expected[i & 3, j & 3] += vec[i] * np.conj(vec[j])
    red = partial_trace(ghz3(), [0, 1])
    assert np.allclose(red.matrix, expected, atol=1e-12)
    target = np.zeros((4, 4), dtype=complex)
    target[0, 0] = target[3, 3] = 0.5
    assert np.allclose(red.matrix, target, atol=1e-12)


def test_partial_trace_empty_keep_and_density_input():
    red = partial_trace(bell_pair(), [])
    assert np.allclose(red.matrix, [[1.0]])
    dens = partial_trace(bell_pair().density(), [1])
    assert np.allclose(dens.matrix, np.eye(2) / 2, atol=1e-12)


# ---------------------------------------------------------------------------
# projector_probability
# ---------------------------------------------------------------------------


def test_projector_on_plus_state():
    plus = apply_unitary(QuantumState.zero(1), H, [0])
    p0 = np.array([[1, 0], [0, 0]], dtype=complex)
    assert abs(projector_probability(plus, p0, [0]) - 0.5) <= 1e-12


def test_projector_first_qubit_zero_lifted():
    rng = substream(9, "test.proj")
    anything = qcore.haar_state(2, rng)
    state = QuantumState(3, np.kron(anything.amplitudes, [1.0, 0.0]))  # qubit 0 = |0>
    p0 = np.array([[1, 0], [0, 0]], dtype=complex)
    assert abs(projector_probability(state, p0, [0]) - 1.0) <= 1e-12


def test_projector_star_state_stabilizer():
    # P0 for the 3-node star graph state, built from its expansion.
    from dqip.ghz import star_state, stabilizer_tests

    star = star_state(3)
    t0, t1 = stabilizer_tests(3)
    assert abs(projector_probability(star, t0.projector, list(range(3))) - 1.0) <= 1e-10
    assert abs(projector_probability(star, t1.projector, list(range(3))) - 1.0) <= 1e-10


def test_non_idempotent_rejected():
    with pytest.raises(ValidationError):
        projector_probability(QuantumState.zero(1), np.array([[0.5, 0], [0, 1]]), [0])


# ---------------------------------------------------------------------------
# fidelity / trace distance
# ---------------------------------------------------------------------------


def test_fidelity_pure_state_cases():
    zero = QuantumState.zero(1).density()
    one = QuantumState(1, np.array([0, 1], dtype=complex)).density()
    assert abs(fidelity(zero, zero) - 1.0) <= 1e-12
    assert fidelity(zero, one) <= 1e-9
    mixed = DensityOperator(1, np.eye(2) / 2)
    assert abs(fidelity(zero, mixed) - 1 / np.sqrt(2)) <= 1e-10


def test_trace_distance_cases():
    zero = QuantumState.zero(1).density()
    one = QuantumState(1, np.array([0, 1], dtype=complex)).density()
    plus = apply_unitary(QuantumState.zero(1), H, [0]).density()
    assert trace_distance(zero, zero) <= 1e-12
    assert abs(trace_distance(zero, one) - 1.0) <= 1e-12
    assert abs(trace_distance(zero, plus) - 1 / np.sqrt(2)) <= 1e-10


def random_density(rng, num_qubits: int, max_terms: int = 4) -> DensityOperator:
    terms = int(rng.integers(1, max_terms + 1))
    weights = rng.dirichlet(np.ones(terms))
    dim = 2**num_qubits
    mat = np.zeros((dim, dim), dtype=complex)
    for w in weights:
        v = qcore.haar_state(num_qubits, rng).amplitudes
        mat += w * np.outer(v, v.conj())
    return DensityOperator(num_qubits, mat)


def test_fuchs_van_de_graaf_and_triple_inequality():
    rng = substream(1234, "test.fvdg")
    for trial in range(500):
        n = int(rng.integers(1, 4))
        rho, sigma, xi = (random_density(rng, n) for _ in range(3))
        f = fidelity(rho, sigma)
        d = trace_distance(rho, sigma)
        assert 1 - f <= d + 1e-8
        assert d <= np.sqrt(max(0.0, 1 - f**2)) + 1e-8
        assert fidelity(rho, sigma) ** 2 + fidelity(xi, sigma) ** 2 <= 1 + fidelity(rho, xi) + 1e-8


def test_fidelity_symmetry_and_metric_axioms():
    rng = substream(77, "test.metric")
    for trial in range(50):
        n = int(rng.integers(1, 3))
        rho, sigma, xi = (random_density(rng, n) for _ in range(3))
        assert abs(fidelity(rho, sigma) - fidelity(sigma, rho)) <= 1e-8
        assert trace_distance(rho, sigma) <= trace_distance(rho, xi) + trace_distance(xi, sigma) + 1e-8
    with pytest.raises(ValidationError):
        fidelity(random_density(rng, 1), random_density(rng, 2))


# ---------------------------------------------------------------------------
# haar_random
# ---------------------------------------------------------------------------


def test_haar_determinism():
    a = haar_random("state", 1, 7)
    b = haar_random("state", 1, 7)
    assert np.array_equal(a.amplitudes, b.amplitudes)
    u1 = haar_random("unitary", 2, 3)
    u2 = haar_random("unitary", 2, 3)
    assert np.array_equal(u1.matrix, u2.matrix)


def test_haar_unitarity():
    for seed in range(5):
        u = haar_unitary(2, seed)
        assert np.max(np.abs(u.matrix.conj().T @ u.matrix - np.eye(4))) <= 1e-10


def test_haar_first_moment():
    vals = [abs(haar_state(1, seed).amplitudes[0]) ** 2 for seed in range(10_000)]
    assert abs(np.mean(vals) - 0.5) <= 0.02


def test_haar_conjugation_invariance():
    # The |<0|psi>|^2 statistic is invariant in law under a fixed unitary.
    fixed = haar_unitary(1, 999).matrix
    plain = np.array([abs(haar_state(1, s).amplitudes[0]) ** 2 for s in range(4000)])
    rotated = np.array([abs((fixed @ haar_state(1, s + 50_000).amplitudes)[0]) ** 2 for s in range(4000)])
    assert abs(plain.mean() - rotated.mean()) <= 0.03
    assert abs(plain.var() - rotated.var()) <= 0.03


@given(st.integers(min_value=0, max_value=10**6))
@settings(max_examples=25, deadline=None)
def test_haar_state_always_normalized(seed):
    s = haar_state(2, seed)
    assert abs(np.linalg.norm(s.amplitudes) - 1.0) <= 1e-10


def test_density_operator_validation():
    with pytest.raises(ValidationError):
        DensityOperator(1, np.array([[0.5, 0.2], [0.3, 0.5]]))
    with pytest.raises(ValidationError):
        DensityOperator(1, np.array([[0.9, 0.0], [0.0, 0.3]]))
    with pytest.raises(ValidationError):
        DensityOperator(1, np.array([[1.5, 0.0], [0.0, -0.5]]))

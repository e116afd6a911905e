import numpy as np
import pytest

from dqip.dqct import (
    DqctInstance,
    build_pdqct,
    closeness_bound,
    input_trace_distance,
    make_instance,
    soundness_probe,
)
from dqip.errors import ValidationError
from dqip.ghz import GhzProtocolParams
from dqip.network import path_graph
from dqip.prover import OptimizerConfig, seesaw_optimize
from dqip.protocol import execute_exact

G2 = path_graph(2)
PARAMS = GhzProtocolParams(copies=1, epsilon=0.25, prover_qubits=0)


def honest_value(instance, params=PARAMS):
    compiled = build_pdqct(instance, params)
    return execute_exact(compiled.spec, compiled.honest).acceptance_probability


def test_equal_states_accept_surely():
    assert abs(honest_value(make_instance(G2, (1, 1), "equal", seed=1)) - 1.0) <= 1e-9


def test_orthogonal_states_accept_half():
    assert abs(honest_value(make_instance(G2, (1, 1), "orthogonal", seed=2)) - 0.5) <= 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_random_states_swap_test_identity(seed):
    inst = make_instance(G2, (1, 1), "random", seed=seed)
    expected = 0.5 + 0.5 * inst.overlap_squared()
    assert abs(honest_value(inst) - expected) <= 1e-9


def test_larger_shapes():
    inst3 = make_instance(path_graph(3), (1, 1, 1), "random", seed=7)
    assert abs(honest_value(inst3) - (0.5 + 0.5 * inst3.overlap_squared())) <= 1e-9
    inst_wide = make_instance(G2, (2, 1), "random", seed=8)
    assert abs(honest_value(inst_wide) - (0.5 + 0.5 * inst_wide.overlap_squared())) <= 1e-9
    with_copies = GhzProtocolParams(copies=2, epsilon=0.25)
    inst = make_instance(G2, (1, 1), "random", seed=9)
    assert abs(honest_value(inst, with_copies) - (0.5 + 0.5 * inst.overlap_squared())) <= 1e-9


def test_instance_validation():
    with pytest.raises(ValidationError):
        DqctInstance(G2, (1,), np.array([1, 0], dtype=complex), np.array([1, 0], dtype=complex))
    with pytest.raises(ValidationError):
        DqctInstance(G2, (1, 1), np.ones(4, dtype=complex), np.ones(4, dtype=complex) / 2)
    with pytest.raises(ValidationError):
        make_instance(G2, (1, 1), "weird")


# ---------------------------------------------------------------------------
# closeness_bound
# ---------------------------------------------------------------------------


def test_closeness_bound_formula():
    eps = 0.01
    assert abs(closeness_bound(0.5, eps) - (1.0 + eps)) <= 1e-12
    assert abs(closeness_bound(1.0, eps) - eps) <= 1e-12
    assert abs(closeness_bound(0.9, eps) - (np.sqrt(0.2) + eps)) <= 1e-12


def test_closeness_bound_monotone_decreasing():
    values = [closeness_bound(a, 0.01) for a in np.linspace(0.0, 1.0, 21)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    with pytest.raises(ValidationError):
        closeness_bound(1.1, 0.01)
    with pytest.raises(ValidationError):
        closeness_bound(0.5, 0.0)


# ---------------------------------------------------------------------------
# Communication accounting and soundness probes
# ---------------------------------------------------------------------------


def test_communication_independent_of_input_size():
    small = build_pdqct(make_instance(G2, (1, 1), "random", seed=1), PARAMS)
    wide = build_pdqct(make_instance(G2, (2, 2), "random", seed=1), PARAMS)
    for key in ("quantum_message_qubits_per_node", "classical_broadcast_fields_per_edge"):
        assert small.spec.metadata[key] == wide.spec.metadata[key]
    # The turn-1 quantum delivery per node is N+1 qubits for both shapes.
    assert small.report.message_qubits_per_node == wide.report.message_qubits_per_node


def test_equal_states_seesaw_reaches_one():
    inst = make_instance(G2, (1, 1), "equal", seed=1)
    probe = soundness_probe(inst, GhzProtocolParams(copies=1, epsilon=0.25, prover_qubits=2),
                            OptimizerConfig(restarts=3, sweeps=40, seed=3))
    assert abs(probe["best_acceptance"] - 1.0) <= 1e-6
    assert probe["ceiling"] >= probe["best_acceptance"] - 1e-9


def test_orthogonal_with_ideal_ghz_capped_at_half():
    inst = make_instance(G2, (1, 1), "orthogonal", seed=2)
    compiled = build_pdqct(inst, GhzProtocolParams(copies=1, epsilon=0.25, prover_qubits=2))
    trace = seesaw_optimize(
        compiled.spec,
        OptimizerConfig(restarts=4, sweeps=60, seed=13),
        honest=compiled.honest,
        freeze_turns=(1,),
    )
    assert trace.best_acceptance <= 0.5 + 1e-6


def test_random_pair_stays_under_ceiling():
    inst = make_instance(G2, (1, 1), "random", seed=3)
    params = GhzProtocolParams(copies=1, epsilon=0.25, prover_qubits=2)
    probe = soundness_probe(inst, params, OptimizerConfig(restarts=4, sweeps=50, seed=11))
    assert probe["best_acceptance"] <= probe["ceiling"] + 1e-6
    # Theorem restated on measured values: the input distance obeys the
    # bound implied by the measured acceptance.
    assert probe["input_trace_distance"] <= probe["distance_bound_at_best"] + 1e-6


def test_input_distance_against_inner_product():
    inst = make_instance(G2, (1, 1), "random", seed=4)
    direct = np.sqrt(1 - inst.overlap_squared())
    assert abs(input_trace_distance(inst) - direct) <= 1e-10

import numpy as np
import pytest

from dqip.corpus import (
    coin_check_honest,
    coin_check_spec,
    prover_blind_spec,
    random_clean_spec,
)
from dqip.errors import ShapeError, ValidationError
from dqip.prover import (
    OptimizerConfig,
    exact_single_message_max,
    seesaw_optimize,
)
from dqip.protocol import execute_exact


E0 = np.array([1.0, 0.0], dtype=complex)
E1 = np.array([0.0, 1.0], dtype=complex)
PLUS = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)


def test_single_message_accept_zero():
    value, vec = exact_single_message_max(coin_check_spec([E0]))
    assert abs(value - 1.0) <= 1e-10
    assert abs(abs(vec[0]) - 1.0) <= 1e-8


def test_single_message_incompatible_demands():
    value, _ = exact_single_message_max(coin_check_spec([E0, E1]))
    assert abs(value - 0.5) <= 1e-10


def test_single_message_zero_plus_pair():
    # Top eigenvalue of (|0><0| + |+><+|)/2 is (1 + 1/sqrt(2)) / 2.
    value, _ = exact_single_message_max(coin_check_spec([E0, PLUS]))
    assert abs(value - (1 + 1 / np.sqrt(2)) / 2) <= 1e-10


def test_single_message_shape_errors():
    spec, _ = random_clean_spec(0)  # two prover turns
    with pytest.raises(ShapeError):
        exact_single_message_max(spec)


def test_seesaw_flat_on_prover_independent_spec():
    spec, honest = prover_blind_spec()
    trace = seesaw_optimize(spec, OptimizerConfig(restarts=2, sweeps=10, seed=3), honest=honest)
    exact = execute_exact(spec, honest).acceptance_probability
    assert abs(trace.best_acceptance - exact) <= 1e-9
    for history in trace.sweep_acceptance:
        assert max(history) - min(history) <= 1e-9


@pytest.mark.parametrize("vectors", [[E0], [E0, E1], [E0, PLUS]])
def test_seesaw_matches_single_message_spectral_max(vectors):
    spec = coin_check_spec(vectors)
    value, _ = exact_single_message_max(spec)
    trace = seesaw_optimize(
        spec, OptimizerConfig(restarts=3, sweeps=200, seed=11), honest=coin_check_honest()
    )
    assert trace.best_acceptance <= value + 1e-8
    assert abs(trace.best_acceptance - value) <= 1e-6


def test_seesaw_monotone_and_bounded_on_random_specs():
    for seed in range(4):
        spec, honest = random_clean_spec(seed, coin=(seed % 2 == 0))
        trace = seesaw_optimize(spec, OptimizerConfig(restarts=3, sweeps=60, seed=seed), honest=honest)
        assert trace.best_acceptance <= 1 + 1e-9
        honest_value = execute_exact(spec, honest).acceptance_probability
        assert trace.best_acceptance >= honest_value - 1e-9
        for history in trace.sweep_acceptance:
            for before, after in zip(history, history[1:]):
                assert after >= before - 1e-9


def test_seesaw_strategy_reproducible_and_executable():
    spec, honest = random_clean_spec(1)
    cfg = OptimizerConfig(restarts=2, sweeps=40, seed=5)
    t1 = seesaw_optimize(spec, cfg, honest=honest)
    t2 = seesaw_optimize(spec, cfg, honest=honest)
    assert t1.best_acceptance == t2.best_acceptance
    # The returned strategy reproduces its claimed acceptance in the executor.
    report = execute_exact(spec, t1.best_strategy)
    assert abs(report.acceptance_probability - t1.best_acceptance) <= 1e-9


def test_optimizer_config_validation():
    with pytest.raises(ValidationError):
        OptimizerConfig(sweeps=0)
    with pytest.raises(ValidationError):
        OptimizerConfig(restarts=0)
    with pytest.raises(ValidationError):
        OptimizerConfig(convergence_tol=0.0)

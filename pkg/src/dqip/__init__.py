"""Distributed quantum interactive proofs: simulator, compilers, optimizers.

The package models networks of verifier nodes interacting with a single
untrusted prover through quantum message registers, executes the resulting
turn scripts exactly (branch-averaging classical coins) or by sampling,
compiles classical Arthur-Merlin protocols into quantum ones, reduces turn
counts, enforces perfect completeness, and searches for the best cheating
prover by see-saw coordinate ascent.
"""

__version__ = "0.1.0"

from .network import NetworkGraph, RegisterLayout, build_network  # noqa: F401
from .protocol import (  # noqa: F401
    ProtocolSpec,
    ProverStrategy,
    RunReport,
    execute_exact,
    execute_sampled,
    verification_projector,
)
from .qcore import (  # noqa: F401
    DensityOperator,
    Gate,
    QuantumState,
    apply_unitary,
    fidelity,
    haar_random,
    partial_trace,
    projector_probability,
    trace_distance,
)

"""Adversarial-prover optimization: coordinate-ascent see-saw and the exact
single-message spectral optimum.

Acceptance of a strategy is ``sum_b w_b || A_b K_b(U_1, U_2, ...) |init> ||^2``
over recorded classical branches ``b`` (coins, replies, measurement
outcomes), where each ``K_b`` is a product of fixed linear maps and prover
unitaries.  The see-saw lifts this to the linear objective

    L({a_b}, {U}) = sum_b w_b Re <a_b| A_b K_b |init>,

whose maximum over the witness vectors ``a_b`` recovers the acceptance.
Holding everything but one unitary fixed, L = Re tr(U M) for a computable
matrix M, and the exact single-block maximizer is the unitary polar factor
of M (from its SVD).  Every block update is an exact maximization, so the
acceptance recorded after each sweep is non-decreasing; the result is a
certified lower bound on the optimal cheating probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ShapeError, ValidationError
from .protocol import (
    BranchPath,
    FunctionalStrategy,
    ProtocolSpec,
    ProverStrategy,
    ProverTurn,
    TabularStrategy,
    _expand_registers,
    collect_paths,
)
from .qcore import _keep_block, apply_matrix_vec
from .seeding import substream


@dataclass(frozen=True)
class OptimizerConfig:
    sweeps: int = 120
    restarts: int = 5
    seed: int = 0
    convergence_tol: float = 1e-9
    prover_qubits: int | None = None  # recorded for reporting; layouts fix the size

    def __post_init__(self):
        if self.sweeps < 1 or self.restarts < 1 or self.convergence_tol <= 0:
            raise ValidationError("sweeps >= 1, restarts >= 1 and convergence_tol > 0 required")


@dataclass
class OptimizerTrace:
    best_acceptance: float
    best_strategy: TabularStrategy
    sweep_acceptance: list[list[float]] = field(default_factory=list)  # per restart
    restarts: int = 0

    def to_json(self) -> dict:
        return {
            "best_acceptance": self.best_acceptance,
            "restarts": self.restarts,
            "sweep_acceptance": self.sweep_acceptance,
        }


# ---------------------------------------------------------------------------
# Path evaluation helpers
# ---------------------------------------------------------------------------


def _apply_path(vec: np.ndarray, path: BranchPath, gates: Mapping) -> np.ndarray:
    for op in path.ops:
        kind, payload, qubits = op
        mat = gates[payload] if kind == "block" else payload
        vec = apply_matrix_vec(vec, mat, list(qubits))
    for mat, qubits in path.accept_ops:
        vec = apply_matrix_vec(vec, mat, list(qubits))
    return vec


def _acceptance(paths: list[BranchPath], initial: np.ndarray, gates: Mapping) -> float:
    total = 0.0
    for path in paths:
        v = _apply_path(initial, path, gates)
        total += path.weight * float(np.vdot(v, v).real)
    return total


def _block_table(paths: list[BranchPath]) -> dict:
    """Block key -> qubit tuple, consistency-checked across branches."""
    blocks: dict = {}
    for path in paths:
        for kind, payload, qubits in path.ops:
            if kind != "block":
                continue
            if payload in blocks and blocks[payload] != qubits:
                raise ValidationError("prover block appears with inconsistent targets")
            blocks[payload] = qubits
    if not blocks:
        raise ShapeError("spec has no prover turns to optimize")
    return blocks


def _polar_maximizer(m: np.ndarray) -> np.ndarray:
    """Unitary U maximizing Re tr(U m): the polar factor from the SVD of m."""
    w, _, vh = np.linalg.svd(m)
    return (w @ vh).conj().T


# ---------------------------------------------------------------------------
# See-saw
# ---------------------------------------------------------------------------


def seesaw_optimize(
    spec: ProtocolSpec,
    config: OptimizerConfig,
    honest: ProverStrategy | None = None,
    reply_fn: Callable[[str, Mapping], int] | None = None,
    freeze_turns: tuple[int, ...] = (),
) -> OptimizerTrace:
    """Coordinate-ascent over prover-turn unitaries.

    Classical replies are pinned to ``reply_fn`` (defaulting to the honest
    strategy's replies); for the protocols in this package every deviating
    reply is annihilated by a consistency check, so pinning loses nothing.
    One restart starts from the honest gates when ``honest`` is given; the
    rest start Haar-random.  Blocks of turns listed in ``freeze_turns`` are
    pinned to the honest gates in every restart (used to probe constrained
    adversaries).  Returns a lower bound on the optimal prover acceptance,
    deterministic for a fixed config seed.
    """
    if not any(isinstance(t, ProverTurn) for t in spec.turns):
        raise ShapeError("seesaw_optimize needs at least one prover turn")
    if freeze_turns and honest is None:
        raise ValidationError("freeze_turns requires an honest strategy to pin")
    if reply_fn is None and honest is not None:
        reply_fn = honest.reply
    skeleton = FunctionalStrategy("skeleton", lambda *_: None, reply_fn)
    paths, initial = collect_paths(spec, skeleton)
    if not paths:
        # Every branch fails a classical predicate: no unitary can help.
        return OptimizerTrace(
            best_acceptance=0.0,
            best_strategy=TabularStrategy(f"seesaw[{spec.name}]", {}, reply_fn),
            sweep_acceptance=[[0.0]],
            restarts=config.restarts,
        )
    blocks = _block_table(paths)
    order = sorted(blocks, key=lambda key: (key[0], repr(key[1])))

    def honest_gates() -> dict:
        gates = {}
        for key in order:
            turn_index, view_items = key
            gates[key] = np.asarray(honest.gate(turn_index, dict(view_items)), dtype=np.complex128)
        return gates

    def random_gates(restart: int) -> dict:
        gates = {}
        for b, key in enumerate(order):
            if key[0] in freeze_turns:
                gates[key] = np.asarray(honest.gate(key[0], dict(key[1])), dtype=np.complex128)
                continue
            rng = substream(config.seed, "prover.seesaw", spec.name, str(restart), str(b))
            dim = 2 ** len(blocks[key])
            z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
            q, r = np.linalg.qr(z)
            gates[key] = q * (np.diag(r) / np.abs(np.diag(r)))
        return gates

    update_order = [key for key in order if key[0] not in freeze_turns]
    if not update_order:
        raise ShapeError("freeze_turns pinned every prover block")
    trace = OptimizerTrace(best_acceptance=-1.0, best_strategy=None, restarts=config.restarts)
    for restart in range(config.restarts):
        if restart == 0 and honest is not None:
            gates = honest_gates()
        else:
            gates = random_gates(restart)
        history = [_acceptance(paths, initial, gates)]
        for _ in range(config.sweeps):
            _sweep(paths, initial, gates, update_order, blocks)
            value = _acceptance(paths, initial, gates)
            history.append(value)
            if value > 1 + 1e-9:
                raise ValidationError(f"see-saw acceptance {value!r} exceeded 1")
            if history[-1] - history[-2] < config.convergence_tol:
                break
        trace.sweep_acceptance.append(history)
        if history[-1] > trace.best_acceptance:
            trace.best_acceptance = history[-1]
            trace.best_strategy = TabularStrategy(
                name=f"seesaw[{spec.name}]", gates=dict(gates), reply_fn=reply_fn
            )
    return trace


def _sweep(paths, initial, gates, order, blocks) -> None:
    # Witness vectors: the current final branch vectors (their global scale
    # does not affect the polar factor of any block matrix M).
    witnesses = [_apply_path(initial, p, gates) for p in paths]

    # Backward suffix vectors at each block position, computed with the
    # pre-sweep gates.  Blocks later in a path are updated after this block
    # within the sweep, so their pre-sweep values are the correct fixed ones.
    suffixes: list[dict[int, np.ndarray]] = []
    for path, a in zip(paths, witnesses):
        vec = a
        for mat, qubits in reversed(path.accept_ops):
            vec = apply_matrix_vec(vec, np.asarray(mat).conj().T, list(qubits))
        suffix: dict[int, np.ndarray] = {}
        for pos in range(len(path.ops) - 1, -1, -1):
            kind, payload, qubits = path.ops[pos]
            if kind == "block":
                suffix[pos] = vec
                mat = gates[payload]
            else:
                mat = payload
            vec = apply_matrix_vec(vec, np.asarray(mat).conj().T, list(qubits))
        suffixes.append(suffix)

    # Forward prefixes advance lazily with the freshly updated gates.
    fronts = [initial.copy() for _ in paths]
    cursor = [0] * len(paths)

    def advance(i: int, stop: int) -> None:
        path = paths[i]
        while cursor[i] < stop:
            kind, payload, qubits = path.ops[cursor[i]]
            mat = gates[payload] if kind == "block" else payload
            fronts[i] = apply_matrix_vec(fronts[i], mat, list(qubits))
            cursor[i] += 1

    positions: dict = {key: [] for key in order}
    for i, path in enumerate(paths):
        for pos, (kind, payload, _) in enumerate(path.ops):
            if kind == "block" and payload in positions:
                positions[payload].append((i, pos))

    for key in order:
        qubits = list(blocks[key])
        dim = 2 ** len(qubits)
        m = np.zeros((dim, dim), dtype=np.complex128)
        for i, pos in positions[key]:
            advance(i, pos)
            x = _keep_block(fronts[i], qubits)
            y = _keep_block(suffixes[i][pos], qubits)
            m += paths[i].weight * (x @ y.conj().T)
        gates[key] = _polar_maximizer(m)
        for i, pos in positions[key]:
            advance(i, pos + 1)


# ---------------------------------------------------------------------------
# Exact optimum for single-message protocols
# ---------------------------------------------------------------------------


def exact_single_message_max(spec: ProtocolSpec) -> tuple[float, np.ndarray]:
    """Largest eigenvalue of the acceptance operator over the prover's message.

    Requires exactly one prover turn, occurring first and carrying no
    classical replies.  The optimal acceptance is the top eigenvalue of
    ``E = sum_b w_b A_b^dag Pi_b A_b`` restricted to the prover's registers
    (the prover sends the top eigenvector); returns (value, eigenvector).
    """
    prover_turns = [t for t in spec.turns if isinstance(t, ProverTurn)]
    if len(prover_turns) != 1 or not isinstance(spec.turns[0], ProverTurn):
        raise ShapeError("exact_single_message_max needs exactly one prover turn, occurring first")
    if prover_turns[0].replies:
        raise ShapeError("exact_single_message_max does not support classical replies")

    skeleton = FunctionalStrategy("skeleton", lambda *_: None)
    paths, initial = collect_paths(spec, skeleton)
    turn = prover_turns[0]
    regs = list(turn.acts_on(dict()) if callable(turn.acts_on) else turn.acts_on)
    qubits = _expand_registers(spec.layout, regs)
    dim = 2 ** len(qubits)
    if not paths:
        vec = np.zeros(dim, dtype=np.complex128)
        vec[0] = 1.0
        return 0.0, vec
    blocks = _block_table(paths)
    ((key, block_qubits),) = blocks.items()
    if tuple(block_qubits) != tuple(qubits):
        raise ShapeError("prover block targets disagree with the turn's registers")
    qubits = list(block_qubits)

    basis_states = []
    for i in range(dim):
        prep = np.zeros((dim, dim), dtype=np.complex128)
        prep[i, 0] = 1.0
        basis_states.append(apply_matrix_vec(initial, prep, qubits))

    e = np.zeros((dim, dim), dtype=np.complex128)
    for path in paths:
        if any(kind == "block" for kind, _, _ in path.ops[1:]):
            raise ShapeError("unexpected second prover block")
        evolved = []
        for vec in basis_states:
            v = vec
            for kind, payload, q in path.ops[1:]:  # op 0 is the block itself
                v = apply_matrix_vec(v, payload, list(q))
            for mat, q in path.accept_ops:
                v = apply_matrix_vec(v, mat, list(q))
            evolved.append(v)
        u = np.stack(evolved)
        e += path.weight * (u.conj() @ u.T)

    vals, vecs = np.linalg.eigh((e + e.conj().T) / 2)
    return float(np.clip(vals[-1], 0.0, 1.0)), vecs[:, -1]

"""GHZ / star-graph-state machinery and the 5-turn GHZ verification protocol.

The star graph state |S_n> = prod_j CZ_(center,j) |+>^n is locally
equivalent to (|0^n> + |1^n>)/sqrt(2) via Hadamards on the leaves.  Its two
stabilizer tests are

    P_0 = (I + X_c Z_leaves)/2      -- center measured in X, leaves in Z,
                                       accept iff the outcome parity is even;
    P_1 = prod_leaf (I + Z_c X_leaf)/2 -- center in Z, leaves in X,
                                       accept iff all outcomes agree.

The distributed protocol delivers N+1 copies, tests N randomly chosen ones
with a random test per copy, routes the parity check through prover-supplied
subtree sums over a spanning tree, and hands back the untested copy as the
output register.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Callable, Mapping

import numpy as np

from . import qcore
from .errors import ValidationError
from .network import PROVER, NetworkGraph, allocate_layout, spanning_tree
from .protocol import (
    Broadcast,
    CoinFlip,
    FunctionalStrategy,
    Measurement,
    NodeAccept,
    ProtocolSpec,
    ProverTurn,
    ReplySlot,
    VerificationPhase,
    VerifierTurn,
    Step,
)
from .qcore import QuantumState, apply_unitary
from .transforms import CompileReport, Compiled, message_accounting, private_accounting


def ghz_state(n: int) -> QuantumState:
    """(|0^n> + |1^n>)/sqrt(2)."""
    if n < 2:
        raise ValidationError("ghz_state needs at least two qubits")
    amps = np.zeros(2**n, dtype=np.complex128)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return QuantumState(n, amps)


def star_state(n: int) -> QuantumState:
    """Star graph state: CZ fan-out from qubit 0 on |+>^n."""
    if n < 2:
        raise ValidationError("star_state needs at least two qubits")
    state = QuantumState.zero(n)
    for q in range(n):
        state = apply_unitary(state, qcore.H, [q])
    for leaf in range(1, n):
        state = apply_unitary(state, qcore.CZ, [0, leaf])
    return state


def star_prep_matrix(n: int) -> np.ndarray:
    """Unitary with star_state(n) as its action on |0^n>."""
    total = np.eye(2**n, dtype=np.complex128)
    for q in range(n):
        total = qcore.embed_operator(qcore.H.matrix, [q], n) @ total
    for leaf in range(1, n):
        total = qcore.embed_operator(qcore.CZ.matrix, [0, leaf], n) @ total
    return total


def kron_chain(ops: list[np.ndarray]) -> np.ndarray:
    """Tensor product with ops[0] acting on the lowest qubits."""
    return reduce(lambda low, high: np.kron(high, low), ops)


# ---------------------------------------------------------------------------
# Stabilizer tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilizerTest:
    """One coloring test: projector, per-node basis, classical predicate."""

    color: int
    projector: np.ndarray
    bases: tuple[str, ...]  # 'X' or 'Z' per qubit, center first
    predicate: Callable[[tuple[int, ...]], bool]

    def __post_init__(self):
        qcore.check_projector(self.projector)

    def outcome_probability(self, state: QuantumState, outcomes: tuple[int, ...]) -> float:
        """Born probability of one outcome string under the basis assignment."""
        vec = state.amplitudes
        for q, basis in enumerate(self.bases):
            if basis == "X":
                vec = qcore.apply_matrix_vec(vec, qcore.H.matrix, [q])
        idx = sum(bit << q for q, bit in enumerate(outcomes))
        return float(abs(vec[idx]) ** 2)

    def classical_expectation(self, state: QuantumState) -> float:
        """Probability the basis-assignment measurement passes the predicate."""
        n = len(self.bases)
        total = 0.0
        for idx in range(2**n):
            outcomes = tuple((idx >> q) & 1 for q in range(n))
            if self.predicate(outcomes):
                total += self.outcome_probability(state, outcomes)
        return total


def stabilizer_tests(n: int) -> tuple[StabilizerTest, StabilizerTest]:
    """The two star-coloring tests with the center at qubit 0."""
    if n < 2:
        raise ValidationError("stabilizer_tests needs at least two qubits")
    dim = 2**n
    center_x = qcore.embed_operator(qcore.X.matrix, [0], n)
    for leaf in range(1, n):
        center_x = center_x @ qcore.embed_operator(qcore.Z.matrix, [leaf], n)
    p0 = (np.eye(dim) + center_x) / 2

    p1 = np.eye(dim, dtype=np.complex128)
    for leaf in range(1, n):
        k_leaf = qcore.embed_operator(qcore.Z.matrix, [0], n) @ qcore.embed_operator(
            qcore.X.matrix, [leaf], n
        )
        p1 = p1 @ ((np.eye(dim) + k_leaf) / 2)

    test0 = StabilizerTest(
        color=0,
        projector=p0,
        bases=("X",) + ("Z",) * (n - 1),
        predicate=lambda outcomes: sum(outcomes) % 2 == 0,
    )
    test1 = StabilizerTest(
        color=1,
        projector=p1,
        bases=("Z",) + ("X",) * (n - 1),
        predicate=lambda outcomes: len(set(outcomes)) == 1,
    )
    return test0, test1


# ---------------------------------------------------------------------------
# The distributed verification protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GhzProtocolParams:
    """Parameters: nodes, test copies N, and the (epsilon, delta) targets.

    The fidelity statement holds for N of order (1/epsilon) log(1/delta);
    the constant is a configuration choice, not enforced here.
    """

    copies: int
    epsilon: float = 0.25
    delta: float = 0.5
    seed: int = 0
    prover_qubits: int = 0

    def __post_init__(self):
        if self.copies < 1:
            raise ValidationError("at least one test copy is required")
        if not (0 < self.epsilon < 1 and 0 < self.delta < 1):
            raise ValidationError("epsilon and delta must lie in (0, 1)")


def copy_reg(i: int, u: int) -> str:
    return f"R:{i}:{u}"


def make_tests_of(leader: int, copies: int):
    def tests_of(u: int, view: Mapping) -> tuple[int, int]:
        """(test bit string, target copy index) as node u understands them."""
        if u == leader:
            return view["btest"], view["btarget"] + 1
        return view[f"becho_test:{u}"], view[f"becho_target:{u}"] + 1

    return tests_of


def make_measured_copies(leader: int, copies: int):
    tests_of = make_tests_of(leader, copies)

    def measured_copies(u: int, view: Mapping) -> list[int]:
        _, target = tests_of(u, view)
        return [i for i in range(1, copies + 2) if i != target]

    return measured_copies


def make_rotation_step(leader: int, copies: int):
    """Per-node basis rotations: Hadamard where the test wants X, plus the
    leaf-qubit Hadamard on the target copy that turns the star into GHZ."""
    tests_of = make_tests_of(leader, copies)
    measured_copies = make_measured_copies(leader, copies)

    def rotation_step(u: int) -> Step:
        def resolve(view: Mapping):
            bits, target = tests_of(u, view)
            ops, regs = [], []
            for t, i in enumerate(measured_copies(u, view)):
                bit = (bits >> t) & 1
                wants_x = (bit == 0) if u == leader else (bit == 1)
                if wants_x:
                    ops.append(qcore.H.matrix)
                    regs.append(copy_reg(i, u))
            if u != leader:
                ops.append(qcore.H.matrix)
                regs.append(copy_reg(target, u))
            if not regs:
                return None
            return kron_chain(ops), regs

        return Step(actor=u, resolve=resolve, describe={"kind": "test-basis-rotation", "node": u})

    return rotation_step


def make_ghz_broadcasts(graph: NetworkGraph) -> tuple[Broadcast, ...]:
    return tuple(
        Broadcast(
            node=u,
            fn=lambda view, _u=u: {
                "becho_test": view[f"becho_test:{_u}"],
                "becho_target": view[f"becho_target:{_u}"],
                "o": view[f"o:{_u}"],
                "s": view[f"s:{_u}"],
                "leader": view[f"leader:{_u}"],
                "parent": view[f"parent:{_u}"],
                "dist": view[f"dist:{_u}"],
            },
            describe={"kind": "test-bundle", "node": u},
        )
        for u in range(graph.node_count)
    )


def make_ghz_predicate(graph: NetworkGraph, leader: int, copies: int):
    """The four verification checks: echo consistency anchored at the leader,
    spanning-tree labels, the telescoped parity test, the all-equal test."""
    none_parent = graph.node_count

    def predicate(view: Mapping, u: int) -> bool:
        received = {v: view[f"recv:{v}"] for v in graph.neighbors(u)}
        my_test = view[f"becho_test:{u}"]
        my_target = view[f"becho_target:{u}"]
        my_leader = view[f"leader:{u}"]
        for got in received.values():
            if got["becho_test"] != my_test or got["becho_target"] != my_target:
                return False
            if got["leader"] != my_leader:
                return False
        if u == leader and (my_test != view["btest"] or my_target != view["btarget"]):
            return False
        if u == leader and my_leader != leader:
            return False
        my_parent, my_dist = view[f"parent:{u}"], view[f"dist:{u}"]
        if my_leader == u:
            if my_parent != none_parent or my_dist != 0:
                return False
        else:
            if my_parent not in received or received[my_parent]["dist"] + 1 != my_dist:
                return False
        o_u = view[f"o:{u}"]
        s_u = view[f"s:{u}"]
        children = [v for v, got in received.items() if got["parent"] == u]
        for t in range(copies):
            bit = (my_test >> t) & 1
            if bit == 0:
                total = ((o_u >> t) & 1) + sum((received[v]["s"] >> t) & 1 for v in children)
                if u == leader:
                    if total % 2 != 0:
                        return False
                elif total % 2 != (s_u >> t) & 1:
                    return False
            else:
                mine = (o_u >> t) & 1
                if any((got["o"] >> t) & 1 != mine for got in received.values()):
                    return False
        return True

    return predicate


def ghz_reply_slots(graph: NetworkGraph, copies: int) -> tuple[tuple[ReplySlot, ...], tuple[ReplySlot, ...]]:
    """(turn-1 tree slots, turn-3 echo slots) for the verification protocol."""
    n = graph.node_count
    tree_slots = tuple(
        slot
        for u in range(n)
        for slot in (
            ReplySlot(f"leader:{u}", n, audience=(u,)),
            ReplySlot(f"parent:{u}", n + 1, audience=(u,)),
            ReplySlot(f"dist:{u}", n, audience=(u,)),
        )
    )
    echo_slots = tuple(
        slot
        for u in range(n)
        for slot in (
            ReplySlot(f"becho_test:{u}", 2**copies, audience=(u,)),
            ReplySlot(f"becho_target:{u}", copies + 1, audience=(u,)),
        )
    )
    return tree_slots, echo_slots


def build_pghz(graph: NetworkGraph, params: GhzProtocolParams) -> Compiled:
    """The 5-turn GHZ verification protocol on ``graph``.

    The prover delivers N+1 candidate star states; the leader draws a test
    string and a target copy; the prover echoes both to every node; nodes
    measure the test copies (center in X and leaves in Z for parity tests,
    the complementary assignment for all-equal tests), Hadamard their leaf
    qubit of the target copy, and report outcomes to the prover; the prover
    supplies subtree parities which the verification telescopes to the
    leader's total-parity check.  Echo consistency is anchored at the
    leader, and tree labels are verified locally.
    """
    n = graph.node_count
    if n < 2:
        raise ValidationError("the protocol needs at least two nodes")
    copies = params.copies
    leader = 0
    tree = spanning_tree(graph, leader)
    none_parent = n

    extras = [(copy_reg(i, u), 1, PROVER) for i in range(1, copies + 2) for u in range(n)]
    layout = allocate_layout(graph, prover_qubits=params.prover_qubits, extras=extras)

    r_regs = tuple(copy_reg(i, u) for i in range(1, copies + 2) for u in range(n))
    p_regs = ("P",) if params.prover_qubits else ()
    tree_slots, echo_slots = ghz_reply_slots(graph, copies)
    measured_copies = make_measured_copies(leader, copies)
    rotation_step = make_rotation_step(leader, copies)

    turns = (
        ProverTurn(
            index=1,
            acts_on=p_regs + r_regs,
            delivers=tuple((copy_reg(i, u), u) for i in range(1, copies + 2) for u in range(n)),
            replies=tree_slots,
        ),
        VerifierTurn(
            index=2,
            coins=(
                CoinFlip("btest", 2**copies, owner=leader),
                CoinFlip("btarget", copies + 1, owner=leader),
            ),
        ),
        ProverTurn(index=3, acts_on=p_regs, replies=echo_slots),
        VerifierTurn(
            index=4,
            steps=tuple(rotation_step(u) for u in range(n)),
            measurements=tuple(
                Measurement(
                    name=f"o:{u}",
                    node=u,
                    resolve_targets=lambda view, _u=u: [
                        copy_reg(i, _u) for i in measured_copies(_u, view)
                    ],
                    to_prover=True,
                    describe={"kind": "test-outcomes", "node": u},
                )
                for u in range(n)
            ),
        ),
        ProverTurn(
            index=5,
            acts_on=p_regs,
            replies=tuple(ReplySlot(f"s:{u}", 2**copies, audience=(u,)) for u in range(n)),
        ),
    )

    broadcasts = make_ghz_broadcasts(graph)
    predicate = make_ghz_predicate(graph, leader, copies)

    accepts = tuple(
        NodeAccept(
            node=u,
            projector=None,
            predicate=lambda view, _u=u: predicate(view, _u),
            describe={"kind": "ghz-verification", "node": u},
        )
        for u in range(n)
    )

    def output_registers(values: Mapping) -> list[str]:
        target = values["btarget"] + 1
        return [copy_reg(target, u) for u in range(n)]

    spec = ProtocolSpec(
        name=f"ghz-verify[n={n},N={copies}]",
        graph=graph,
        layout=layout,
        turns=turns,
        verification=VerificationPhase(broadcasts=broadcasts, accepts=accepts),
        output_registers=output_registers,
        metadata={
            "kind": "ghz-verification",
            "copies": copies,
            "epsilon": params.epsilon,
            "delta": params.delta,
        },
    )

    honest = honest_pghz_strategy(spec, graph, params)
    report = CompileReport(
        transform="build_pghz",
        input_turns=0,
        output_turns=spec.num_turns,
        message_qubits_per_node=message_accounting(spec),
        private_qubits_per_node=private_accounting(spec),
        predicted_completeness=1.0,
        predicted_soundness=None,
    )
    return Compiled(spec, honest, report)


def honest_pghz_strategy(
    spec: ProtocolSpec, graph: NetworkGraph, params: GhzProtocolParams
) -> FunctionalStrategy:
    """Sends star states, echoes the leader's coins, sums subtree parities."""
    n = graph.node_count
    copies = params.copies
    leader = 0
    tree = spanning_tree(graph, leader)
    none_parent = n
    p_qubits = params.prover_qubits

    prep = star_prep_matrix(n)
    full_prep = kron_chain(
        ([np.eye(2**p_qubits, dtype=np.complex128)] if p_qubits else []) + [prep] * (copies + 1)
    )

    def subtree(u: int) -> list[int]:
        out, frontier = [u], [u]
        while frontier:
            nxt = []
            for w in frontier:
                for child in tree.children(w):
                    out.append(child)
                    nxt.append(child)
            frontier = nxt
        return out

    subtrees = {u: subtree(u) for u in range(n)}

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        if turn_index == 1:
            return full_prep
        return np.eye(2**p_qubits, dtype=np.complex128) if p_qubits else np.eye(1, dtype=np.complex128)

    def reply(slot_name: str, view: Mapping) -> int:
        kind, _, u = slot_name.partition(":")
        u = int(u)
        if kind == "leader":
            return leader
        if kind == "parent":
            return none_parent if tree.parent[u] is None else tree.parent[u]
        if kind == "dist":
            return tree.distance[u]
        if kind == "becho_test":
            return view["btest"]
        if kind == "becho_target":
            return view["btarget"]
        if kind == "s":
            value = 0
            for t in range(copies):
                parity = 0
                for w in subtrees[u]:
                    parity ^= (view[f"o:{w}"] >> t) & 1
                value |= parity << t
            return value
        raise ValidationError(f"unexpected reply slot {slot_name!r}")

    return FunctionalStrategy("ghz-honest", gate, reply)


def all_zero_cheat(spec: ProtocolSpec, params: GhzProtocolParams) -> FunctionalStrategy:
    """Fixed cheat: sends |0...0> instead of star states, replies honestly."""
    honest = honest_pghz_strategy(spec, spec.graph, params)

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        mat = honest.gate_fn(turn_index, view)
        return np.eye(mat.shape[0], dtype=np.complex128)

    return FunctionalStrategy("ghz-all-zero", gate, honest.reply_fn)


def ghz_fidelity(rho: np.ndarray) -> float:
    """<GHZ| rho |GHZ> for a density matrix on n qubits."""
    n = int(round(np.log2(rho.shape[0])))
    target = ghz_state(n).amplitudes
    return float(np.real(target.conj() @ rho @ target))

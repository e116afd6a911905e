"""Protocol transformations.

* classical Arthur-Merlin simulation (reversible certificate writes, coin
  superpositions, computational-basis verification),
* turn halving with a shared coin (snapshot + forward/backward simulation),
* turn halving with private coins (root Bell pair + prover fan-out),
* the 7-to-5 reduction (leader coin, prover echo, branch consistency),
* the perfect-completeness transform (verdict round-trip, leader counters,
  acceptance rotation),
* parallel repetition (AND / per-node majority),
* Bell-pair materialization of classical coin flips.

Every transform takes and returns (spec, honest strategy) pairs plus a
:class:`CompileReport` with turn counts, register accounting and, when the
caller supplies the input's (completeness, soundness), the predicted output
values.  Honest strategies for snapshot-style constructions are built by
replaying the input protocol's honest evolution internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt
from typing import Callable, Mapping, Sequence

import numpy as np

from . import qcore
from .dam import DamNodeView, DamProtocol, brute_force_value
from .errors import ProtocolError, ShapeError, ValidationError
from .network import PROVER, NetworkGraph, RegisterLayout, allocate_layout, reg_m, reg_v, spanning_tree
from .protocol import (
    Broadcast,
    CoinFlip,
    FunctionalStrategy,
    Measurement,
    NodeAccept,
    ProjectiveCheck,
    ProtocolSpec,
    ProverStrategy,
    ProverTurn,
    ReplySlot,
    Step,
    VerificationPhase,
    VerifierTurn,
    _Executor,
    _expand_registers,
    conditional_step,
    static_step,
)

# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class CompileReport:
    transform: str
    input_turns: int
    output_turns: int
    message_qubits_per_node: dict
    private_qubits_per_node: dict
    predicted_completeness: float | None = None
    predicted_soundness: float | None = None

    def to_json(self) -> dict:
        return {
            "transform": self.transform,
            "input_turns": self.input_turns,
            "output_turns": self.output_turns,
            "message_qubits_per_node": self.message_qubits_per_node,
            "private_qubits_per_node": self.private_qubits_per_node,
            "predicted_completeness": self.predicted_completeness,
            "predicted_soundness": self.predicted_soundness,
        }


@dataclass
class Compiled:
    spec: ProtocolSpec
    honest: ProverStrategy
    report: CompileReport


def halved_completeness(c: float) -> float:
    return (1 + c) / 2


def halved_soundness(s: float) -> float:
    return (1 + sqrt(s)) / 2


def message_accounting(spec: ProtocolSpec) -> dict:
    """Max qubits moved between the prover and each node over all turns."""
    moved = {u: 0 for u in range(spec.graph.node_count)}

    def size(reg: str) -> int:
        return len(_expand_registers(spec.layout, [reg]))

    for turn in spec.turns:
        per_turn = {u: 0 for u in moved}
        if isinstance(turn, ProverTurn) and not callable(turn.delivers):
            for reg, node in turn.delivers:
                per_turn[node] += size(reg)
        elif isinstance(turn, VerifierTurn) and not callable(turn.sends):
            for reg in turn.sends:
                owner = spec.layout.owner(reg)
                if owner != PROVER:
                    per_turn[owner] += size(reg)
        for u in moved:
            moved[u] = max(moved[u], per_turn[u])
    return moved


def private_accounting(spec: ProtocolSpec) -> dict:
    sizes = {u: 0 for u in range(spec.graph.node_count)}
    for u in sizes:
        if spec.layout.has(reg_v(u)):
            sizes[u] = spec.layout.size(reg_v(u))
    return sizes


# ---------------------------------------------------------------------------
# Clean-spec introspection
# ---------------------------------------------------------------------------


def _require_clean(spec: ProtocolSpec) -> None:
    """Halving-compatible shape: only P/V/M registers, no classical events
    before verification, fully static turn plumbing."""
    allowed = {"P"} | {reg_v(u) for u in range(spec.graph.node_count)} | {
        reg_m(u) for u in range(spec.graph.node_count)
    }
    extra = set(spec.layout.names()) - allowed
    if extra:
        raise ShapeError(f"spec has non-canonical registers {sorted(extra)}")
    for turn in spec.turns:
        if isinstance(turn, VerifierTurn):
            if turn.coins or turn.measurements or turn.checks:
                raise ShapeError("clean specs may not use classical events before verification")
            if callable(turn.sends):
                raise ShapeError("clean specs need static sends")
        elif turn.replies or callable(turn.delivers) or callable(turn.acts_on):
            raise ShapeError("clean specs need static prover turns without replies")
    if spec.verification.w_swap or spec.verification.checks:
        raise ShapeError("clean specs may not use W registers or projective checks")


def _vm_regs(u: int) -> list[str]:
    return [reg_v(u), reg_m(u)]


def _node_unit(spec: ProtocolSpec, turn: VerifierTurn, u: int) -> np.ndarray:
    """Composite unitary of node ``u``'s steps in a turn, on its (V, M) space."""
    union = _expand_registers(spec.layout, _vm_regs(u))
    dim = 2 ** len(union)
    total = np.eye(dim, dtype=np.complex128)
    for step in turn.steps:
        if step.actor != u:
            continue
        resolved = step.resolve({})
        if resolved is None:
            continue
        mat, regs = resolved
        qubits = _expand_registers(spec.layout, regs)
        positions = [union.index(q) for q in qubits]
        total = qcore.embed_operator(np.asarray(mat, dtype=np.complex128), positions, len(union)) @ total
    return total


def _prover_full_gate(spec: ProtocolSpec, honest: ProverStrategy, turn: ProverTurn) -> tuple[np.ndarray, list[int]]:
    regs = list(turn.acts_on)
    qubits = _expand_registers(spec.layout, regs)
    return np.asarray(honest.gate(turn.index, {}), dtype=np.complex128), qubits


def _prefix_unitary(spec: ProtocolSpec, honest: ProverStrategy, upto: int) -> np.ndarray:
    """Full-space unitary of the honest evolution through turn ``upto``.

    ``upto`` may exceed the turn count by one to include the verification
    unitary (turn k+1 in the usual indexing).
    """
    n = spec.layout.total_qubits
    total = np.eye(2**n, dtype=np.complex128)
    for turn in spec.turns:
        if turn.index > upto:
            break
        if isinstance(turn, ProverTurn):
            mat, qubits = _prover_full_gate(spec, honest, turn)
            total = qcore.embed_operator(mat, qubits, n) @ total
        else:
            for u in range(spec.graph.node_count):
                unit = _node_unit(spec, turn, u)
                union = _expand_registers(spec.layout, _vm_regs(u))
                total = qcore.embed_operator(unit, union, n) @ total
    return total


def _all_m(spec: ProtocolSpec) -> tuple[str, ...]:
    return tuple(reg_m(u) for u in range(spec.graph.node_count))


def _prover_regs(spec: ProtocolSpec) -> tuple[str, ...]:
    regs = []
    if spec.layout.has("P"):
        regs.append("P")
    regs.extend(_all_m(spec))
    return tuple(regs)


def _with_owners(layout: RegisterLayout, overrides: Mapping[str, int]) -> RegisterLayout:
    owners = dict(layout.initial_owner)
    owners.update(overrides)
    return RegisterLayout(layout.registers, owners, layout.total_qubits)


def _zero_projector(size: int) -> np.ndarray:
    proj = np.zeros((2**size, 2**size), dtype=np.complex128)
    proj[0, 0] = 1.0
    return proj


# Conditional wrappers: fire the wrapped object only when flag(view) holds.


def _when_step(flag: Callable[[Mapping], bool], step: Step) -> Step:
    return Step(
        actor=step.actor,
        resolve=lambda view: step.resolve(view) if flag(view) else None,
        describe={"kind": "branch-gated", "inner": step.describe},
    )


def _when_measurement(flag: Callable[[Mapping], bool], m: Measurement) -> Measurement:
    return Measurement(
        name=m.name,
        node=m.node,
        resolve_targets=lambda view: m.resolve_targets(view) if flag(view) else [],
        to_prover=m.to_prover,
        describe={"kind": "branch-gated", "inner": m.describe},
    )


def _when_broadcast(flag: Callable[[Mapping], bool], bc: Broadcast) -> Broadcast:
    return Broadcast(
        node=bc.node,
        fn=lambda view: bc.fn(view) if flag(view) else None,
        describe={"kind": "branch-gated", "inner": bc.describe},
    )


# ---------------------------------------------------------------------------
# Classical simulation: dAM -> dQIP
# ---------------------------------------------------------------------------


def dam_to_dqip(dam: DamProtocol, instance: NetworkGraph, budget: int | None = None) -> Compiled:
    """Quantum simulation of a private-coin dAM protocol.

    Verifier turns store the received certificate with SWAP gates and send
    coin superpositions sum_r |r>|r>; the honest prover moves received coins
    into its register and writes certificates with the reversible xor-update
    |r.., b> -> |r.., b xor c_j>, where the c_j tables are the brute-forced
    optimal Merlin strategy.  Verification measures everything in the
    computational basis, broadcasts, and evaluates the classical predicate,
    so no prover can do better than the best classical Merlin.
    """
    if dam.randomness != "private":
        raise ShapeError("dam_to_dqip simulates private-randomness protocols")
    value = brute_force_value(dam, instance, **({"budget": budget} if budget else {}))
    n = instance.node_count
    m = dam.bits_per_turn
    k = dam.turns
    arthur = dam.arthur_turns()
    merlin = dam.merlin_turns()

    # V-slot table: per Arthur turn, (certificate-store offset | None, coin offset).
    slots: dict[int, tuple[int | None, int]] = {}
    cursor = 0
    for j in arthur:
        store = None
        if j >= 2:
            store = cursor
            cursor += m
        slots[j] = (store, cursor)
        cursor += m
    g = cursor
    p_size = m * n * len(arthur)

    layout = allocate_layout(instance, prover_qubits=p_size, node_private=g, node_message=m)

    turns: list[ProverTurn | VerifierTurn] = []
    honest_gates: dict[int, np.ndarray] = {}
    prover_regs = tuple((["P"] if p_size else []) + [reg_m(u) for u in range(n)])

    for j in range(1, k + 1):
        if j in merlin:
            turns.append(
                ProverTurn(
                    index=j,
                    acts_on=prover_regs,
                    delivers=tuple((reg_m(u), u) for u in range(n)),
                )
            )
            honest_gates[j] = _merlin_gate(dam, instance, value.strategy, j, p_size, m, n, arthur)
        else:
            steps = tuple(static_step(u, _arthur_unit(slots[j], g, m), _vm_regs(u)) for u in range(n))
            turns.append(
                VerifierTurn(index=j, steps=steps, sends=tuple(reg_m(u) for u in range(n)))
            )

    measurements = []
    for u in range(n):
        if g:
            measurements.append(
                Measurement(
                    name=f"vout:{u}",
                    node=u,
                    resolve_targets=lambda view, _r=reg_v(u): [_r],
                    describe={"kind": "computational", "register": reg_v(u)},
                )
            )
        if k % 2 == 1:
            measurements.append(
                Measurement(
                    name=f"mout:{u}",
                    node=u,
                    resolve_targets=lambda view, _r=reg_m(u): [_r],
                    describe={"kind": "computational", "register": reg_m(u)},
                )
            )

    def transcript_view(u: int, view: Mapping) -> DamNodeView:
        certs: dict[int, int] = {}
        coins: dict[int, int] = {}
        vbits = view.get(f"vout:{u}", 0)
        for j in arthur:
            store, coin = slots[j]
            if store is not None:
                certs[j - 1] = (vbits >> store) & ((1 << m) - 1)
            coins[j] = (vbits >> coin) & ((1 << m) - 1)
        if k % 2 == 1:
            certs[k] = view[f"mout:{u}"]
        return DamNodeView(
            graph=instance,
            node=u,
            label=instance.node_inputs[u],
            certificates=certs,
            coins=coins,
        )

    broadcasts = tuple(
        Broadcast(
            node=u,
            fn=lambda view, _u=u: dam.broadcast(transcript_view(_u, view)),
            describe={"kind": "dam-broadcast", "node": u},
        )
        for u in range(n)
    )
    accepts = tuple(
        NodeAccept(
            node=u,
            projector=None,
            predicate=lambda view, _u=u: dam.predicate(
                transcript_view(_u, view),
                {v: view[f"recv:{v}"] for v in instance.neighbors(_u)},
            ),
            describe={"kind": "dam-predicate", "node": u},
        )
        for u in range(n)
    )

    spec = ProtocolSpec(
        name=f"dqip[{dam.name}]",
        graph=instance,
        layout=layout,
        turns=tuple(turns),
        verification=VerificationPhase(
            measurements=tuple(measurements), broadcasts=broadcasts, accepts=accepts
        ),
        metadata={
            "kind": "dam-simulation",
            "dam": dam.name,
            "message_qubits": m,
            "private_qubits": g,
            "classical_value": float(value.optimal_acceptance),
        },
    )
    honest = FunctionalStrategy(
        name=f"dam-honest[{dam.name}]",
        gate_fn=lambda turn, view: honest_gates[turn],
    )
    report = CompileReport(
        transform="dam_to_dqip",
        input_turns=k,
        output_turns=spec.num_turns,
        message_qubits_per_node=message_accounting(spec),
        private_qubits_per_node=private_accounting(spec),
        predicted_completeness=float(value.optimal_acceptance),
        predicted_soundness=None,
    )
    return Compiled(spec, honest, report)


def _arthur_unit(slot: tuple[int | None, int], g: int, m: int) -> np.ndarray:
    """Store M into the certificate slot, then create sum_r |r>|r> coherently.

    Acts on the node's (V, M) union: V qubits at positions [0, g), M at
    [g, g+m).  Application order: SWAP store, Hadamards on the coin slot,
    CNOT fan-out from the coin slot into M.
    """
    store, coin = slot
    size = g + m
    total = np.eye(2**size, dtype=np.complex128)
    if store is not None:
        for b in range(m):
            total = qcore.embed_operator(qcore.SWAP.matrix, [store + b, g + b], size) @ total
    for b in range(m):
        total = qcore.embed_operator(qcore.H.matrix, [coin + b], size) @ total
        total = qcore.embed_operator(qcore.CNOT.matrix, [coin + b, g + b], size) @ total
    return total


def _merlin_gate(dam, instance, strategy, j, p_size, m, n, arthur) -> np.ndarray:
    """Honest Merlin permutation at turn j on (P, M): store coins, write c_j."""
    mn = m * n
    dim = 2 ** (p_size + mn)
    perm = np.zeros((dim, dim), dtype=np.complex128)
    mask = (1 << mn) - 1
    prior = [a for a in arthur if a < j]
    for idx in range(dim):
        p_bits = idx & ((1 << p_size) - 1) if p_size else 0
        m_bits = (idx >> p_size) & mask
        if prior:
            # Swap M into the P block of the most recent Arthur turn.
            block = (len(prior) - 1) * mn
            held = (p_bits >> block) & mask
            p_bits = (p_bits & ~(mask << block)) | (m_bits << block)
            m_bits = held
        history = []
        for pos, a in enumerate(prior):
            block_bits = (p_bits >> (pos * mn)) & mask
            history.append(tuple((block_bits >> (m * u)) & ((1 << m) - 1) for u in range(n)))
        certs = strategy[j][tuple(history)]
        for u in range(n):
            m_bits ^= certs[u] << (m * u)
        out = (m_bits << p_size) | p_bits
        perm[out, idx] = 1.0
    return perm


# ---------------------------------------------------------------------------
# Turn padding
# ---------------------------------------------------------------------------


def pad_to_turns(spec: ProtocolSpec, honest: ProverStrategy, target: int) -> Compiled:
    """Append identity verifier/prover turn pairs; the value is unchanged."""
    _require_clean(spec)
    k = spec.num_turns
    if target < k or (target - k) % 2 != 0:
        raise ShapeError(f"cannot pad {k} turns to {target}")
    if not isinstance(spec.turns[-1], ProverTurn):
        raise ShapeError("padding expects a protocol ending with a prover turn")
    turns = list(spec.turns)
    identity_turns = []
    for idx in range(k + 1, target + 1):
        if idx % 2 == 0:
            turns.append(VerifierTurn(index=idx, sends=_all_m(spec)))
        else:
            turns.append(
                ProverTurn(
                    index=idx,
                    acts_on=_prover_regs(spec),
                    delivers=tuple((reg_m(u), u) for u in range(spec.graph.node_count)),
                )
            )
            identity_turns.append(idx)

    dim = 2 ** len(_expand_registers(spec.layout, _prover_regs(spec)))

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        if turn_index in identity_turns:
            return np.eye(dim, dtype=np.complex128)
        return honest.gate(turn_index, view)

    padded = ProtocolSpec(
        name=f"{spec.name}+pad{target}",
        graph=spec.graph,
        layout=spec.layout,
        turns=tuple(turns),
        verification=spec.verification,
        metadata=dict(spec.metadata, padded_to=target),
    )
    report = CompileReport(
        transform="pad_to_turns",
        input_turns=k,
        output_turns=target,
        message_qubits_per_node=message_accounting(padded),
        private_qubits_per_node=private_accounting(padded),
    )
    return Compiled(padded, FunctionalStrategy(f"{honest.name}+pad", gate), report)


# ---------------------------------------------------------------------------
# Turn halving with shared randomness
# ---------------------------------------------------------------------------


def halve_turns_shared(
    spec: ProtocolSpec,
    honest: ProverStrategy,
    completeness: float | None = None,
    soundness: float | None = None,
) -> Compiled:
    """(4l+1)-turn protocol -> (2l+1)-turn protocol with one shared coin.

    Turn 1 delivers the snapshot of the honest state through verifier turn
    2l+2; the shared coin r then selects forward simulation of the remaining
    turns (r=0, ending in the original verification) or backward
    un-simulation (r=1, ending in the all-zero check of every V register).
    """
    _require_clean(spec)
    k = spec.num_turns
    if k < 5 or k % 4 != 1:
        raise ShapeError(f"turn count {k} is not of the form 4l+1 with l >= 1")
    ell = (k - 1) // 4
    n = spec.graph.node_count

    verifier_turns = {t.index: t for t in spec.turns if isinstance(t, VerifierTurn)}
    prover_gates = {
        t.index: np.asarray(honest.gate(t.index, {}), dtype=np.complex128)
        for t in spec.turns
        if isinstance(t, ProverTurn)
    }
    node_units = {idx: {u: _node_unit(spec, t, u) for u in range(n)} for idx, t in verifier_turns.items()}

    layout = _with_owners(spec.layout, {reg_v(u): PROVER for u in range(n)})
    snapshot = _prefix_unitary(spec, honest, upto=2 * ell + 2)
    all_regs = tuple(spec.layout.names())

    turns: list[ProverTurn | VerifierTurn] = [
        ProverTurn(
            index=1,
            acts_on=all_regs,
            delivers=tuple((reg_v(u), u) for u in range(n)) + tuple((reg_m(u), u) for u in range(n)),
        )
    ]
    turns.append(
        VerifierTurn(
            index=2,
            coins=(CoinFlip("r", 2, owner=None),),
            steps=tuple(
                conditional_step(
                    u,
                    ["r"],
                    {(0,): None, (1,): (node_units[2 * ell + 2][u].conj().T, _vm_regs(u))},
                )
                for u in range(n)
            ),
            sends=_all_m(spec),
        )
    )

    honest_gates: dict[int, dict[int, np.ndarray]] = {}
    for idx in range(3, 2 * ell + 2):
        if idx % 2 == 1:
            j = (idx - 1) // 2
            turns.append(
                ProverTurn(
                    index=idx,
                    acts_on=_prover_regs(spec),
                    delivers=tuple((reg_m(u), u) for u in range(n)),
                )
            )
            honest_gates[idx] = {
                0: prover_gates[2 * ell + 2 * j + 1],
                1: prover_gates[2 * ell - 2 * j + 3].conj().T,
            }
        else:
            j = (idx - 2) // 2
            turns.append(
                VerifierTurn(
                    index=idx,
                    steps=tuple(
                        conditional_step(
                            u,
                            ["r"],
                            {
                                (0,): (node_units[2 * ell + 2 * j + 2][u], _vm_regs(u)),
                                (1,): (node_units[2 * ell - 2 * j + 2][u].conj().T, _vm_regs(u)),
                            },
                        )
                        for u in range(n)
                    ),
                    sends=_all_m(spec),
                )
            )

    forward = lambda view: view["r"] == 0  # noqa: E731
    backward = lambda view: view["r"] == 1  # noqa: E731

    ver = spec.verification
    steps = [_when_step(forward, s) for s in ver.steps]
    for u in range(n):
        steps.append(
            conditional_step(
                u,
                ["r"],
                {(0,): None, (1,): (node_units[2][u].conj().T, _vm_regs(u))},
            )
        )
    measurements = tuple(_when_measurement(forward, m) for m in ver.measurements)
    broadcasts = tuple(_when_broadcast(forward, bc) for bc in ver.broadcasts)

    accepts = []
    inner_accepts = {a.node: a for a in ver.accepts}
    for u in range(n):
        inner = inner_accepts.get(u)
        g_u = spec.layout.size(reg_v(u)) if spec.layout.has(reg_v(u)) else 0
        zero_proj = _zero_projector(g_u) if g_u else None

        def projector(view, _inner=inner, _zero=zero_proj, _u=u):
            if view["r"] == 0:
                return None if (_inner is None or _inner.projector is None) else _inner.projector(view)
            return None if _zero is None else (_zero, [reg_v(_u)])

        def predicate(view, _inner=inner):
            if view["r"] == 0:
                return True if (_inner is None or _inner.predicate is None) else _inner.predicate(view)
            return True

        accepts.append(
            NodeAccept(
                node=u,
                projector=projector,
                predicate=predicate,
                describe={"kind": "halved-accept", "node": u},
            )
        )

    out = ProtocolSpec(
        name=f"halved-sh[{spec.name}]",
        graph=spec.graph,
        layout=layout,
        turns=tuple(turns),
        verification=VerificationPhase(
            steps=tuple(steps),
            measurements=measurements,
            broadcasts=broadcasts,
            accepts=tuple(accepts),
        ),
        metadata=dict(spec.metadata, halved="shared"),
    )

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        if turn_index == 1:
            return snapshot
        return honest_gates[turn_index][view["r"]]

    report = CompileReport(
        transform="halve_turns_shared",
        input_turns=k,
        output_turns=out.num_turns,
        message_qubits_per_node=message_accounting(out),
        private_qubits_per_node=private_accounting(out),
        predicted_completeness=None if completeness is None else halved_completeness(float(completeness)),
        predicted_soundness=None if soundness is None else halved_soundness(float(soundness)),
    )
    if out.num_turns != 2 * ell + 1:
        raise ProtocolError("halved protocol has the wrong turn count")
    return Compiled(out, FunctionalStrategy(f"halved-sh[{honest.name}]", gate), report)


# ---------------------------------------------------------------------------
# Seven turns to five
# ---------------------------------------------------------------------------


def seven_to_five(
    spec: ProtocolSpec,
    honest: ProverStrategy,
    completeness: float | None = None,
    soundness: float | None = None,
) -> Compiled:
    """7-turn protocol -> 5-turn protocol with a leader coin and prover echo.

    Turn 1 delivers the private registers of the honest mid-state (the state
    after verifier turn 4); the leader flips b; the prover echoes one bit to
    every node and the branches simulate the tail forward (b=0, original
    verification) or the head backward (b=1, all-zero check on the private
    registers).  Neighbors cross-check the echoed bits and the leader checks
    its own echo against the coin, so a prover who answers inconsistently,
    or differently from the coin, is rejected outright.
    """
    _require_clean(spec)
    if spec.num_turns != 7:
        raise ShapeError(f"seven_to_five needs exactly 7 turns, got {spec.num_turns}")
    n = spec.graph.node_count
    leader = 0

    verifier_turns = {t.index: t for t in spec.turns if isinstance(t, VerifierTurn)}
    node_units = {idx: {u: _node_unit(spec, t, u) for u in range(n)} for idx, t in verifier_turns.items()}
    prover_gates = {
        t.index: np.asarray(honest.gate(t.index, {}), dtype=np.complex128)
        for t in spec.turns
        if isinstance(t, ProverTurn)
    }

    layout = _with_owners(spec.layout, {reg_v(u): PROVER for u in range(n)})
    psi4 = _prefix_unitary(spec, honest, upto=4)
    all_regs = tuple(spec.layout.names())
    echo_slots = tuple(ReplySlot(f"becho:{u}", 2, audience=(u,)) for u in range(n))
    leader_slots = tuple(ReplySlot(f"leader:{u}", n, audience=(u,)) for u in range(n))

    turns: list[ProverTurn | VerifierTurn] = [
        ProverTurn(
            index=1,
            acts_on=all_regs,
            delivers=tuple((reg_v(u), u) for u in range(n)),
            replies=leader_slots,
        ),
        VerifierTurn(index=2, coins=(CoinFlip("b", 2, owner=leader),)),
        ProverTurn(
            index=3,
            acts_on=_prover_regs(spec),
            delivers=tuple((reg_m(u), u) for u in range(n)),
            replies=echo_slots,
        ),
        VerifierTurn(
            index=4,
            steps=tuple(
                conditional_step(
                    u,
                    [f"becho:{u}"],
                    {
                        (0,): (node_units[6][u], _vm_regs(u)),
                        (1,): (node_units[4][u].conj().T, _vm_regs(u)),
                    },
                )
                for u in range(n)
            ),
            sends=_all_m(spec),
        ),
        ProverTurn(
            index=5,
            acts_on=_prover_regs(spec),
            delivers=tuple((reg_m(u), u) for u in range(n)),
        ),
    ]

    def fwd(u: int):
        return lambda view: view[f"becho:{u}"] == 0

    ver = spec.verification
    steps = [_when_step(fwd(s.actor), s) for s in ver.steps]
    for u in range(n):
        steps.append(
            conditional_step(
                u,
                [f"becho:{u}"],
                {(0,): None, (1,): (node_units[2][u].conj().T, _vm_regs(u))},
            )
        )
    measurements = tuple(_when_measurement(fwd(m.node), m) for m in ver.measurements)

    inner_broadcasts = {bc.node: bc for bc in ver.broadcasts}
    broadcasts = tuple(
        Broadcast(
            node=u,
            fn=lambda view, _u=u: {
                "becho": view[f"becho:{_u}"],
                "leader": view[f"leader:{_u}"],
                "inner": (
                    inner_broadcasts[_u].fn(view)
                    if _u in inner_broadcasts and view[f"becho:{_u}"] == 0
                    else None
                ),
            },
            describe={"kind": "echo-bundle", "node": u},
        )
        for u in range(n)
    )

    inner_accepts = {a.node: a for a in ver.accepts}
    accepts = []
    for u in range(n):
        inner = inner_accepts.get(u)
        g_u = spec.layout.size(reg_v(u)) if spec.layout.has(reg_v(u)) else 0
        zero_proj = _zero_projector(g_u) if g_u else None

        def predicate(view, _u=u, _inner=inner):
            mine = view[f"becho:{_u}"]
            for v in spec.graph.neighbors(_u):
                got = view[f"recv:{v}"]
                if got["becho"] != mine or got["leader"] != view[f"leader:{_u}"]:
                    return False
            if _u == leader and (view[f"becho:{_u}"] != view["b"] or view[f"leader:{_u}"] != leader):
                return False
            if mine == 1:
                return True
            if _inner is None or _inner.predicate is None:
                return True
            translated = dict(view)
            for v in spec.graph.neighbors(_u):
                translated[f"recv:{v}"] = view[f"recv:{v}"]["inner"]
            return _inner.predicate(translated)

        def projector(view, _u=u, _inner=inner, _zero=zero_proj):
            if view[f"becho:{_u}"] == 0:
                return None if (_inner is None or _inner.projector is None) else _inner.projector(view)
            return None if _zero is None else (_zero, [reg_v(_u)])

        accepts.append(
            NodeAccept(node=u, projector=projector, predicate=predicate,
                       describe={"kind": "seven-to-five-accept", "node": u})
        )

    out = ProtocolSpec(
        name=f"5turn[{spec.name}]",
        graph=spec.graph,
        layout=layout,
        turns=tuple(turns),
        verification=VerificationPhase(
            steps=tuple(steps),
            measurements=measurements,
            broadcasts=broadcasts,
            accepts=tuple(accepts),
        ),
        metadata=dict(spec.metadata, reduced="7to5"),
    )

    identity_pm = np.eye(2 ** len(_expand_registers(spec.layout, _prover_regs(spec))), dtype=np.complex128)

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        if turn_index == 1:
            return psi4
        if turn_index == 3:
            return prover_gates[5] if view["b"] == 0 else identity_pm
        if turn_index == 5:
            return prover_gates[7] if view["b"] == 0 else prover_gates[3].conj().T
        raise ProtocolError(f"unexpected prover turn {turn_index}")

    def reply(slot_name: str, view: Mapping) -> int:
        if slot_name.startswith("becho:"):
            return view["b"]
        if slot_name.startswith("leader:"):
            return leader
        raise ProtocolError(f"unexpected reply slot {slot_name}")

    report = CompileReport(
        transform="seven_to_five",
        input_turns=7,
        output_turns=out.num_turns,
        message_qubits_per_node=message_accounting(out),
        private_qubits_per_node=private_accounting(out),
        predicted_completeness=None if completeness is None else halved_completeness(float(completeness)),
        predicted_soundness=None if soundness is None else halved_soundness(float(soundness)),
    )
    if out.num_turns != 5:
        raise ProtocolError("seven_to_five produced the wrong turn count")
    return Compiled(out, FunctionalStrategy(f"5turn[{honest.name}]", gate, reply), report)


# ---------------------------------------------------------------------------
# Turn halving with private randomness
# ---------------------------------------------------------------------------


def _two_branch_controlled(mat0: np.ndarray, mat1: np.ndarray) -> np.ndarray:
    """Block gate selecting ``mat0``/``mat1`` by the control (gate qubit 0)."""
    dim = mat0.shape[0]
    out = np.zeros((2 * dim, 2 * dim), dtype=np.complex128)
    for c, mat in ((0, mat0), (1, mat1)):
        idx = [2 * j + c for j in range(dim)]
        out[np.ix_(idx, idx)] = mat
    return out


def coin_reg(u: int) -> str:
    return f"C:{u}"


def halve_turns_private(
    spec: ProtocolSpec,
    honest: ProverStrategy,
    completeness: float | None = None,
    soundness: float | None = None,
) -> Compiled:
    """(4l+1)-turn protocol -> (2l+3)-turn protocol with private coins only.

    The shared coin of the halved protocol is replaced by a root Bell pair
    fanned out by the prover into (|0^n> + |1^n>)/sqrt(2): the root keeps one
    half, the prover keeps a copy, every other node receives one qubit.  The
    verification measures each node's coin qubit, cross-checks the value with
    every neighbor, verifies prover-supplied spanning-tree labels, and then
    branches forward/backward exactly as in the shared-coin construction.
    """
    _require_clean(spec)
    k = spec.num_turns
    if k < 5 or k % 4 != 1:
        raise ShapeError(f"turn count {k} is not of the form 4l+1 with l >= 1")
    ell = (k - 1) // 4
    n = spec.graph.node_count
    root = 0
    tree = spanning_tree(spec.graph, root)
    none_parent = n  # parent encoding: 0..n-1 real, n = "no parent"

    verifier_turns = {t.index: t for t in spec.turns if isinstance(t, VerifierTurn)}
    node_units = {idx: {u: _node_unit(spec, t, u) for u in range(n)} for idx, t in verifier_turns.items()}
    prover_gates = {
        t.index: np.asarray(honest.gate(t.index, {}), dtype=np.complex128)
        for t in spec.turns
        if isinstance(t, ProverTurn)
    }

    p_size = spec.layout.size("P") if spec.layout.has("P") else 0
    extras = [(coin_reg(u), 1, root if u == root else PROVER) for u in range(n)]
    extras.append(("CP", 1, root))
    layout = allocate_layout(
        spec.graph,
        prover_qubits=p_size,
        node_private={u: spec.layout.size(reg_v(u)) if spec.layout.has(reg_v(u)) else 0 for u in range(n)},
        node_message={u: spec.layout.size(reg_m(u)) for u in range(n)},
        extras=extras,
    )
    layout = _with_owners(layout, {reg_v(u): PROVER for u in range(n)})

    # The snapshot acts on the (P, V, M) qubits listed in input-layout order,
    # so the full-space prefix unitary of the input is directly reusable.
    snapshot = _prefix_unitary(spec, honest, upto=2 * ell + 2)
    tree_slots = tuple(
        slot
        for u in range(n)
        for slot in (
            ReplySlot(f"leader:{u}", n, audience=(u,)),
            ReplySlot(f"parent:{u}", n + 1, audience=(u,)),
            ReplySlot(f"dist:{u}", n, audience=(u,)),
        )
    )

    pvm_regs = tuple(spec.layout.names())  # input-layout order = snapshot qubit order
    fanout_regs = ("CP",) + tuple(coin_reg(u) for u in range(n) if u != root)
    turns: list[ProverTurn | VerifierTurn] = [
        ProverTurn(
            index=1,
            acts_on=pvm_regs,
            delivers=tuple((reg_v(u), u) for u in range(n)) + tuple((reg_m(u), u) for u in range(n)),
            replies=tree_slots,
        ),
        VerifierTurn(
            index=2,
            steps=(
                static_step(root, qcore.H.matrix, [coin_reg(root)]),
                static_step(root, qcore.CNOT.matrix, [coin_reg(root), "CP"]),
            ),
            sends=("CP",),
        ),
        ProverTurn(
            index=3,
            acts_on=(("P",) if p_size else ()) + fanout_regs,
            delivers=tuple((coin_reg(u), u) for u in range(n) if u != root),
        ),
    ]

    honest_gates: dict[int, dict[int, np.ndarray]] = {}
    fan_dim = 2 ** (p_size + len(fanout_regs))
    fanout = np.eye(fan_dim, dtype=np.complex128)
    for offset in range(1, n):  # CP at position p_size, fan-out targets follow
        fanout = qcore.embed_operator(
            qcore.CNOT.matrix, [p_size, p_size + offset], p_size + len(fanout_regs)
        ) @ fanout

    for idx in range(4, 2 * ell + 4):
        shared_idx = idx - 2  # mirrors the shared construction's turn index
        if shared_idx % 2 == 0:
            j = (shared_idx - 2) // 2
            steps = []
            for u in range(n):
                if shared_idx == 2:
                    fwd_mat = np.eye(node_units[2 * ell + 2][u].shape[0], dtype=np.complex128)
                    bwd_mat = node_units[2 * ell + 2][u].conj().T
                else:
                    fwd_mat = node_units[2 * ell + 2 * j + 2][u]
                    bwd_mat = node_units[2 * ell - 2 * j + 2][u].conj().T
                steps.append(
                    static_step(
                        u,
                        _two_branch_controlled(fwd_mat, bwd_mat),
                        [coin_reg(u)] + _vm_regs(u),
                    )
                )
            turns.append(VerifierTurn(index=idx, steps=tuple(steps), sends=_all_m(spec)))
        else:
            j = (shared_idx - 1) // 2
            turns.append(
                ProverTurn(
                    index=idx,
                    acts_on=("CP",) + _prover_regs(spec),
                    delivers=tuple((reg_m(u), u) for u in range(n)),
                )
            )
            honest_gates[idx] = {
                0: prover_gates[2 * ell + 2 * j + 1],
                1: prover_gates[2 * ell - 2 * j + 3].conj().T,
            }

    # Verification: measure each coin qubit, then branch classically.
    coin_measurements = tuple(
        Measurement(
            name=f"coin:{u}",
            node=u,
            resolve_targets=lambda view, _r=coin_reg(u): [_r],
            describe={"kind": "coin-measurement", "node": u},
        )
        for u in range(n)
    )

    def fwd(u: int):
        return lambda view: view[f"coin:{u}"] == 0

    ver = spec.verification
    # Steps run before measurements, so branch on the coin QUBIT coherently.
    steps = []
    for s in ver.steps:
        u = s.actor
        resolved = s.resolve({})
        if resolved is None:
            continue
        mat, regs = resolved
        union = _expand_registers(spec.layout, _vm_regs(u))
        qubits = _expand_registers(spec.layout, regs)
        positions = [union.index(q) for q in qubits]
        lifted_mat = qcore.embed_operator(np.asarray(mat, dtype=np.complex128), positions, len(union))
        steps.append(
            static_step(
                u,
                _two_branch_controlled(lifted_mat, np.eye(lifted_mat.shape[0], dtype=np.complex128)),
                [coin_reg(u)] + _vm_regs(u),
            )
        )
    for u in range(n):
        steps.append(
            static_step(
                u,
                _two_branch_controlled(
                    np.eye(node_units[2][u].shape[0], dtype=np.complex128),
                    node_units[2][u].conj().T,
                ),
                [coin_reg(u)] + _vm_regs(u),
            )
        )

    measurements = coin_measurements + tuple(_when_measurement(fwd(m.node), m) for m in ver.measurements)

    inner_broadcasts = {bc.node: bc for bc in ver.broadcasts}
    broadcasts = tuple(
        Broadcast(
            node=u,
            fn=lambda view, _u=u: {
                "coin": view[f"coin:{_u}"],
                "leader": view[f"leader:{_u}"],
                "parent": view[f"parent:{_u}"],
                "dist": view[f"dist:{_u}"],
                "inner": (
                    inner_broadcasts[_u].fn(view)
                    if _u in inner_broadcasts and view[f"coin:{_u}"] == 0
                    else None
                ),
            },
            describe={"kind": "coin-bundle", "node": u},
        )
        for u in range(n)
    )

    inner_accepts = {a.node: a for a in ver.accepts}
    accepts = []
    for u in range(n):
        inner = inner_accepts.get(u)
        g_u = spec.layout.size(reg_v(u)) if spec.layout.has(reg_v(u)) else 0
        zero_proj = _zero_projector(g_u) if g_u else None

        def predicate(view, _u=u, _inner=inner):
            mine = view[f"coin:{_u}"]
            my_leader = view[f"leader:{_u}"]
            my_parent = view[f"parent:{_u}"]
            my_dist = view[f"dist:{_u}"]
            received = {v: view[f"recv:{v}"] for v in spec.graph.neighbors(_u)}
            for got in received.values():
                if got["coin"] != mine or got["leader"] != my_leader:
                    return False
            if _u == root and my_leader != root:
                return False
            # Local spanning-tree label checks against the parent's distance.
            if my_leader == _u:
                if my_parent != none_parent or my_dist != 0:
                    return False
            else:
                if my_parent not in received or received[my_parent]["dist"] + 1 != my_dist:
                    return False
            if mine == 1:
                return True
            if _inner is None or _inner.predicate is None:
                return True
            translated = dict(view)
            for v in received:
                translated[f"recv:{v}"] = received[v]["inner"]
            return _inner.predicate(translated)

        def projector(view, _u=u, _inner=inner, _zero=zero_proj):
            if view[f"coin:{_u}"] == 0:
                return None if (_inner is None or _inner.projector is None) else _inner.projector(view)
            return None if _zero is None else (_zero, [reg_v(_u)])

        accepts.append(
            NodeAccept(node=u, projector=projector, predicate=predicate,
                       describe={"kind": "private-halved-accept", "node": u})
        )

    out = ProtocolSpec(
        name=f"halved-p[{spec.name}]",
        graph=spec.graph,
        layout=layout,
        turns=tuple(turns),
        verification=VerificationPhase(
            steps=tuple(steps),
            measurements=measurements,
            broadcasts=broadcasts,
            accepts=tuple(accepts),
        ),
        metadata=dict(spec.metadata, halved="private"),
    )

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        if turn_index == 1:
            return snapshot
        if turn_index == 3:
            return fanout
        mats = honest_gates[turn_index]
        return _two_branch_controlled(mats[0], mats[1])

    def reply(slot_name: str, view: Mapping) -> int:
        kind, _, u = slot_name.partition(":")
        u = int(u)
        if kind == "leader":
            return root
        if kind == "parent":
            return none_parent if tree.parent[u] is None else tree.parent[u]
        if kind == "dist":
            return tree.distance[u]
        raise ProtocolError(f"unexpected reply slot {slot_name}")

    report = CompileReport(
        transform="halve_turns_private",
        input_turns=k,
        output_turns=out.num_turns,
        message_qubits_per_node=message_accounting(out),
        private_qubits_per_node=private_accounting(out),
        predicted_completeness=None if completeness is None else halved_completeness(float(completeness)),
        predicted_soundness=None if soundness is None else halved_soundness(float(soundness)),
    )
    if out.num_turns != 2 * ell + 3:
        raise ProtocolError("private halving produced the wrong turn count")
    return Compiled(out, FunctionalStrategy(f"halved-p[{honest.name}]", gate, reply), report)


# ---------------------------------------------------------------------------
# Perfect completeness
# ---------------------------------------------------------------------------


def _require_coherent(spec: ProtocolSpec) -> None:
    """Perfect-completeness inputs: one coherent branch, canonical accepts."""
    _require_clean(spec)
    for turn in spec.turns:
        if isinstance(turn, VerifierTurn) and (turn.coins or turn.measurements or turn.checks):
            raise ShapeError("perfect completeness needs a protocol without classical events")
    ver = spec.verification
    if ver.measurements or ver.checks or ver.broadcasts:
        raise ShapeError("perfect completeness needs a coherent verification phase")
    for accept in ver.accepts:
        if accept.describe.get("kind") != "first-qubit-zero":
            raise ShapeError("perfect completeness needs first-V-qubit accept projectors")


def _basis_completion(vectors: Sequence[np.ndarray], dim: int) -> np.ndarray:
    """Unitary whose first columns are the given orthonormal vectors."""
    cols = [np.asarray(v, dtype=np.complex128) for v in vectors]
    for i in range(dim):
        if len(cols) == dim:
            break
        e = np.zeros(dim, dtype=np.complex128)
        e[i] = 1.0
        w = e - sum(c * np.vdot(c, e) for c in cols)
        norm = np.linalg.norm(w)
        if norm > 1e-7:
            cols.append(w / norm)
    return np.column_stack(cols)


def _or_fanout_permutation(p_total: int, p_in: int, n: int) -> np.ndarray:
    """Permutation on (P, out): write OR(out) into every out qubit.

    The input patterns with zeroed ancilla map as (x, 0) -> (OR^n, x) with
    x itself stored in the ancilla as the disambiguating junk; everything
    else is completed greedily into an arbitrary bijection.
    """
    anc_base = p_in  # ancilla qubits live at P[p_in .. p_in + n)
    total_bits = p_total + n
    dim = 2**total_bits
    out_base = p_total
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def build(x: int, anc: int, rest: int) -> int:
        return rest | (anc << anc_base) | (x << out_base)

    for idx in range(dim):
        x = (idx >> out_base) & ((1 << n) - 1)
        anc = (idx >> anc_base) & ((1 << n) - 1)
        rest = idx & ~(((1 << n) - 1) << anc_base) & ~(((1 << n) - 1) << out_base)
        if anc == 0:
            target = build(0, 0, rest) if x == 0 else build((1 << n) - 1, x, rest)
            mapping[idx] = target
            used.add(target)
    free_targets = iter(t for t in range(dim) if t not in used)
    perm = np.zeros((dim, dim), dtype=np.complex128)
    for idx in range(dim):
        target = mapping.get(idx)
        if target is None:
            target = next(free_targets)
        perm[target, idx] = 1.0
    return perm


def perfect_completeness(
    spec: ProtocolSpec,
    honest: ProverStrategy,
    c: float | None = None,
    soundness: float | None = None,
) -> Compiled:
    """Append four turns that rotate the honest accept amplitude onto |0>.

    The original protocol runs coherently; each node copies its output qubit
    into a fresh register and round-trips it through the prover, who returns
    the global verdict to every node.  Nodes verify the returned verdicts
    agree across edges and never contradict their own retained output; the
    leader counts the verdict into two marker qubits, hands one to the
    prover along with everything else, and finally interferes the returned
    marker against the retained one through the acceptance rotation with
    parameter ``c``.  With c equal to the honest acceptance the |0> outcome
    has probability exactly 1.
    """
    _require_coherent(spec)
    if c is None:
        from .protocol import execute_exact

        c = execute_exact(spec, honest).acceptance_probability
    c = float(c)
    if not 0.0 < c <= 1.0:
        raise ValidationError(f"completeness parameter {c!r} outside (0, 1]")

    k = spec.num_turns
    n = spec.graph.node_count
    leader = 0
    p_in = spec.layout.size("P") if spec.layout.has("P") else 0
    p_total = p_in + n  # ancilla workspace for the verdict fan-out

    extras = [(f"out:{u}", 1, u) for u in range(n)] + [("B", 1, leader), ("B2", 1, leader)]
    layout = allocate_layout(
        spec.graph,
        prover_qubits=p_total,
        node_private={u: spec.layout.size(reg_v(u)) for u in range(n)},
        node_message={u: spec.layout.size(reg_m(u)) if spec.layout.has(reg_m(u)) else 0 for u in range(n)},
        extras=extras,
    )

    def remap_acts(acts):
        out = []
        for name in acts:
            if name == "P":
                out.extend(f"P[{i}]" for i in range(p_in))
            else:
                out.append(name)
        return tuple(out)

    turns: list[ProverTurn | VerifierTurn] = []
    for turn in spec.turns:
        if isinstance(turn, ProverTurn):
            turns.append(
                ProverTurn(index=turn.index, acts_on=remap_acts(turn.acts_on), delivers=turn.delivers)
            )
        else:
            turns.append(turn)

    out_regs = tuple(f"out:{u}" for u in range(n))
    copy_steps = tuple(
        static_step(u, qcore.CNOT.matrix, [f"V:{u}[0]", f"out:{u}"]) for u in range(n)
    )
    turns.append(
        VerifierTurn(
            index=k + 1,
            steps=tuple(spec.verification.steps) + copy_steps,
            sends=out_regs,
        )
    )

    or_gate = _or_fanout_permutation(p_total, p_in, n)
    turns.append(
        ProverTurn(
            index=k + 2,
            acts_on=("P",) + out_regs,
            delivers=tuple((f"out:{u}", u) for u in range(n)),
        )
    )

    parity_odd = np.diag([0.0, 1.0, 1.0, 0.0]).astype(np.complex128)
    bad_state = np.zeros((4, 4), dtype=np.complex128)
    bad_state[1, 1] = 1.0  # retained output 1 while returned verdict reads 0
    checks = tuple(
        ProjectiveCheck(
            name=f"parity:{a}:{b}",
            nodes=(a, b),
            resolve=lambda view, _a=a, _b=b: (parity_odd, [f"out:{_a}", f"out:{_b}"]),
            describe={"kind": "verdict-parity", "edge": [a, b]},
        )
        for a, b in sorted(spec.graph.edges)
    ) + tuple(
        ProjectiveCheck(
            name=f"bad:{u}",
            nodes=(u,),
            resolve=lambda view, _u=u: (bad_state, [f"V:{_u}[0]", f"out:{_u}"]),
            describe={"kind": "verdict-contradiction", "node": u},
        )
        for u in range(n)
    )
    hand_over = tuple(reg_v(u) for u in range(n)) + tuple(
        reg_m(u) for u in range(n) if layout.has(reg_m(u))
    ) + out_regs + ("B",)
    turns.append(
        VerifierTurn(
            index=k + 3,
            steps=(
                static_step(leader, qcore.CNOT.matrix, ["out:0", "B"]),
                static_step(leader, qcore.CNOT.matrix, ["out:0", "B2"]),
            ),
            checks=checks,
            sends=hand_over,
        )
    )

    held_regs = tuple(name for name in layout.names() if name != "B2")
    turns.append(ProverTurn(index=k + 4, acts_on=held_regs, delivers=(("B", leader),)))

    accept_pair = np.zeros((4, 4), dtype=np.complex128)
    accept_pair[0, 0] = 1.0
    accepts = []
    for u in range(n):
        def predicate(view, _u=u):
            for a, b in sorted(spec.graph.edges):
                if _u in (a, b) and view.get(f"parity:{a}:{b}", 0) != 0:
                    return False
            return view.get(f"bad:{_u}", 0) == 0

        projector = None
        if u == leader:
            def projector(view):  # noqa: F811 - leader-only closure
                return accept_pair, ["B", "B2"]

        accepts.append(
            NodeAccept(node=u, projector=projector, predicate=predicate,
                       describe={"kind": "perfected-accept", "node": u})
        )

    out = ProtocolSpec(
        name=f"perfect[{spec.name}]",
        graph=spec.graph,
        layout=layout,
        turns=tuple(turns),
        verification=VerificationPhase(
            steps=(
                static_step(leader, qcore.CNOT.matrix, ["B", "B2"]),
                static_step(leader, qcore.acceptance_rotation(c).matrix, ["B"]),
            ),
            accepts=tuple(accepts),
        ),
        allow_node_exchange=True,
        metadata=dict(spec.metadata, perfected_with_c=c),
        initial_factors=spec.initial_factors,
    )

    # Honest re-coherence gate: replay the first k+3 turns and map the two
    # verdict branches onto the all-zero state tagged by the marker B.
    uncompute = _uncompute_gate(out, honest, k, held_regs)

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        if turn_index <= k:
            return honest.gate(turn_index, view)
        if turn_index == k + 2:
            return or_gate
        if turn_index == k + 4:
            return uncompute
        raise ProtocolError(f"unexpected prover turn {turn_index}")

    delta = None if soundness is None else c - float(soundness)
    report = CompileReport(
        transform="perfect_completeness",
        input_turns=k,
        output_turns=out.num_turns,
        message_qubits_per_node=message_accounting(out),
        private_qubits_per_node=private_accounting(out),
        predicted_completeness=1.0,
        predicted_soundness=None if delta is None else 1 - delta**2,
    )
    if out.num_turns != k + 4:
        raise ProtocolError("perfect completeness produced the wrong turn count")
    return Compiled(out, FunctionalStrategy(f"perfect[{honest.name}]", gate), report)


def _uncompute_gate(out_spec: ProtocolSpec, honest: ProverStrategy, k: int, held_regs) -> np.ndarray:
    partial = ProtocolSpec(
        name="partial",
        graph=out_spec.graph,
        layout=out_spec.layout,
        turns=out_spec.turns[:-1],
        verification=VerificationPhase(),
        allow_node_exchange=True,
        initial_factors=out_spec.initial_factors,
    )

    or_gate_holder = {}

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        if turn_index <= k:
            return honest.gate(turn_index, view)
        return or_gate_holder["gate"]

    # The k+2 gate is the OR fan-out; reconstruct it from the spec's sizes.
    p_total = out_spec.layout.size("P")
    n = out_spec.graph.node_count
    or_gate_holder["gate"] = _or_fanout_permutation(p_total, p_total - n, n)

    executor = _Executor(partial, FunctionalStrategy("replay", gate))
    branches = executor.run_interaction()
    live = [b for b in branches if float(np.vdot(b.vec, b.vec).real) > 1e-18]
    if len(live) != 1:
        raise ProtocolError(f"honest replay produced {len(live)} live branches, expected 1")
    vec = live[0].vec

    held = _expand_registers(out_spec.layout, list(held_regs))
    q2 = out_spec.layout.qubits("B2")[0]
    block = qcore._keep_block(vec, held)  # columns indexed by the B2 bit
    dim = block.shape[0]
    pos_b = held.index(out_spec.layout.qubits("B")[0])

    sources, targets = [], []
    for b in range(2):
        phi = block[:, b]
        norm = np.linalg.norm(phi)
        if norm < 1e-9:
            continue
        sources.append(phi / norm)
        target = np.zeros(dim, dtype=np.complex128)
        target[b << pos_b] = 1.0
        targets.append(target)
    a_mat = _basis_completion(sources, dim)
    t_mat = _basis_completion(targets, dim)
    return t_mat @ a_mat.conj().T


# ---------------------------------------------------------------------------
# Parallel repetition
# ---------------------------------------------------------------------------


def _suffixed(name: str, i: int) -> str:
    if "[" in name:
        base, idx = name.split("[")
        return f"{base}:r{i}[{idx}"
    return f"{name}:r{i}"


def parallel_repeat(spec: ProtocolSpec, honest: ProverStrategy, t: int, mode: str = "AND") -> Compiled:
    """Run ``t`` tensor copies sharing one prover register.

    AND mode accepts iff every copy accepts (projectors compose, coherently);
    majority mode measures each copy's accept condition and each node takes
    the majority of its own per-copy outcomes.
    """
    _require_clean(spec)
    if t < 1:
        raise ValidationError("parallel_repeat needs t >= 1")
    if mode not in ("AND", "majority"):
        raise ValidationError(f"unknown repetition mode {mode!r}")
    n = spec.graph.node_count
    p_in = spec.layout.size("P") if spec.layout.has("P") else 0

    extras = []
    for i in range(t):
        for u in range(n):
            if spec.layout.has(reg_v(u)):
                extras.append((_suffixed(reg_v(u), i), spec.layout.size(reg_v(u)), u))
            if spec.layout.has(reg_m(u)):
                extras.append((_suffixed(reg_m(u), i), spec.layout.size(reg_m(u)), PROVER))
    layout = allocate_layout(spec.graph, prover_qubits=p_in * t, extras=extras)

    def rename_regs(regs: Sequence[str], i: int) -> list[str]:
        return [_suffixed(r, i) for r in regs]

    def translate(view: Mapping, i: int) -> dict:
        suffix = f":r{i}"
        out = {}
        for key, val in view.items():
            if key.startswith("recv:"):
                out[key] = None if val is None else val[i]
            elif key.endswith(suffix):
                out[key[: -len(suffix)]] = val
        return out

    def rename_step(step: Step, i: int) -> Step:
        def resolve(view, _i=i, _inner=step.resolve):
            resolved = _inner(translate(view, _i))
            if resolved is None:
                return None
            mat, regs = resolved
            return mat, rename_regs(regs, _i)

        return Step(step.actor, resolve, {"kind": "copy", "copy": i, "inner": step.describe})

    turns: list[ProverTurn | VerifierTurn] = []
    prover_acts: dict[int, tuple] = {}
    for turn in spec.turns:
        if isinstance(turn, ProverTurn):
            acts = (("P",) if p_in else ()) + tuple(
                _suffixed(r, i) for i in range(t) for r in turn.acts_on if r != "P"
            )
            delivers = tuple(
                (_suffixed(r, i), node) for i in range(t) for r, node in turn.delivers
            )
            prover_acts[turn.index] = tuple(turn.acts_on)
            turns.append(ProverTurn(index=turn.index, acts_on=acts, delivers=delivers))
        else:
            steps = tuple(rename_step(s, i) for i in range(t) for s in turn.steps)
            sends = tuple(_suffixed(r, i) for i in range(t) for r in turn.sends)
            turns.append(VerifierTurn(index=turn.index, steps=steps, sends=sends))

    ver = spec.verification
    steps = tuple(rename_step(s, i) for i in range(t) for s in ver.steps)
    measurements = tuple(
        Measurement(
            name=f"{m.name}:r{i}",
            node=m.node,
            resolve_targets=lambda view, _m=m, _i=i: rename_regs(_m.resolve_targets(translate(view, _i)), _i),
            to_prover=m.to_prover,
            describe={"kind": "copy", "copy": i, "inner": m.describe},
        )
        for i in range(t)
        for m in ver.measurements
    )
    inner_bc = {bc.node: bc for bc in ver.broadcasts}
    broadcasts = tuple(
        Broadcast(
            node=u,
            fn=lambda view, _u=u: tuple(inner_bc[_u].fn(translate(view, i)) for i in range(t)),
            describe={"kind": "copy-bundle", "node": u},
        )
        for u in sorted(inner_bc)
    )

    inner_accepts = {a.node: a for a in ver.accepts}
    accepts = []
    checks: list[ProjectiveCheck] = []

    def copy_projector(u: int, i: int, view: Mapping):
        inner = inner_accepts[u]
        if inner.projector is None:
            return None
        resolved = inner.projector(translate(view, i))
        if resolved is None:
            return None
        mat, regs = resolved
        return mat, rename_regs(regs, i)

    if mode == "AND":
        for u in sorted(inner_accepts):
            def projector(view, _u=u):
                parts = [copy_projector(_u, i, view) for i in range(t)]
                parts = [p for p in parts if p is not None]
                if not parts:
                    return None
                union: list[str] = []
                for _, regs in parts:
                    union.extend(regs)
                qubits = _expand_registers(layout, union)
                mat = np.eye(2 ** len(qubits), dtype=np.complex128)
                for part_mat, part_regs in parts:
                    part_qubits = _expand_registers(layout, part_regs)
                    positions = [qubits.index(q) for q in part_qubits]
                    mat = qcore.embed_operator(np.asarray(part_mat), positions, len(qubits)) @ mat
                return mat, union

            def predicate(view, _u=u):
                inner = inner_accepts[_u]
                if inner.predicate is None:
                    return True
                return all(inner.predicate(translate(view, i)) for i in range(t))

            accepts.append(NodeAccept(node=u, projector=projector, predicate=predicate,
                                      describe={"kind": "and-accept", "node": u}))
    else:
        for u in sorted(inner_accepts):
            inner = inner_accepts[u]
            if inner.projector is not None:
                for i in range(t):
                    checks.append(
                        ProjectiveCheck(
                            name=f"acc:{u}:r{i}",
                            nodes=(u,),
                            resolve=lambda view, _u=u, _i=i: copy_projector(_u, _i, view),
                            describe={"kind": "copy-accept", "node": u, "copy": i},
                        )
                    )

            def predicate(view, _u=u, _inner=inner):
                good = 0
                for i in range(t):
                    ok = view.get(f"acc:{_u}:r{i}", 1) == 1
                    if ok and _inner.predicate is not None:
                        ok = _inner.predicate(translate(view, i))
                    good += 1 if ok else 0
                return good > t / 2

            accepts.append(NodeAccept(node=u, projector=None, predicate=predicate,
                                      describe={"kind": "majority-accept", "node": u}))

    out = ProtocolSpec(
        name=f"repeat{t}-{mode}[{spec.name}]",
        graph=spec.graph,
        layout=layout,
        turns=tuple(turns),
        verification=VerificationPhase(
            steps=steps,
            measurements=measurements,
            checks=tuple(checks),
            broadcasts=broadcasts,
            accepts=tuple(accepts),
        ),
        metadata=dict(spec.metadata, repeated=t, repeat_mode=mode),
    )

    def gate(turn_index: int, view: Mapping) -> np.ndarray:
        inner_acts = prover_acts[turn_index]
        acts = (("P",) if p_in else ()) + tuple(
            _suffixed(r, i) for i in range(t) for r in inner_acts if r != "P"
        )
        qubits = _expand_registers(layout, list(acts))
        if len(qubits) > 14:
            raise ValidationError("parallel honest gate would exceed the dense-matrix budget")
        per_copy_m = sum(spec.layout.size(r) for r in inner_acts if r != "P")
        inner_gate = np.asarray(honest.gate(turn_index, view), dtype=np.complex128)
        total = np.eye(2 ** len(qubits), dtype=np.complex128)
        for i in range(t):
            positions = list(range(i * p_in, (i + 1) * p_in)) if p_in else []
            offset = p_in * t + i * per_copy_m
            positions += list(range(offset, offset + per_copy_m))
            total = qcore.embed_operator(inner_gate, positions, len(qubits)) @ total
        return total

    report = CompileReport(
        transform="parallel_repeat",
        input_turns=spec.num_turns,
        output_turns=out.num_turns,
        message_qubits_per_node=message_accounting(out),
        private_qubits_per_node=private_accounting(out),
    )
    return Compiled(out, FunctionalStrategy(f"repeat[{honest.name}]", gate), report)


# ---------------------------------------------------------------------------
# Bell-pair materialization of coin flips
# ---------------------------------------------------------------------------


def materialize_coins(spec: ProtocolSpec):
    """Replace a node-private binary coin flip by a kept/sent Bell pair.

    The flipping node builds (|00> + |11>)/sqrt(2) across a kept qubit and a
    message qubit sent to the prover; its own coin-conditioned gates become
    quantum-controlled on the kept half, later prover gates become controlled
    on the sent half, and the verification measures the kept half so accept
    conditions read the same classical variable as before.  Returns the
    rewritten spec plus a strategy wrapper for provers written against the
    original spec.
    """
    coins = [
        (turn, coin)
        for turn in spec.turns
        if isinstance(turn, VerifierTurn)
        for coin in turn.coins
    ]
    if len(coins) != 1:
        raise ShapeError("coin materialization supports exactly one coin flip")
    coin_turn, coin = coins[0]
    if coin.owner is None or coin.num_values != 2:
        raise ShapeError("only single-node binary coins can be materialized")
    for turn in spec.turns:
        if isinstance(turn, ProverTurn) and turn.replies:
            raise ShapeError("coin materialization does not support classical replies")
        if isinstance(turn, VerifierTurn) and (turn.measurements or turn.checks):
            raise ShapeError("coin materialization needs measurement-free interaction turns")
    owner, name = coin.owner, coin.name
    n = spec.graph.node_count

    layout = allocate_layout(
        spec.graph,
        prover_qubits=spec.layout.size("P") if spec.layout.has("P") else 0,
        node_private={u: spec.layout.size(reg_v(u)) if spec.layout.has(reg_v(u)) else 0 for u in range(n)},
        node_message={u: spec.layout.size(reg_m(u)) if spec.layout.has(reg_m(u)) else 0 for u in range(n)},
        extras=[("CK", 1, owner), ("CS", 1, owner)],
    )

    def lift_step(step: Step) -> Step:
        def resolve(view):
            r0 = step.resolve({**view, name: 0})
            r1 = step.resolve({**view, name: 1})
            if _resolved_equal(r0, r1):
                return r0
            if step.actor != owner:
                raise ProtocolError("only the coin owner's gates may depend on a materialized coin")
            return _controlled_pair(layout, r0, r1)

        return Step(step.actor, resolve, {"kind": "coin-lifted", "inner": step.describe})

    def _resolved_equal(r0, r1) -> bool:
        if r0 is None and r1 is None:
            return True
        if (r0 is None) != (r1 is None):
            return False
        return list(r0[1]) == list(r1[1]) and np.array_equal(np.asarray(r0[0]), np.asarray(r1[0]))

    def _controlled_pair(lay, r0, r1):
        union: list[str] = []
        for resolved in (r0, r1):
            if resolved is not None:
                for reg in resolved[1]:
                    if reg not in union:
                        union.append(reg)
        qubits = _expand_registers(lay, union)
        mats = []
        for resolved in (r0, r1):
            if resolved is None:
                mats.append(np.eye(2 ** len(qubits), dtype=np.complex128))
                continue
            mat, regs = resolved
            positions = [qubits.index(q) for q in _expand_registers(lay, regs)]
            mats.append(qcore.embed_operator(np.asarray(mat, dtype=np.complex128), positions, len(qubits)))
        return _two_branch_controlled(mats[0], mats[1]), ["CK"] + union

    turns: list[ProverTurn | VerifierTurn] = []
    after_coin = False
    for turn in spec.turns:
        if isinstance(turn, ProverTurn):
            acts = (("CS",) + tuple(turn.acts_on)) if after_coin else turn.acts_on
            turns.append(ProverTurn(index=turn.index, acts_on=acts, delivers=turn.delivers))
        elif turn.index == coin_turn.index:
            after_coin = True
            bell = (
                static_step(owner, qcore.H.matrix, ["CK"]),
                static_step(owner, qcore.CNOT.matrix, ["CK", "CS"]),
            )
            turns.append(
                VerifierTurn(
                    index=turn.index,
                    steps=bell + tuple(lift_step(s) for s in turn.steps),
                    sends=tuple(turn.sends) + ("CS",),
                )
            )
        else:
            turns.append(
                VerifierTurn(
                    index=turn.index,
                    steps=tuple(lift_step(s) for s in turn.steps),
                    sends=turn.sends,
                )
            )

    ver = spec.verification
    coin_measure = Measurement(
        name=name,
        node=owner,
        resolve_targets=lambda view: ["CK"],
        describe={"kind": "materialized-coin", "coin": name},
    )
    out = ProtocolSpec(
        name=f"bell[{spec.name}]",
        graph=spec.graph,
        layout=layout,
        turns=tuple(turns),
        verification=VerificationPhase(
            steps=tuple(lift_step(s) for s in ver.steps),
            w_swap=ver.w_swap,
            measurements=(coin_measure,) + tuple(ver.measurements),
            checks=ver.checks,
            broadcasts=ver.broadcasts,
            accepts=ver.accepts,
        ),
        allow_node_exchange=spec.allow_node_exchange,
        initial_factors=spec.initial_factors,
        metadata=dict(spec.metadata, materialized_coin=name),
    )

    def wrap(strategy: ProverStrategy) -> ProverStrategy:
        def gate(turn_index: int, view: Mapping) -> np.ndarray:
            if turn_index < coin_turn.index:
                return strategy.gate(turn_index, view)
            g0 = np.asarray(strategy.gate(turn_index, {**view, name: 0}), dtype=np.complex128)
            g1 = np.asarray(strategy.gate(turn_index, {**view, name: 1}), dtype=np.complex128)
            return _two_branch_controlled(g0, g1)

        return FunctionalStrategy(f"bell[{strategy.name}]", gate)

    return out, wrap

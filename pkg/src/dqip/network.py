"""Network graphs, qubit register layouts and spanning-tree labels.

A :class:`RegisterLayout` is the single source of truth mapping named
registers to disjoint qubit ranges; no other module hardcodes positions.
Register ownership starts from the layout's initial assignment and moves
between actors only at turn boundaries (tracked by the executor).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import CapacityError, LayoutError, ValidationError

#: Sentinel owner id for the prover (nodes are 0..n-1).
PROVER = -1

#: Dense simulation stays practical below this total qubit count.
DEFAULT_QUBIT_CEILING = 22


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkGraph:
    """Connected undirected graph with optional per-node classical labels."""

    node_count: int
    edges: frozenset[tuple[int, int]]
    node_inputs: tuple[str, ...]

    def neighbors(self, u: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == u:
                out.append(b)
            elif b == u:
                out.append(a)
        return sorted(out)

    def degree(self, u: int) -> int:
        return len(self.neighbors(u))


def _components(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    adj: dict[int, list[int]] = {u: [] for u in range(n)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen: set[int] = set()
    comps = []
    for start in range(n):
        if start in seen:
            continue
        comp, queue = [], deque([start])
        seen.add(start)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        comps.append(sorted(comp))
    return comps


def build_network(
    n: int,
    edges: Iterable[tuple[int, int]],
    node_inputs: Sequence[str] | None = None,
) -> NetworkGraph:
    """Validate and build a connected network graph on nodes ``0..n-1``."""
    if n < 1:
        raise ValidationError("a network needs at least one node")
    canon: set[tuple[int, int]] = set()
    for a, b in edges:
        if not (0 <= a < n and 0 <= b < n):
            raise ValidationError(f"edge ({a}, {b}) references an unknown node")
        if a == b:
            raise ValidationError(f"self-loop at node {a}")
        pair = (min(a, b), max(a, b))
        if pair in canon:
            raise ValidationError(f"duplicate edge {pair}")
        canon.add(pair)
    comps = _components(n, canon)
    if len(comps) > 1:
        raise ValidationError(f"graph is disconnected; offending component: {comps[1]}")
    if node_inputs is None:
        node_inputs = [""] * n
    if len(node_inputs) != n:
        raise ValidationError("node_inputs length does not match node count")
    return NetworkGraph(n, frozenset(canon), tuple(node_inputs))


def path_graph(n: int, node_inputs: Sequence[str] | None = None) -> NetworkGraph:
    return build_network(n, [(i, i + 1) for i in range(n - 1)], node_inputs)


def cycle_graph(n: int, node_inputs: Sequence[str] | None = None) -> NetworkGraph:
    return build_network(n, [(i, (i + 1) % n) for i in range(n)], node_inputs)


# ---------------------------------------------------------------------------
# Register layout
# ---------------------------------------------------------------------------


def reg_p() -> str:
    return "P"


def reg_v(u: int) -> str:
    return f"V:{u}"


def reg_m(u: int) -> str:
    return f"M:{u}"


def reg_w(u: int, v: int) -> str:
    return f"W:{u}:{v}"


@dataclass(frozen=True)
class RegisterLayout:
    """Named registers mapped to disjoint qubit ranges plus initial owners."""

    registers: tuple[tuple[str, int, int], ...]  # (name, start, size)
    initial_owner: Mapping[str, int]
    total_qubits: int

    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {name: (start, size) for name, start, size in self.registers})

    def names(self) -> list[str]:
        return [name for name, _, _ in self.registers]

    def has(self, name: str) -> bool:
        return name in self._index

    def size(self, name: str) -> int:
        return self._index[name][1]

    def qubits(self, name: str) -> list[int]:
        if name not in self._index:
            raise LayoutError(f"unknown register {name!r}")
        start, size = self._index[name]
        return list(range(start, start + size))

    def qubits_of(self, names: Iterable[str]) -> list[int]:
        out: list[int] = []
        for name in names:
            out.extend(self.qubits(name))
        return out

    def owner(self, name: str) -> int:
        return self.initial_owner[name]


def allocate_layout(
    graph: NetworkGraph,
    prover_qubits: int = 0,
    node_private: Mapping[int, int] | int = 0,
    node_message: Mapping[int, int] | int = 0,
    edge_w: int = 0,
    extras: Sequence[tuple[str, int, int]] = (),
    ceiling: int = DEFAULT_QUBIT_CEILING,
) -> RegisterLayout:
    """Deterministic layout over (P, per-node V/M, directed-edge W, extras).

    ``extras`` entries are (name, size, initial owner).  Raises
    :class:`CapacityError` when the total exceeds ``ceiling``.
    """

    def per_node(spec, u: int) -> int:
        return spec[u] if isinstance(spec, Mapping) else int(spec)

    regs: list[tuple[str, int, int]] = []
    owners: dict[str, int] = {}
    cursor = 0

    def add(name: str, size: int, owner: int) -> None:
        nonlocal cursor
        if size < 0:
            raise ValidationError(f"register {name!r} has negative size")
        if name in owners:
            raise LayoutError(f"duplicate register name {name!r}")
        if size > 0:
            regs.append((name, cursor, size))
            owners[name] = owner
            cursor += size

    add(reg_p(), prover_qubits, PROVER)
    for u in range(graph.node_count):
        add(reg_v(u), per_node(node_private, u), u)
        add(reg_m(u), per_node(node_message, u), PROVER)
    if edge_w:
        for a, b in sorted(graph.edges):
            add(reg_w(a, b), edge_w, a)
            add(reg_w(b, a), edge_w, b)
    for name, size, owner in extras:
        add(name, size, owner)

    if cursor > ceiling:
        raise CapacityError(
            f"layout needs {cursor} qubits, above the ceiling of {ceiling}",
            requested=cursor,
            limit=ceiling,
        )
    return RegisterLayout(tuple(regs), owners, cursor)


# ---------------------------------------------------------------------------
# Spanning trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpanningTreeLabels:
    """Per-node (parent, distance-to-root) labels; parent is None at the root."""

    root: int
    parent: tuple[int | None, ...]
    distance: tuple[int, ...]

    def children(self, u: int) -> list[int]:
        return [v for v, p in enumerate(self.parent) if p == u]


def spanning_tree(graph: NetworkGraph, root: int) -> SpanningTreeLabels:
    """BFS spanning tree rooted at ``root``."""
    if not 0 <= root < graph.node_count:
        raise ValidationError(f"root {root} is not a node")
    parent: list[int | None] = [None] * graph.node_count
    dist = [-1] * graph.node_count
    dist[root] = 0
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in graph.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                parent[v] = u
                queue.append(v)
    return SpanningTreeLabels(root, tuple(parent), tuple(dist))


def verify_spanning_tree(graph: NetworkGraph, labels: SpanningTreeLabels) -> list[bool]:
    """Local verification predicate, evaluated at every node.

    Node ``u`` checks only its own label against its neighbors' labels:
    the root has no parent and distance 0, every other node's parent is an
    adjacent node one step closer to the root.  All nodes return True iff
    the labels encode a spanning tree rooted at ``labels.root``.
    """
    ok = []
    for u in range(graph.node_count):
        p, d = labels.parent[u], labels.distance[u]
        if u == labels.root:
            ok.append(p is None and d == 0)
        elif p is None or p not in graph.neighbors(u):
            ok.append(False)
        else:
            ok.append(d == labels.distance[p] + 1 and d >= 1)
    return ok

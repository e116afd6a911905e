import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqip.errors import CapacityError, LayoutError, ValidationError
from dqip.network import (
    PROVER,
    NetworkGraph,
    SpanningTreeLabels,
    allocate_layout,
    build_network,
    cycle_graph,
    path_graph,
    spanning_tree,
    verify_spanning_tree,
)


def test_path_graph_valid():
    g = path_graph(3)
    assert g.node_count == 3
    assert g.neighbors(1) == [0, 2]
    # diameter 2: node 0 to node 2 via node 1
    assert (0, 2) not in g.edges


def test_four_cycle_two_colorable():
    g = cycle_graph(4)
    color = {0: 0, 1: 1, 2: 0, 3: 1}
    assert all(color[a] != color[b] for a, b in g.edges)


def test_disconnected_rejected_with_component():
    with pytest.raises(ValidationError) as err:
        build_network(4, [(0, 1), (2, 3)])
    assert "[2, 3]" in str(err.value)


def test_bad_edges_rejected():
    with pytest.raises(ValidationError):
        build_network(2, [(0, 0)])
    with pytest.raises(ValidationError):
        build_network(2, [(0, 1), (1, 0)])
    with pytest.raises(ValidationError):
        build_network(2, [(0, 5)])
    with pytest.raises(ValidationError):
        build_network(0, [])


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------


def test_layout_ordering_rule():
    g = path_graph(2)
    layout = allocate_layout(g, prover_qubits=1, node_private=1, node_message=1)
    assert layout.total_qubits == 5
    assert layout.qubits("P") == [0]
    assert layout.names() == ["P", "V:0", "M:0", "V:1", "M:1"]
    assert layout.owner("V:0") == 0 and layout.owner("M:0") == PROVER


def test_layout_with_w_registers():
    g = path_graph(2)
    layout = allocate_layout(g, prover_qubits=1, node_private=1, node_message=1, edge_w=1)
    assert layout.total_qubits == 7
    assert layout.names()[-2:] == ["W:0:1", "W:1:0"]


def test_layout_capacity_error():
    g = path_graph(2)
    with pytest.raises(CapacityError) as err:
        allocate_layout(g, prover_qubits=30, node_private=5)
    assert err.value.requested == 40
    assert "40" in str(err.value)


@given(
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=0, max_value=2),
    st.integers(min_value=0, max_value=2),
    st.integers(min_value=0, max_value=1),
)
@settings(max_examples=60, deadline=None)
def test_layout_is_bijection(prover, private, message, w):
    g = path_graph(3)
    layout = allocate_layout(g, prover, private, message, w)
    seen: list[int] = []
    for name in layout.names():
        seen.extend(layout.qubits(name))
    assert sorted(seen) == list(range(layout.total_qubits))


def test_unknown_register_raises():
    layout = allocate_layout(path_graph(2), 1, 1, 1)
    with pytest.raises(LayoutError):
        layout.qubits("B'")


# ---------------------------------------------------------------------------
# Spanning trees
# ---------------------------------------------------------------------------


def test_bfs_tree_on_path():
    g = path_graph(3)
    labels = spanning_tree(g, 0)
    assert labels.parent == (None, 0, 1)
    assert labels.distance == (0, 1, 2)
    assert all(verify_spanning_tree(g, labels))


def test_bad_distance_detected_at_offending_node():
    g = path_graph(3)
    labels = SpanningTreeLabels(0, (None, 0, 1), (0, 1, 5))
    assert verify_spanning_tree(g, labels) == [True, True, False]


def test_parent_cycle_rejected():
    g = path_graph(3)
    labels = SpanningTreeLabels(0, (None, 2, 1), (0, 1, 1))
    assert not all(verify_spanning_tree(g, labels))


def all_label_assignments(g: NetworkGraph, root: int):
    n = g.node_count
    parent_choices = [[None] + list(range(n)) for _ in range(n)]
    for parents in itertools.product(*parent_choices):
        for dists in itertools.product(range(n), repeat=n):
            yield SpanningTreeLabels(root, tuple(parents), tuple(dists))


def is_true_tree(g: NetworkGraph, labels: SpanningTreeLabels) -> bool:
    n = g.node_count
    if labels.parent[labels.root] is not None or labels.distance[labels.root] != 0:
        return False
    for u in range(n):
        if u == labels.root:
            continue
        p = labels.parent[u]
        if p is None or p not in g.neighbors(u):
            return False
        if labels.distance[u] != labels.distance[p] + 1:
            return False
    # Every node must reach the root by following parents.
    for u in range(n):
        cur, steps = u, 0
        while cur != labels.root:
            cur = labels.parent[cur]
            steps += 1
            if cur is None or steps > n:
                return False
    return True


@pytest.mark.parametrize(
    "graph,root",
    [(path_graph(3), 0), (path_graph(3), 1), (cycle_graph(4), 0), (cycle_graph(3), 2)],
)
def test_verification_exhaustively_characterizes_trees(graph, root):
    for labels in all_label_assignments(graph, root):
        assert all(verify_spanning_tree(graph, labels)) == is_true_tree(graph, labels)


def test_every_label_assignment_on_three_path_checked():
    g = path_graph(3)
    accepted = [
        labels
        for labels in all_label_assignments(g, 0)
        if all(verify_spanning_tree(g, labels))
    ]
    # The 3-path has exactly one spanning tree rooted at 0.
    assert len(accepted) == 1
    assert accepted[0].parent == (None, 0, 1)

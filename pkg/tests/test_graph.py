import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaxdual.errors import ConnectivityFailure, InvalidSize
from relaxdual.graph import Graph, complete, erdos_renyi, is_connected, path, ring, single_node


def one_based(g):
    return {(i + 1, j + 1) for i, j in g.edges}


@pytest.mark.parametrize("seed", range(10))
def test_erdos_renyi_benchmark_graph_is_connected(seed):
    g = erdos_renyi(20, 0.2, seed)
    assert g.n == 20
    assert is_connected(g)


def test_erdos_renyi_p_one_two_nodes():
    for seed in (0, 7, 123):
        assert one_based(erdos_renyi(2, 1.0, seed)) == {(1, 2)}


def test_erdos_renyi_empty_graph_fails():
    with pytest.raises(ConnectivityFailure):
        erdos_renyi(5, 0.0, 3, max_retries=20)


def test_erdos_renyi_deterministic():
    assert erdos_renyi(15, 0.3, 42) == erdos_renyi(15, 0.3, 42)


def test_erdos_renyi_rejects_bad_arguments():
    with pytest.raises(InvalidSize):
        erdos_renyi(1, 0.5, 0)
    with pytest.raises(ValueError):
        erdos_renyi(5, 1.5, 0)


def test_complete_and_ring():
    assert one_based(complete(3)) == {(1, 2), (1, 3), (2, 3)}
    assert one_based(ring(4)) == {(1, 2), (2, 3), (3, 4), (1, 4)}
    assert complete(2).num_edges == 1
    with pytest.raises(InvalidSize):
        ring(2)
    with pytest.raises(InvalidSize):
        complete(1)


def test_is_connected_examples():
    assert is_connected(path(3))
    assert not is_connected(Graph.from_edges(4, [(0, 1), (2, 3)]))
    assert is_connected(single_node())


def test_edge_list_text_round_trip():
    g = erdos_renyi(12, 0.3, 5)
    assert Graph.from_edge_list_text(g.to_edge_list_text(), g.n) == g


def test_edge_list_text_parsing():
    g = Graph.from_edge_list_text("# header\n1 2\n\n2 3  # trailing\n2 1\n")
    assert g.n == 3
    assert one_based(g) == {(1, 2), (2, 3)}
    with pytest.raises(ValueError):
        Graph.from_edge_list_text("0 1")
    with pytest.raises(ValueError):
        Graph.from_edge_list_text("1 2 3")
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 0)])


def test_directed_index_layout():
    g = ring(5)
    idx = g.directed_index()
    assert len(idx) == 2 * g.num_edges
    assert list(idx.pairs) == sorted(idx.pairs)
    for k, (i, j) in enumerate(idx.pairs):
        assert idx[(i, j)] == k
        assert idx.pairs[idx.reverse[k]] == (j, i)
        assert (idx.src[k], idx.dst[k]) == (i, j)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 12), p=st.floats(0.0, 1.0), seed=st.integers(0, 2**31))
def test_adjacency_is_symmetric(n, p, seed):
    g = Graph.from_edges(n, [])
    try:
        g = erdos_renyi(n, p, seed, max_retries=5)
    except ConnectivityFailure:
        return
    for i in range(n):
        for j in g.neighbors(i):
            assert i in g.neighbors(j)
    assert sum(g.degree(i) for i in range(n)) == 2 * g.num_edges

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adagcn.graph import (
    GraphInputError,
    OpCounter,
    build_from_edge_list,
    propagate_chain,
    read_edge_list,
    spmm,
    sym_normalize,
    write_edge_list,
)


def dense_normalized(n, edges):
    """Reference Â from a dense adjacency built by hand."""
    A = np.zeros((n, n))
    for i, j in edges:
        if i != j:
            A[i, j] = A[j, i] = 1.0
    At = A + np.eye(n)
    d = At.sum(axis=1)
    return At / np.sqrt(np.outer(d, d))


@st.composite
def graphs(draw, max_n=20):
    n = draw(st.integers(1, max_n))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
    return n, draw(st.lists(pairs, max_size=3 * n))


def test_single_edge():
    adj = build_from_edge_list(2, [(0, 1)])
    np.testing.assert_array_equal(adj.to_dense(), [[0, 1], [1, 0]])
    adj.check()


def test_empty_graph():
    adj = build_from_edge_list(1, [])
    assert adj.nnz == 0
    assert list(adj.row_ptr) == [0, 0]


def test_dedup_and_symmetrize():
    adj = build_from_edge_list(3, [(0, 1), (1, 0), (1, 2)])
    assert adj.nnz == 4
    adj.check()


def test_self_loops_dropped():
    adj = build_from_edge_list(3, [(0, 0), (0, 1), (2, 2)])
    assert adj.nnz == 2


def test_out_of_range():
    with pytest.raises(GraphInputError):
        build_from_edge_list(2, [(0, 2)])
    with pytest.raises(GraphInputError):
        build_from_edge_list(2, [(-1, 0)])


def test_normalize_isolated_node():
    np.testing.assert_array_equal(sym_normalize(build_from_edge_list(1, [])).to_dense(), [[1.0]])


def test_normalize_single_edge():
    ahat = sym_normalize(build_from_edge_list(2, [(0, 1)])).to_dense()
    np.testing.assert_allclose(ahat, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_normalize_path():
    ahat = sym_normalize(build_from_edge_list(3, [(0, 1), (1, 2)])).to_dense()
    assert ahat[0, 0] == pytest.approx(0.5)
    assert ahat[0, 1] == pytest.approx(1 / math.sqrt(6))
    assert ahat[1, 1] == pytest.approx(1 / 3)


def test_regular_graph_rows_sum_to_one():
    n = 6
    ring = [(i, (i + 1) % n) for i in range(n)]
    ahat = sym_normalize(build_from_edge_list(n, ring)).to_dense()
    np.testing.assert_allclose(ahat.sum(axis=1), 1.0, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_normalize_matches_dense_reference(g):
    n, edges = g
    ahat = sym_normalize(build_from_edge_list(n, edges))
    ahat.check()
    dense = ahat.to_dense()
    np.testing.assert_allclose(dense, dense_normalized(n, edges), atol=1e-15)
    assert np.array_equal(dense, dense.T)
    assert np.all(ahat.values > 0)


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_spectrum_and_degree_eigenvector(g):
    n, edges = g
    ahat = sym_normalize(build_from_edge_list(n, edges))
    dense = ahat.to_dense()
    eig = np.linalg.eigvalsh(dense)
    assert eig.min() >= -1 - 1e-12
    assert eig.max() == pytest.approx(1.0, abs=1e-12)
    # sqrt of self-looped degree is a fixed point of Â
    s = np.sqrt(np.diff(ahat.row_ptr).astype(float))
    np.testing.assert_allclose(dense @ s, s, atol=1e-12)


def test_row_sums_can_exceed_one():
    # center of a star: 1/3 + 2/sqrt(6)
    dense = sym_normalize(build_from_edge_list(3, [(0, 1), (0, 2)])).to_dense()
    assert dense[0].sum() == pytest.approx(1 / 3 + 2 / math.sqrt(6))
    assert dense[0].sum() > 1


def test_spmm_identity_single_node():
    ahat = sym_normalize(build_from_edge_list(1, []))
    x = np.array([[3.0, -2.0, 7.5]])
    np.testing.assert_array_equal(spmm(ahat, x), x)


def test_spmm_two_node():
    ahat = sym_normalize(build_from_edge_list(2, [(0, 1)]))
    np.testing.assert_allclose(spmm(ahat, np.eye(2)), [[0.5, 0.5], [0.5, 0.5]])


@settings(max_examples=50, deadline=None)
@given(graphs(max_n=50), st.integers(1, 6), st.integers(0, 2**31))
def test_spmm_matches_dense(g, cols, seed):
    n, edges = g
    ahat = sym_normalize(build_from_edge_list(n, edges))
    x = np.random.default_rng(seed).normal(size=(n, cols))
    np.testing.assert_allclose(spmm(ahat, x), ahat.to_dense() @ x, rtol=0, atol=1e-12)


def test_spmm_dimension_mismatch():
    ahat = sym_normalize(build_from_edge_list(3, []))
    with pytest.raises(GraphInputError):
        spmm(ahat, np.ones((2, 2)))


def test_propagate_chain_depth_zero():
    x = np.ones((2, 3))
    out = propagate_chain(sym_normalize(build_from_edge_list(2, [(0, 1)])), x, 0)
    assert len(out) == 1 and np.array_equal(out[0], x)


def test_propagate_chain_two_node():
    ahat = sym_normalize(build_from_edge_list(2, [(0, 1)]))
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    out = propagate_chain(ahat, x, 2)
    A = ahat.to_dense()
    np.testing.assert_allclose(out[2], A @ A @ x, atol=1e-15)


def test_propagate_chain_counter():
    counter = OpCounter()
    ahat = sym_normalize(build_from_edge_list(4, [(0, 1), (2, 3)]))
    out = propagate_chain(ahat, np.ones((4, 2)), 7, counter)
    assert counter.count == 7
    assert len(out) == 8


@settings(max_examples=40, deadline=None)
@given(graphs(), st.integers(0, 10), st.integers(0, 2**31))
def test_propagate_chain_matches_matrix_power(g, L, seed):
    n, edges = g
    ahat = sym_normalize(build_from_edge_list(n, edges))
    x = np.random.default_rng(seed).normal(size=(n, 3))
    expected = np.linalg.matrix_power(ahat.to_dense(), L) @ x
    np.testing.assert_allclose(propagate_chain(ahat, x, L)[L], expected, rtol=0, atol=1e-9)


def test_oversmoothing_converges():
    # odd cycle with a chord: connected and non-bipartite
    n = 9
    edges = [(i, (i + 1) % n) for i in range(n)] + [(0, 4)]
    ahat = sym_normalize(build_from_edge_list(n, edges))
    x = np.random.default_rng(0).normal(size=(n, 4))
    chain = propagate_chain(ahat, x, 200)
    # rows converge towards a multiple of sqrt(degree), so compare after rescaling
    scale = np.sqrt(np.diff(ahat.row_ptr))[:, None]

    def spread(h):
        r = h / scale
        return max(np.linalg.norm(r[i] - r[j]) for i in range(n) for j in range(n))

    assert spread(chain[200]) < 1e-6 * spread(chain[1])


def test_edge_file_round_trip(tmp_path):
    adj = build_from_edge_list(5, [(0, 1), (1, 2), (3, 4), (4, 0)])
    path = tmp_path / "edges.txt"
    write_edge_list(path, adj)
    again = build_from_edge_list(5, read_edge_list(path))
    assert np.array_equal(again.to_dense(), adj.to_dense())


def test_edge_file_comments_and_errors(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("# header\n0 1\n\n1\t2\n", encoding="utf-8")
    assert read_edge_list(p) == [(0, 1), (1, 2)]
    p.write_text("0 x\n", encoding="utf-8")
    with pytest.raises(GraphInputError):
        read_edge_list(p)
    p.write_text("0 1 2\n", encoding="utf-8")
    with pytest.raises(GraphInputError):
        read_edge_list(p)

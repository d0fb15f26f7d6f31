from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import CITESEER, make_graph
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import dense_gcn_matrix

from blocknas import graphdata as gd


def _write(path, text):
    path.write_text(text)
    return path


# --- loaders --------------------------------------------------------------

def test_cora_counts(cora):
    # Table 3 counts
    assert (cora.num_nodes, cora.raw_edge_count, cora.num_features, cora.num_classes) == (2708, 5429, 1433, 7)
    assert cora.summary() == "2708 nodes, 5429 edges, 1433 features, 7 classes"


def test_citeseer_counts():
    g = gd.load_dataset(CITESEER)
    assert (g.num_nodes, g.num_features, g.num_classes) == (3327, 3703, 6)


def test_three_node_fixture(tmp_path):
    content = _write(tmp_path / "t.content", "a 1 0 x\nb 0 1 y\nc 1 1 x\n")
    cites = _write(tmp_path / "t.cites", "a b\nb c\n")
    g = gd.load_cora_raw(content, cites)
    assert g.num_nodes == 3 and g.num_edges == 2 and g.num_classes == 2
    assert g.node_ids == ("a", "b", "c")


def test_dangling_citation_dropped(tmp_path):
    content = _write(tmp_path / "t.content", "a 1 x\nb 0 y\n")
    cites = _write(tmp_path / "t.cites", "a b\nb zz\n")
    g = gd.load_cora_raw(content, cites)
    assert g.num_edges == 1 and g.dropped_edges == 1 and g.raw_edge_count == 2


def test_empty_content_rejected(tmp_path):
    with pytest.raises(gd.DataFormatError):
        gd.load_cora_raw(_write(tmp_path / "e.content", ""), _write(tmp_path / "e.cites", ""))


def test_malformed_row_reports_line(tmp_path):
    content = _write(tmp_path / "m.content", "a 1 0 x\nb 0 y\n")
    with pytest.raises(gd.DataFormatError, match=":2:"):
        gd.load_cora_raw(content, _write(tmp_path / "m.cites", ""))


def _csv_triple(tmp_path, n, edges, dim=2):
    feats = ["node_id," + ",".join(f"f{k}" for k in range(dim))]
    feats += [f"n{i}," + ",".join("1" for _ in range(dim)) for i in range(n)]
    _write(tmp_path / "features.csv", "\n".join(feats) + "\n")
    _write(tmp_path / "labels.csv", "node_id,label\n" + "".join(f"n{i},{i % 2}\n" for i in range(n)))
    _write(tmp_path / "edges.csv", "src,dst\n" + "".join(f"{a},{b}\n" for a, b in edges))
    return tmp_path / "features.csv", tmp_path / "edges.csv", tmp_path / "labels.csv"


def test_edgelist_single_node(tmp_path):
    g = gd.load_edgelist(*_csv_triple(tmp_path, 1, []))
    assert g.num_nodes == 1 and g.num_edges == 0


def test_edgelist_path_graph(tmp_path):
    # both directions listed plus a duplicate; canonical form keeps 4 undirected edges
    edges = [(f"n{i}", f"n{i + 1}") for i in range(4)] + [(f"n{i + 1}", f"n{i}") for i in range(4)]
    g = gd.load_edgelist(*_csv_triple(tmp_path, 5, edges + [("n0", "n1")]))
    assert g.num_edges == 4


def test_edgelist_unknown_id(tmp_path):
    with pytest.raises(gd.DataFormatError, match="n9"):
        gd.load_edgelist(*_csv_triple(tmp_path, 3, [("n0", "n9")]))


def test_load_dataset_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        gd.load_dataset(tmp_path / "nothing")


def test_graph_roundtrip(tmp_path, tiny_graph):
    path = tmp_path / "g.npz"
    gd.save_graph(tiny_graph, path)
    back = gd.load_dataset(path)
    assert np.array_equal(back.features, tiny_graph.features)
    assert np.array_equal(back.edges, tiny_graph.edges)
    assert np.array_equal(back.labels, tiny_graph.labels)
    assert back.features.dtype == tiny_graph.features.dtype


def test_graph_invariants():
    with pytest.raises(gd.DataFormatError):
        make_graph(3, [(0, 5)])
    g = make_graph(3, [(0, 1), (1, 0), (1, 1)])
    assert g.edges.tolist() == [[0, 1]]


# --- splits ---------------------------------------------------------------

def test_cora_semi_split_sizes(cora):
    s = gd.semi_split(cora, 20, 500, 1000, seed=0)
    assert s.sizes() == (140, 500, 1000)
    assert all(np.sum(cora.labels[s.train] == c) == 20 for c in range(7))


def test_cora_full_split_sizes(cora):
    s = gd.full_split(cora, 0.6, 0.2, seed=0)
    assert s.sizes() == (math.floor(0.6 * 2708), math.floor(0.2 * 2708), 2708 - 1624 - 541)
    assert sum(s.sizes()) == 2708


def test_semi_split_small_fixture():
    g = make_graph(30, [], num_classes=3)
    s = gd.semi_split(g, per_class=2, n_val=6, n_test=6, seed=3)
    assert s.sizes() == (6, 6, 6)
    assert not (s.train & s.val).any() and not (s.train & s.test).any() and not (s.val & s.test).any()
    assert [int(np.sum(g.labels[s.train] == c)) for c in range(3)] == [2, 2, 2]


def test_semi_split_errors():
    g = make_graph(30, [], num_classes=3)
    with pytest.raises(gd.SplitError):
        gd.semi_split(g, per_class=0)
    skewed = make_graph(30, [], num_classes=3, labels=[0] * 28 + [1, 2])
    with pytest.raises(gd.SplitError, match="'1'|1"):
        gd.semi_split(skewed, per_class=2, n_val=2, n_test=2)


def test_full_split_sizes_and_errors():
    g = make_graph(100, [])
    assert gd.full_split(g, 0.6, 0.2).sizes() == (60, 20, 20)
    with pytest.raises(gd.SplitError):
        gd.full_split(make_graph(10, []), 0.999, 0.0005)
    with pytest.raises(gd.SplitError):
        gd.full_split(g, 1.2, 0.1)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_splits_deterministic_and_disjoint(seed):
    g = make_graph(60, [], num_classes=3)
    a, b = gd.semi_split(g, 3, 10, 10, seed), gd.semi_split(g, 3, 10, 10, seed)
    for name in ("train", "val", "test"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not (a.train & a.val).any() and not (a.val & a.test).any() and not (a.train & a.test).any()
    f1, f2 = gd.full_split(g, 0.5, 0.25, seed), gd.full_split(g, 0.5, 0.25, seed)
    assert np.array_equal(f1.test, f2.test) and sum(f1.sizes()) == 60


# --- normalization --------------------------------------------------------

def _coef(adj, i, j):
    hit = np.flatnonzero((adj.rows == i) & (adj.cols == j))
    assert len(hit) == 1
    return adj.coeffs[hit[0]]


def test_two_node_coefficients():
    adj = gd.normalize_adjacency(make_graph(2, [(0, 1)]))
    assert _coef(adj, 0, 1) == pytest.approx(0.5) and _coef(adj, 0, 0) == pytest.approx(0.5)


def test_isolated_node_self_loop():
    adj = gd.normalize_adjacency(make_graph(1, []))
    assert adj.coeffs.tolist() == [1.0]


def test_star_graph():
    adj = gd.normalize_adjacency(make_graph(4, [(0, 1), (0, 2), (0, 3)]))
    assert _coef(adj, 0, 0) == pytest.approx(0.25)
    assert _coef(adj, 1, 0) == pytest.approx(1 / math.sqrt(8))


@given(st.integers(2, 9).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=20))))
@settings(max_examples=50, deadline=None)
def test_normalization_matches_dense_and_is_symmetric(case):
    n, edges = case
    g = make_graph(n, edges)
    adj = gd.normalize_adjacency(g)
    dense = adj.matrix().toarray()
    assert np.allclose(dense, dense.T, atol=0, rtol=0)
    assert np.allclose(dense, dense_gcn_matrix(n, g.edges.tolist()), atol=1e-12)
    assert np.all(np.isfinite(adj.coeffs))
    assert set(range(n)) <= {int(r) for r, c in zip(adj.rows, adj.cols) if r == c}


def test_row_normalize_examples():
    g = make_graph(2, [])
    g = gd.Graph(np.array([[2.0, 2.0, 0.0], [0.0, 0.0, 0.0]]), g.edges, g.labels, 2)
    out = gd.row_normalize_features(g)
    assert out.features.tolist() == [[0.5, 0.5, 0.0], [0.0, 0.0, 0.0]]


@given(st.lists(st.lists(st.floats(0, 10), min_size=3, max_size=3), min_size=4, max_size=4))
@settings(max_examples=50, deadline=None)
def test_row_normalize_property(rows):
    x = np.array(rows)
    g = gd.Graph(x, np.zeros((0, 2)), np.zeros(4, dtype=int), 1)
    out = gd.row_normalize_features(g).features
    sums = x.sum(axis=1)
    for r, s in zip(out, sums):
        if s > 0:
            assert abs(r.sum() - 1.0) < 1e-12
        else:
            assert not r.any()


def test_bfs_subsample(cora):
    sub = gd.bfs_subsample(cora, 500, seed=0)
    assert sub.num_nodes == 500 and sub.num_features == 1433
    again = gd.bfs_subsample(cora, 500, seed=0)
    assert sub.node_ids == again.node_ids
    with pytest.raises(gd.SplitError):
        gd.bfs_subsample(cora, 0)

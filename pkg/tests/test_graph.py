import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netrank.graph import (EmbeddingMatrix, FeatureMatrix, Graph, InputError, LabelSet,
                           load_edge_list, load_feature_table, load_labels, neighbors,
                           read_embeddings, write_edge_list, write_embeddings)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_edge_list_basic(tmp_path):
    g = load_edge_list(write(tmp_path, "e.tsv", "# comment\na\tb\nb\tc\n"))
    assert g.n_nodes == 3 and g.n_edges == 2
    assert g.node_ids == ("a", "b", "c")


def test_duplicate_edges_collapse(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        g = load_edge_list(write(tmp_path, "e.tsv", "a\tb\na\tb\n"))
    assert g.n_edges == 1
    assert g.n_duplicates == 1
    assert "duplicate" in caplog.text


def test_malformed_line_names_line_number(tmp_path):
    with pytest.raises(InputError, match=":1:"):
        load_edge_list(write(tmp_path, "e.tsv", "a\n"))


def test_empty_and_missing_edge_files(tmp_path):
    with pytest.raises(InputError):
        load_edge_list(write(tmp_path, "e.tsv", "# nothing\n"))
    with pytest.raises(FileNotFoundError):
        load_edge_list(tmp_path / "nope.tsv")


def test_self_loops_flagged():
    g = Graph.from_edges(["a", "b"], [(0, 0), (0, 1)])
    assert g.self_loops == 1


def test_neighbors_path(path_graph):
    a, b, c = range(3)
    assert neighbors(path_graph, b, "out") == [c]
    assert neighbors(path_graph, b, "in") == [a]
    assert neighbors(path_graph, c, "out") == []
    with pytest.raises(IndexError):
        neighbors(path_graph, 3)


def test_feature_table(tmp_path):
    fm = load_feature_table(write(tmp_path, "f.csv", "id,x,y\na,1,2\nb,3,4.5\n"))
    assert fm.row_ids == ("a", "b")
    assert fm.col_names == ("x", "y")
    np.testing.assert_array_equal(fm.values, [[1, 2], [3, 4.5]])


@pytest.mark.parametrize("body,msg", [
    ("id,x\na,NaN\n", "non-finite"),
    ("id,x\na,1\na,2\n", "duplicate"),
    ("id,x\na,abc\n", "not a number"),
])
def test_feature_table_rejects(tmp_path, body, msg):
    with pytest.raises(InputError, match=msg):
        load_feature_table(write(tmp_path, "f.csv", body))


def test_labels(tmp_path):
    lab = load_labels(write(tmp_path, "l.csv", "id,label\na,1\nb,0\n"))
    assert lab.positives == {"a"}
    assert set(lab.universe) == {"a", "b"}


@pytest.mark.parametrize("body", ["a,0\nb,0\n", "a,2\n", "a,1\na,0\nb,0\n"])
def test_labels_reject(tmp_path, body):
    with pytest.raises(InputError):
        load_labels(write(tmp_path, "l.csv", body))


def test_isolated_nodes_added(caplog):
    g = Graph.from_edges(["a", "b"], [(0, 1)])
    with caplog.at_level(logging.WARNING):
        g2 = g.with_isolated(["b", "z"])
    assert g2.node_ids == ("a", "b", "z")
    assert g2.n_edges == 1
    assert "isolated" in caplog.text


def test_embedding_file_format(tmp_path):
    emb = EmbeddingMatrix(["a", "b"], np.array([[1.0, 1 / 3], [-2.5e-10, 7.0]]), "line", 4)
    p = tmp_path / "emb.tsv"
    write_embeddings(emb, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "# dim=2 method=line seed=4"
    assert lines[1] == "a\t1\t0.333333333"
    back = read_embeddings(p)
    assert back.row_ids == ("a", "b") and back.dim == 2 and back.seed == 4
    np.testing.assert_allclose(back.values, emb.values, rtol=1e-8)


edge_lists = st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                             max_size=40)))


@given(edge_lists)
def test_degree_sums_and_transpose(data):
    n, edges = data
    g = Graph.from_edges([f"v{i}" for i in range(n)], edges)
    assert g.out_degree().sum() == g.in_degree().sum() == g.n_edges == len(set(edges))
    from_out = {(int(s), int(t)) for s, t in g.edges()}
    from_in = {(int(s), int(t)) for t in range(n) for s in neighbors(g, t, "in")}
    assert from_out == from_in == set(edges)


@given(edge_lists)
def test_edge_list_round_trip(tmp_path_factory, data):
    n, edges = data
    if not edges:
        return
    g = Graph.from_edges([f"v{i}" for i in range(n)], edges)
    p = tmp_path_factory.mktemp("rt") / "e.tsv"
    write_edge_list(g, p)
    assert load_edge_list(p) == g


def test_label_set_invariants():
    with pytest.raises(InputError):
        LabelSet({"x"}, ["a"])
    with pytest.raises(InputError):
        LabelSet({"a"}, ["a"])


def test_feature_matrix_needs_columns():
    with pytest.raises(InputError):
        FeatureMatrix(["a"], [], np.zeros((1, 0)))

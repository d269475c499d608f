import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import intra_inter_cosine, make_graph
from netrank.graph import Graph
from netrank.line import LineConfig, line_train, sample_edge
from netrank.node2vec import generate_walks, train_skipgram, transition_distribution

BLOCKS = np.repeat([0, 1], 5)


# --- node2vec ---------------------------------------------------------------

def test_transition_uniform_when_unbiased():
    g = make_graph(4, [(1, 0), (1, 2), (1, 3)])
    d = transition_distribution(g, 0, 1, 1.0, 1.0)
    assert d == pytest.approx({0: 1 / 3, 2: 1 / 3, 3: 1 / 3})


def test_transition_return_and_outward_bias():
    # a=0, b=1, c=2; b's neighbours {a, c}; c not adjacent to a
    g = make_graph(3, [(0, 1), (1, 2)])
    d = transition_distribution(g, 0, 1, p=0.5, q=2.0)
    # weights 1/p = 2 (back to a) and 1/q = 0.5 (to c)
    assert d == pytest.approx({0: 0.8, 2: 0.2}, abs=1e-15)


def test_transition_triangle():
    g = make_graph(3, [(0, 1), (1, 2), (2, 0)])
    assert transition_distribution(g, 0, 1, 1.0, 1.0) == pytest.approx({0: 0.5, 2: 0.5})


def test_transition_errors():
    g = make_graph(3, [(0, 1)])
    with pytest.raises(ValueError):
        transition_distribution(g, 0, 2, 1.0, 1.0)


random_graphs = st.integers(3, 10).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                             min_size=1, max_size=30)))


@given(random_graphs, st.floats(0.1, 4.0), st.floats(0.1, 4.0))
def test_transition_distribution_is_probability(data, p, q):
    n, edges = data
    g = make_graph(n, edges)
    s, t = edges[0]
    d = transition_distribution(g, s, t, p, q)
    vals = np.array(list(d.values()))
    assert np.all(vals >= 0)
    assert abs(vals.sum() - 1.0) <= 1e-12


@settings(max_examples=25)
@given(random_graphs, st.floats(0.25, 4.0), st.floats(0.25, 4.0), st.integers(0, 100))
def test_walks_follow_undirected_edges(data, p, q, seed):
    n, edges = data
    g = make_graph(n, edges)
    und = {(a, b) for a, b in edges} | {(b, a) for a, b in edges}
    ws = generate_walks(g, p, q, walks_per_node=2, walk_length=8, seed=seed)
    assert len(ws.walks) == 2 * n
    for i, w in enumerate(ws.walks):
        assert w[0] == i // 2
        assert len(w) <= 8
        assert all((a, b) in und for a, b in zip(w, w[1:]))


def test_walk_counts_determinism_and_isolated():
    g = make_graph(3, [(0, 1), (1, 2)])
    ws = generate_walks(g, walks_per_node=2, walk_length=5, seed=3)
    assert len(ws.walks) == 6
    assert generate_walks(g, walks_per_node=2, walk_length=5, seed=3).walks == ws.walks
    iso = Graph.from_edges(["a", "b", "c"], [(0, 1)])
    assert generate_walks(iso, walks_per_node=1, walk_length=5).walks[2] == [2]


def test_skipgram_separates_cliques(two_cliques):
    hist = []
    ws = generate_walks(two_cliques, walks_per_node=10, walk_length=20, seed=0)
    emb = train_skipgram(ws, two_cliques.node_ids, dim=16, epochs=5, seed=0, history=hist)
    intra, inter = intra_inter_cosine(emb.values, BLOCKS)
    assert intra > inter
    assert all(np.isfinite(hist)) and hist[-1] < hist[0]


def test_skipgram_default_width_and_determinism(two_cliques):
    ws = generate_walks(two_cliques, walks_per_node=2, walk_length=10, seed=0)
    a = train_skipgram(ws, two_cliques.node_ids, epochs=1, seed=9)
    b = train_skipgram(ws, two_cliques.node_ids, epochs=1, seed=9)
    assert a.dim == 80
    assert np.array_equal(a.values, b.values)
    assert np.all(np.isfinite(a.values))
    with pytest.raises(ValueError):
        train_skipgram([], two_cliques.node_ids)


# --- LINE -------------------------------------------------------------------

def test_line_first_order_separates_cliques(two_cliques):
    hist = {}
    emb = line_train(two_cliques, LineConfig(dim_total=16, order="first", sample_count=20_000), seed=0,
                     history=hist)
    intra, inter = intra_inter_cosine(emb.values, BLOCKS)
    assert intra > inter
    losses = hist["first"]
    assert all(np.isfinite(losses)) and losses[-1] < losses[0]


def test_line_second_order_loss_decreases(two_cliques):
    hist = {}
    line_train(two_cliques, LineConfig(dim_total=16, order="second", sample_count=20_000), history=hist)
    assert hist["second"][-1] < hist["second"][0]


def test_line_both_concatenates_halves(two_cliques):
    cfg = LineConfig(dim_total=80, order="both", sample_count=2_000)
    emb = line_train(two_cliques, cfg, seed=1)
    first = line_train(two_cliques, LineConfig(dim_total=40, order="first", sample_count=2_000), seed=1)
    assert emb.values.shape == (10, 80)
    # the first half is trained exactly as a stand-alone first-order run
    assert np.array_equal(emb.values[:, :40], first.values)
    assert np.array_equal(emb.values, line_train(two_cliques, cfg, seed=1).values)


def test_line_config_validation(two_cliques):
    with pytest.raises(ValueError):
        line_train(two_cliques, LineConfig(dim_total=81, order="both"))
    with pytest.raises(ValueError):
        line_train(two_cliques, LineConfig(sample_count=3))
    with pytest.raises(ValueError):
        line_train(Graph.from_edges(["a"], []))


def test_sample_edge():
    g = make_graph(2, [(0, 1)])
    rng = np.random.default_rng(0)
    assert {sample_edge(g, rng) for _ in range(20)} == {(0, 1)}
    g2 = make_graph(3, [(0, 1), (1, 2)])
    draws = sample_edge(g2, np.random.default_rng(4), size=10_000)
    freq = np.mean(draws[:, 0] == 0)
    assert abs(freq - 0.5) < 3 * np.sqrt(0.25 / 10_000)
    a = sample_edge(g2, np.random.default_rng(8), size=50)
    b = sample_edge(g2, np.random.default_rng(8), size=50)
    assert np.array_equal(a, b)

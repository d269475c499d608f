import hypothesis
import numpy as np
import pytest

from netrank.graph import Graph

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("ci")


def make_graph(n, edges, prefix="n"):
    return Graph.from_edges([f"{prefix}{i}" for i in range(n)], edges)


@pytest.fixture
def path_graph():
    return Graph.from_edges(["a", "b", "c"], [(0, 1), (1, 2)])


@pytest.fixture
def two_cliques():
    """Two disjoint undirected 5-cliques (both directions of every edge)."""
    edges = []
    for base in (0, 5):
        for i in range(5):
            for j in range(5):
                if i != j:
                    edges.append((base + i, base + j))
    return make_graph(10, edges)


def intra_inter_cosine(values, blocks):
    v = values / np.linalg.norm(values, axis=1, keepdims=True)
    s = v @ v.T
    same = blocks[:, None] == blocks[None, :]
    np.fill_diagonal(same, False)
    diff = blocks[:, None] != blocks[None, :]
    return s[same].mean(), s[diff].mean()


# one (status, criterion, detail) row per acceptance criterion, printed after the run
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{status}] {name}: {detail}")

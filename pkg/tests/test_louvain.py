import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smgrl.graph import Graph
from smgrl.louvain import louvain, modularity
from smgrl.synth import gen_sbm


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def best_modularity(g):
    best = -np.inf
    for part in set_partitions(list(range(g.n_nodes))):
        comm = np.empty(g.n_nodes, dtype=int)
        for j, block in enumerate(part):
            comm[block] = j
        best = max(best, modularity(g.adj, comm))
    return best


def graph(n, edges, weights=None):
    u, v = zip(*edges)
    return Graph.from_edges(n, u, v, weights)


SIX_NODE = {
    "two_triangles": graph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]),
    "path": graph(6, [(i, i + 1) for i in range(5)]),
    "cycle": graph(6, [(i, (i + 1) % 6) for i in range(6)]),
    "star": graph(6, [(0, i) for i in range(1, 6)]),
    "k33": graph(6, [(i, j) for i in range(3) for j in range(3, 6)]),
    "k6": graph(6, list(itertools.combinations(range(6), 2))),
    "barbell_weighted": graph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)],
                              [1, 1, 1, 1, 1, 1, 5.0]),
    "disjoint_pairs": graph(6, [(0, 1), (2, 3), (4, 5)]),
    "triangle_plus_path": graph(6, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5)]),
}


def test_partition_count_is_bell_number():
    assert sum(1 for _ in set_partitions(list(range(6)))) == 203


@pytest.mark.parametrize("name", sorted(SIX_NODE))
def test_matches_exhaustive_search(name):
    g = SIX_NODE[name]
    found = modularity(g.adj, louvain(g, seed=0))
    assert found == pytest.approx(best_modularity(g), abs=1e-12)


def random_six_node(seed):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(6, k=1)
    keep = rng.random(len(iu)) < 0.45
    return Graph.from_edges(6, iu[keep], ju[keep]) if keep.any() else None


RANDOM_SIX_NODE = [g for g in map(random_six_node, range(300)) if g is not None]


def test_matches_exhaustive_search_on_random_corpus():
    misses = [i for i, g in enumerate(RANDOM_SIX_NODE)
              if modularity(g.adj, louvain(g, seed=0)) < best_modularity(g) - 1e-12]
    assert misses == []


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_never_worse_than_trivial_partitions(seed, n):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < 0.4
    if not keep.any():
        return
    g = Graph.from_edges(n, iu[keep], ju[keep])
    q = modularity(g.adj, louvain(g, seed=seed))
    assert q >= modularity(g.adj, np.zeros(n)) - 1e-12
    assert q >= modularity(g.adj, np.arange(n)) - 1e-12


def test_modularity_matches_networkx():
    g = SIX_NODE["triangle_plus_path"]
    comm = np.array([0, 0, 0, 1, 1, 1])
    ref = nx.algorithms.community.modularity(nx.from_scipy_sparse_array(g.adj), [{0, 1, 2}, {3, 4, 5}])
    assert modularity(g.adj, comm) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("sizes", [(3, 3), (4, 5, 6), (5, 5, 5, 5)])
def test_disjoint_cliques_recovered_exactly(sizes):
    us, vs, off = [], [], 0
    for s in sizes:
        u, v = np.triu_indices(s, k=1)
        us.append(u + off)
        vs.append(v + off)
        off += s
    g = Graph.from_edges(off, np.concatenate(us), np.concatenate(vs))
    comm = louvain(g, seed=3)
    assert comm.tolist() == np.repeat(np.arange(len(sizes)), sizes).tolist()


def test_output_is_first_appearance_labeled():
    g, _ = gen_sbm((10, 10, 10), 0.9, 0.01, seed=2)
    comm = louvain(g, seed=0)
    seen = []
    for c in comm:
        if c not in seen:
            seen.append(c)
    assert seen == list(range(len(seen)))


def test_sbm_blocks(rng):
    for seed in range(5):
        g, blocks = gen_sbm((20, 20, 20), 0.8, 0.03, seed=seed)
        comm = louvain(g, seed=seed)
        assert len(np.unique(comm)) == 3
        assert all(len(np.unique(comm[blocks == b])) == 1 for b in range(3))


def test_deterministic_for_seed():
    g, _ = gen_sbm((15, 15), 0.5, 0.1, seed=4)
    assert np.array_equal(louvain(g, seed=9), louvain(g, seed=9))


def test_edgeless_graph_is_singletons():
    g = Graph.from_edges(4, [], [])
    assert louvain(g).tolist() == [0, 1, 2, 3]

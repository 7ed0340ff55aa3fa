import numpy as np
import pytest
from hypothesis import settings

from smgrl.graph import Graph, NodeTable

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_graph(n, p, rng, weighted=False):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    w = rng.uniform(0.5, 2.0, keep.sum()) if weighted else None
    return Graph.from_edges(n, iu[keep], ju[keep], w)


def random_table(n, f, n_classes, rng, n_train=None, n_val=None):
    x = rng.standard_normal((n, f))
    y = rng.integers(0, n_classes, n)
    y[:n_classes] = np.arange(n_classes)
    order = rng.permutation(n)
    n_train = n_train or max(n // 3, 1)
    n_val = n_val or max(n // 4, 1)
    split = np.full(n, "test", dtype=object)
    split[order[:n_train]] = "train"
    split[order[n_train:n_train + n_val]] = "val"
    return NodeTable.from_split(x, y, split)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def triangle():
    return Graph.from_edges(3, [0, 1, 0], [1, 2, 2])


@pytest.fixture
def two_triangles():
    return Graph.from_edges(6, [0, 1, 0, 3, 4, 3, 2], [1, 2, 2, 4, 5, 5, 3])

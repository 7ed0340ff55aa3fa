import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from smgrl.graph import Graph, GraphError, laplacian, smallest_eigenpairs, validate
from smgrl.io import DatasetError, import_linqs, load_checkpoint, load_graph, save_checkpoint, save_graph

from conftest import random_graph, random_table


def test_from_edges_symmetric(triangle):
    a = triangle.adj.toarray()
    assert np.array_equal(a, a.T)
    assert triangle.n_edges == 3
    assert list(triangle.neighbors(0)) == [1, 2]


@pytest.mark.parametrize("u,v,w,msg", [
    ([0], [3], None, "out of range"),
    ([1], [1], None, "self-loop"),
    ([0, 1], [1, 0], None, "duplicates"),
    ([0], [1], [0.0], "non-positive"),
])
def test_from_edges_rejects(u, v, w, msg):
    with pytest.raises(GraphError, match=msg):
        Graph.from_edges(3, u, v, w)


def test_directed_collapses_with_max_weight():
    g = Graph.from_edges(2, [0, 1], [1, 0], [1.0, 3.0], directed=True)
    assert g.n_edges == 1
    assert g.adj[0, 1] == 3.0


def test_edge_list_canonical(rng):
    g = random_graph(20, 0.3, rng, weighted=True)
    u, v, w = g.edge_list()
    assert np.all(u < v)
    rebuilt = Graph.from_edges(20, u, v, w)
    assert (rebuilt.adj != g.adj).nnz == 0


def test_laplacian_rows_sum_to_zero(rng):
    g = random_graph(30, 0.2, rng, weighted=True)
    lap = laplacian(g)
    assert np.allclose(lap.sum(axis=1), 0)
    norm = laplacian(g, normalized=True).toarray()
    assert np.all(np.linalg.eigvalsh(norm) < 2 + 1e-9)


def test_eigenpairs_dense_vs_lanczos(rng):
    g = random_graph(120, 0.08, rng, weighted=True)
    lap = laplacian(g)
    dense = smallest_eigenpairs(lap, 6, method="dense")
    lanczos = smallest_eigenpairs(lap, 6, method="lanczos")
    ref = np.linalg.eigvalsh(lap.toarray())[:6]
    assert np.allclose(dense.values, ref, atol=1e-10)
    assert np.allclose(lanczos.values, ref, atol=1e-7)
    # residual check rather than vector comparison; eigenvectors are sign/rotation ambiguous
    r = lap @ lanczos.vectors - lanczos.vectors * lanczos.values
    assert np.abs(r).max() < 1e-6


def test_eigenpairs_rejects_bad_k(triangle):
    with pytest.raises(GraphError):
        smallest_eigenpairs(laplacian(triangle), 4)


@given(st.integers(2, 25), st.floats(0.05, 0.9), st.integers(0, 10_000))
def test_laplacian_psd(n, p, seed):
    g = random_graph(n, p, np.random.default_rng(seed))
    vals = np.linalg.eigvalsh(laplacian(g).toarray())
    assert vals.min() > -1e-10


def test_container_round_trip(tmp_path, rng):
    g = random_graph(25, 0.2, rng, weighted=True)
    t = random_table(25, 4, 3, rng)
    save_graph(g, t, tmp_path / "ds")
    g2, t2 = load_graph(tmp_path / "ds")
    assert (g2.adj != g.adj).nnz == 0
    assert np.array_equal(t2.features, t.features)
    assert np.array_equal(t2.labels, t.labels)
    assert np.array_equal(t2.split_names(), t.split_names())


def _corrupt(path, name, text):
    (path / name).write_text(text, encoding="utf-8")


@pytest.mark.parametrize("name,text,msg", [
    ("edges.tsv", "0\t1\n1\t0\n", "row 2: duplicate of row 1"),
    ("edges.tsv", "0\t0\n", "row 1: self-loop"),
    ("edges.tsv", "0\tx\n", "row 1: malformed"),
    ("edges.tsv", "0\t1\t-2\n", "non-positive"),
    ("split.tsv", "train\nbogus\ntest\n", "row 2: unknown split"),
    ("labels.tsv", "0\n1\n", "labels.tsv: 2 rows"),
])
def test_container_errors_name_the_row(tmp_path, triangle, name, text, msg):
    t = random_table(3, 2, 2, np.random.default_rng(0), n_train=1, n_val=1)
    save_graph(triangle, t, tmp_path)
    _corrupt(tmp_path, name, text)
    with pytest.raises(DatasetError, match=msg):
        load_graph(tmp_path)


def test_missing_container(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_graph(tmp_path / "nope")


def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal(5)}
    save_checkpoint(tensors, tmp_path / "m.bin")
    back = load_checkpoint(tmp_path / "m.bin")
    assert set(back) == {"a", "b"}
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])


def test_validate_flags_asymmetry():
    g = Graph(sp.csr_matrix(np.array([[0, 1.0], [0, 0]])))
    assert validate(g)


def test_import_linqs(tmp_path):
    content = tmp_path / "toy.content"
    cites = tmp_path / "toy.cites"
    rows = [f"p{i}\t" + "\t".join(str((i + j) % 2) for j in range(5)) + f"\t{'AB'[i % 2]}" for i in range(12)]
    content.write_text("\n".join(rows) + "\n")
    cites.write_text("p0\tp1\np1\tp0\np2\tp3\np4\tmissing\n")
    path = import_linqs(content, cites, tmp_path / "out", per_class_train=2, n_val=2, n_test=4)
    g, t = load_graph(path)
    assert g.n_nodes == 12 and g.n_edges == 2
    assert t.n_classes == 2
    assert t.train_mask.sum() == 4 and t.val_mask.sum() == 2 and t.test_mask.sum() == 4

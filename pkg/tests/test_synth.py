import math

import numpy as np
import pytest

from smgrl.synth import (SynthSpec, gen_chain, gen_circular_ladder, gen_erdos_renyi, gen_nws, gen_sbm, gen_star,
                         generate)


def within_sigma(observed, trials, p, k=4):
    mean = trials * p
    return abs(observed - mean) <= k * math.sqrt(trials * p * (1 - p))


@pytest.mark.parametrize("seed", range(5))
def test_erdos_renyi_edge_count(seed):
    g = gen_erdos_renyi(200, 0.05, seed)
    assert within_sigma(g.n_edges, 200 * 199 // 2, 0.05)


@pytest.mark.parametrize("seed", range(5))
def test_sbm_edge_counts(seed):
    sizes = (20, 30, 40)
    g, blocks = gen_sbm(sizes, 0.5, 0.02, seed)
    u, v, _ = g.edge_list()
    inside = int(np.sum(blocks[u] == blocks[v]))
    pairs_in = sum(s * (s - 1) // 2 for s in sizes)
    pairs_out = 90 * 89 // 2 - pairs_in
    assert within_sigma(inside, pairs_in, 0.5)
    assert within_sigma(g.n_edges - inside, pairs_out, 0.02)


def test_nws_edge_count():
    n, k, p = 400, 6, 0.1
    counts = [gen_nws(n, k, p, seed).n_edges - n * (k // 2) for seed in range(5)]
    for c in counts:
        assert within_sigma(c, n * (k // 2), p)


def test_deterministic_structure():
    assert gen_circular_ladder(10).n_edges == 30
    assert np.array_equal(gen_star(5).degrees(), [5, 1, 1, 1, 1, 1])
    a, b = gen_erdos_renyi(50, 0.1, 3), gen_erdos_renyi(50, 0.1, 3)
    assert (a.adj != b.adj).nnz == 0


def test_chain_layout():
    g, t = gen_chain(num_chains=10, length=4, n_features=6, seed=1, n_train=4, n_val=4, n_test=6)
    assert g.n_nodes == 40 and g.n_edges == 30
    last = np.arange(10) * 4 + 3
    code = t.features[:, :2]
    assert np.array_equal(code[last].argmax(axis=1), t.labels[last])
    assert np.all(code[last].sum(axis=1) == 1)
    others = np.setdiff1d(np.arange(40), last)
    assert not code[others].any()
    # every chain shares a single label
    assert np.all(t.labels.reshape(10, 4) == t.labels.reshape(10, 4)[:, :1])
    assert (t.train_mask.sum(), t.val_mask.sum(), t.test_mask.sum()) == (4, 4, 6)
    assert np.bincount(t.labels[t.train_mask]).tolist() == [2, 2]


def test_chain_deterministic():
    a = gen_chain(num_chains=6, length=3, n_features=4, seed=5, n_train=2, n_val=2, n_test=2)
    b = gen_chain(num_chains=6, length=3, n_features=4, seed=5, n_train=2, n_val=2, n_test=2)
    assert np.array_equal(a[1].features, b[1].features)
    assert np.array_equal(a[1].split_names(), b[1].split_names())


def test_generate_tables():
    g, t = generate(SynthSpec("sbm", {"sizes": [5, 5], "p_in": 0.9, "p_out": 0.1}, 0))
    assert t.n_classes == 2 and t.features.shape == (10, 1)
    g, t = generate(SynthSpec("star", {"n_leaves": 4}))
    assert np.all(t.labels == -1)


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec("torus")
    with pytest.raises(ValueError):
        SynthSpec("erdos_renyi", {"p": 1.5})
    with pytest.raises(ValueError):
        gen_chain(num_chains=3)
    with pytest.raises(ValueError):
        gen_chain(length=1)

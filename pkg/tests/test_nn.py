import math

import numpy as np
import pytest

from smgrl import nn
from smgrl.graph import Graph, NodeTable
from smgrl.pipeline import CombineSpec, EmbeddingSet, Head, head_loss_and_grads, init_head

from conftest import random_graph, random_table

EPS = 1e-4
SEEDS = range(20)


def numeric_grad(loss_fn, params):
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += EPS
            minus[name][idx] -= EPS
            g[idx] = (loss_fn(plus) - loss_fn(minus)) / (2 * EPS)
        out[name] = g
    return out


def rel_err(a, b):
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else np.linalg.norm(a - b) / denom


def jitter(tensors, rng):
    # nonzero biases keep ReLU inputs away from the kink
    return {k: v + 0.1 * rng.standard_normal(v.shape) for k, v in tensors.items()}


def problem(seed, n=9, f=4, c=3):
    rng = np.random.default_rng(seed)
    g = random_graph(n, 0.35, rng, weighted=True)
    t = random_table(n, f, c, rng)
    return rng, g, t


@pytest.mark.parametrize("arch,layers", [("sage", 1), ("sage", 2), ("appnp", 1)])
@pytest.mark.parametrize("seed", SEEDS)
def test_encoder_gradients(arch, layers, seed):
    rng, g, t = problem(seed)
    enc = nn.init_encoder(arch, 4, 5, rng, layers, hidden=3)
    model = nn.Model(enc, nn.init_classifier(5, 3, rng))
    params = jitter(model.tensors(), rng)

    def loss(p):
        return nn.loss_and_grads(model.with_tensors(p), g, t.features, t.labels, t.train_mask)[0]

    _, analytic = nn.loss_and_grads(model.with_tensors(params), g, t.features, t.labels, t.train_mask)
    numeric = numeric_grad(loss, params)
    assert set(analytic) == set(params)
    for k in params:
        assert rel_err(analytic[k], numeric[k]) < 1e-4, k


@pytest.mark.parametrize("method,scalar", [("weighted", False), ("weighted", True), ("mean", False),
                                           ("concat", False)])
@pytest.mark.parametrize("seed", SEEDS)
def test_head_gradients(method, scalar, seed):
    rng = np.random.default_rng(seed)
    n, d, levels, c = 10, 4, 3, 3
    lifted = [rng.standard_normal((n, d)) for _ in range(levels)]
    e = EmbeddingSet(lifted, lifted)
    labels = rng.integers(0, c, n)
    mask = rng.random(n) < 0.6
    mask[0] = True
    head = init_head(e, CombineSpec(method, scalar), c, rng)
    params = jitter(head.tensors(), rng)

    def loss(p):
        return head_loss_and_grads(head.with_tensors(p), e, labels, mask)[0]

    _, analytic = head_loss_and_grads(head.with_tensors(params), e, labels, mask)
    numeric = numeric_grad(loss, params)
    for k in params:
        assert rel_err(analytic[k], numeric[k]) < 1e-4, k


def dense_sage(layers, a, x):
    h = x
    for i, layer in enumerate(layers):
        z = h @ layer["w_self"] + (a @ h) @ layer["w_neigh"] + layer["bias"]
        h = np.maximum(z, 0) if i < len(layers) - 1 else z
    return h


def dense_appnp(p, a, x):
    deg = a.sum(axis=1)
    inv = np.array([1 / math.sqrt(v) if v > 0 else 0.0 for v in deg])
    a_hat = inv[:, None] * a * inv[None, :]
    z0 = x @ p.w + p.bias
    z = z0
    for _ in range(p.k_hops):
        z = (1 - p.alpha) * a_hat @ z + p.alpha * z0
    return z


@pytest.mark.parametrize("seed", range(10))
def test_forward_matches_dense(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 51))
    g = random_graph(n, 0.2, rng, weighted=True)
    x = rng.standard_normal((n, 6))
    a = g.adj.toarray()
    for layers in (1, 2):
        p = nn.SageParams(tuple(jitter(l, rng) for l in nn.init_sage(6, 4, layers, rng).layers))
        assert np.abs(nn.sage_forward(p, g, x) - dense_sage(p.layers, a, x)).max() < 1e-10
    p = nn.init_appnp(6, 4, rng)
    p = nn.AppnpParams(p.w, rng.standard_normal(4))
    assert np.abs(nn.appnp_forward(p, g, x) - dense_appnp(p, a, x)).max() < 1e-10


def test_sage_on_triangle_by_hand(triangle):
    x = np.array([[1.0], [2.0], [3.0]])
    p = nn.SageParams(({"w_self": np.array([[2.0]]), "w_neigh": np.array([[1.0]]), "bias": np.array([0.5])},))
    # node 0: 2*1 + (2+3) + 0.5
    assert nn.sage_forward(p, triangle, x).ravel().tolist() == [7.5, 8.5, 9.5]


def test_appnp_alpha_one_and_edgeless(rng):
    g = random_graph(8, 0.4, rng)
    x = rng.standard_normal((8, 3))
    w, b = rng.standard_normal((3, 2)), rng.standard_normal(2)
    assert np.allclose(nn.appnp_forward(nn.AppnpParams(w, b, alpha=1.0), g, x), x @ w + b, atol=1e-14)
    empty = Graph.from_edges(8, [], [])
    out = nn.appnp_forward(nn.AppnpParams(w, b, alpha=0.5), empty, x)
    assert np.allclose(out, 0.5 * (x @ w + b), atol=1e-14)


def test_uniform_cross_entropy_is_log_c():
    logits = np.zeros((5, 7))
    loss = nn.masked_cross_entropy(logits, np.arange(5), np.ones(5, dtype=bool))
    assert loss == pytest.approx(math.log(7), abs=1e-12)


def test_cross_entropy_rejects_empty_mask():
    with pytest.raises(ValueError):
        nn.masked_cross_entropy(np.zeros((2, 2)), np.zeros(2, dtype=int), np.zeros(2, dtype=bool))


def test_rmsprop_first_step():
    cfg = nn.TrainConfig()
    out, _ = nn.rmsprop_step(nn.RMSPropState(), {"p": np.array([0.0])}, {"p": np.array([1.0])}, cfg)
    # lr * g / (sqrt(0.01 g^2) + eps)
    assert out["p"][0] == pytest.approx(-0.01 / (0.1 + 1e-8), abs=1e-15)
    assert out["p"][0] == pytest.approx(-0.0999999, abs=1e-7)


def test_rmsprop_descends_quadratic():
    cfg = nn.TrainConfig()
    params, state = {"p": np.array([1.0, -2.0])}, nn.RMSPropState()
    for _ in range(100):
        params, state = nn.rmsprop_step(state, params, {"p": params["p"]}, cfg)
    # step size is about lr per iteration, so 100 steps reach the bottom from distance <= 1
    assert abs(params["p"][0]) < 0.05
    assert abs(params["p"][1]) < 1.1


def test_patience_stops_exactly():
    cfg = nn.TrainConfig(patience=20, max_epochs=500)
    params = {"p": np.array([1.0])}
    _, hist = nn.fit(params, lambda p: (1.0, {"p": np.array([1.0])}), lambda p: 1.0, cfg)
    assert hist.best_epoch == 0
    assert hist.epochs == 21


def test_fit_returns_best_parameters():
    cfg = nn.TrainConfig(patience=3, max_epochs=50)
    vals = iter([5.0, 3.0, 4.0, 4.0, 4.0, 4.0])
    seen = []

    def val(p):
        seen.append(p["p"].copy())
        return next(vals)

    best, hist = nn.fit({"p": np.array([0.0])}, lambda p: (0.0, {"p": np.array([1.0])}), val, cfg)
    assert hist.best_epoch == 1
    assert np.array_equal(best["p"], seen[1])


def separable():
    # two cliques, class = clique, features carry a weak class signal
    u, v = np.triu_indices(6, k=1)
    g = Graph.from_edges(12, np.concatenate([u, u + 6]), np.concatenate([v, v + 6]))
    y = np.repeat([0, 1], 6)
    x = np.column_stack([y * 1.0 - 0.5, np.ones(12)])
    split = np.array(["train", "val", "test", "test", "test", "test"] * 2)
    return g, NodeTable.from_split(x, y, split)


@pytest.mark.parametrize("arch", nn.ARCHS)
def test_separable_toy(arch):
    g, t = separable()
    model, hist = nn.train(arch, g, t, nn.TrainConfig(seed=3, max_epochs=300, patience=50), d=4)
    pred = nn.predict(nn.classify(model.classifier, nn.encode(model.encoder, g, t.features)))
    assert np.array_equal(pred, t.labels)


def test_training_is_deterministic():
    g, t = separable()
    cfg = nn.TrainConfig(seed=11, max_epochs=40)
    m1, h1 = nn.train("sage", g, t, cfg, d=4, n_layers=2)
    m2, h2 = nn.train("sage", g, t, cfg, d=4, n_layers=2)
    assert h1.train_loss == h2.train_loss
    for k, v in m1.tensors().items():
        assert np.array_equal(v, m2.tensors()[k])


def test_glorot_bounds(rng):
    w = nn.glorot(30, 10, rng)
    assert np.abs(w).max() <= math.sqrt(6 / 40)


def test_bad_configs():
    with pytest.raises(ValueError):
        nn.TrainConfig(patience=0)
    with pytest.raises(ValueError):
        nn.init_encoder("gat", 3, 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.AppnpParams(np.zeros((2, 2)), np.zeros(2), alpha=0.0)


@pytest.mark.parametrize("arch,layers", [("sage", 1), ("sage", 2), ("appnp", 1)])
def test_sparse_inputs_match_dense(arch, layers):
    rng = np.random.default_rng(3)
    g = random_graph(40, 0.1, rng, weighted=True)
    x = (rng.random((40, 60)) < 0.03) * rng.standard_normal((40, 60))
    xs, agg0 = nn.prepare_features(g, x)
    assert not isinstance(xs, np.ndarray)
    t = random_table(40, 60, 3, rng)
    model = nn.Model(nn.init_encoder(arch, 60, 5, rng, layers, 4), nn.init_classifier(5, 3, rng))
    dense = nn._step(model, g, x, t.labels, t.train_mask)
    sparse = nn._step(model, g, xs, t.labels, t.train_mask, agg0 if arch == "sage" else None)
    assert abs(dense[0] - sparse[0]) < 1e-12
    for k in dense[1]:
        assert np.allclose(dense[1][k], sparse[1][k], rtol=0, atol=1e-12)


def test_dense_inputs_stay_dense():
    rng = np.random.default_rng(0)
    g = random_graph(10, 0.3, rng, weighted=False)
    xs, _ = nn.prepare_features(g, rng.standard_normal((10, 4)))
    assert isinstance(xs, np.ndarray)

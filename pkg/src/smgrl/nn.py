"""Small full-batch neural engine with hand-written reverse-mode gradients.

Encoders map ``(graph, features)`` to node embeddings:

* ``sage``: ``H = act(X W_self + (A X) W_neigh + b)`` per layer, weighted-sum
  neighbor aggregation without normalization, ReLU between layers and an
  identity output.
* ``appnp``: ``Z0 = X W + b`` followed by ``k`` personalized-PageRank hops
  ``Z <- (1 - alpha) A_hat Z + alpha Z0`` with the symmetric-normalized
  adjacency.

A linear classifier turns embeddings into logits; the loss is masked mean
cross-entropy. Parameters are plain dicts of float64 arrays so the optimizer,
checkpointing and gradient checks can treat every model the same way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .graph import Graph

ARCHS = ("sage", "appnp")

Tensors = dict[str, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    decay: float = 0.99
    eps: float = 1e-8
    patience: int = 20
    max_epochs: int = 500
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass(frozen=True)
class SageParams:
    """One dict per layer with ``w_self``, ``w_neigh`` and ``bias``."""

    layers: tuple[dict, ...]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def out_dim(self) -> int:
        return self.layers[-1]["bias"].shape[0]

    def tensors(self) -> Tensors:
        return {f"sage.{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.items()}

    def with_tensors(self, t: Tensors) -> "SageParams":
        return SageParams(tuple({k: t[f"sage.{i}.{k}"] for k in layer} for i, layer in enumerate(self.layers)))


@dataclass(frozen=True)
class AppnpParams:
    w: np.ndarray
    bias: np.ndarray
    k_hops: int = 3
    alpha: float = 0.5

    def __post_init__(self):
        if self.k_hops < 1:
            raise ValueError("k_hops must be at least 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @property
    def out_dim(self) -> int:
        return self.bias.shape[0]

    def tensors(self) -> Tensors:
        return {"appnp.w": self.w, "appnp.bias": self.bias}

    def with_tensors(self, t: Tensors) -> "AppnpParams":
        return AppnpParams(t["appnp.w"], t["appnp.bias"], self.k_hops, self.alpha)


@dataclass(frozen=True)
class ClassifierParams:
    w: np.ndarray
    bias: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.bias.shape[0]

    def tensors(self, prefix: str = "clf") -> Tensors:
        return {f"{prefix}.w": self.w, f"{prefix}.bias": self.bias}

    def with_tensors(self, t: Tensors, prefix: str = "clf") -> "ClassifierParams":
        return ClassifierParams(t[f"{prefix}.w"], t[f"{prefix}.bias"])


Encoder = SageParams | AppnpParams


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_sage(f_in: int, d: int, n_layers: int, rng: np.random.Generator,
              hidden: int | None = None) -> SageParams:
    if n_layers not in (1, 2):
        raise ValueError("SAGE encoder supports 1 or 2 layers")
    hidden = d if hidden is None else hidden
    dims = [f_in] + [hidden] * (n_layers - 1) + [d]
    layers = []
    for a, b in zip(dims[:-1], dims[1:]):
        layers.append({"w_self": glorot(a, b, rng), "w_neigh": glorot(a, b, rng), "bias": np.zeros(b)})
    return SageParams(tuple(layers))


def init_appnp(f_in: int, d: int, rng: np.random.Generator, k_hops: int = 3,
               alpha: float = 0.5) -> AppnpParams:
    return AppnpParams(glorot(f_in, d, rng), np.zeros(d), k_hops, alpha)


def init_classifier(d_in: int, n_classes: int, rng: np.random.Generator) -> ClassifierParams:
    return ClassifierParams(glorot(d_in, n_classes, rng), np.zeros(n_classes))


def init_encoder(arch: str, f_in: int, d: int, rng: np.random.Generator, n_layers: int = 1,
                 hidden: int | None = None) -> Encoder:
    if arch == "sage":
        return init_sage(f_in, d, n_layers, rng, hidden)
    if arch == "appnp":
        return init_appnp(f_in, d, rng)
    raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHS}")


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """``D^-1/2 W D^-1/2``; rows of isolated nodes are zero."""
    deg = g.degrees()
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 1.0 / np.sqrt(deg[nz])
    d = sp.diags(inv)
    return sp.csr_matrix(d @ g.adj @ d)


SPARSE_DENSITY = 0.1


def _check_rows(g: Graph, x: np.ndarray):
    if x.ndim != 2 or x.shape[0] != g.n_nodes:
        raise ValueError(f"features have shape {x.shape}, graph has {g.n_nodes} nodes")


def prepare_features(g: Graph, x) -> tuple:
    """Input features plus their first-hop aggregate, both sparse when mostly zero.

    The first SAGE layer's neighbor sum does not depend on the parameters, so
    a training loop computes it once instead of every epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_rows(g, x)
    if x.size and np.count_nonzero(x) < SPARSE_DENSITY * x.size:
        x = sp.csr_matrix(x)
    return x, g.adj @ x


def _sage_forward(p: SageParams, g: Graph, x, agg0=None):
    _check_rows(g, x)
    cache = []
    h = x
    for i, layer in enumerate(p.layers):
        if h.shape[1] != layer["w_self"].shape[0]:
            raise ValueError(f"layer {i} expects {layer['w_self'].shape[0]} inputs, got {h.shape[1]}")
        agg = agg0 if i == 0 and agg0 is not None else g.adj @ h
        z = h @ layer["w_self"] + agg @ layer["w_neigh"] + layer["bias"]
        cache.append((h, agg, z))
        h = np.maximum(z, 0.0) if i < p.n_layers - 1 else z
    return h, cache


def _sage_backward(p: SageParams, g: Graph, cache, grad_out: np.ndarray) -> Tensors:
    grads: Tensors = {}
    dz = grad_out
    for i in reversed(range(p.n_layers)):
        h, agg, z = cache[i]
        if i < p.n_layers - 1:
            dz = dz * (z > 0)
        layer = p.layers[i]
        grads[f"sage.{i}.w_self"] = h.T @ dz
        grads[f"sage.{i}.w_neigh"] = agg.T @ dz
        grads[f"sage.{i}.bias"] = dz.sum(axis=0)
        if i > 0:
            # adjacency is symmetric, so A^T = A
            dz = dz @ layer["w_self"].T + g.adj @ (dz @ layer["w_neigh"].T)
    return grads


def _appnp_forward(p: AppnpParams, g: Graph, x: np.ndarray, a_hat: sp.csr_matrix | None = None):
    _check_rows(g, x)
    if x.shape[1] != p.w.shape[0]:
        raise ValueError(f"APPNP expects {p.w.shape[0]} inputs, got {x.shape[1]}")
    a_hat = normalized_adjacency(g) if a_hat is None else a_hat
    z0 = x @ p.w + p.bias
    z = z0
    for _ in range(p.k_hops):
        z = (1 - p.alpha) * (a_hat @ z) + p.alpha * z0
    return z, (x, a_hat)


def _appnp_backward(p: AppnpParams, cache, grad_out: np.ndarray) -> Tensors:
    x, a_hat = cache
    dz = grad_out
    dz0 = np.zeros_like(grad_out)
    for _ in range(p.k_hops):
        dz0 += p.alpha * dz
        dz = (1 - p.alpha) * (a_hat.T @ dz)
    dz0 += dz
    return {"appnp.w": x.T @ dz0, "appnp.bias": dz0.sum(axis=0)}


def sage_forward(p: SageParams, g: Graph, x: np.ndarray) -> np.ndarray:
    return _sage_forward(p, g, np.asarray(x, dtype=np.float64))[0]


def appnp_forward(p: AppnpParams, g: Graph, x: np.ndarray) -> np.ndarray:
    return _appnp_forward(p, g, np.asarray(x, dtype=np.float64))[0]


def encode(p: Encoder, g: Graph, x: np.ndarray) -> np.ndarray:
    if isinstance(p, SageParams):
        return sage_forward(p, g, x)
    return appnp_forward(p, g, x)


def encoder_forward(p: Encoder, g: Graph, x, agg0=None):
    """Forward pass returning ``(embeddings, backward)``; ``backward(dH)`` gives encoder grads.

    ``x`` may be sparse; ``agg0`` is an optional precomputed ``A @ x`` (SAGE only).
    """
    if not sp.issparse(x):
        x = np.asarray(x, dtype=np.float64)
    if isinstance(p, SageParams):
        h, cache = _sage_forward(p, g, x, agg0)
        return h, lambda dh: _sage_backward(p, g, cache, dh)
    h, cache = _appnp_forward(p, g, x)
    return h, lambda dh: _appnp_backward(p, cache, dh)


def classify(c: ClassifierParams, h: np.ndarray) -> np.ndarray:
    if h.ndim != 2 or h.shape[1] != c.w.shape[0]:
        raise ValueError(f"classifier expects {c.w.shape[0]} input columns, got shape {h.shape}")
    return h @ c.w + c.bias


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def masked_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    return cross_entropy_grad(logits, labels, mask)[0]


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over masked rows and its gradient w.r.t. the logits."""
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError("mask selects no nodes")
    y = labels[idx]
    if np.any(y < 0) or np.any(y >= logits.shape[1]):
        raise ValueError("masked node has a label outside [0, n_classes)")
    logp = _log_softmax(logits[idx])
    loss = -float(logp[np.arange(len(idx)), y].mean())
    grad = np.zeros_like(logits)
    probs = np.exp(logp)
    probs[np.arange(len(idx)), y] -= 1.0
    grad[idx] = probs / len(idx)
    return loss, grad


def predict(logits: np.ndarray) -> np.ndarray:
    return logits.argmax(axis=1)


@dataclass(frozen=True)
class Model:
    """Encoder plus linear classifier, the unit trained end to end."""

    encoder: Encoder
    classifier: ClassifierParams

    def tensors(self) -> Tensors:
        return {**self.encoder.tensors(), **self.classifier.tensors()}

    def with_tensors(self, t: Tensors) -> "Model":
        return Model(self.encoder.with_tensors(t), self.classifier.with_tensors(t))


def _step(model: Model, g: Graph, x, labels, mask, agg0=None):
    h, backward = encoder_forward(model.encoder, g, x, agg0)
    logits = classify(model.classifier, h)
    loss, dlogits = cross_entropy_grad(logits, labels, mask)
    grads = backward(dlogits @ model.classifier.w.T)
    grads["clf.w"] = h.T @ dlogits
    grads["clf.bias"] = dlogits.sum(axis=0)
    return loss, grads, logits


def loss_and_grads(model: Model, g: Graph, x: np.ndarray, labels: np.ndarray,
                   mask: np.ndarray) -> tuple[float, Tensors]:
    return _step(model, g, x, labels, mask)[:2]


def gradients(model: Model, g: Graph, x: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> Tensors:
    return loss_and_grads(model, g, x, labels, mask)[1]


@dataclass
class RMSPropState:
    sq: Tensors = field(default_factory=dict)


def rmsprop_step(state: RMSPropState, params: Tensors, grads: Tensors,
                 cfg: TrainConfig) -> tuple[Tensors, RMSPropState]:
    out, sq = {}, {}
    for name, p in params.items():
        g = grads[name]
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p
        s = state.sq.get(name)
        if s is None:
            s = np.zeros_like(p)
        elif s.shape != p.shape:
            raise ValueError(f"optimizer state for {name} has shape {s.shape}, param {p.shape}")
        s = cfg.decay * s + (1 - cfg.decay) * g * g
        out[name] = p - cfg.lr * g / (np.sqrt(s) + cfg.eps)
        sq[name] = s
    return out, RMSPropState(sq)


@dataclass(frozen=True)
class History:
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def rows(self) -> list[tuple[int, float, float]]:
        return list(zip(range(self.epochs), self.train_loss, self.val_loss))


def fit(params: Tensors, train_step: Callable[[Tensors], tuple[float, Tensors]],
        val_loss: Callable[[Tensors], float], cfg: TrainConfig) -> tuple[Tensors, History]:
    """Full-batch RMSProp with early stopping on validation loss.

    Epoch ``e`` scores the current parameters on both losses and then takes a
    step. Training stops once ``patience`` epochs pass without a strictly
    lower validation loss; the parameters of the best epoch are returned.
    """
    state = RMSPropState()
    best, best_loss, best_epoch = dict(params), math.inf, 0
    train_hist, val_hist = [], []
    for epoch in range(cfg.max_epochs):
        loss, grads = train_step(params)
        vl = val_loss(params)
        train_hist.append(loss)
        val_hist.append(vl)
        if vl < best_loss:
            best, best_loss, best_epoch = dict(params), vl, epoch
        elif epoch - best_epoch >= cfg.patience:
            break
        params, state = rmsprop_step(state, params, grads, cfg)
    return best, History(train_hist, val_hist, best_epoch)


def _require_masks(table) -> None:
    if not table.train_mask.any():
        raise ValueError("training mask is empty")
    if not table.val_mask.any():
        raise ValueError("validation mask is empty")


def train(arch: str, g: Graph, table, cfg: TrainConfig, d: int = 16, n_layers: int = 1,
          hidden: int | None = None, n_classes: int | None = None) -> tuple[Model, History]:
    """Train encoder and classifier jointly on one graph's train/val masks."""
    _require_masks(table)
    rng = np.random.default_rng(cfg.seed)
    x, agg0 = prepare_features(g, table.features)
    n_classes = table.n_classes if n_classes is None else n_classes
    encoder = init_encoder(arch, x.shape[1], d, rng, n_layers, hidden)
    model = Model(encoder, init_classifier(d, n_classes, rng))
    labels = table.labels
    agg0 = agg0 if arch == "sage" else None
    # fit scores val at the params it just stepped from, so the step's logits are reused
    last = {}

    def step(t: Tensors):
        loss, grads, logits = _step(model.with_tensors(t), g, x, labels, table.train_mask, agg0)
        last["params"], last["logits"] = t, logits
        return loss, grads

    def val(t: Tensors) -> float:
        if last.get("params") is t:
            logits = last["logits"]
        else:
            m = model.with_tensors(t)
            logits = classify(m.classifier, encoder_forward(m.encoder, g, x, agg0)[0])
        return masked_cross_entropy(logits, labels, table.val_mask)

    best, hist = fit(model.tensors(), step, val, cfg)
    return model.with_tensors(best), hist

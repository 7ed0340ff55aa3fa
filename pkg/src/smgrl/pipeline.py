"""End-to-end multi-resolution pipeline.

Coarsen the graph, train one encoder on the coarsest level, run that encoder
on every level, copy each level's embeddings down to the original nodes, and
fit a classifier on a combination of the copies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .coarsen import Hierarchy, Level, ancestor_map, build_hierarchy
from .graph import Graph, NodeTable
from .metrics import accuracy, macro_f1

COMBINE_METHODS = ("mean", "weighted", "concat")


def derive_seed(seed: int, *tags: int) -> int:
    """Independent child seed for a numbered sub-task (level, subgraph, head)."""
    # the tag count keeps (s, 1) and (s, 1, 0) apart; SeedSequence ignores trailing zeros
    return int(np.random.SeedSequence([seed, len(tags), *tags]).generate_state(1)[0])


@dataclass(frozen=True)
class CombineSpec:
    method: str = "weighted"
    scalar_weights: bool = False

    def __post_init__(self):
        if self.method not in COMBINE_METHODS:
            raise ValueError(f"unknown combine method {self.method!r}; choose from {COMBINE_METHODS}")


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-level embeddings ``levels[l]`` and their copies on the original nodes ``lifted[l]``."""

    levels: list[np.ndarray]
    lifted: list[np.ndarray]

    @property
    def n_levels(self) -> int:
        return len(self.lifted)

    @property
    def dim(self) -> int:
        return self.lifted[0].shape[1]

    def stack(self) -> np.ndarray:
        return np.stack(self.lifted)


def infer_levels(encoder: nn.Encoder, h: Hierarchy) -> list[np.ndarray]:
    """Run the same encoder once on every level's graph and features."""
    out = []
    f_in = _input_width(encoder)
    for i, level in enumerate(h.levels):
        if level.features.shape[1] != f_in:
            raise ValueError(f"level {i} has {level.features.shape[1]} feature columns, encoder expects {f_in}")
        out.append(nn.encode(encoder, level.graph, level.features))
    return out


def _input_width(encoder: nn.Encoder) -> int:
    if isinstance(encoder, nn.SageParams):
        return encoder.layers[0]["w_self"].shape[0]
    return encoder.w.shape[0]


def lift_all(h: Hierarchy, levels: list[np.ndarray]) -> EmbeddingSet:
    if len(levels) != h.depth + 1:
        raise ValueError(f"expected {h.depth + 1} embedding matrices, got {len(levels)}")
    lifted = []
    for ell, emb in enumerate(levels):
        if emb.shape[0] != h.levels[ell].n_nodes:
            raise ValueError(f"level {ell} embeddings have {emb.shape[0]} rows, level has {h.levels[ell].n_nodes}")
        lifted.append(emb if ell == 0 else emb[ancestor_map(h, ell)])
    return EmbeddingSet(levels, lifted)


def init_weights(n_levels: int, dim: int, scalar: bool = False) -> np.ndarray:
    shape = (n_levels, 1) if scalar else (n_levels, dim)
    return np.full(shape, 1.0 / n_levels)


def combine(e: EmbeddingSet, spec: CombineSpec, weights: np.ndarray | None = None) -> np.ndarray:
    stack = e.stack()
    if spec.method == "mean":
        return stack.mean(axis=0)
    if spec.method == "concat":
        return np.concatenate(e.lifted, axis=1)
    if weights is None:
        weights = init_weights(e.n_levels, e.dim, spec.scalar_weights)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != e.n_levels or weights.shape[1] not in (1, e.dim):
        raise ValueError(f"weights of shape {weights.shape} do not fit {e.n_levels} levels of width {e.dim}")
    return np.einsum("lnd,ld->nd", stack, np.broadcast_to(weights, (e.n_levels, e.dim)))


@dataclass(frozen=True)
class Head:
    """Classifier on combined embeddings, plus combine weights for the weighted method."""

    spec: CombineSpec
    classifier: nn.ClassifierParams
    weights: np.ndarray | None = None

    def tensors(self) -> nn.Tensors:
        t = self.classifier.tensors("head")
        if self.weights is not None:
            t["head.combine"] = self.weights
        return t

    def with_tensors(self, t: nn.Tensors) -> "Head":
        w = t["head.combine"] if self.weights is not None else None
        return Head(self.spec, self.classifier.with_tensors(t, "head"), w)

    def logits(self, e: EmbeddingSet) -> np.ndarray:
        return nn.classify(self.classifier, combine(e, self.spec, self.weights))

    def predict(self, e: EmbeddingSet) -> np.ndarray:
        return nn.predict(self.logits(e))


def head_loss_and_grads(head: Head, e: EmbeddingSet, labels: np.ndarray,
                        mask: np.ndarray) -> tuple[float, nn.Tensors]:
    comb = combine(e, head.spec, head.weights)
    logits = nn.classify(head.classifier, comb)
    loss, dlogits = nn.cross_entropy_grad(logits, labels, mask)
    grads = {"head.w": comb.T @ dlogits, "head.bias": dlogits.sum(axis=0)}
    if head.weights is not None:
        dcomb = dlogits @ head.classifier.w.T
        dw = np.einsum("nd,lnd->ld", dcomb, e.stack())
        grads["head.combine"] = dw.sum(axis=1, keepdims=True) if head.weights.shape[1] == 1 else dw
    return loss, grads


def init_head(e: EmbeddingSet, spec: CombineSpec, n_classes: int, rng: np.random.Generator) -> Head:
    d_in = e.dim * e.n_levels if spec.method == "concat" else e.dim
    weights = init_weights(e.n_levels, e.dim, spec.scalar_weights) if spec.method == "weighted" else None
    return Head(spec, nn.init_classifier(d_in, n_classes, rng), weights)


def train_head(e: EmbeddingSet, table: NodeTable, spec: CombineSpec,
               cfg: nn.TrainConfig) -> tuple[Head, nn.History]:
    """Fit the combine weights (weighted only) and a linear classifier on level-0 labels."""
    nn._require_masks(table)
    head = init_head(e, spec, table.n_classes, np.random.default_rng(cfg.seed))

    def step(t):
        return head_loss_and_grads(head.with_tensors(t), e, table.labels, table.train_mask)

    def val(t):
        return nn.masked_cross_entropy(head.with_tensors(t).logits(e), table.labels, table.val_mask)

    best, hist = nn.fit(head.tensors(), step, val, cfg)
    return head.with_tensors(best), hist


@dataclass(frozen=True)
class SmgrlConfig:
    arch: str = "sage"
    layers: int = 1
    dim: int = 16
    ratio: float = 0.4
    k: int = 10
    combine: str = "weighted"
    hidden: int | None = None
    seed: int = 0
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    max_pass_reduction: float | None = None

    def __post_init__(self):
        if self.arch not in nn.ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        CombineSpec(self.combine)


@dataclass
class SmgrlResult:
    hierarchy: Hierarchy
    embeddings: EmbeddingSet
    head: Head
    combined: dict
    per_level: list[dict]
    timing: dict
    encoders: list[nn.Encoder]
    histories: list[nn.History]
    diagnostics: list[str] = field(default_factory=list)


def scores(pred: np.ndarray, table: NodeTable) -> dict:
    return {"macro_f1": macro_f1(pred, table.labels, table.test_mask),
            "accuracy": accuracy(pred, table.labels, table.test_mask)}


def hierarchy_for(g: Graph, table: NodeTable, config: SmgrlConfig) -> Hierarchy:
    kwargs = {} if config.max_pass_reduction is None else {"max_pass_reduction": config.max_pass_reduction}
    return build_hierarchy(g, table, config.ratio, config.k, **kwargs)


def _level_table(level: Level, diagnostics: list[str], tag: str) -> NodeTable:
    val = level.val_mask
    if not val.any():
        # no validation node survived coarsening; early-stop on the training loss instead
        diagnostics.append(f"{tag}: no validation nodes, early stopping uses the training mask")
        val = level.train_mask
    return NodeTable(level.features, level.labels, level.train_mask, val, np.zeros(level.n_nodes, dtype=bool))


def train_level_encoder(level: Level, config: SmgrlConfig, n_classes: int, seed: int,
                        diagnostics: list[str], tag: str) -> tuple[nn.Encoder, nn.History]:
    table = _level_table(level, diagnostics, tag)
    cfg = replace(config.train, seed=seed)
    model, hist = nn.train(config.arch, level.graph, table, cfg, d=config.dim, n_layers=config.layers,
                           hidden=config.hidden, n_classes=n_classes)
    # the classifier used to train the encoder is discarded
    return model.encoder, hist


def finish(h: Hierarchy, levels: list[np.ndarray], table: NodeTable, config: SmgrlConfig,
           timing: dict, encoders: list[nn.Encoder], histories: list[nn.History],
           diagnostics: list[str]) -> SmgrlResult:
    """Lift, combine, fit heads and score; shared by every pipeline variant."""
    e = lift_all(h, levels)
    t0 = time.perf_counter()
    spec = CombineSpec(config.combine)
    head, _ = train_head(e, table, spec, replace(config.train, seed=derive_seed(config.seed, 1)))
    combined = scores(head.predict(e), table)
    timing["head_seconds"] = time.perf_counter() - t0
    per_level = []
    for ell in range(e.n_levels):
        single = EmbeddingSet([e.levels[ell]], [e.lifted[ell]])
        lh, _ = train_head(single, table, CombineSpec("mean"),
                           replace(config.train, seed=derive_seed(config.seed, 2, ell)))
        per_level.append(scores(lh.predict(single), table))
    return SmgrlResult(h, e, head, combined, per_level, timing, encoders, histories, diagnostics)


def run_smgrl(g: Graph, table: NodeTable, config: SmgrlConfig,
              hierarchy: Hierarchy | None = None) -> SmgrlResult:
    """Coarsen, train on the coarsest level, embed every level, combine, classify."""
    timing = {}
    t0 = time.perf_counter()
    h = hierarchy_for(g, table, config) if hierarchy is None else hierarchy
    timing["coarsen_seconds"] = time.perf_counter() - t0
    diagnostics = list(h.diagnostics)

    t0 = time.perf_counter()
    encoder, hist = train_level_encoder(h.levels[-1], config, table.n_classes, derive_seed(config.seed, 0),
                                        diagnostics, f"level {h.depth}")
    timing["train_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    levels = infer_levels(encoder, h)
    timing["infer_seconds"] = time.perf_counter() - t0
    return finish(h, levels, table, config, timing, [encoder], [hist], diagnostics)


def run_separate_gcns(g: Graph, table: NodeTable, config: SmgrlConfig,
                      hierarchy: Hierarchy | None = None) -> SmgrlResult:
    """Same as :func:`run_smgrl` but with an independently trained encoder per level.

    The coarsest level's encoder uses the same seed as the single-encoder
    pipeline, so a depth-0 hierarchy gives identical results.
    """
    timing = {}
    t0 = time.perf_counter()
    h = hierarchy_for(g, table, config) if hierarchy is None else hierarchy
    timing["coarsen_seconds"] = time.perf_counter() - t0
    diagnostics = list(h.diagnostics)

    encoders, histories = [], []
    t0 = time.perf_counter()
    for ell, level in enumerate(h.levels):
        seed = derive_seed(config.seed, 0) if ell == h.depth else derive_seed(config.seed, 3, ell)
        enc, hist = train_level_encoder(level, config, table.n_classes, seed, diagnostics, f"level {ell}")
        encoders.append(enc)
        histories.append(hist)
    timing["train_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    levels = [nn.encode(enc, lv.graph, lv.features) for enc, lv in zip(encoders, h.levels)]
    timing["infer_seconds"] = time.perf_counter() - t0
    return finish(h, levels, table, config, timing, encoders, histories, diagnostics)

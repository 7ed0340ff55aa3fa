"""Community-partitioned hierarchy with independent per-subgraph encoders.

Louvain splits the current graph into communities; each community is a
subgraph trained on its own and becomes one node of the next, coarser graph.
Every original node carries a routing vector naming the subgraph that holds
its representative at each level.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import nn
from .graph import Graph, NodeTable
from .louvain import louvain, modularity
from .pipeline import CombineSpec, EmbeddingSet, derive_seed, scores, train_head


@dataclass(frozen=True)
class PartitionLevel:
    """Partition of the level-``l-1`` graph into communities.

    ``community[v]`` is the subgraph holding node ``v`` of the finer graph and
    ``position[v]`` its row inside that subgraph.
    """

    fine_graph: Graph
    fine_features: np.ndarray
    community: np.ndarray
    position: np.ndarray
    members: list[np.ndarray]
    modularity: float

    @property
    def n_subgraphs(self) -> int:
        return len(self.members)

    def subgraph(self, j: int) -> Graph:
        return self.fine_graph.subgraph(self.members[j])


@dataclass(frozen=True)
class DmgrlHierarchy:
    levels: list[PartitionLevel]
    routing: np.ndarray
    representative: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def max_subgraph_size(self) -> int:
        return max((len(m) for lv in self.levels for m in lv.members), default=1)

    def report(self) -> dict:
        rows = []
        for ell, lv in enumerate(self.levels, start=1):
            sizes = np.array([len(m) for m in lv.members])
            vals, counts = np.unique(sizes, return_counts=True)
            kept = sum(lv.subgraph(j).n_edges for j in range(lv.n_subgraphs))
            rows.append({
                "level": ell,
                "n_subgraphs": lv.n_subgraphs,
                "size_histogram": {str(v): int(c) for v, c in zip(vals, counts)},
                "dropped_edges": lv.fine_graph.n_edges - kept,
                "modularity": lv.modularity,
            })
        return {"depth": self.depth, "max_subgraph_size": self.max_subgraph_size, "levels": rows}


def _split(community: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    n_c = community.max() + 1
    members = [np.flatnonzero(community == j) for j in range(n_c)]
    position = np.empty(len(community), dtype=np.int64)
    for m in members:
        position[m] = np.arange(len(m))
    return members, position


def hierarchical_partition(g: Graph, table: NodeTable, bottom: np.ndarray | None = None,
                           seed: int = 0) -> DmgrlHierarchy:
    """Repeatedly partition and contract until partitioning stops shrinking the graph.

    ``bottom`` replaces the first Louvain pass with a given partition, for
    data already split into silos. The last level is always a single subgraph
    holding the whole coarsest graph. ``routing[i, l]`` is node ``i``'s
    subgraph id at level ``l`` (column 0 is ``i`` itself) and
    ``representative[i, l]`` is its node id in the level-``l`` graph.
    """
    n = g.n_nodes
    rep = [np.arange(n)]
    routing = [np.arange(n)]
    levels: list[PartitionLevel] = []
    cur_g = g
    cur_x = np.asarray(table.features, dtype=np.float64)
    while cur_g.n_nodes > 1:
        if not levels and bottom is not None:
            comm = np.asarray(bottom, dtype=np.int64)
            if comm.shape != (n,):
                raise ValueError("bottom partition needs one community id per node")
            _, comm = np.unique(comm, return_inverse=True)
        else:
            comm = louvain(cur_g, seed=derive_seed(seed, len(levels)))
        n_c = comm.max() + 1
        if n_c == cur_g.n_nodes:
            comm = np.zeros(cur_g.n_nodes, dtype=np.int64)
            n_c = 1
        members, position = _split(comm)
        levels.append(PartitionLevel(cur_g, cur_x, comm, position, members, modularity(cur_g.adj, comm)))
        routing.append(comm[rep[-1]])
        if n_c == 1:
            break
        s = sp.csr_matrix((np.ones(len(comm)), (np.arange(len(comm)), comm)), shape=(len(comm), n_c))
        w = sp.csr_matrix(s.T @ cur_g.adj @ s)
        w.setdiag(0)
        w.eliminate_zeros()
        w.sort_indices()
        cur_x = np.vstack([cur_x[m].mean(axis=0) for m in members])
        cur_g = Graph(w)
        rep.append(comm[rep[-1]])
    return DmgrlHierarchy(levels, np.stack(routing, axis=1), np.stack(rep, axis=1))


@dataclass(frozen=True)
class DmgrlConfig:
    arch: str = "sage"
    dim: int = 16
    combine: str = "mean"
    include_features: bool = False
    seed: int = 0
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)


@dataclass
class DmgrlResult:
    partition: DmgrlHierarchy
    embeddings: EmbeddingSet
    scores: dict
    frozen_subgraphs: list[tuple[int, int]]
    max_nodes_materialized: int
    timing: dict


def _propagate(values: np.ndarray, mask: np.ndarray, rep: np.ndarray, n_nodes: int,
               n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.zeros((n_nodes, max(n_classes, 1)), dtype=np.int64)
    idx = np.flatnonzero(mask & (values >= 0))
    np.add.at(counts, (rep[idx], values[idx]), 1)
    has = counts.sum(axis=1) > 0
    return np.where(has, counts.argmax(axis=1), -1), has


def train_subgraph(sub: Graph, x: np.ndarray, labels: np.ndarray, train_mask: np.ndarray,
                   val_mask: np.ndarray, n_classes: int, config: DmgrlConfig, seed: int):
    """Embed one subgraph; returns ``(embeddings, trained)``.

    Without any labeled node the encoder keeps its seeded random init.
    """
    if not train_mask.any():
        enc = nn.init_encoder(config.arch, x.shape[1], config.dim, np.random.default_rng(seed))
        return nn.encode(enc, sub, x), False
    val = val_mask if val_mask.any() else train_mask
    table = NodeTable(x, labels, train_mask, val, np.zeros(len(labels), dtype=bool))
    model, _ = nn.train(config.arch, sub, table, replace(config.train, seed=seed), d=config.dim,
                        n_classes=n_classes)
    return nn.encode(model.encoder, sub, x), True


def dmgrl_embed(part: DmgrlHierarchy, table: NodeTable, config: DmgrlConfig,
                order: list[tuple[int, int]] | None = None):
    """Per-level embeddings of every original node, gathered through the routing vectors.

    ``order`` fixes the subgraph scheduling order; results do not depend on it.
    """
    n = table.n_nodes
    n_classes = table.n_classes
    jobs = [(ell, j) for ell in range(1, part.depth + 1) for j in range(part.levels[ell - 1].n_subgraphs)]
    if order is not None:
        if sorted(order) != jobs:
            raise ValueError("order must be a permutation of all (level, subgraph) pairs")
        jobs = list(order)
    level_labels = {}
    for ell in range(1, part.depth + 1):
        lv = part.levels[ell - 1]
        rep = part.representative[:, ell - 1]
        y_tr, m_tr = _propagate(table.labels, table.train_mask, rep, lv.fine_graph.n_nodes, n_classes)
        y_va, m_va = _propagate(table.labels, table.val_mask, rep, lv.fine_graph.n_nodes, n_classes)
        m_va &= ~m_tr
        level_labels[ell] = (np.where(m_tr, y_tr, y_va), m_tr, m_va)

    results: dict[tuple[int, int], np.ndarray] = {}
    frozen = []
    max_nodes = 0
    for ell, j in jobs:
        lv = part.levels[ell - 1]
        nodes = lv.members[j]
        max_nodes = max(max_nodes, len(nodes))
        y, m_tr, m_va = level_labels[ell]
        emb, trained = train_subgraph(lv.subgraph(j), lv.fine_features[nodes], y[nodes], m_tr[nodes],
                                      m_va[nodes], n_classes, config, derive_seed(config.seed, ell, j))
        results[(ell, j)] = emb
        if not trained:
            frozen.append((ell, j))

    lifted = []
    per_level = []
    for ell in range(1, part.depth + 1):
        lv = part.levels[ell - 1]
        rep = part.representative[:, ell - 1]
        sub_id = part.routing[:, ell]
        pos = lv.position[rep]
        out = np.zeros((n, config.dim))
        for j in range(lv.n_subgraphs):
            sel = sub_id == j
            out[sel] = results[(ell, j)][pos[sel]]
        block = np.zeros((lv.fine_graph.n_nodes, config.dim))
        for j in range(lv.n_subgraphs):
            block[lv.members[j]] = results[(ell, j)]
        per_level.append(block)
        lifted.append(out)
    return EmbeddingSet(per_level, lifted), sorted(frozen), max_nodes


def dmgrl_run(g: Graph, table: NodeTable, config: DmgrlConfig,
              partition: DmgrlHierarchy | None = None) -> DmgrlResult:
    timing = {}
    t0 = time.perf_counter()
    part = hierarchical_partition(g, table, seed=config.seed) if partition is None else partition
    timing["partition_seconds"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    emb, frozen, max_nodes = dmgrl_embed(part, table, config)
    timing["train_seconds"] = time.perf_counter() - t0
    if config.include_features:
        if config.combine != "concat":
            raise ValueError("raw features can only be appended with concat combine")
        x = np.asarray(table.features, dtype=np.float64)
        emb = EmbeddingSet([x] + emb.levels, [x] + emb.lifted)
    t0 = time.perf_counter()
    if emb.n_levels == 0:
        raise ValueError("graph too small to partition")
    spec = CombineSpec(config.combine)
    if config.include_features:
        combined = np.concatenate(emb.lifted, axis=1)
        emb_for_head = EmbeddingSet([combined], [combined])
        spec = CombineSpec("mean")
    else:
        emb_for_head = emb
    head, _ = train_head(emb_for_head, table, spec, replace(config.train, seed=derive_seed(config.seed, 9)))
    timing["head_seconds"] = time.perf_counter() - t0
    return DmgrlResult(part, emb, scores(head.predict(emb_for_head), table), frozen, max_nodes, timing)

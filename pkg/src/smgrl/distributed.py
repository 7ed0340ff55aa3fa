"""Parent-partitioned inference and inductive node insertion on a hierarchy.

Partitioned inference embeds each level ``l < L`` one parent group at a time,
ignoring edges between groups, so no worker ever needs the whole fine graph.
Insertion attaches unseen nodes to an existing hierarchy without re-coarsening.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import nn
from .coarsen import Hierarchy, Level, Projection
from .graph import Graph, GraphError, NodeTable
from .louvain import modularity
from .pipeline import EmbeddingSet, lift_all


@dataclass(frozen=True)
class PartitionedLevel:
    """Node-disjoint subgraphs of one level, one per parent supernode."""

    level: int
    members: list[np.ndarray]
    subgraphs: list[Graph]
    dropped_edges: int

    @property
    def n_subgraphs(self) -> int:
        return len(self.members)


def partition_level(h: Hierarchy, level: int) -> PartitionedLevel:
    if not 0 <= level < h.depth:
        raise IndexError(f"only levels 0..{h.depth - 1} have parents")
    g = h.levels[level].graph
    parent = h.projections[level].parent
    order = np.argsort(parent, kind="stable")
    bounds = np.flatnonzero(np.diff(parent[order])) + 1
    members = np.split(order, bounds)
    subgraphs = [g.subgraph(m) for m in members]
    kept = sum(s.n_edges for s in subgraphs)
    return PartitionedLevel(level, members, subgraphs, g.n_edges - kept)


def partitioned_inference(encoder: nn.Encoder, h: Hierarchy) -> EmbeddingSet:
    """Per-level embeddings where every level below the top is inferred per parent group."""
    levels = []
    for ell, level in enumerate(h.levels):
        if ell == h.depth:
            levels.append(nn.encode(encoder, level.graph, level.features))
            continue
        part = partition_level(h, ell)
        out = None
        for nodes, sub in zip(part.members, part.subgraphs):
            emb = nn.encode(encoder, sub, level.features[nodes])
            if out is None:
                out = np.zeros((level.n_nodes, emb.shape[1]))
            out[nodes] = emb
        levels.append(out)
    return lift_all(h, levels)


def _histogram(sizes) -> dict[str, int]:
    vals, counts = np.unique(np.asarray(sizes, dtype=np.int64), return_counts=True)
    return {str(v): int(c) for v, c in zip(vals, counts)}


def partition_report(h: Hierarchy) -> dict:
    """Per-level subgraph counts, size histogram, dropped edges and modularity."""
    rows = []
    for ell in range(h.depth):
        part = partition_level(h, ell)
        rows.append({
            "level": ell,
            "n_subgraphs": part.n_subgraphs,
            "size_histogram": _histogram([len(m) for m in part.members]),
            "dropped_edges": part.dropped_edges,
            "modularity": modularity(h.levels[ell].graph.adj, h.projections[ell].parent),
        })
    return {"depth": h.depth, "levels": rows}


@dataclass(frozen=True)
class NewNodes:
    """Nodes to attach to a hierarchy.

    ``edges`` are ``(u, v)`` pairs over the extended index space: ids below
    the current node count refer to existing nodes, id ``n + j`` to the
    ``j``-th new node.
    """

    features: np.ndarray
    edges: np.ndarray
    labels: np.ndarray | None = None

    @property
    def count(self) -> int:
        return self.features.shape[0]


def _pad(adj: sp.csr_matrix, n: int) -> sp.csr_matrix:
    a = adj.tocoo()
    return sp.csr_matrix((a.data, (a.row, a.col)), shape=(n, n))


def insert_nodes(h: Hierarchy, new: NewNodes, refresh_features: bool = True) -> tuple[Hierarchy, np.ndarray]:
    """Extend every level with unseen nodes; returns the new hierarchy and the new level-0 ids.

    Level 0 gets the nodes and edges verbatim. At each coarser level a new
    node joins the existing parent that receives the most edge weight from
    it (ties to the lowest index); with no such edge it opens a fresh
    singleton supernode. Coarse rows of supernodes that gained children are
    recomputed as child means when ``refresh_features`` is set; every other
    row and edge is left untouched.
    """
    n0 = h.levels[0].n_nodes
    m = new.count
    edges = np.asarray(new.edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n0 + m):
        raise GraphError(f"edge references an unknown node (valid ids are 0..{n0 + m - 1})")
    if edges.size and np.any(np.maximum(edges[:, 0], edges[:, 1]) < n0):
        raise GraphError("inserted edges must touch at least one new node")
    feats = np.asarray(new.features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != h.levels[0].features.shape[1]:
        raise ValueError(f"new features must have {h.levels[0].features.shape[1]} columns")

    base = h.levels[0]
    n_new = n0 + m
    delta = Graph.from_edges(n_new, edges[:, 0], edges[:, 1]).adj if edges.size else sp.csr_matrix((n_new, n_new))
    fine = Graph(sp.csr_matrix(_pad(base.graph.adj, n_new) + delta))
    labels = np.full(m, -1, dtype=np.int64) if new.labels is None else np.asarray(new.labels, dtype=np.int64)
    no = np.zeros(m, dtype=bool)
    levels = [Level(fine, np.vstack([base.features, feats]), np.concatenate([base.labels, labels]),
                    np.concatenate([base.train_mask, no]), np.concatenate([base.val_mask, no]))]
    projections = []
    fine_delta = delta
    n_fine_old = n0
    for ell, proj in enumerate(h.projections, start=1):
        coarse_old = h.levels[ell]
        n_coarse_old = coarse_old.n_nodes
        n_fine = levels[-1].n_nodes
        parent = np.concatenate([proj.parent, np.full(n_fine - n_fine_old, -1)])
        adj = levels[-1].graph.adj
        fresh = 0
        for u in range(n_fine_old, n_fine):
            lo, hi = adj.indptr[u], adj.indptr[u + 1]
            score: dict[int, float] = {}
            for v, w in zip(adj.indices[lo:hi], adj.data[lo:hi]):
                if parent[v] >= 0:
                    score[parent[v]] = score.get(parent[v], 0.0) + w
            if score:
                top = max(score.values())
                parent[u] = min(c for c, s in score.items() if s == top)
            else:
                parent[u] = n_coarse_old + fresh
                fresh += 1
        n_coarse = n_coarse_old + fresh
        new_proj = Projection(parent, n_coarse)
        s = new_proj.lift_matrix()
        added = sp.csr_matrix(s.T @ fine_delta @ s)
        added.setdiag(0)
        added.eliminate_zeros()
        coarse_adj = sp.csr_matrix(_pad(coarse_old.graph.adj, n_coarse) + added)
        coarse_adj.sort_indices()

        feats_c = np.vstack([coarse_old.features, np.zeros((fresh, coarse_old.features.shape[1]))])
        touched = np.unique(parent[n_fine_old:])
        fine_feats = levels[-1].features
        for j in touched:
            if j >= n_coarse_old or refresh_features:
                feats_c[j] = fine_feats[parent == j].mean(axis=0)
        pad = np.zeros(fresh, dtype=bool)
        levels.append(Level(Graph(coarse_adj), feats_c,
                            np.concatenate([coarse_old.labels, np.full(fresh, -1, dtype=np.int64)]),
                            np.concatenate([coarse_old.train_mask, pad]),
                            np.concatenate([coarse_old.val_mask, pad])))
        projections.append(new_proj)
        fine_delta = added
        n_fine_old = n_coarse_old
    return Hierarchy(levels, projections, h.reduction_ratio, list(h.diagnostics)), np.arange(n0, n0 + m)


def delete_nodes(h: Hierarchy, nodes) -> Hierarchy:
    """Remove level-0 nodes from a built hierarchy without re-coarsening.

    Supernodes left without children disappear and the rest are renumbered in
    order. Coarse edges are re-summed from the reduced finer level; coarse
    features are re-averaged only for supernodes that lost a child.
    """
    gone = np.zeros(h.levels[0].n_nodes, dtype=bool)
    gone[np.asarray(nodes, dtype=np.int64)] = True
    keep = np.flatnonzero(~gone)
    base = h.levels[0]
    levels = [Level(base.graph.subgraph(keep), base.features[keep], base.labels[keep],
                    base.train_mask[keep], base.val_mask[keep])]
    projections = []
    for ell, proj in enumerate(h.projections, start=1):
        old = h.levels[ell]
        parent_old = proj.parent[keep]
        touched = np.zeros(old.n_nodes, dtype=bool)
        touched[np.unique(proj.parent[~np.isin(np.arange(proj.n_fine), keep)])] = True
        alive = np.unique(parent_old)
        renum = np.full(old.n_nodes, -1, dtype=np.int64)
        renum[alive] = np.arange(len(alive))
        new_proj = Projection(renum[parent_old], len(alive))
        s = new_proj.lift_matrix()
        w = sp.csr_matrix(s.T @ levels[-1].graph.adj @ s)
        w.setdiag(0)
        w.eliminate_zeros()
        w.sort_indices()
        feats = old.features[alive].copy()
        for j_new, j_old in enumerate(alive):
            if touched[j_old]:
                feats[j_new] = levels[-1].features[new_proj.parent == j_new].mean(axis=0)
        levels.append(Level(Graph(w), feats, old.labels[alive], old.train_mask[alive], old.val_mask[alive]))
        projections.append(new_proj)
        keep = alive
    return Hierarchy(levels, projections, h.reduction_ratio, list(h.diagnostics))


def remove_nodes(g: Graph, table: NodeTable, nodes) -> tuple[Graph, NodeTable, NewNodes, np.ndarray]:
    """Drop ``nodes`` from a graph and package them for :func:`insert_nodes`.

    Returns the reduced graph and table, the removed nodes as :class:`NewNodes`
    (edges re-indexed into the reduced-then-extended id space, in removal
    order) and the old ids of the kept nodes.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    n = g.n_nodes
    removed = np.zeros(n, dtype=bool)
    removed[nodes] = True
    keep = np.flatnonzero(~removed)
    new_id = np.full(n, -1, dtype=np.int64)
    new_id[keep] = np.arange(len(keep))
    new_id[nodes] = len(keep) + np.arange(len(nodes))
    u, v, _ = g.edge_list()
    touch = removed[u] | removed[v]
    pairs = np.stack([new_id[u[touch]], new_id[v[touch]]], axis=1)
    sub = g.subgraph(keep)
    t = NodeTable(table.features[keep], table.labels[keep], table.train_mask[keep],
                  table.val_mask[keep], table.test_mask[keep])
    return sub, t, NewNodes(table.features[nodes], pairs, table.labels[nodes]), keep

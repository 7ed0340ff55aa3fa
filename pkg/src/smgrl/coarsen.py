"""Hierarchical spectral coarsening by greedy neighborhood contraction.

Each pass scores every closed neighborhood ``{v} + Ne(v)`` by how much of a
preserved low-frequency Laplacian subspace it would destroy if collapsed to a
single node, then contracts the cheapest disjoint neighborhoods until the pass
budget is spent. Stacking passes gives the levels ``G_0 ... G_L``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .graph import Graph, GraphError, NodeTable, laplacian, smallest_eigenpairs, EigenPairs

DEFAULT_SUBSPACE = 10
MAX_PASS_REDUCTION = 0.9


@dataclass(frozen=True)
class Projection:
    """Parent assignment of one coarsening pass.

    ``parent[i]`` is the coarse node that fine node ``i`` collapses into.
    """

    parent: np.ndarray
    n_coarse: int

    @property
    def n_fine(self) -> int:
        return len(self.parent)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.parent, minlength=self.n_coarse)

    def lift_matrix(self) -> sp.csr_matrix:
        """Binary ``n_fine x n_coarse`` matrix with a single 1 per row."""
        ones = np.ones(self.n_fine)
        return sp.csr_matrix((ones, (np.arange(self.n_fine), self.parent)),
                             shape=(self.n_fine, self.n_coarse))

    def matrix(self) -> sp.csr_matrix:
        """Averaging matrix ``n_coarse x n_fine``; entry ``1/|C_j|`` for children of j."""
        inv = 1.0 / self.sizes()
        vals = inv[self.parent]
        return sp.csr_matrix((vals, (self.parent, np.arange(self.n_fine))),
                             shape=(self.n_coarse, self.n_fine))

    def children(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.parent == j)


@dataclass(frozen=True)
class Level:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes


@dataclass(frozen=True)
class Hierarchy:
    levels: list[Level]
    projections: list[Projection]
    reduction_ratio: float
    diagnostics: list[str] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.projections)

    def sizes(self) -> list[int]:
        return [lv.n_nodes for lv in self.levels]

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "reduction_ratio": self.reduction_ratio,
            "levels": [{"n_nodes": lv.n_nodes, "n_edges": lv.graph.n_edges} for lv in self.levels],
            "parents": [p.parent.tolist() for p in self.projections],
        }


def preserved_basis(g: Graph, k: int = DEFAULT_SUBSPACE) -> np.ndarray:
    """Per-component bottom-``k`` Laplacian eigenvectors scaled by ``lambda^-1/2``.

    Returns an ``n x k`` matrix. Each connected component gets its own
    eigenvectors (rows of other components are zero there), so a graph with
    many components does not spend its whole subspace on component indicators.
    Zero-eigenvalue directions get weight 0; they are constant on any
    connected candidate set anyway.
    """
    n = g.n_nodes
    basis = np.zeros((n, k))
    n_comp, comp = connected_components(g.adj, directed=False)
    for c in range(n_comp):
        nodes = np.flatnonzero(comp == c)
        if len(nodes) < 2:
            continue
        kc = min(k, len(nodes))
        eig = smallest_eigenpairs(laplacian(g.subgraph(nodes)), kc)
        basis[np.ix_(nodes, np.arange(kc))] = _whiten(eig)
    return basis


def _whiten(eig: EigenPairs) -> np.ndarray:
    scale = np.zeros_like(eig.values)
    nz = eig.values > 1e-10
    scale[nz] = eig.values[nz] ** -0.5
    return eig.vectors * scale


def contraction_cost(lap: sp.csr_matrix, basis: np.ndarray, nodes: np.ndarray) -> float:
    """Local variation of ``basis`` on ``nodes`` after removing its mean there.

    ``trace(B' L_C B) / (|C| - 1)`` with ``L_C`` the principal Laplacian
    submatrix on the candidate set and ``B`` the centered restricted basis.
    """
    if len(nodes) < 2:
        return 0.0
    b = basis[nodes]
    b = b - b.mean(axis=0)
    lc = lap[nodes][:, nodes].toarray()
    return float(np.einsum("ik,ij,jk->", b, lc, b)) / (len(nodes) - 1)


def _key(cost: float) -> float:
    # 12 significant digits, so mathematically tied costs fall through to the center index
    return float(f"{cost:.12g}")


def coarsen_pass(g: Graph, preserved_subspace, max_pass_reduction: float = MAX_PASS_REDUCTION,
                 n_target: int | None = None) -> tuple[Graph, Projection]:
    """Contract cheapest disjoint closed neighborhoods once.

    ``preserved_subspace`` is either an :class:`EigenPairs` (whitened here) or
    an already-built ``n x k`` basis such as :func:`preserved_basis` returns.
    At most ``floor(max_pass_reduction * n)`` nodes are removed, and never
    more than would take the graph below ``n_target``.

    Candidates are popped in ascending (cost, center) order. A candidate
    overlapping already-contracted nodes is shrunk to its unclaimed part and
    re-queued while that part still holds its center node and one neighbor.
    A candidate larger than the remaining budget is cut down to its center
    plus its most strongly attached members and re-queued.
    """
    n = g.n_nodes
    if n < 2:
        raise GraphError("cannot coarsen a graph with fewer than 2 nodes")
    basis = _whiten(preserved_subspace) if isinstance(preserved_subspace, EigenPairs) \
        else np.asarray(preserved_subspace, dtype=np.float64)
    if basis.shape[0] != n:
        raise GraphError(f"subspace has {basis.shape[0]} rows, graph has {n} nodes")
    budget = int(math.floor(max_pass_reduction * n + 1e-9))
    if n_target is not None:
        budget = min(budget, n - n_target)

    lap = laplacian(g)
    adj = g.adj
    heap: list[tuple[float, int, tuple[int, ...]]] = []
    for v in range(n):
        nb = adj.indices[adj.indptr[v]:adj.indptr[v + 1]]
        if len(nb) == 0:
            continue
        nodes = np.sort(np.append(nb, v))
        heap.append((_key(contraction_cost(lap, basis, nodes)), v, tuple(nodes)))
    heapq.heapify(heap)

    marked = np.zeros(n, dtype=bool)
    groups: list[np.ndarray] = []
    while heap and budget > 0:
        cost, center, members = heapq.heappop(heap)
        nodes = np.asarray(members)
        taken = marked[nodes]
        if taken.any():
            rest = nodes[~taken]
            if len(rest) >= 2 and not marked[center]:
                heapq.heappush(heap, (_key(contraction_cost(lap, basis, rest)), center, tuple(rest)))
            continue
        gain = len(nodes) - 1
        if gain > budget:
            # keep the center and its strongest links so the last budget units still get spent
            trimmed = _trim(adj, center, nodes, budget)
            heapq.heappush(heap, (_key(contraction_cost(lap, basis, trimmed)), center, tuple(trimmed)))
            continue
        marked[nodes] = True
        groups.append(nodes)
        budget -= gain

    return contract(g, groups)


def _trim(adj: sp.csr_matrix, center: int, nodes: np.ndarray, budget: int) -> np.ndarray:
    others = nodes[nodes != center]
    w = np.asarray(adj[center, others].todense()).ravel()
    keep = others[np.lexsort((others, -w))[:budget]]
    return np.sort(np.append(keep, center))


def contract(g: Graph, groups: list[np.ndarray]) -> tuple[Graph, Projection]:
    """Collapse disjoint node groups; untouched nodes stay singletons.

    Coarse nodes are numbered by their smallest member. Coarse edge weights
    sum the fine weights between groups; internal edges vanish.
    """
    n = g.n_nodes
    rep = np.arange(n)
    for nodes in groups:
        rep[nodes] = nodes.min()
    uniq, parent = np.unique(rep, return_inverse=True)
    proj = Projection(parent.astype(np.int64), len(uniq))
    s = proj.lift_matrix()
    w = sp.csr_matrix(s.T @ g.adj @ s)
    w.setdiag(0)
    w.eliminate_zeros()
    w.sort_indices()
    return Graph(w), proj


def _coarse_labels(parent: np.ndarray, n_coarse: int, labels: np.ndarray, mask: np.ndarray,
                   n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Majority label among masked children; ties go to the lowest class."""
    counts = np.zeros((n_coarse, max(n_classes, 1)), dtype=np.int64)
    idx = np.flatnonzero(mask & (labels >= 0))
    np.add.at(counts, (parent[idx], labels[idx]), 1)
    has = counts.sum(axis=1) > 0
    out = np.where(has, counts.argmax(axis=1), -1)
    return out, has


def coarsen_level(level: Level, proj: Projection, coarse: Graph, n_classes: int) -> Level:
    """Carry features and labels up one pass.

    Features are child means. A supernode joins the coarse training set when
    any child is a training node (label = majority of training children); it
    joins the validation set when it has a validation child and no training
    child. Test labels never propagate.
    """
    feats = proj.matrix() @ level.features
    ytr, mtr = _coarse_labels(proj.parent, proj.n_coarse, level.labels, level.train_mask, n_classes)
    yva, mva = _coarse_labels(proj.parent, proj.n_coarse, level.labels, level.val_mask, n_classes)
    mva = mva & ~mtr
    labels = np.where(mtr, ytr, np.where(mva, yva, -1))
    return Level(coarse, np.asarray(feats), labels, mtr, mva)


def build_hierarchy(g: Graph, t: NodeTable, r: float, k: int = DEFAULT_SUBSPACE,
                    max_pass_reduction: float = MAX_PASS_REDUCTION) -> Hierarchy:
    """Coarsen one pass per level until at most ``ceil((1 - r) n)`` nodes remain.

    Stops early, with a diagnostic, if a pass cannot shrink the graph.
    """
    if not 0 <= r < 1:
        raise ValueError(f"reduction ratio must lie in [0, 1), got {r}")
    n0 = g.n_nodes
    target = math.ceil((1 - r) * n0 - 1e-9)
    n_classes = t.n_classes
    levels = [Level(g, np.asarray(t.features, dtype=np.float64), t.labels.copy(),
                    t.train_mask.copy(), t.val_mask.copy())]
    projections: list[Projection] = []
    diagnostics: list[str] = []
    while levels[-1].n_nodes > target:
        cur = levels[-1]
        if cur.n_nodes < 2:
            diagnostics.append("coarsest graph has a single node")
            break
        basis = preserved_basis(cur.graph, min(k, cur.n_nodes))
        coarse, proj = coarsen_pass(cur.graph, basis, max_pass_reduction, n_target=target)
        if proj.n_coarse == cur.n_nodes:
            diagnostics.append(
                f"level {len(projections)}: no contraction possible at {cur.n_nodes} nodes "
                f"(target {target}); hierarchy stops short of the requested ratio")
            break
        projections.append(proj)
        levels.append(coarsen_level(cur, proj, coarse, n_classes))
    return Hierarchy(levels, projections, float(r), diagnostics)


def ancestor_map(h: Hierarchy, level: int) -> np.ndarray:
    """Index of each original node's ancestor at ``level``."""
    if not 0 <= level <= h.depth:
        raise IndexError(f"level {level} outside [0, {h.depth}]")
    anc = np.arange(h.levels[0].n_nodes)
    for proj in h.projections[:level]:
        anc = proj.parent[anc]
    return anc


def lift(h: Hierarchy, values: np.ndarray, level: int) -> np.ndarray:
    """Copy level-``level`` rows down to the original nodes (pure gather)."""
    values = np.asarray(values)
    anc = ancestor_map(h, level)
    if values.shape[0] != h.levels[level].n_nodes:
        raise ValueError(f"expected {h.levels[level].n_nodes} rows at level {level}, "
                         f"got {values.shape[0]}")
    return values[anc]


def composed_lift_matrix(h: Hierarchy, level: int) -> sp.csr_matrix:
    """``P_1^+ ... P_level^+`` as an explicit sparse product."""
    out = sp.identity(h.levels[0].n_nodes, format="csr")
    for proj in h.projections[:level]:
        out = out @ proj.lift_matrix()
    return sp.csr_matrix(out)

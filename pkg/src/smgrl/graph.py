"""Graph containers and the linear algebra the rest of the package leans on."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_EIGEN_LIMIT = 3000

UNLABELED = -1


class GraphError(ValueError):
    """Raised when graph or node-table data violates an invariant."""


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph stored as a symmetric CSR adjacency.

    Both edge directions are materialized so a row scan yields the full
    neighborhood of a node.
    """

    adj: sp.csr_matrix

    @property
    def n_nodes(self) -> int:
        return self.adj.shape[0]

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return self.adj.nnz // 2

    def degrees(self, weighted: bool = True) -> np.ndarray:
        if weighted:
            return np.asarray(self.adj.sum(axis=1)).ravel()
        return np.diff(self.adj.indptr).astype(np.float64)

    def neighbors(self, i: int) -> np.ndarray:
        return self.adj.indices[self.adj.indptr[i]:self.adj.indptr[i + 1]]

    def edge_list(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Canonical (u < v) edge arrays sorted by (u, v)."""
        coo = sp.triu(self.adj, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order].astype(np.int64), coo.col[order].astype(np.int64), coo.data[order]

    def subgraph(self, nodes: np.ndarray) -> "Graph":
        nodes = np.asarray(nodes, dtype=np.int64)
        return Graph(sp.csr_matrix(self.adj[nodes][:, nodes]))

    @classmethod
    def from_edges(cls, n_nodes: int, u, v, w=None, *, directed: bool = False) -> "Graph":
        """Build a graph from an edge list, rejecting self-loops and duplicates.

        Undirected input lists every edge once, in either orientation. Directed
        input is symmetrized: arcs (u, v) and (v, u) collapse into one edge whose
        weight is the larger of the two; a repeated arc is still a duplicate.
        """
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        w = np.ones(len(u)) if w is None else np.asarray(w, dtype=np.float64).ravel()
        if not (len(u) == len(v) == len(w)):
            raise GraphError("edge arrays differ in length")
        if len(u):
            bad = np.flatnonzero((u < 0) | (v < 0) | (u >= n_nodes) | (v >= n_nodes))
            if len(bad):
                raise GraphError(f"edge {bad[0]} endpoint out of range ({u[bad[0]]}, {v[bad[0]]})")
            loops = np.flatnonzero(u == v)
            if len(loops):
                raise GraphError(f"edge {loops[0]} is a self-loop ({u[loops[0]]}, {v[loops[0]]})")
            bad = np.flatnonzero(~(w > 0) | ~np.isfinite(w))
            if len(bad):
                raise GraphError(f"edge {bad[0]} has non-positive weight {w[bad[0]]}")
        keys = u * n_nodes + v if directed else np.minimum(u, v) * n_nodes + np.maximum(u, v)
        _, first, counts = np.unique(keys, return_index=True, return_counts=True)
        if np.any(counts > 1):
            dup = np.sort(first[counts > 1])[0]
            later = np.flatnonzero(keys == keys[dup])[1]
            raise GraphError(f"edge {later} duplicates edge {dup} ({u[dup]}, {v[dup]})")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        if directed:
            und = lo * n_nodes + hi
            uniq, inv = np.unique(und, return_inverse=True)
            wmax = np.zeros(len(uniq))
            np.maximum.at(wmax, inv, w)
            lo, hi, w = uniq // n_nodes, uniq % n_nodes, wmax
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        data = np.concatenate([w, w])
        adj = sp.csr_matrix((data, (rows, cols)), shape=(n_nodes, n_nodes))
        adj.sort_indices()
        return cls(adj)

    @classmethod
    def from_adjacency(cls, adj) -> "Graph":
        """Wrap an adjacency matrix, dropping the diagonal and explicit zeros."""
        adj = sp.csr_matrix(adj, dtype=np.float64)
        adj.setdiag(0)
        adj.eliminate_zeros()
        adj.sort_indices()
        return cls(adj)


@dataclass(frozen=True)
class NodeTable:
    """Per-node features, integer labels (-1 = unlabeled) and split masks."""

    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        labeled = self.labels[self.labels >= 0]
        return int(labeled.max()) + 1 if len(labeled) else 0

    @classmethod
    def from_split(cls, features, labels, split) -> "NodeTable":
        split = np.asarray(split)
        return cls(
            np.asarray(features, dtype=np.float64),
            np.asarray(labels, dtype=np.int64),
            split == "train",
            split == "val",
            split == "test",
        )

    def split_names(self) -> np.ndarray:
        out = np.full(self.n_nodes, "none", dtype=object)
        out[self.train_mask] = "train"
        out[self.val_mask] = "val"
        out[self.test_mask] = "test"
        return out


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return len(self.values)


def laplacian(g: Graph, normalized: bool = False) -> sp.csr_matrix:
    """Combinatorial ``D - W`` or symmetric-normalized ``I - D^-1/2 W D^-1/2``.

    For the normalized form an isolated node gets a zero row and column
    (its ``D^-1/2`` entry is taken as 0), never a division by zero.
    """
    deg = g.degrees()
    if not normalized:
        lap = sp.diags(deg) - g.adj
    else:
        inv_sqrt = np.zeros_like(deg)
        nz = deg > 0
        inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
        d = sp.diags(inv_sqrt)
        lap = sp.diags(nz.astype(np.float64)) - d @ g.adj @ d
    lap = sp.csr_matrix(lap)
    # exact symmetry, rounding in the product can break it
    return sp.csr_matrix((lap + lap.T) * 0.5)


def smallest_eigenpairs(lap, k: int, method: str = "auto") -> EigenPairs:
    """The ``k`` algebraically smallest eigenpairs of a symmetric PSD matrix.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    ``DENSE_EIGEN_LIMIT`` rows).
    """
    n = lap.shape[0]
    if lap.shape[0] != lap.shape[1]:
        raise GraphError("matrix is not square")
    if k < 1 or k > n:
        raise GraphError(f"k={k} outside [1, {n}]")
    asym = abs(lap - lap.T) if sp.issparse(lap) else np.abs(lap - lap.T)
    if asym.max() > 1e-12 * max(1.0, abs(lap).max()):
        raise GraphError("matrix is not symmetric")
    if method == "auto":
        method = "dense" if n <= DENSE_EIGEN_LIMIT else "lanczos"
    if method == "lanczos" and k >= n - 1:
        method = "dense"
    if method == "dense":
        dense = lap.toarray() if sp.issparse(lap) else np.asarray(lap, dtype=np.float64)
        values, vectors = np.linalg.eigh(dense)
        values, vectors = values[:k], vectors[:, :k]
    elif method == "lanczos":
        # shift-invert around a small negative sigma targets the bottom of the spectrum
        values, vectors = spla.eigsh(
            sp.csc_matrix(lap), k=k, sigma=-1e-3, which="LM", tol=1e-12,
            v0=np.random.default_rng(0).standard_normal(n),
        )
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
        vectors, _ = np.linalg.qr(vectors)
    else:
        raise ValueError(f"unknown method {method!r}")
    values = np.where(np.abs(values) < 1e-12, 0.0, values)
    return EigenPairs(values, vectors)


def validate_graph(g: Graph) -> list[str]:
    problems = []
    adj = g.adj
    if adj.shape[0] != adj.shape[1]:
        problems.append("adjacency is not square")
        return problems
    if np.any(adj.diagonal() != 0):
        problems.append("self-loop present")
    if adj.nnz and np.any(adj.data <= 0):
        problems.append(f"{int(np.sum(adj.data <= 0))} non-positive edge weight entries")
    if adj.nnz and not np.all(np.isfinite(adj.data)):
        problems.append("non-finite edge weight")
    if (adj != adj.T).nnz:
        problems.append("adjacency is not symmetric")
    return problems


def validate(g: Graph, t: NodeTable | None = None) -> list[str]:
    """List invariant violations of a graph and its node table; empty if valid."""
    problems = validate_graph(g)
    if t is None:
        return problems
    if t.features.shape[0] != g.n_nodes:
        problems.append(f"feature rows {t.features.shape[0]} != n_nodes {g.n_nodes}")
    for name in ("labels", "train_mask", "val_mask", "test_mask"):
        if len(getattr(t, name)) != g.n_nodes:
            problems.append(f"{name} length != n_nodes")
    if problems:
        return problems
    pairs = [("train", t.train_mask, "val", t.val_mask),
             ("train", t.train_mask, "test", t.test_mask),
             ("val", t.val_mask, "test", t.test_mask)]
    for a, ma, b, mb in pairs:
        overlap = np.flatnonzero(ma & mb)
        if len(overlap):
            problems.append(f"{a}/{b} masks overlap at node {overlap[0]} ({len(overlap)} nodes)")
    masked = t.train_mask | t.val_mask | t.test_mask
    missing = np.flatnonzero(masked & (t.labels < 0))
    if len(missing):
        problems.append(f"masked node {missing[0]} has no label ({len(missing)} nodes)")
    if not np.all(np.isfinite(t.features)):
        problems.append("non-finite feature value")
    return problems

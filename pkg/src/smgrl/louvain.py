"""Deterministic Louvain modularity optimization."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graph import Graph

MIN_GAIN = 1e-7
DEFAULT_RESTARTS = 8


def modularity(adj, communities) -> float:
    """Newman modularity of a partition; diagonal entries count as self-loops."""
    a = sp.csr_matrix(adj, dtype=np.float64)
    comm = np.asarray(communities)
    two_m = a.sum()
    if two_m == 0:
        return 0.0
    k = np.asarray(a.sum(axis=1)).ravel()
    _, c = np.unique(comm, return_inverse=True)
    coo = a.tocoo()
    inside = coo.data[c[coo.row] == c[coo.col]].sum()
    tot = np.bincount(c, weights=k)
    return float(inside / two_m - np.sum((tot / two_m) ** 2))


def _one_level(a: sp.csr_matrix, rng: np.random.Generator, shuffle: bool) -> np.ndarray:
    """Single-node moves until no move increases modularity.

    Nodes are scanned in ascending order, or in a seeded random order when
    ``shuffle`` is set. Equal-gain target communities are ranked by a seeded
    random priority, so ties do not depend on index order.
    """
    n = a.shape[0]
    k = np.asarray(a.sum(axis=1)).ravel()
    two_m = k.sum()
    comm = np.arange(n)
    tot = k.copy()
    priority = rng.permutation(n)
    order = rng.permutation(n) if shuffle else range(n)
    improved = True
    while improved:
        improved = False
        for i in order:
            ci = comm[i]
            lo, hi = a.indptr[i], a.indptr[i + 1]
            links: dict[int, float] = {}
            for j, w in zip(a.indices[lo:hi], a.data[lo:hi]):
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + w
            tot[ci] -= k[i]
            # gain of joining community c, up to a factor shared by all candidates
            best_c = ci
            best_gain = links.get(ci, 0.0) - k[i] * tot[ci] / two_m
            for c, w in links.items():
                gain = w - k[i] * tot[c] / two_m
                if gain > best_gain + MIN_GAIN:
                    best_c, best_gain = c, gain
                elif gain >= best_gain - MIN_GAIN and best_c != ci and priority[c] < priority[best_c]:
                    best_c, best_gain = c, gain
            tot[best_c] += k[i]
            if best_c != ci:
                comm[i] = best_c
                improved = True
    _, relabeled = np.unique(comm, return_inverse=True)
    return relabeled


def _aggregate(a: sp.csr_matrix, comm: np.ndarray) -> sp.csr_matrix:
    n_c = comm.max() + 1
    s = sp.csr_matrix((np.ones(len(comm)), (np.arange(len(comm)), comm)), shape=(len(comm), n_c))
    return sp.csr_matrix(s.T @ a @ s)


def louvain(g: Graph | sp.spmatrix, seed: int = 0, restarts: int = DEFAULT_RESTARTS) -> np.ndarray:
    """Community id per node, numbered by first appearance in node order.

    Alternates local moves and community contraction until a full round adds
    less than ``MIN_GAIN`` modularity. The first run scans nodes in ascending
    order, later runs in seeded random orders; the partition with the highest
    modularity wins, earliest run on ties. Edgeless graphs return singletons.
    """
    adj = g.adj if isinstance(g, Graph) else sp.csr_matrix(g)
    n = adj.shape[0]
    if n == 0:
        raise ValueError("graph has no nodes")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if adj.sum() == 0:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    best, best_q = None, -np.inf
    for run in range(restarts):
        membership, q = _run(adj, rng, shuffle=run > 0)
        if q > best_q + 1e-12:
            best, best_q = membership, q
    return _first_appearance(best)


def _run(adj: sp.csr_matrix, rng: np.random.Generator, shuffle: bool) -> tuple[np.ndarray, float]:
    n = adj.shape[0]
    membership = np.arange(n)
    a = sp.csr_matrix(adj, dtype=np.float64)
    q = modularity(adj, membership)
    while True:
        comm = _one_level(a, rng, shuffle)
        if comm.max() + 1 == a.shape[0]:
            break
        candidate = comm[membership]
        q_new = modularity(adj, candidate)
        if q_new - q < MIN_GAIN:
            break
        membership, q = candidate, q_new
        a = _aggregate(a, comm)
    return membership, q


def _first_appearance(labels: np.ndarray) -> np.ndarray:
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(np.argsort(first))
    _, inv = np.unique(labels, return_inverse=True)
    return order[inv]

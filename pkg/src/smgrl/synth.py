"""Seeded generators for synthetic benchmarks and coarsening structure studies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, NodeTable

FAMILIES = ("chain", "sbm", "erdos_renyi", "circular_ladder", "nws", "star")


@dataclass(frozen=True)
class SynthSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        for key, val in self.params.items():
            if key in ("p", "p_in", "p_out") and not 0 <= float(val) <= 1:
                raise ValueError(f"{key}={val} is not a probability")


def _upper_bernoulli(n: int, prob: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < prob[iu, ju]
    return iu[keep], ju[keep]


def gen_chain(num_chains: int = 600, length: int = 2, n_features: int = 100,
              seed: int = 0, n_train: int = 20, n_val: int = 100,
              n_test: int = 100, noise_scale: float = 0.01) -> tuple[Graph, NodeTable]:
    """Disjoint labeled paths where only each path's last node carries the label.

    Chain ``c`` occupies nodes ``c*length ... c*length + length - 1``. Half the
    chains belong to each class. Columns 2 onward are Gaussian noise with
    standard deviation ``noise_scale``; the first two columns are zero except
    on each path's last node, where they hold the one-hot class code. The
    split draws nodes (not chains) stratified by class.
    """
    if n_features < 2:
        raise ValueError("need at least 2 feature columns for the class code")
    if length < 2:
        raise ValueError("chain length must be at least 2")
    if num_chains % 2:
        raise ValueError("num_chains must be even to split classes equally")
    rng = np.random.default_rng(seed)
    n = num_chains * length
    chain_class = rng.permutation(np.repeat([0, 1], num_chains // 2))
    labels = np.repeat(chain_class, length).astype(np.int64)
    x = noise_scale * rng.standard_normal((n, n_features))
    # the two code columns are silent everywhere except on the informative node
    x[:, :2] = 0.0
    last = np.arange(num_chains) * length + length - 1
    x[last, chain_class] = 1.0

    starts = np.arange(num_chains) * length
    u = (starts[:, None] + np.arange(length - 1)).ravel()
    g = Graph.from_edges(n, u, u + 1)

    split = np.full(n, "none", dtype=object)
    order = []
    for cls in (0, 1):
        order.append(rng.permutation(np.flatnonzero(labels == cls)))
    counts = [n_train, n_val, n_test]
    names = ["train", "val", "test"]
    offsets = [0, 0]
    for name, total in zip(names, counts):
        per = [total // 2, total - total // 2]
        for cls in (0, 1):
            pick = order[cls][offsets[cls]:offsets[cls] + per[cls]]
            split[pick] = name
            offsets[cls] += per[cls]
    return g, NodeTable.from_split(x, labels, split)


def gen_sbm(sizes=(10, 20, 30), p_in: float = 0.8, p_out: float = 0.03,
            seed: int = 0) -> tuple[Graph, np.ndarray]:
    """Stochastic blockmodel; returns the graph and planted block ids."""
    sizes = list(sizes)
    if not sizes:
        raise ValueError("sizes must be nonempty")
    rng = np.random.default_rng(seed)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    prob = np.where(blocks[:, None] == blocks[None, :], p_in, p_out)
    u, v = _upper_bernoulli(len(blocks), prob, rng)
    return Graph.from_edges(len(blocks), u, v), blocks


def gen_erdos_renyi(n: int = 100, p: float = 0.2, seed: int = 0) -> Graph:
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    u, v = _upper_bernoulli(n, np.full((n, n), p), rng)
    return Graph.from_edges(n, u, v)


def gen_circular_ladder(n_rungs: int = 25) -> Graph:
    """Two concentric cycles of ``n_rungs`` nodes joined rung by rung."""
    if n_rungs < 3:
        raise ValueError("need at least 3 rungs")
    i = np.arange(n_rungs)
    nxt = (i + 1) % n_rungs
    u = np.concatenate([i, i + n_rungs, i])
    v = np.concatenate([nxt, nxt + n_rungs, i + n_rungs])
    return Graph.from_edges(2 * n_rungs, u, v)


def gen_nws(n: int = 100, k: int = 5, p: float = 0.1, seed: int = 0) -> Graph:
    """Newman-Watts small world: a ring lattice plus random shortcuts, no rewiring.

    Each node links to its ``k // 2`` nearest neighbors on either side. For
    every lattice edge ``(u, v)`` a shortcut ``(u, w)`` to a uniformly chosen
    non-neighbor ``w`` is added with probability ``p``.
    """
    if not 0 < k < n:
        raise ValueError("need 0 < k < n")
    rng = np.random.default_rng(seed)
    half = k // 2
    edges = set()
    for j in range(1, half + 1):
        for u in range(n):
            v = (u + j) % n
            edges.add((min(u, v), max(u, v)))
    lattice = sorted(edges)
    nbrs = {u: set() for u in range(n)}
    for u, v in lattice:
        nbrs[u].add(v)
        nbrs[v].add(u)
    for u, _ in lattice:
        if rng.random() < p:
            free = [w for w in range(n) if w != u and w not in nbrs[u]]
            if not free:
                continue
            w = free[rng.integers(len(free))]
            edges.add((min(u, w), max(u, w)))
            nbrs[u].add(w)
            nbrs[w].add(u)
    arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return Graph.from_edges(n, arr[:, 0], arr[:, 1])


def gen_star(n_leaves: int = 9) -> Graph:
    leaves = np.arange(1, n_leaves + 1)
    return Graph.from_edges(n_leaves + 1, np.zeros(n_leaves, dtype=np.int64), leaves)


def generate(spec: SynthSpec) -> tuple[Graph, NodeTable]:
    """Build any family as a (graph, node table) pair ready to save as a container.

    Structure-study families get a single constant feature column; the SBM
    exposes its blocks as labels. Only the chain family carries a split.
    """
    p = dict(spec.params)
    if spec.family == "chain":
        return gen_chain(seed=spec.seed, **p)
    labels = None
    if spec.family == "sbm":
        g, labels = gen_sbm(seed=spec.seed, **p)
    elif spec.family == "erdos_renyi":
        g = gen_erdos_renyi(seed=spec.seed, **p)
    elif spec.family == "circular_ladder":
        g = gen_circular_ladder(**p)
    elif spec.family == "nws":
        g = gen_nws(seed=spec.seed, **p)
    else:
        g = gen_star(**p)
    n = g.n_nodes
    if labels is None:
        labels = np.full(n, -1, dtype=np.int64)
    table = NodeTable.from_split(np.ones((n, 1)), labels, np.full(n, "none"))
    return g, table

import itertools

import numpy as np
import pytest

from smgrl import nn
from smgrl.dmgrl import DmgrlConfig, dmgrl_embed, dmgrl_run, hierarchical_partition
from smgrl.graph import Graph, NodeTable
from smgrl.synth import gen_sbm

FAST = nn.TrainConfig(max_epochs=80, patience=20)


def triangles():
    g = Graph.from_edges(6, [0, 1, 0, 3, 4, 3, 2], [1, 2, 2, 4, 5, 5, 3])
    x = np.zeros((6, 2))
    split = np.array(["train", "val", "test", "train", "val", "test"])
    return g, NodeTable.from_split(x, np.array([0, 0, 0, 1, 1, 1]), split)


def sbm_table(seed):
    g, blocks = gen_sbm((12, 12, 12), 0.7, 0.03, seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((36, 5))
    split = np.array((["train", "val"] + ["test"] * 4) * 6)
    return g, NodeTable.from_split(x, blocks, split)


def test_two_triangles():
    g, t = triangles()
    part = hierarchical_partition(g, t)
    assert part.depth == 2
    assert part.routing.tolist() == [[i, i // 3, 0] for i in range(6)]
    res = dmgrl_run(g, t, DmgrlConfig(dim=4, train=FAST))
    assert res.scores["accuracy"] == 1.0


def test_routing_consistent_with_members():
    g, t = sbm_table(0)
    part = hierarchical_partition(g, t, seed=1)
    assert part.levels[-1].n_subgraphs == 1
    for ell, lv in enumerate(part.levels, start=1):
        rep = part.representative[:, ell - 1]
        # the subgraph routed to at level ell holds the node's representative
        assert np.array_equal(lv.community[rep], part.routing[:, ell])
        for j, members in enumerate(lv.members):
            assert np.all(lv.community[members] == j)
            assert np.array_equal(lv.position[members], np.arange(len(members)))


def test_order_does_not_matter():
    g, t = sbm_table(2)
    part = hierarchical_partition(g, t)
    cfg = DmgrlConfig(dim=3, train=FAST)
    base, frozen, _ = dmgrl_embed(part, t, cfg)
    jobs = [(ell, j) for ell in range(1, part.depth + 1) for j in range(part.levels[ell - 1].n_subgraphs)]
    for order in [jobs[::-1], list(np.random.default_rng(0).permutation(len(jobs)))]:
        order = [jobs[i] for i in order] if isinstance(order[0], (int, np.integer)) else order
        other, frozen2, _ = dmgrl_embed(part, t, cfg, order=order)
        assert frozen == frozen2
        for a, b in zip(base.lifted, other.lifted):
            assert np.array_equal(a, b)


def test_memory_bound():
    g, t = sbm_table(3)
    part = hierarchical_partition(g, t)
    _, _, max_nodes = dmgrl_embed(part, t, DmgrlConfig(dim=3, train=FAST))
    assert max_nodes <= part.max_subgraph_size


def test_unlabeled_subgraph_is_frozen():
    g, t = sbm_table(4)
    labels = t.labels.copy()
    train = t.train_mask & (labels != 2)
    val = t.val_mask & (labels != 2)
    t2 = NodeTable(t.features, labels, train, val, t.test_mask)
    part = hierarchical_partition(g, t2, seed=0)
    res = dmgrl_run(g, t2, DmgrlConfig(dim=3, train=FAST), partition=part)
    assert any(ell == 1 for ell, _ in res.frozen_subgraphs)


def test_bottom_partition():
    g, t = sbm_table(5)
    bottom = np.repeat([7, 3, 5], 12)
    part = hierarchical_partition(g, t, bottom=bottom)
    assert part.levels[0].n_subgraphs == 3
    with pytest.raises(ValueError):
        hierarchical_partition(g, t, bottom=np.zeros(5))


def test_include_features_needs_concat():
    g, t = triangles()
    with pytest.raises(ValueError):
        dmgrl_run(g, t, DmgrlConfig(dim=2, include_features=True, train=FAST))
    res = dmgrl_run(g, t, DmgrlConfig(dim=2, include_features=True, combine="concat", train=FAST))
    assert res.embeddings.n_levels == 3


def test_report():
    g, t = sbm_table(6)
    rep = hierarchical_partition(g, t).report()
    assert rep["levels"][0]["n_subgraphs"] == 3
    assert rep["max_subgraph_size"] >= 12
    assert sum(int(k) * v for k, v in rep["levels"][0]["size_histogram"].items()) == 36

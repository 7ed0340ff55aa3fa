import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smgrl.metrics import accuracy, macro_f1


def f1_oracle(pred, truth):
    """Per-class F1 from precision and recall, averaged over classes seen anywhere."""
    classes = sorted(set(pred) | set(truth))
    scores = []
    for c in classes:
        tp = sum(1 for p, t in zip(pred, truth) if p == c and t == c)
        n_pred = sum(1 for p in pred if p == c)
        n_true = sum(1 for t in truth if t == c)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_true if n_true else 0.0
        scores.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(scores) / len(scores)


def test_matches_oracle_on_random_cases():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        c = int(rng.integers(1, 8))
        pred, truth = rng.integers(0, c, n), rng.integers(0, c, n)
        assert abs(macro_f1(pred, truth) - f1_oracle(pred.tolist(), truth.tolist())) <= 1e-12


def test_one_third():
    assert macro_f1([0, 2, 1], [0, 1, 2]) == pytest.approx(1 / 3, abs=1e-15)


def test_perfect_and_mask():
    truth = np.array([0, 1, 1, 2])
    pred = np.array([0, 1, 0, 2])
    assert macro_f1(truth, truth) == 1.0
    assert macro_f1(pred, truth, np.array([1, 1, 0, 1], dtype=bool)) == 1.0
    assert accuracy(pred, truth) == 0.75


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40), st.integers(0, 100))
def test_invariant_under_relabeling(pairs, seed):
    pred, truth = map(np.array, zip(*pairs))
    perm = np.random.default_rng(seed).permutation(5)
    assert macro_f1(perm[pred], perm[truth]) == pytest.approx(macro_f1(pred, truth), abs=1e-12)
    order = np.random.default_rng(seed).permutation(len(pred))
    assert macro_f1(pred[order], truth[order]) == pytest.approx(macro_f1(pred, truth), abs=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        macro_f1([0, 1], [0])
    with pytest.raises(ValueError):
        macro_f1([0, 1], [0, 1], [False, False])

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from trailercf.metrics import auc, auc_pairwise, get_relative_error


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.1, 0.9], [1, 0]) == 0.0
    assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    assert auc([0.8, 0.8, 0.3], [1, 0, 0]) == 0.75


def test_auc_needs_both_classes():
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [0, 2])


def test_auc_matches_pairwise_count_and_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 500))
        labels = rng.integers(2, size=n)
        labels[:2] = [0, 1]
        # integer scores produce ties
        scores = rng.integers(0, 20, size=n) if rng.integers(2) else rng.normal(size=n)
        expected = auc_pairwise(scores, labels)
        assert abs(auc(scores, labels) - expected) < 1e-12
        assert abs(roc_auc_score(labels, scores) - expected) < 1e-12


def test_auc_invariant_under_increasing_transforms():
    rng = np.random.default_rng(1)
    labels = np.r_[np.ones(30, dtype=int), np.zeros(70, dtype=int)]
    scores = rng.integers(0, 50, size=100) / 8.0
    reference = auc(scores, labels)
    assert auc(2.0 * scores + 1.0, labels) == reference
    assert auc(np.exp(scores), labels) == reference


def test_auc_of_reversed_scores():
    rng = np.random.default_rng(2)
    labels = rng.integers(2, size=60)
    labels[:2] = [0, 1]
    scores = rng.permutation(60).astype(float)
    assert abs(auc(scores, labels) + auc(-scores, labels) - 1.0) < 1e-12


def test_get_relative_error():
    assert get_relative_error(1.0, 1.0) == 0.0
    assert get_relative_error(2.0, 1.0) == 0.5
    assert get_relative_error(0.0, 0.0) == 0.0
    assert get_relative_error([1.0, 4.0], [1.0, 2.0]) == 0.5


if __name__ == "__main__":
    test_auc_examples()
    test_auc_matches_pairwise_count_and_sklearn()
    pass

import numpy as np
from scipy.stats import rankdata

from trailercf.errors import ShapeError


def _check_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ShapeError(f"{len(scores)} scores for {len(labels)} labels")
    if not np.all(np.isin(labels, [0, 1])):
        raise ValueError("labels must be 0 or 1")
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"AUC needs at least one positive and one negative, got {n_pos} positive and {n_neg} negative"
        )
    return scores, labels, n_pos, n_neg


def auc(scores, labels):
    """
    Area under the ROC curve as a rank statistic.

    The probability that a random positive outscores a random negative, ties counted
    as one half. Ranks are averaged over ties (Mann-Whitney U), in :math:`O(n \\log n)`.

    Args:
        scores: real scores, higher meaning more likely positive.
        labels: 0/1 labels.

    Returns:
        float in [0, 1].

    Example:

        >>> auc([0.8, 0.8, 0.3], [1, 0, 0])
        0.75
    """
    scores, labels, n_pos, n_neg = _check_scores_labels(scores, labels)
    ranks = rankdata(scores, method="average")
    u_statistic = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_statistic / (n_pos * n_neg))


def auc_pairwise(scores, labels):
    """Brute force :math:`O(n^2)` AUC counting every positive/negative pair."""
    scores, labels, n_pos, n_neg = _check_scores_labels(scores, labels)
    pos, neg = scores[labels], scores[~labels]
    diff = pos[:, None] - neg[None, :]
    wins = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
    return float(wins / (n_pos * n_neg))


def get_relative_error(a, b, floor=1e-12):
    """``|a - b| / max(|a|, |b|, floor)``, elementwise maximum when given arrays."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denominator = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denominator))

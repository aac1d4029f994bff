"""
Pair samplers.

Training batches are half positives from the train pool, half negatives drawn for the
same users among the in-matrix movies they never attended. Evaluation samples mix
positives of one pool with nine negatives each.
"""

import logging

import numpy as np

from trailercf.errors import SamplingError
from trailercf.random_utils import get_rng

logger = logging.getLogger(__name__)

EVAL_NEGATIVES_PER_POSITIVE = 9


def draw_negative(user_id, candidates, excluded, rng, max_tries=32):
    """
    One movie of ``candidates`` outside ``excluded``.

    Rejection sampling first, then a uniform draw over the explicit complement.

    Raises:
        SamplingError: when every candidate is excluded.
    """
    for _ in range(max_tries):
        movie = candidates[int(rng.integers(len(candidates)))]
        if movie not in excluded:
            return movie
    allowed = [m for m in candidates if m not in excluded]
    if not allowed:
        raise SamplingError(f"user {user_id!r} attended every candidate movie, no negative to draw")
    return allowed[int(rng.integers(len(allowed)))]


def sample_training_batch(split, batch_size, rng):
    """
    A balanced training batch.

    Args:
        split (DatasetSplit): positives come from ``split.train``.
        batch_size (int): even number of pairs.
        rng: seed or ``numpy.random.Generator``.

    Returns:
        list of ``(user_id, movie_id, label)``, positives first. Negatives are never cold-start
        movies nor positives of their user in any pool.

    Example:

        >>> batch = sample_training_batch(split, 64, 0)
        >>> sum(label for _, _, label in batch)
        32
    """
    batch_size = int(batch_size)
    if batch_size < 2 or batch_size % 2:
        raise SamplingError(f"batch_size must be even and >= 2, got {batch_size}")
    if not len(split.train):
        raise SamplingError("empty train pool")
    if not split.in_matrix_movies:
        raise SamplingError("no in-matrix movie to draw negatives from")
    rng = get_rng(rng)
    half = batch_size // 2
    rows = rng.integers(len(split.train), size=half)
    users = split.train["user_id"].to_numpy()[rows]
    movies = split.train["movie_id"].to_numpy()[rows]
    positives = [(u, m, 1) for u, m in zip(users, movies)]
    negatives = [
        (u, draw_negative(u, split.in_matrix_movies, split.user_positives(u), rng), 0) for u in users
    ]
    return positives + negatives


def sample_eval_pairs(split, which, total, rng):
    """
    ``total / 10`` positives of pool ``which`` and nine negatives per positive.

    Negatives are drawn for the positive's user among the cold-start movies when ``which``
    is ``"cold_start"``, among the in-matrix movies otherwise, never among the user's
    positives. Positives are drawn without replacement while the pool is large enough.

    Returns:
        list of ``(user_id, movie_id, label)``, positives first.
    """
    total = int(total)
    if total <= 0 or total % (EVAL_NEGATIVES_PER_POSITIVE + 1):
        raise SamplingError(f"total must be a positive multiple of 10, got {total}")
    pool = split.pool(which)
    if not len(pool):
        raise SamplingError(f"empty {which} pool")
    candidates = split.cold_start_movies if which == "cold_start" else split.in_matrix_movies
    rng = get_rng(rng)
    n_positives = total // (EVAL_NEGATIVES_PER_POSITIVE + 1)
    if n_positives <= len(pool):
        rows = np.sort(rng.choice(len(pool), size=n_positives, replace=False))
    else:
        logger.warning("%s pool holds %d pairs, %d positives drawn with replacement", which, len(pool), n_positives)
        rows = rng.integers(len(pool), size=n_positives)
    users = pool["user_id"].to_numpy()[rows]
    movies = pool["movie_id"].to_numpy()[rows]
    positives = [(u, m, 1) for u, m in zip(users, movies)]
    negatives = [
        (u, draw_negative(u, candidates, split.user_positives(u), rng), 0)
        for u in users
        for _ in range(EVAL_NEGATIVES_PER_POSITIVE)
    ]
    return positives + negatives

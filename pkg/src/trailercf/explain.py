"""
Trailer windows that strongly activate a channel of the last relu layer.

Per channel statistics are pooled over every (movie, timestep) position of every trailer.
A position is a hit when its activation is at least two standard deviations above the
channel mean; the hit is reported with the frame window feeding that timestep.
"""

import logging
import warnings
from collections import namedtuple

import numpy as np
import pandas as pd

from trailercf.file import read_table, save_to_file
from trailercf.model import conv_activations, receptive_field

logger = logging.getLogger(__name__)

HITS_COLUMNS = ["channel", "movie_id", "timestep", "first_frame", "last_frame", "activation"]
N_STD = 2.0

ActivationHit = namedtuple(
    "ActivationHit", ["channel", "movie_id", "output_timestep", "activation", "frame_window"]
)


class ChannelStats:
    """
    Streamed per channel mean and population standard deviation.

    Partial statistics of disjoint sets of positions combine with :meth:`merge`.
    """

    def __init__(self, count, mean, m2):
        self.count = int(count)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.m2 = np.asarray(m2, dtype=np.float64)

    @classmethod
    def empty(cls, n_channels):
        return cls(0, np.zeros(n_channels), np.zeros(n_channels))

    @classmethod
    def from_activations(cls, h):
        """Statistics of ``(..., C)`` activations, every leading index being one position."""
        h = np.asarray(h, dtype=np.float64)
        h = h.reshape(-1, h.shape[-1])
        mean = h.mean(axis=0)
        return cls(len(h), mean, ((h - mean) ** 2).sum(axis=0))

    def merge(self, other):
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / count
        return ChannelStats(count, mean, m2)

    @property
    def std(self):
        return np.sqrt(np.maximum(self.m2, 0.0) / max(self.count, 1))

    def threshold(self, n_std=N_STD):
        return self.mean + n_std * self.std

    def __repr__(self):
        return f"ChannelStats({len(self.mean)} channels over {self.count} positions)"


def _batches(all_features, batch_size):
    """``(movie_ids, X)`` chunks of a FeatureBank or of a ``{movie_id: frames}`` mapping."""
    if hasattr(all_features, "stack"):
        movie_ids = list(all_features.movie_ids)
    else:
        movie_ids = list(all_features)
    for start in range(0, len(movie_ids), batch_size):
        chunk = movie_ids[start : start + batch_size]
        if hasattr(all_features, "stack"):
            yield chunk, all_features.stack(chunk)
        else:
            yield chunk, np.stack([np.asarray(all_features[m], dtype=np.float64) for m in chunk])


def channel_activation_stats(params, config, all_features, batch_size=64):
    """
    Mean and population standard deviation of every channel of the last relu layer.

    Args:
        params (ModelParams): convolution model parameters.
        config (EncoderConfig): architecture.
        all_features: FeatureBank or ``{movie_id: (max_frames, D) array}``.

    Returns:
        ChannelStats over all movies and timesteps.
    """
    stats = ChannelStats.empty(config.conv_out_channels)
    for _, X in _batches(all_features, batch_size):
        stats = stats.merge(ChannelStats.from_activations(conv_activations(X, params, config)))
    if stats.count < 2:
        raise ValueError(f"channel statistics need at least 2 positions, got {stats.count}")
    dead = int(np.sum((stats.mean == 0) & (stats.std == 0)))
    if dead:
        warnings.warn(f"{dead} of {len(stats.mean)} channels never activate")
    logger.info("%s", stats)
    return stats


def top_activating_windows(params, config, all_features, stats, channel, max_hits=20, batch_size=64):
    """
    Positions where ``channel`` reaches ``mean + 2 std``, strongest first.

    Returns:
        at most ``max_hits`` :data:`ActivationHit`, sorted by decreasing activation then by
        movie id and timestep. A dead channel (zero mean and deviation) has no hit.
    """
    channel = int(channel)
    if not 0 <= channel < len(stats.mean):
        raise IndexError(f"channel {channel} outside [0, {len(stats.mean)})")
    if max_hits <= 0 or (stats.mean[channel] == 0 and stats.std[channel] == 0):
        return []
    threshold = stats.threshold()[channel]
    candidates = []
    for movie_ids, X in _batches(all_features, batch_size):
        h = conv_activations(X, params, config)[..., channel]
        for i, t in zip(*np.nonzero(h >= threshold)):
            candidates.append((-float(h[i, t]), movie_ids[i], int(t)))
    candidates.sort()
    return [
        ActivationHit(channel, movie_id, t, -negative, receptive_field(config, t))
        for negative, movie_id, t in candidates[: int(max_hits)]
    ]


def mine_channels(params, config, all_features, stats, channels=None, max_hits=20):
    """:func:`top_activating_windows` over ``channels`` (all by default), merged by activation."""
    channels = range(len(stats.mean)) if channels is None else channels
    hits = []
    for channel in channels:
        hits.extend(top_activating_windows(params, config, all_features, stats, channel, max_hits))
    return sorted(hits, key=lambda hit: (-hit.activation, hit.channel, hit.movie_id, hit.output_timestep))


def hits_frame(hits):
    rows = [
        (hit.channel, hit.movie_id, hit.output_timestep, hit.frame_window[0], hit.frame_window[1], hit.activation)
        for hit in hits
    ]
    return pd.DataFrame(rows, columns=HITS_COLUMNS)


def export_hits(hits, path):
    """Write the hits CSV; activations keep every significant digit."""
    save_to_file(hits_frame(hits), path, float_format="%.17g")


def load_hits(path):
    frame = read_table(
        path,
        HITS_COLUMNS,
        integer_columns=["channel", "timestep", "first_frame", "last_frame"],
        real_columns=["activation"],
    )
    return [
        ActivationHit(int(c), m, int(t), float(a), (int(first), int(last)))
        for c, m, t, first, last, a in frame.itertuples(index=False, name=None)
    ]

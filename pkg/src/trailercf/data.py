"""
Dataset assembly: trailers, attendance records, splits and per-user histories.

Inputs are the ``.tfv`` feature files listed by a manifest CSV
(``movie_id,release_ts,feature_path``) and an attendance CSV
(``user_id,movie_id,timestamp``). :func:`make_splits` holds out the newest movies as
the cold-start set and partitions the remaining positive pairs 80/10/10;
:class:`FeatureBank` and :class:`UserIndex` turn the split into what the model consumes.
"""

import logging
import os
import warnings
from collections import namedtuple

import numpy as np
import pandas as pd

from trailercf.data_conversion import get_matrix
from trailercf.errors import RecordFormatError, ShapeError
from trailercf.file import read_table, read_tfv, save_to_file, write_tfv
from trailercf.model import UserContext
from trailercf.parallel import parallel_task
from trailercf.random_utils import get_rng

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
MANIFEST_COLUMNS = ["movie_id", "release_ts", "feature_path"]
RECORD_COLUMNS = ["user_id", "movie_id", "timestamp"]
SPLIT_COLUMNS = RECORD_COLUMNS + ["pool"]
POOLS = ("train", "validation", "test", "cold_start")

AttendanceRecord = namedtuple("AttendanceRecord", RECORD_COLUMNS)


class FrameFeatureSequence:
    """One trailer: ``frames`` is a ``(T, D)`` float64 matrix, one row per second of video."""

    def __init__(self, movie_id, frames):
        self.movie_id = str(movie_id)
        frames = get_matrix(frames, name=f"frames of {self.movie_id}")
        if frames.ndim != 2:
            raise ShapeError(f"frames of {self.movie_id} must be (T, D), got shape {frames.shape}")
        self.frames = frames

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]

    def __repr__(self):
        return f"FrameFeatureSequence({self.movie_id!r}, {self.n_frames}x{self.dim})"


############################## files ##############################


def load_feature_file(path, movie_id=None):
    """
    Load one ``.tfv`` trailer, widened to float64.

    ``movie_id`` defaults to the file name without extension.
    """
    if movie_id is None:
        movie_id = os.path.splitext(os.path.basename(str(path)))[0]
    return FrameFeatureSequence(movie_id, read_tfv(path))


def write_feature_file(seq, path):
    write_tfv(seq.frames, path)


def normalize_length(seq, max_frames):
    """Truncate to the first ``max_frames`` frames or zero-pad at the end up to ``max_frames``."""
    max_frames = int(max_frames)
    if max_frames < 1:
        raise ShapeError(f"max_frames must be >= 1, got {max_frames}")
    if seq.n_frames == max_frames:
        return seq
    if seq.n_frames > max_frames:
        return FrameFeatureSequence(seq.movie_id, seq.frames[:max_frames])
    padded = np.zeros((max_frames, seq.dim))
    padded[: seq.n_frames] = seq.frames
    return FrameFeatureSequence(seq.movie_id, padded)


def load_manifest(path):
    """
    Read the manifest. Feature paths are resolved relative to the manifest directory.

    Returns:
        DataFrame ``movie_id, release_ts, feature_path`` in file order.
    """
    manifest = read_table(path, MANIFEST_COLUMNS, integer_columns=["release_ts"])
    duplicated = manifest["movie_id"].duplicated().to_numpy()
    if duplicated.any():
        row = int(np.argmax(duplicated))
        raise RecordFormatError(path, row + 2, f"duplicate movie_id {manifest['movie_id'].iloc[row]!r}")
    negative = (manifest["release_ts"] < 0).to_numpy()
    if negative.any():
        raise RecordFormatError(path, int(np.argmax(negative)) + 2, "negative release_ts")
    root = os.path.dirname(os.path.abspath(str(path)))
    manifest["feature_path"] = [
        p if os.path.isabs(p) else os.path.normpath(os.path.join(root, p)) for p in manifest["feature_path"]
    ]
    return manifest


def movie_release_order(manifest):
    """Movie ids from oldest to newest release, ties broken by movie id."""
    ordered = manifest.sort_values(["release_ts", "movie_id"], kind="mergesort")
    return ordered["movie_id"].tolist()


def load_attendance(path):
    """
    Read the attendance CSV.

    Returns:
        list of :class:`AttendanceRecord`. Exact duplicate rows are dropped.

    Raises:
        RecordFormatError: malformed row, naming its line.
    """
    frame = read_table(path, RECORD_COLUMNS, integer_columns=["timestamp"])
    negative = (frame["timestamp"] < 0).to_numpy()
    if negative.any():
        raise RecordFormatError(path, int(np.argmax(negative)) + 2, "negative timestamp")
    duplicated = frame.duplicated().to_numpy()
    if duplicated.any():
        logger.warning("%s: %d duplicate attendance rows dropped", path, int(duplicated.sum()))
        frame = frame[~duplicated]
    return [AttendanceRecord(*row) for row in frame.itertuples(index=False, name=None)]


def write_attendance(records, path):
    save_to_file(records_frame(records), path)


def records_frame(records):
    """Attendance records (list or DataFrame) as a ``user_id, movie_id, timestamp`` DataFrame."""
    if isinstance(records, pd.DataFrame):
        frame = records[RECORD_COLUMNS].copy()
    else:
        frame = pd.DataFrame(list(records), columns=RECORD_COLUMNS)
    frame["user_id"] = frame["user_id"].astype(str)
    frame["movie_id"] = frame["movie_id"].astype(str)
    frame["timestamp"] = frame["timestamp"].astype(np.int64)
    return frame.reset_index(drop=True)


def load_demographics(path):
    """Optional ``user_id,f0,f1,...`` CSV; returns ``{user_id: vector}``."""
    header = list(read_table(path, ["user_id"], allow_extra=True).columns)
    if len(header) < 2:
        raise RecordFormatError(path, 1, "no demographic column")
    frame = read_table(path, header, real_columns=header[1:])
    values = frame[list(header[1:])].to_numpy(dtype=np.float64)
    return {user: values[i] for i, user in enumerate(frame["user_id"])}


############################## splits ##############################


class DatasetSplit:
    """
    Positive pair pools and the cold-start movie set.

    ``train``, ``validation``, ``test`` and ``cold_start`` are DataFrames
    ``user_id, movie_id, timestamp``; the first three partition the in-matrix positive
    pairs, ``cold_start`` holds every positive pair on a cold-start movie.
    """

    def __init__(self, cold_start_movies, in_matrix_movies, train, validation, test, cold_start, rng_seed=0):
        self.cold_start_movies = list(cold_start_movies)
        self.in_matrix_movies = list(in_matrix_movies)
        self.train = train.reset_index(drop=True)
        self.validation = validation.reset_index(drop=True)
        self.test = test.reset_index(drop=True)
        self.cold_start = cold_start.reset_index(drop=True)
        self.rng_seed = int(rng_seed)
        overlap = set(self.cold_start_movies) & set(self.in_matrix_movies)
        if overlap:
            raise ValueError(f"movies both cold-start and in-matrix: {sorted(overlap)[:5]}")
        positives = pd.concat([self.train, self.validation, self.test, self.cold_start])
        self._positives = {
            user: frozenset(movies) for user, movies in positives.groupby("user_id")["movie_id"]
        }

    def pool(self, which):
        if which not in POOLS:
            raise ValueError(f"unknown pool {which!r}, expected one of {POOLS}")
        return getattr(self, which)

    def user_positives(self, user_id):
        """Every movie the user attended, in any pool."""
        return self._positives.get(user_id, frozenset())

    def sizes(self):
        return {which: len(self.pool(which)) for which in POOLS}

    def to_frame(self):
        frames = [self.pool(which).assign(pool=which) for which in POOLS]
        return pd.concat(frames, ignore_index=True)[SPLIT_COLUMNS]

    def __repr__(self):
        sizes = ", ".join(f"{k}={v}" for k, v in self.sizes().items())
        return f"DatasetSplit({len(self.cold_start_movies)} cold-start movies, {sizes})"


def _dedupe_pairs(frame):
    """One row per (user, movie), keeping the earliest timestamp."""
    frame = frame.sort_values(RECORD_COLUMNS, kind="mergesort")
    return frame.drop_duplicates(["user_id", "movie_id"], keep="first").reset_index(drop=True)


def make_splits(records, movie_release_order, n_cold=50, ratios=(0.8, 0.1, 0.1), seed=0):
    """
    Hold out the ``n_cold`` most recent movies and partition the other positives.

    Args:
        records: attendance records (list or DataFrame).
        movie_release_order: movie ids, oldest release first.
        n_cold (int): number of newest movies moved to the cold-start set.
        ratios: train/validation/test proportions, summing to one.
        seed (int): shuffling seed.

    Returns:
        DatasetSplit. Pool sizes are ``round(r_train n)``, ``round(r_val n)`` and the rest.

    Example:

        >>> split = make_splits(records, order, n_cold=50, seed=0)
        >>> len(split.in_matrix_movies)
        250
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non negative proportions summing to 1, got {ratios}")
    order = list(dict.fromkeys(str(m) for m in movie_release_order))
    n_cold = int(n_cold)
    if not 0 <= n_cold <= len(order):
        raise ValueError(f"n_cold={n_cold} outside [0, {len(order)}]")
    cold = order[len(order) - n_cold :]
    in_matrix = order[: len(order) - n_cold]

    pairs = _dedupe_pairs(records_frame(records))
    unknown = ~pairs["movie_id"].isin(order)
    if unknown.any():
        warnings.warn(
            f"{int(unknown.sum())} attendance pairs on movies missing from the release order were dropped"
        )
        pairs = pairs[~unknown]
    is_cold = pairs["movie_id"].isin(cold).to_numpy()
    cold_pairs = pairs[is_cold]
    warm = pairs[~is_cold].reset_index(drop=True)

    permutation = get_rng(seed).permutation(len(warm))
    n = len(warm)
    n_train = int(round(ratios[0] * n))
    n_validation = min(int(round(ratios[1] * n)), n - n_train)
    pools = np.split(permutation, [n_train, n_train + n_validation])
    train, validation, test = [warm.iloc[np.sort(p)] for p in pools]
    split = DatasetSplit(cold, in_matrix, train, validation, test, cold_pairs, rng_seed=seed)
    logger.info("%s", split)
    return split


def save_split(split, path):
    save_to_file(split.to_frame(), path)


def load_split(path, cold_start_movies, in_matrix_movies, seed=0):
    """Re-read a split written by :func:`save_split`; movie sets come from the release order."""
    frame = read_table(path, SPLIT_COLUMNS, integer_columns=["timestamp"])
    bad = ~frame["pool"].isin(POOLS).to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        raise RecordFormatError(path, row + 2, f"unknown pool {frame['pool'].iloc[row]!r}")
    pools = {which: frame.loc[frame["pool"] == which, RECORD_COLUMNS] for which in POOLS}
    return DatasetSplit(cold_start_movies, in_matrix_movies, rng_seed=seed, **pools)


############################## user features ##############################


def compute_frequency_recency(user, records, reference_time, window_days=365):
    """
    Visit frequency and recency of ``user`` at ``reference_time``.

    Only visits in ``[reference_time - window, reference_time)`` count. Frequency is their
    number, recency the days since the latest one (``window_days`` without any); both
    are divided by ``window_days``.

    Example:

        >>> compute_frequency_recency("u0", [], 0, 365)
        (0.0, 1.0)
    """
    frame = records_frame(records)
    table = frequency_recency_table(frame[frame["user_id"] == str(user)], reference_time, window_days)
    if str(user) not in table.index:
        return 0.0, 1.0
    row = table.loc[str(user)]
    return float(row["frequency"]), float(row["recency"])


def frequency_recency_table(records, reference_time, window_days=365):
    """:func:`compute_frequency_recency` for every user with a visit in the window, indexed by user_id."""
    if window_days <= 0:
        raise ValueError(f"window_days must be > 0, got {window_days}")
    frame = records_frame(records)
    start = reference_time - window_days * SECONDS_PER_DAY
    visible = frame[(frame["timestamp"] >= start) & (frame["timestamp"] < reference_time)]
    grouped = visible.groupby("user_id")["timestamp"]
    table = pd.DataFrame({"frequency": grouped.count(), "latest": grouped.max()})
    table["frequency"] = table["frequency"] / window_days
    table["recency"] = (reference_time - table["latest"]) / SECONDS_PER_DAY / window_days
    return table[["frequency", "recency"]]


def reference_time_for(records, release_ts_by_movie, cold_start_movies):
    """
    Time at which user features are computed: the earliest cold-start release, so that no
    cold-start attendance is visible, or just after the last record without a cold set.
    """
    if cold_start_movies:
        return int(min(release_ts_by_movie[m] for m in cold_start_movies))
    frame = records_frame(records)
    return int(frame["timestamp"].max()) + 1 if len(frame) else 0


class UserIndex:
    """
    Per-user model inputs.

    ``history`` holds the training visible attended movies, most recent first, capped at
    ``max_history``; ``stats`` the frequency/recency table; ``demographics`` is optional.
    """

    def __init__(self, history, stats, demographics=None, max_history=32):
        self.history = {user: tuple(movies) for user, movies in history.items()}
        self.stats = stats
        self.demographics = demographics
        self.max_history = int(max_history)
        self._contexts = {}

    @classmethod
    def from_split(cls, split, records, reference_time, window_days=365, max_history=32, demographics=None):
        train = split.train.sort_values(
            ["user_id", "timestamp", "movie_id"], ascending=[True, False, True], kind="mergesort"
        )
        history = {
            user: movies.tolist()[: int(max_history)] for user, movies in train.groupby("user_id")["movie_id"]
        }
        stats = frequency_recency_table(records, reference_time, window_days)
        return cls(history, stats, demographics, max_history)

    @classmethod
    def from_pools(cls, split, window_days=365, max_history=32):
        """
        Index built from the split alone: user features see the deduplicated pool pairs and
        are taken at the first cold-start attendance, or after the last pair.
        """
        records = split.to_frame()
        if len(split.cold_start):
            reference_time = int(split.cold_start["timestamp"].min())
        else:
            reference_time = reference_time_for(records, {}, [])
        return cls.from_split(split, records, reference_time, window_days, max_history)

    def context(self, user_id):
        if user_id not in self._contexts:
            if user_id in self.stats.index:
                frequency, recency = self.stats.loc[user_id, ["frequency", "recency"]]
            else:
                frequency, recency = 0.0, 1.0
            demographics = None
            if self.demographics is not None:
                if user_id not in self.demographics:
                    raise KeyError(f"no demographics for user {user_id!r}")
                demographics = self.demographics[user_id]
            self._contexts[user_id] = UserContext(
                user_id, self.history.get(user_id, ()), frequency, recency, demographics
            )
        return self._contexts[user_id]

    def contexts(self, pairs):
        """``[(UserContext, movie_id), ...]`` for ``(user_id, movie_id, ...)`` tuples."""
        return [(self.context(p[0]), p[1]) for p in pairs]

    def labeled(self, batch):
        """``[(UserContext, movie_id, label), ...]`` for ``(user_id, movie_id, label)`` tuples."""
        return [(self.context(u), m, y) for u, m, y in batch]


############################## features ##############################


class FeatureBank:
    """
    Length normalized trailers stacked into one ``(M, T, D)`` array, addressed by movie id.
    """

    def __init__(self, movie_ids, X):
        X = get_matrix(X, name="feature bank")
        movie_ids = [str(m) for m in movie_ids]
        if X.ndim != 3 or X.shape[0] != len(movie_ids):
            raise ShapeError(f"expected ({len(movie_ids)}, T, D) features, got {X.shape}")
        self.movie_ids = movie_ids
        self.X = X
        self.index = {m: i for i, m in enumerate(movie_ids)}
        if len(self.index) != len(movie_ids):
            raise ValueError("duplicate movie ids in feature bank")

    @classmethod
    def from_sequences(cls, sequences, max_frames):
        sequences = list(sequences)
        if not sequences:
            raise ShapeError("no trailer to stack")
        dims = {seq.dim for seq in sequences}
        if len(dims) != 1:
            raise ShapeError(f"trailers disagree on the feature dimension: {sorted(dims)}")
        X = np.stack([normalize_length(seq, max_frames).frames for seq in sequences])
        return cls([seq.movie_id for seq in sequences], X)

    @classmethod
    def from_manifest(cls, manifest, max_frames, **kwargs):
        """Load every manifest entry on a thread pool, see :func:`trailercf.parallel.parallel_task`."""
        for path in manifest["feature_path"]:
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing feature file {path}")

        def load(p):
            return load_feature_file(p["feature_path"], p["movie_id"])

        params = manifest[["movie_id", "feature_path"]].to_dict("records")
        sequences = parallel_task(params, load, desc="features", **kwargs)
        return cls.from_sequences(sequences, max_frames)

    @property
    def max_frames(self):
        return self.X.shape[1]

    @property
    def feature_dim(self):
        return self.X.shape[2]

    def stack(self, movie_ids):
        missing = [m for m in movie_ids if m not in self.index]
        if missing:
            raise KeyError(f"no features for movies {missing[:5]}")
        return self.X[[self.index[m] for m in movie_ids]]

    def __getitem__(self, movie_id):
        return self.X[self.index[movie_id]]

    def __contains__(self, movie_id):
        return movie_id in self.index

    def __len__(self):
        return len(self.movie_ids)

    def __repr__(self):
        return f"FeatureBank({len(self)} movies, {self.max_frames}x{self.feature_dim})"

"""
Synthetic trailers and attendance populations with planted object-sequence templates.

Genres come in pairs sharing one multiset of object prototypes, the two members of a pair
only differing by the order in which the objects appear. With no noise the average of the
frames of any trailer of genre ``A`` equals that of genre ``B``: only an encoder sensitive
to frame order can tell the pair apart. Users prefer one genre of each pair, so predicting
attendance of a cold-start movie requires recognising its genre from the ordering.
"""

import logging
import os
from collections import namedtuple

import numpy as np
import pandas as pd

from trailercf.data import (
    FrameFeatureSequence,
    RECORD_COLUMNS,
    SECONDS_PER_DAY,
    write_attendance,
    write_feature_file,
)
from trailercf.file import save_to_file
from trailercf.random_utils import get_rng

logger = logging.getLogger(__name__)

SyntheticMovie = namedtuple("SyntheticMovie", ["movie_id", "genre", "release_ts", "sequence"])
SyntheticUser = namedtuple("SyntheticUser", ["user_id", "affinity"])

RELEASE_START_TS = 1_500_000_000
RELEASE_INTERVAL_DAYS = 3
ATTENDANCE_WINDOW_DAYS = 14


class TemplateLibrary:
    """
    ``prototypes`` is a ``(P, D)`` array; ``templates[g]`` the prototype index sequence of
    genre ``g``. Genres ``2p`` and ``2p + 1`` form pair ``p``.
    """

    def __init__(self, prototypes, templates):
        self.prototypes = np.asarray(prototypes, dtype=np.float64)
        self.templates = [np.asarray(t, dtype=np.int64) for t in templates]
        if len(self.templates) % 2:
            raise ValueError("templates come in genre pairs")
        for genre, template in enumerate(self.templates):
            if template.min(initial=0) < 0 or template.max(initial=0) >= len(self.prototypes):
                raise ValueError(f"template of genre {genre} indexes outside the {len(self.prototypes)} prototypes")
        for a, b in self.pairs():
            if not np.array_equal(np.sort(self.templates[a]), np.sort(self.templates[b])):
                raise ValueError(f"genres {a} and {b} do not share one index multiset")

    @property
    def n_genres(self):
        return len(self.templates)

    @property
    def dim(self):
        return self.prototypes.shape[1]

    @property
    def template_len(self):
        return len(self.templates[0]) if self.templates else 0

    def pairs(self):
        return [(2 * p, 2 * p + 1) for p in range(self.n_genres // 2)]

    def __repr__(self):
        return (
            f"TemplateLibrary({len(self.prototypes)} prototypes in {self.dim} dims, "
            f"{self.n_genres} genres, templates of length {self.template_len})"
        )


def _is_rotation(a, b):
    return any(np.array_equal(np.roll(a, shift), b) for shift in range(len(a)))


def _order_only_pair(n_prototypes, template_len, rng, max_tries=1000):
    for _ in range(max_tries):
        a = rng.integers(n_prototypes, size=template_len)
        if len(np.unique(a)) < 2:
            continue
        for _ in range(100):
            b = rng.permutation(a)
            # rotations tile into time-shifted copies of the same trailer
            if not _is_rotation(a, b):
                return a, b
    raise ValueError(f"no order-only template pair of length {template_len} over {n_prototypes} prototypes")


def gen_template_library(n_prototypes=8, n_genre_pairs=2, template_len=6, dim=32, rng=0):
    """
    Draw prototypes and order-only genre pairs.

    Prototypes are Gaussian with variance ``1 / dim`` per coordinate, hence close to unit
    norm. In each pair the second template is a permutation of the first that is neither
    the identity nor a rotation.
    """
    n_genre_pairs = int(n_genre_pairs)
    if n_genre_pairs and (n_prototypes < 2 or template_len < 3):
        raise ValueError("order-only pairs need at least 2 prototypes and templates of length >= 3")
    rng = get_rng(rng)
    prototypes = rng.normal(size=(int(n_prototypes), int(dim))) / np.sqrt(dim)
    templates = []
    for _ in range(n_genre_pairs):
        templates.extend(_order_only_pair(int(n_prototypes), int(template_len), rng))
    return TemplateLibrary(prototypes, templates)


def gen_trailer(genre, library, n_frames, noise_sigma, rng, movie_id=None):
    """
    The template of ``genre`` tiled along ``n_frames`` frames, plus Gaussian noise.

    Frame ``t`` is ``prototypes[template[t mod L]]`` for every ``t`` inside a complete tile;
    frames past the last complete tile are zero, so paired genres keep identical frame
    multisets.
    """
    rng = get_rng(rng)
    template = library.templates[genre]
    L = len(template)
    n_frames = int(n_frames)
    n_tiled = (n_frames // L) * L
    if n_tiled == 0:
        raise ValueError(f"n_frames={n_frames} is shorter than one template of length {L}")
    frames = np.zeros((n_frames, library.dim))
    frames[:n_tiled] = library.prototypes[np.tile(template, n_frames // L)]
    if noise_sigma:
        frames = frames + rng.normal(scale=float(noise_sigma), size=frames.shape)
    return FrameFeatureSequence(movie_id if movie_id is not None else f"genre{genre}", frames)


class SyntheticWorld:
    """
    Movies, users and attendance records drawn from one seed.

    ``movies`` are :data:`SyntheticMovie` in release order, ``users`` :data:`SyntheticUser`
    whose ``affinity[g]`` is the attendance probability of a genre ``g`` movie, ``records``
    a ``user_id, movie_id, timestamp`` DataFrame.
    """

    def __init__(self, movies, users, records, noise_sigma, library):
        self.movies = list(movies)
        self.users = list(users)
        self.records = records
        self.noise_sigma = float(noise_sigma)
        self.library = library

    def genres(self):
        return pd.DataFrame({"movie_id": [m.movie_id for m in self.movies], "genre": [m.genre for m in self.movies]})

    def release_order(self):
        return [m.movie_id for m in sorted(self.movies, key=lambda m: (m.release_ts, m.movie_id))]

    def sequences(self):
        return [m.sequence for m in self.movies]

    def __repr__(self):
        return f"SyntheticWorld({len(self.movies)} movies, {len(self.users)} users, {len(self.records)} records)"


def gen_population(
    n_users=2000,
    n_movies_per_genre=50,
    affinity_strength=(0.8, 0.1),
    rng=0,
    library=None,
    n_frames=40,
    noise_sigma=0.3,
):
    """
    Generate movies of every genre of ``library`` and users attending them.

    Args:
        n_users (int): population size.
        n_movies_per_genre (int): movies per genre.
        affinity_strength: ``(p_hi, p_lo)`` attendance probabilities for the preferred and
            the other genre of each pair.
        rng: seed or ``numpy.random.Generator``.
        library (TemplateLibrary): defaults to :func:`gen_template_library` drawn from ``rng``.
        n_frames (int): trailer length.
        noise_sigma (float): per coordinate frame noise.

    Returns:
        SyntheticWorld. Genres are interleaved along the release order so any set of newest
        movies is balanced across genres. Attendance happens within two weeks of release.
    """
    p_hi, p_lo = (float(p) for p in affinity_strength)
    if not (0 <= p_lo <= 1 and 0 <= p_hi <= 1):
        raise ValueError(f"affinity probabilities must lie in [0, 1], got {affinity_strength}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = get_rng(rng)
    if library is None:
        library = gen_template_library(rng=rng)
    n_genres = library.n_genres
    n_movies = n_genres * int(n_movies_per_genre)

    movies = []
    for k in range(n_movies):
        genre = k % n_genres
        movie_id = f"m{k:04d}"
        release_ts = RELEASE_START_TS + k * RELEASE_INTERVAL_DAYS * SECONDS_PER_DAY
        trailer = gen_trailer(genre, library, n_frames, noise_sigma, rng, movie_id)
        movies.append(SyntheticMovie(movie_id, genre, release_ts, trailer))

    users = []
    for u in range(int(n_users)):
        affinity = np.full(n_genres, p_lo)
        for a, b in library.pairs():
            affinity[a if rng.integers(2) == 0 else b] = p_hi
        users.append(SyntheticUser(f"u{u:05d}", affinity))

    genres = np.array([m.genre for m in movies], dtype=np.int64)
    probabilities = np.array([user.affinity for user in users]).reshape(len(users), n_genres)[:, genres]
    attended = rng.random(probabilities.shape) < probabilities
    user_rows, movie_cols = np.nonzero(attended)
    delays = rng.integers(ATTENDANCE_WINDOW_DAYS * SECONDS_PER_DAY, size=len(user_rows))
    records = pd.DataFrame(
        {
            "user_id": [users[i].user_id for i in user_rows],
            "movie_id": [movies[j].movie_id for j in movie_cols],
            "timestamp": np.array([movies[j].release_ts for j in movie_cols], dtype=np.int64) + delays,
        },
        columns=RECORD_COLUMNS,
    )
    records = records.sort_values(RECORD_COLUMNS, kind="mergesort").reset_index(drop=True)
    world = SyntheticWorld(movies, users, records, noise_sigma, library)
    logger.info("%s", world)
    return world


def generate_world(seed=0, **kwargs):
    """
    A world from flat run parameters: ``n_prototypes``, ``n_genre_pairs``, ``template_len``,
    ``feature_dim``, ``max_frames``, ``n_movies``, ``n_users``, ``noise_sigma``, ``p_hi``, ``p_lo``.
    """
    rng = get_rng(seed)
    library = gen_template_library(
        kwargs.get("n_prototypes", 8),
        kwargs.get("n_genre_pairs", 2),
        kwargs.get("template_len", 6),
        kwargs.get("feature_dim", 32),
        rng,
    )
    n_genres = max(library.n_genres, 1)
    return gen_population(
        n_users=kwargs.get("n_users", 2000),
        n_movies_per_genre=kwargs.get("n_movies", 200) // n_genres,
        affinity_strength=(kwargs.get("p_hi", 0.8), kwargs.get("p_lo", 0.1)),
        rng=rng,
        library=library,
        n_frames=kwargs.get("max_frames", 40),
        noise_sigma=kwargs.get("noise_sigma", 0.3),
    )


def write_world(world, out_dir):
    """
    Write ``features/<movie_id>.tfv``, ``manifest.csv``, ``attendance.csv`` and ``genres.csv``
    under ``out_dir``; manifest feature paths are relative to ``out_dir``.

    Returns:
        dict of the written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for movie in world.movies:
        relative = os.path.join("features", movie.movie_id + ".tfv")
        write_feature_file(movie.sequence, os.path.join(out_dir, relative))
        rows.append((movie.movie_id, movie.release_ts, relative.replace(os.sep, "/")))
    paths = {
        "manifest": os.path.join(out_dir, "manifest.csv"),
        "attendance": os.path.join(out_dir, "attendance.csv"),
        "genres": os.path.join(out_dir, "genres.csv"),
    }
    save_to_file(pd.DataFrame(rows, columns=["movie_id", "release_ts", "feature_path"]), paths["manifest"])
    write_attendance(world.records, paths["attendance"])
    save_to_file(world.genres(), paths["genres"])
    logger.info("synthetic world written to %s", out_dir)
    return paths

import os
import sys

import pytest

src_path = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
if src_path not in sys.path:
    sys.path.insert(0, src_path)

from trailercf.data import FeatureBank, UserIndex, make_splits, reference_time_for  # noqa: E402
from trailercf.model import EncoderConfig  # noqa: E402
from trailercf.synthgen import gen_population, gen_template_library  # noqa: E402

SMALL_WORLD = dict(n_users=60, n_movies_per_genre=10, n_frames=12, noise_sigma=0.1)
SMALL_N_COLD = 8


def small_world(seed=1):
    """20 movies of one order-only genre pair, 60 users, 6-dim features over 12 frames."""
    library = gen_template_library(n_prototypes=4, n_genre_pairs=1, template_len=4, dim=6, rng=0)
    return gen_population(rng=seed, library=library, **SMALL_WORLD)


def small_config(**kwargs):
    values = dict(feature_dim=6, max_frames=12, conv_out_channels=4, filter_width=4, stride=2)
    values.update(kwargs)
    return EncoderConfig(**values)


class SmallDataset:
    def __init__(self, seed=1):
        self.world = small_world(seed)
        self.records = self.world.records
        self.split = make_splits(self.records, self.world.release_order(), n_cold=SMALL_N_COLD, seed=0)
        self.features = FeatureBank.from_sequences(self.world.sequences(), max_frames=12)
        release_ts = {m.movie_id: m.release_ts for m in self.world.movies}
        reference_time = reference_time_for(self.records, release_ts, self.split.cold_start_movies)
        self.users = UserIndex.from_split(self.split, self.records, reference_time)
        self.config = small_config()


@pytest.fixture(scope="session")
def dataset():
    return SmallDataset()

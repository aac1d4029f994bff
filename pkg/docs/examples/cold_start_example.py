"""
Cold-start recommendation on order-only genres
==============================================

Genres of a pair show the same objects in a different order. A model averaging the trailer
frames cannot tell them apart, a temporal convolution can.
"""

# import libraries
import numpy as np

from trailercf.data import FeatureBank, UserIndex, make_splits, reference_time_for
from trailercf.evaluation import evaluate
from trailercf.model import EncoderConfig
from trailercf.plot_utils import multi_plot
from trailercf.synthgen import gen_population, gen_template_library
from trailercf.train import TrainConfig, train

# %% [markdown]
# Generate a small world: 2 genre pairs, 20 movies per genre, 500 users.

# %%
library = gen_template_library(n_prototypes=8, n_genre_pairs=2, template_len=6, dim=16, rng=0)
world = gen_population(n_users=500, n_movies_per_genre=20, rng=1, library=library, n_frames=36)
split = make_splits(world.records, world.release_order(), n_cold=16, seed=0)
features = FeatureBank.from_sequences(world.sequences(), max_frames=36)
release_ts = {m.movie_id: m.release_ts for m in world.movies}
users = UserIndex.from_split(
    split, world.records, reference_time_for(world.records, release_ts, split.cold_start_movies)
)
print(split)

# %% [markdown]
# Train both encoders and score the cold-start movies.

# %%
model_config = EncoderConfig(feature_dim=16, max_frames=36, conv_out_channels=16, filter_width=6, stride=2)
histories, reports = {}, {}
for kind in ["conv", "avgpool"]:
    config = TrainConfig(encoder_kind=kind, max_epochs=8, steps_per_epoch=50, validation_pairs=500)
    params, histories[kind] = train(config, split, features, model_config, users)
    reports[kind] = evaluate(params, model_config, split, features, 1000, users=users, encoder_kind=kind)
    print(kind, reports[kind])

# %% [markdown]
# Validation AUC per epoch.


# %%
def plot_validation(kind, ax, **kwargs):
    frame = histories[kind].to_frame()
    ax.plot(frame["epoch"], frame["validation_auc"], "-o")
    ax.axhline(0.5, color="grey", linestyle="--")
    ax.set_xlabel("epoch")
    ax.set_ylim(0.3, 1.0)


multi_plot(["conv", "avgpool"], plot_validation, f_names=[f"{k}: cold-start AUC {reports[k].cold_start_auc:.3f}" for k in ["conv", "avgpool"]])
print("cold-start AUC gap:", np.round(reports["conv"].cold_start_auc - reports["avgpool"].cold_start_auc, 3))

"""
Desk scale experiments on synthetic order-only genres. Minutes each; run with ``pytest -m slow``.
"""

import numpy as np
import pytest

from trailercf.config import RunConfig
from trailercf.data import FeatureBank, UserIndex, make_splits, reference_time_for
from trailercf.evaluation import ablation_sweep, evaluate, load_sweep, summarize_sweep
from trailercf.model import EncoderConfig
from trailercf.synthgen import generate_world
from trailercf.train import TrainConfig, train

pytestmark = pytest.mark.slow


def desk_dataset(seed):
    config = RunConfig(seed=seed)
    world = generate_world(**config.as_dict())
    split = make_splits(world.records, world.release_order(), config.n_cold, seed=seed)
    features = FeatureBank.from_sequences(world.sequences(), config.max_frames)
    release_ts = {m.movie_id: m.release_ts for m in world.movies}
    reference_time = reference_time_for(world.records, release_ts, split.cold_start_movies)
    users = UserIndex.from_split(split, world.records, reference_time, config.window_days, config.max_history)
    return config, split, features, users


def cold_start_auc(encoder_kind, seed):
    config, split, features, users = desk_dataset(seed)
    model_config = EncoderConfig(**config.as_dict())
    params, history = train(
        TrainConfig(**{**config.as_dict(), "encoder_kind": encoder_kind}), split, features, model_config, users
    )
    if encoder_kind == "conv":
        # the zero model scores ln 2
        assert history.epochs[-1][0] < np.log(2.0) - 0.02
        assert history.best_validation_auc > 0.6
    report = evaluate(params, model_config, split, features, config.eval_pairs, seed, users, encoder_kind)
    return report.cold_start_auc


def test_convolution_separates_order_only_genres():
    conv = np.array([cold_start_auc("conv", seed) for seed in range(5)])
    avgpool = np.array([cold_start_auc("avgpool", seed) for seed in range(5)])
    assert conv.mean() >= 0.65
    assert avgpool.mean() <= 0.55
    assert np.all(conv > avgpool)


def test_wide_filters_beat_one_frame_filters(tmp_path):
    config, split, features, users = desk_dataset(0)
    path = str(tmp_path / "sweep.csv")
    rows = ablation_sweep(
        config.sweep_filter_widths, ["1"], config.sweep_seeds, config.as_dict(), split, features, users, path
    )
    summary = summarize_sweep(rows).set_index("filter_width")["cold_start_auc"]
    assert summary[8] - summary[1] >= 0.05
    assert load_sweep(path) == [row.rounded() for row in rows]


if __name__ == "__main__":
    pass

import numpy as np
import pytest

from trailercf.errors import CheckpointError, ConfigError, TrainingDiverged
from trailercf.model import EncoderConfig, ModelParams, forward_loss, init_params
from trailercf.random_utils import derive_seed
from trailercf.sampling import sample_training_batch
from trailercf.train import (
    TrainConfig,
    TrainHistory,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    train,
)

FAST = dict(batch_size=8, max_epochs=2, steps_per_epoch=3, validation_pairs=20, patience=2)


def test_train_config_validation():
    for bad in [dict(batch_size=7), dict(learning_rate=-1.0), dict(patience=0), dict(validation_pairs=15)]:
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    with pytest.raises(ValueError):
        TrainConfig(encoder_kind="lstm")
    assert TrainConfig(learning_rate=0.0, unknown_key=1).learning_rate == 0.0


def test_sgd_step_on_a_quadratic():
    params = ModelParams({"theta": np.array([3.0])})
    grads = ModelParams({"theta": 2.0 * params["theta"]})
    np.testing.assert_allclose(sgd_step(params, grads, 0.1)["theta"], [2.4], atol=1e-15)
    np.testing.assert_array_equal(params["theta"], [3.0])


def test_train_history():
    history = TrainHistory()
    assert history.append(0.7, 0.6)
    assert not history.append(0.6, 0.55)
    assert history.append(0.5, 0.65)
    assert not history.append(0.4, 0.65)
    assert history.best_epoch == 2 and history.best_validation_auc == 0.65
    assert history.to_frame()["epoch"].tolist() == [0, 1, 2, 3]


def test_initial_training_loss_is_ln2(dataset):
    params = init_params(dataset.config, seed=0, cf_weight=0.0)
    batch = dataset.users.labeled(sample_training_batch(dataset.split, 16, 0))
    loss, _ = forward_loss(batch, params, dataset.config, "conv", dataset.features)
    assert abs(loss - np.log(2.0)) < 1e-12


def test_zero_learning_rate_keeps_initial_parameters(dataset):
    config = TrainConfig(learning_rate=0.0, seed=2, **FAST)
    params, history = train(config, dataset.split, dataset.features, dataset.config, dataset.users)
    assert params == init_params(dataset.config, "conv", seed=derive_seed(2, "init"))
    assert len(history) == 2


@pytest.mark.parametrize("encoder_kind", ["conv", "avgpool"])
def test_training_is_deterministic(dataset, encoder_kind):
    config = TrainConfig(encoder_kind=encoder_kind, learning_rate=0.05, seed=1, **FAST)
    a = train(config, dataset.split, dataset.features, dataset.config, dataset.users)
    b = train(config, dataset.split, dataset.features, dataset.config, dataset.users)
    assert a[0] == b[0]
    assert a[1] == b[1]
    assert ("conv1.weight" in a[0]) == (encoder_kind == "conv")


def test_training_keeps_the_best_validation_epoch(dataset):
    config = TrainConfig(seed=0, **{**FAST, "max_epochs": 4, "patience": 10})
    _, history = train(config, dataset.split, dataset.features, dataset.config, dataset.users)
    assert len(history) == 4
    scores = history.to_frame()["validation_auc"].to_numpy()
    assert history.best_epoch == int(np.argmax(scores))
    assert np.all((scores >= 0.0) & (scores <= 1.0))


def test_early_stopping(dataset):
    config = TrainConfig(learning_rate=0.0, seed=0, **{**FAST, "max_epochs": 10, "patience": 2})
    _, history = train(config, dataset.split, dataset.features, dataset.config, dataset.users)
    # a frozen model never improves after its first epoch
    assert len(history) == 3 and history.best_epoch == 0


def test_training_without_user_index(dataset):
    config = TrainConfig(seed=0, **FAST)
    params, history = train(config, dataset.split, dataset.features, dataset.config)
    assert params.all_finite() and len(history) == 2


def test_divergence_is_reported(dataset):
    config = TrainConfig(learning_rate=1e300, seed=0, **{**FAST, "max_epochs": 5})
    with np.errstate(all="ignore"), pytest.raises(TrainingDiverged, match="diverged at step"):
        train(config, dataset.split, dataset.features, dataset.config, dataset.users)


def test_checkpoint_round_trip(tmp_path):
    config = EncoderConfig(feature_dim=6, max_frames=12, conv_out_channels=4, filter_width=4, mlp_layer_widths=[3])
    params = init_params(config, seed=0)
    params["lr.weight"] = np.array([0.1, -2.0, 1e-300])
    first, second = str(tmp_path / "a.mck"), str(tmp_path / "b.mck")
    save_checkpoint(params, config, first)
    loaded, loaded_config = load_checkpoint(first)
    assert loaded == params
    assert loaded_config == config
    assert loaded.n_parameters() == params.n_parameters()
    save_checkpoint(loaded, loaded_config, second)
    assert open(first, "rb").read() == open(second, "rb").read()

    avgpool = init_params(config, "avgpool", seed=0)
    save_checkpoint(avgpool, config, first)
    assert load_checkpoint(first)[0] == avgpool


def test_checkpoint_errors(tmp_path):
    config = EncoderConfig(feature_dim=6, max_frames=12, conv_out_channels=4, filter_width=4)
    path = str(tmp_path / "c.mck")
    save_checkpoint(init_params(config, seed=0), config, path)
    blob = open(path, "rb").read()
    cases = [b"XCK1" + blob[4:], blob[:4] + b"\x02" + blob[5:], blob[:-1], blob[:10], blob + b"\x00"]
    for broken in cases:
        open(path, "wb").write(broken)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    params = init_params(config, seed=0)
    params["conv1.bias"] = np.zeros(5)
    save_checkpoint(params, config, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


if __name__ == "__main__":
    pass

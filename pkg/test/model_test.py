import numpy as np
import pytest

from trailercf.errors import ShapeError
from trailercf.gradcheck import full_model_instance
from trailercf.model import (
    EncoderConfig,
    ModelParams,
    UserContext,
    build_user_vector,
    cf_score,
    conv_activations,
    encode_movie_avgpool,
    encode_movie_conv,
    encode_movies,
    forward_loss,
    init_params,
    predict_attendance,
    predict_pairs,
    receptive_field,
    scaled_cf_score,
)
from trailercf.numcore import ConvParams, ConvSpec, affine_forward, grad_check, temporal_conv_forward


def small_config(**kwargs):
    values = dict(feature_dim=4, max_frames=12, conv_out_channels=4, filter_width=3, stride=1)
    values.update(kwargs)
    return EncoderConfig(**values)


def test_conv_encoder_output_length():
    config = EncoderConfig(feature_dim=16, max_frames=120, conv_out_channels=4, filter_width=8, stride=2)
    assert config.conv_output_length() == 57
    params = init_params(config, seed=0)
    frames = np.random.default_rng(0).normal(size=(120, 16))
    assert conv_activations(frames, params, config).shape == (57, 4)
    assert encode_movie_conv(frames, params, config).shape == (4,)


def test_encoder_config_validation():
    with pytest.raises(ShapeError):
        EncoderConfig(feature_dim=4, max_frames=6, filter_width=8)
    with pytest.raises(ShapeError):
        small_config(mlp_layer_widths=[0])
    config = small_config(mlp_layer_widths=[5, 3])
    assert config.movie_vector_dim("conv") == 3
    assert small_config().movie_vector_dim("avgpool") == 4
    assert small_config(residual_filter_width=0).residual_mode() == "none"
    assert small_config(residual_filter_width=1).residual_mode() == "skip"
    assert small_config(residual_filter_width=1, residual_enabled=False).residual_mode() == "plain"
    assert small_config(residual_filter_width=3).residual_mode() == "plain"


def test_init_params():
    config = small_config(mlp_layer_widths=[3], demographics_dim=2)
    params = init_params(config, "conv", seed=0)
    assert list(params.keys()) == [
        "conv1.weight",
        "conv1.bias",
        "conv_res.weight",
        "conv_res.bias",
        "mlp.0.weight",
        "mlp.0.bias",
        "demo.weight",
        "lr.weight",
        "lr.bias",
    ]
    assert params["conv1.weight"].shape == (4, 3, 4)
    assert params["demo.weight"].shape == (2, 3)
    np.testing.assert_array_equal(params["lr.weight"], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(init_params(config, seed=0, cf_weight=0.0)["lr.weight"], np.zeros(3))
    assert params == init_params(config, "conv", seed=0)
    assert params != init_params(config, "conv", seed=1)
    assert "conv1.weight" not in init_params(config, "avgpool", seed=0)


def test_zero_parameters_give_zero_movie_vector():
    config = small_config()
    params = init_params(config, seed=0).zeros_like()
    frames = np.random.default_rng(1).normal(size=(12, 4))
    np.testing.assert_array_equal(encode_movie_conv(frames, params, config), np.zeros(4))


def test_conv_encoder_rejects_wrong_shapes():
    config = small_config()
    params = init_params(config, seed=0)
    with pytest.raises(ShapeError):
        encode_movie_conv(np.zeros((11, 4)), params, config)
    with pytest.raises(ShapeError):
        encode_movie_conv(np.zeros((12, 5)), params, config)
    with pytest.raises(ShapeError):
        encode_movie_avgpool(np.zeros((12, 5)), params, config)


def test_zero_residual_layer_equals_single_layer():
    rng = np.random.default_rng(2)
    config = small_config()
    params = init_params(config, seed=3)
    params["conv1.bias"] = rng.normal(size=4)
    params["conv_res.weight"] = np.zeros_like(params["conv_res.weight"])
    params["conv_res.bias"] = np.zeros(4)
    single = ModelParams({n: v for n, v in params.items() if not n.startswith("conv_res")})
    frames = rng.normal(size=(12, 4))
    np.testing.assert_array_equal(
        encode_movie_conv(frames, params, config),
        encode_movie_conv(frames, single, small_config(residual_filter_width=0)),
    )


def test_one_frame_convolution_is_per_timestep_affine():
    rng = np.random.default_rng(4)
    spec = ConvSpec(3, 2, 1, 1)
    p = ConvParams(rng.normal(size=(2, 1, 3)), rng.normal(size=2), spec)
    h = rng.normal(size=(7, 3))
    np.testing.assert_allclose(
        temporal_conv_forward(h, p, spec), affine_forward(h, p.weights[:, 0, :], p.bias), atol=1e-12
    )


def test_avgpool_encoder_ignores_frame_order():
    rng = np.random.default_rng(5)
    for mlp in [(), (3,)]:
        config = small_config(mlp_layer_widths=mlp)
        params = init_params(config, "avgpool", seed=6)
        frames = rng.normal(size=(12, 4))
        v = encode_movie_avgpool(frames, params, config)
        for _ in range(10):
            np.testing.assert_array_equal(encode_movie_avgpool(frames[rng.permutation(12)], params, config), v)


def test_avgpool_encoder_of_constant_frames():
    config = small_config()
    params = init_params(config, "avgpool", seed=0)
    row = np.array([0.3, -1.0, 2.0, 0.0])
    np.testing.assert_allclose(encode_movie_avgpool(np.tile(row, (12, 1)), params, config), row, atol=1e-12)


def test_conv_encoder_sees_frame_order():
    config = small_config()
    for seed in range(5):
        rng = np.random.default_rng(seed)
        params = init_params(config, seed=seed)
        frames = rng.normal(size=(12, 4))
        v = encode_movie_conv(frames, params, config)
        changes = []
        for _ in range(10):
            t = int(rng.integers(11))
            swapped = frames.copy()
            swapped[[t, t + 1]] = swapped[[t + 1, t]]
            changes.append(np.max(np.abs(encode_movie_conv(swapped, params, config) - v)))
        assert max(changes) > 1e-8


def test_batched_encoding_matches_single():
    rng = np.random.default_rng(7)
    config = small_config(mlp_layer_widths=[3])
    params = init_params(config, seed=8)
    X = rng.normal(size=(5, 12, 4))
    V, _ = encode_movies(X, params, config)
    for i in range(5):
        np.testing.assert_allclose(V[i], encode_movie_conv(X[i], params, config), atol=1e-12)


def test_receptive_field():
    config = EncoderConfig()
    assert receptive_field(config, 0) == (0, 7)
    assert receptive_field(config, 10) == (20, 27)
    assert receptive_field(config, 56) == (112, 119)
    with pytest.raises(ShapeError):
        receptive_field(config, 57)
    wide = EncoderConfig(residual_filter_width=3)
    first, last = receptive_field(wide, 4)
    assert last - first + 1 == 8 + 2 * 2


def test_receptive_field_matches_input_dependence():
    config = EncoderConfig(
        feature_dim=2, max_frames=20, conv_out_channels=3, filter_width=3, stride=2, residual_filter_width=2
    )
    params = init_params(config, seed=0)
    # positive pre-activations everywhere, so every frame in the window moves the output
    params["conv1.bias"] = np.full(3, 10.0)
    params["conv_res.bias"] = np.full(3, 100.0)
    rng = np.random.default_rng(1)
    frames = rng.normal(size=(20, 2))
    h = conv_activations(frames, params, config)
    for t in range(config.conv_output_length()):
        first, last = receptive_field(config, t)
        for frame in range(20):
            moved = frames.copy()
            moved[frame] += 1.0
            changed = np.any(conv_activations(moved, params, config)[t] != h[t])
            assert changed == (first <= frame <= last), (t, frame)


def test_build_user_vector():
    vectors = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 2.0]), "c": np.array([3.0, 3.0])}
    assert np.array_equal(build_user_vector(UserContext("u", ["a"]), vectors, "b"), [1.0, 0.0])
    assert np.array_equal(build_user_vector(UserContext("u", ["a"]), vectors, "a"), [0.0, 0.0])
    assert np.array_equal(build_user_vector(UserContext("u", []), vectors, "a"), [0.0, 0.0])
    both = build_user_vector(UserContext("u", ["a", "b"]), vectors, "c")
    np.testing.assert_allclose(
        both,
        build_user_vector(UserContext("u", ["a"]), vectors, "c") + build_user_vector(UserContext("u", ["b"]), vectors, "c"),
        atol=1e-12,
    )
    with_demographics = build_user_vector(UserContext("u", ["a"], demographics=[5.0]), vectors, "c")
    np.testing.assert_array_equal(with_demographics, [1.0, 0.0, 5.0])
    with pytest.raises(KeyError):
        build_user_vector(UserContext("u", ["z"]), vectors, "a")


def test_user_context():
    ctx = UserContext("u", ["b", "a", "b"], 0.5, 0.1)
    assert ctx.attended_movies == ("b", "a")
    assert ctx.attended_without("b") == ["a"]
    with pytest.raises(ValueError):
        UserContext("u", [], -1.0, 0.0)
    with pytest.raises(ValueError):
        UserContext("u", [], 0.0, float("nan"))


def test_cf_score():
    assert cf_score([1.0, 0.0], [0.0, 1.0]) == 0.0
    u = np.array([1.0, 1.0, 1.0, 1.0])
    assert cf_score(u, u) == 4.0
    assert cf_score(2.0 * u, u) == 2.0 * cf_score(u, u)


def test_scaled_cf_score_does_not_grow_with_history():
    v = np.array([1.0, 2.0, 0.5])
    for n in [1, 4, 32]:
        u = build_user_vector(UserContext("u", [f"m{k}" for k in range(n)]), {f"m{k}": v for k in range(n)}, "t")
        assert scaled_cf_score(u, v, n) == pytest.approx(cf_score(v, v), rel=1e-14)
    assert scaled_cf_score(np.zeros(3), v, 0) == 0.0


def test_predict_attendance():
    assert predict_attendance(3.0, 0.2, 0.4, (np.zeros(3), 0.0)) == 0.5
    weights = np.array([1.0, 0.0, 0.0])
    assert predict_attendance(2.0, 0.0, 0.0, (weights, 0.0)) > predict_attendance(1.0, 0.0, 0.0, (weights, 0.0))
    with pytest.raises(ShapeError):
        predict_attendance(1.0, 0.0, 0.0, (np.zeros(2), 0.0))


def _toy_batch():
    rng = np.random.default_rng(9)
    features = {m: rng.normal(size=(12, 4)) for m in ["m0", "m1", "m2", "m3"]}
    u0 = UserContext("u0", ["m0", "m1"], 0.3, 0.1)
    u1 = UserContext("u1", ["m2"], 0.1, 0.5)
    batch = [(u0, "m0", 1), (u0, "m3", 0), (u1, "m1", 1), (u1, "m0", 0)]
    return batch, features


def test_initial_loss_is_ln2():
    batch, features = _toy_batch()
    config = small_config()
    loss, grads = forward_loss(batch, init_params(config, seed=0, cf_weight=0.0), config, "conv", features)
    assert abs(loss - np.log(2.0)) < 1e-12
    assert list(grads.keys()) == list(init_params(config, seed=0).keys())
    zero, _ = forward_loss(batch, init_params(config, seed=0).zeros_like(), config, "conv", features)
    assert abs(zero - np.log(2.0)) < 1e-12


def test_default_initialization_trains_the_encoder():
    batch, features = _toy_batch()
    config = small_config()
    _, grads = forward_loss(batch, init_params(config, seed=0), config, "conv", features)
    assert np.abs(grads["conv1.weight"]).max() > 0.0
    _, frozen = forward_loss(batch, init_params(config, seed=0, cf_weight=0.0), config, "conv", features)
    np.testing.assert_array_equal(frozen["conv1.weight"], 0.0)


def test_duplicated_batch_has_same_loss():
    batch, features = _toy_batch()
    config = small_config()
    params = init_params(config, seed=0)
    params["lr.weight"] = np.array([0.5, -1.0, 2.0])
    loss, _ = forward_loss(batch, params, config, "conv", features)
    doubled, _ = forward_loss(batch + batch, params, config, "conv", features)
    assert abs(loss - doubled) < 1e-12


def test_forward_loss_rejects_empty_batch():
    config = small_config()
    with pytest.raises(ValueError):
        forward_loss([], init_params(config), config, "conv", {})


def test_predict_pairs_matches_step_by_step_scoring():
    batch, features = _toy_batch()
    config = small_config()
    params = init_params(config, seed=1)
    params["lr.weight"] = np.array([0.7, 0.2, -0.4])
    params["lr.bias"] = np.array([0.1])
    pairs = [(ctx, movie) for ctx, movie, _ in batch]
    vectors = {m: encode_movie_conv(f, params, config) for m, f in features.items()}
    expected = []
    for ctx, movie in pairs:
        u = build_user_vector(ctx, vectors, movie)
        score = scaled_cf_score(u, vectors[movie], len(ctx.attended_without(movie)))
        expected.append(predict_attendance(score, ctx.frequency, ctx.recency, params.lr_params()))
    np.testing.assert_allclose(predict_pairs(pairs, params, config, "conv", features), expected, atol=1e-12)


def test_full_model_gradient():
    rng = np.random.default_rng(10)
    for n in range(8):
        op, inputs = full_model_instance(rng, n)
        assert grad_check(op, inputs) < 1e-4


if __name__ == "__main__":
    test_conv_encoder_output_length()
    test_receptive_field_matches_input_dependence()
    test_full_model_gradient()
    pass

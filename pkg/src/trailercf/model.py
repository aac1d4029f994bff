"""
Movie encoders and the hybrid collaborative filtering head.

A movie vector is computed from its trailer either by the temporal convolution
encoder

    h1 = relu(conv1(x)),  h2 = relu(h1 + conv_res(h1)),  v = MLP(avg_pool_time(h2))

or by the average pooling baseline ``v = MLP(avg_pool_time(x))``. A user vector is the
sum of the vectors of the movies the user attended (the scored movie left out),
optionally followed by demographics. The attendance probability is a logistic
regression over the dot product CF score divided by the number of movies summed into the
user vector, the user frequency and the user recency.

Encoders run batched over a stack of trailers ``(M, T, D)``; :func:`forward_loss`
back-propagates the logistic loss through every movie vector used in a batch.
"""

import logging

import numpy as np

from trailercf.data_conversion import check_shape, get_matrix, get_vector
from trailercf.errors import ShapeError
from trailercf.numcore import (
    ConvParams,
    ConvSpec,
    avg_pool_time,
    avg_pool_time_backward,
    dot,
    mlp_backward,
    mlp_forward,
    relu,
    relu_backward,
    sigmoid_bce,
    temporal_conv_backward,
    temporal_conv_forward,
)
from trailercf.random_utils import get_rng

logger = logging.getLogger(__name__)

ENCODER_KINDS = ("conv", "avgpool")
# initial logistic weight of the CF score; a zero weight leaves the encoder without gradient
CF_WEIGHT_INIT = 1.0


def check_encoder_kind(encoder_kind):
    if encoder_kind not in ENCODER_KINDS:
        raise ValueError(f"unknown encoder kind {encoder_kind!r}, expected one of {ENCODER_KINDS}")
    return encoder_kind


def encoder_kind_of(params):
    """``"conv"`` when ``params`` hold convolution weights, ``"avgpool"`` otherwise."""
    return "conv" if "conv1.weight" in params else "avgpool"


class EncoderConfig:
    """
    Architecture of the movie encoders.

    :param feature_dim: per frame feature dimension :math:`D`.
    :param max_frames: trailer length :math:`T` after length normalization.
    :param conv_out_channels: number of filters of both convolution layers.
    :param filter_width: first layer filter size, in frames.
    :param stride: first layer temporal stride.
    :param residual_filter_width: filter size of the second convolution; ``0`` removes the layer.
    :param residual_enabled: add the skip connection around the second convolution. Only
        honoured for a 1-frame second layer, wider ones change the sequence length.
    :param mlp_layer_widths: widths of the MLP applied after pooling; empty means identity.
    :param demographics_dim: length of the optional user demographics vector, ``0`` for none.

    Unknown keyword arguments are ignored so that a flat run configuration can be passed
    as is.
    """

    def __init__(
        self,
        feature_dim=1024,
        max_frames=120,
        conv_out_channels=1024,
        filter_width=8,
        stride=2,
        residual_filter_width=1,
        residual_enabled=True,
        mlp_layer_widths=(),
        demographics_dim=0,
        **kwargs,
    ):
        self.feature_dim = int(feature_dim)
        self.max_frames = int(max_frames)
        self.conv_out_channels = int(conv_out_channels)
        self.filter_width = int(filter_width)
        self.stride = int(stride)
        self.residual_filter_width = int(residual_filter_width or 0)
        self.residual_enabled = bool(residual_enabled)
        self.mlp_layer_widths = tuple(int(w) for w in (mlp_layer_widths or ()))
        self.demographics_dim = int(demographics_dim or 0)

        if self.filter_width > self.max_frames:
            raise ShapeError(
                f"filter_width={self.filter_width} exceeds max_frames={self.max_frames}"
            )
        if self.residual_filter_width < 0 or self.demographics_dim < 0:
            raise ShapeError("residual_filter_width and demographics_dim must be >= 0")
        if any(w < 1 for w in self.mlp_layer_widths):
            raise ShapeError(f"mlp widths must be >= 1, got {self.mlp_layer_widths}")
        T1 = self.conv1_spec().output_length(self.max_frames)
        if self.residual_filter_width > T1:
            raise ShapeError(
                f"residual_filter_width={self.residual_filter_width} exceeds the {T1} first layer timesteps"
            )

    def conv1_spec(self):
        return ConvSpec(self.feature_dim, self.conv_out_channels, self.filter_width, self.stride)

    def conv_res_spec(self):
        if self.residual_filter_width == 0:
            return None
        return ConvSpec(self.conv_out_channels, self.conv_out_channels, self.residual_filter_width, 1)

    def residual_mode(self):
        """``"none"`` (no second layer), ``"skip"`` (1-frame layer with skip) or ``"plain"``."""
        if self.residual_filter_width == 0:
            return "none"
        if self.residual_enabled and self.residual_filter_width == 1:
            return "skip"
        return "plain"

    def conv_output_length(self):
        """Timesteps of the last relu layer."""
        T1 = self.conv1_spec().output_length(self.max_frames)
        return T1 - max(self.residual_filter_width, 1) + 1

    def pooled_dim(self, encoder_kind="conv"):
        return self.conv_out_channels if check_encoder_kind(encoder_kind) == "conv" else self.feature_dim

    def movie_vector_dim(self, encoder_kind="conv"):
        if self.mlp_layer_widths:
            return self.mlp_layer_widths[-1]
        return self.pooled_dim(encoder_kind)

    def to_dict(self):
        return {
            "feature_dim": self.feature_dim,
            "max_frames": self.max_frames,
            "conv_out_channels": self.conv_out_channels,
            "filter_width": self.filter_width,
            "stride": self.stride,
            "residual_filter_width": self.residual_filter_width,
            "residual_enabled": self.residual_enabled,
            "mlp_layer_widths": list(self.mlp_layer_widths),
            "demographics_dim": self.demographics_dim,
        }

    def __eq__(self, other):
        return isinstance(other, EncoderConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "EncoderConfig(" + ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items()) + ")"


class ModelParams:
    """
    Named trainable tensors.

    Names follow ``<layer>.<weight|bias>``: ``conv1``, ``conv_res``, ``mlp.<n>``, ``demo``
    and ``lr``. ``lr.weight`` holds the three logistic weights (CF score, frequency,
    recency), ``lr.bias`` the logistic bias as a length one vector.
    """

    version = 1

    def __init__(self, tensors=None):
        self.tensors = {}
        for name, value in (tensors or {}).items():
            self[name] = value

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def keys(self):
        return self.tensors.keys()

    def items(self):
        return self.tensors.items()

    def copy(self):
        return ModelParams({name: value.copy() for name, value in self.items()})

    def zeros_like(self):
        return ModelParams({name: np.zeros_like(value) for name, value in self.items()})

    def n_parameters(self):
        return int(sum(value.size for value in self.tensors.values()))

    def all_finite(self):
        return all(np.all(np.isfinite(value)) for value in self.tensors.values())

    def conv(self, prefix):
        return ConvParams(self[prefix + ".weight"], self[prefix + ".bias"])

    def mlp_layers(self):
        layers, n = [], 0
        while f"mlp.{n}.weight" in self:
            layers.append((self[f"mlp.{n}.weight"], self[f"mlp.{n}.bias"]))
            n += 1
        return layers

    def lr_params(self):
        return self["lr.weight"], float(self["lr.bias"][0])

    def __eq__(self, other):
        if not isinstance(other, ModelParams) or list(self.keys()) != list(other.keys()):
            return False
        return all(np.array_equal(self[name], other[name]) for name in self)

    def __repr__(self):
        shapes = ", ".join(f"{name}{tuple(value.shape)}" for name, value in self.items())
        return f"ModelParams({shapes})"


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config, encoder_kind="conv", seed=0, cf_weight=CF_WEIGHT_INIT):
    """
    Fresh parameters for ``config``.

    Weights are uniform in :math:`\\pm\\sqrt{6/(fan_{in}+fan_{out})}` and biases are zero. The
    logistic head starts with weight ``cf_weight`` on the CF score and zero elsewhere; with
    ``cf_weight=0`` every initial prediction is 0.5.
    """
    check_encoder_kind(encoder_kind)
    rng = get_rng(seed)
    params = ModelParams()
    if encoder_kind == "conv":
        p1 = ConvParams.glorot(config.conv1_spec(), rng)
        params["conv1.weight"], params["conv1.bias"] = p1.weights, p1.bias
        if config.residual_mode() != "none":
            p2 = ConvParams.glorot(config.conv_res_spec(), rng)
            params["conv_res.weight"], params["conv_res.bias"] = p2.weights, p2.bias
    width = config.pooled_dim(encoder_kind)
    for n, out in enumerate(config.mlp_layer_widths):
        params[f"mlp.{n}.weight"] = _glorot(rng, (out, width), width, out)
        params[f"mlp.{n}.bias"] = np.zeros(out)
        width = out
    if config.demographics_dim:
        params["demo.weight"] = _glorot(
            rng, (config.demographics_dim, width), width, config.demographics_dim
        )
    params["lr.weight"] = np.array([float(cf_weight), 0.0, 0.0])
    params["lr.bias"] = np.zeros(1)
    return params


class UserContext:
    """
    What the model knows about one user when scoring a movie.

    :param attended_movies: training visible attended movie ids, most recent first.
    :param frequency: normalized visit count, see :func:`trailercf.data.compute_frequency_recency`.
    :param recency: normalized time since the last visit.
    :param demographics: optional real vector appended to the user vector.
    """

    def __init__(self, user_id, attended_movies=(), frequency=0.0, recency=0.0, demographics=None):
        self.user_id = user_id
        self.attended_movies = tuple(dict.fromkeys(attended_movies))
        self.frequency = float(frequency)
        self.recency = float(recency)
        if not (np.isfinite(self.frequency) and np.isfinite(self.recency)):
            raise ValueError(f"user {user_id}: frequency/recency must be finite")
        if self.frequency < 0 or self.recency < 0:
            raise ValueError(f"user {user_id}: frequency/recency must be >= 0")
        self.demographics = None if demographics is None else get_vector(demographics, name="demographics")

    def attended_without(self, target_movie):
        return [m for m in self.attended_movies if m != target_movie]

    def __repr__(self):
        return (
            f"UserContext({self.user_id!r}, {len(self.attended_movies)} movies, "
            f"frequency={self.frequency:.4g}, recency={self.recency:.4g})"
        )


############################## encoders ##############################


def _frames_array(frames):
    return get_matrix(getattr(frames, "frames", frames), name="frames")


def encode_movies(X, params, config, encoder_kind="conv"):
    """
    Batched movie encoding.

    Args:
        X: ``(M, T, D)`` (or ``(T, D)``) trailer features.

    Returns:
        ``(V, cache)``: ``(M, movie_vector_dim)`` movie vectors and the cache used by
        :func:`encode_movies_backward`.
    """
    check_encoder_kind(encoder_kind)
    X = get_matrix(X, name="frames")
    if X.shape[-1] != config.feature_dim:
        raise ShapeError(f"expected {config.feature_dim} features per frame, got {X.shape[-1]}")
    cache = {"X": X}
    if encoder_kind == "avgpool":
        pooled = avg_pool_time(X)
    else:
        if X.shape[-2] != config.max_frames:
            raise ShapeError(
                f"expected {config.max_frames} frames, got {X.shape[-2]}; normalize the length first"
            )
        cache["pre1"] = temporal_conv_forward(X, params.conv("conv1"), config.conv1_spec())
        h1 = cache["h1"] = relu(cache["pre1"])
        mode = config.residual_mode()
        if mode == "none":
            h2 = h1
        else:
            r = temporal_conv_forward(h1, params.conv("conv_res"), config.conv_res_spec())
            cache["pre2"] = h1 + r if mode == "skip" else r
            h2 = relu(cache["pre2"])
        cache["h2"] = h2
        pooled = avg_pool_time(h2)
    cache["pooled_shape"] = cache.get("h2", X).shape
    V, cache["mlp"] = mlp_forward(pooled, params.mlp_layers())
    return V, cache


def encode_movies_backward(cache, dV, params, config, encoder_kind, grads):
    """Accumulate into ``grads`` (a :class:`ModelParams`) the encoder gradients for upstream ``dV``."""
    layers = params.mlp_layers()
    dpooled, mlp_grads = mlp_backward(layers, cache["mlp"], dV)
    for n, (grad_weights, grad_bias) in enumerate(mlp_grads):
        grads[f"mlp.{n}.weight"] += grad_weights
        grads[f"mlp.{n}.bias"] += grad_bias
    if encoder_kind == "avgpool":
        return grads

    dh2 = avg_pool_time_backward(cache["pooled_shape"], dpooled)
    mode = config.residual_mode()
    if mode == "none":
        dh1 = dh2
    else:
        dpre2 = relu_backward(cache["pre2"], dh2)
        dh1, grad_weights, grad_bias = temporal_conv_backward(
            cache["h1"], params.conv("conv_res"), config.conv_res_spec(), dpre2
        )
        grads["conv_res.weight"] += grad_weights
        grads["conv_res.bias"] += grad_bias
        if mode == "skip":
            dh1 = dh1 + dpre2
    dpre1 = relu_backward(cache["pre1"], dh1)
    _, grad_weights, grad_bias = temporal_conv_backward(
        cache["X"], params.conv("conv1"), config.conv1_spec(), dpre1
    )
    grads["conv1.weight"] += grad_weights
    grads["conv1.bias"] += grad_bias
    return grads


def encode_movie_conv(frames, params, config):
    """Movie vector of one trailer through the temporal convolution encoder."""
    x = _frames_array(frames)
    check_shape(x, (config.max_frames, config.feature_dim), "frames")
    return encode_movies(x, params, config, "conv")[0]


def encode_movie_avgpool(frames, params, config):
    """Movie vector of one trailer through the average pooling baseline (no convolution)."""
    return encode_movies(_frames_array(frames), params, config, "avgpool")[0]


def conv_activations(X, params, config):
    """Activations of the last relu layer, ``(..., conv_output_length, conv_out_channels)``."""
    return encode_movies(X, params, config, "conv")[1]["h2"]


def receptive_field(config, t):
    """
    Input frames influencing output timestep ``t`` of the last relu layer.

    Returns:
        ``(first_frame, last_frame)``, both inclusive.

    Example:

        >>> receptive_field(EncoderConfig(), 10)
        (20, 27)
    """
    t = int(t)
    if not 0 <= t < config.conv_output_length():
        raise ShapeError(f"timestep {t} outside [0, {config.conv_output_length()})")
    k, s = config.filter_width, config.stride
    k2 = max(config.residual_filter_width, 1)
    return s * t, s * (t + k2 - 1) + k - 1


############################## collaborative filtering ##############################


def build_user_vector(ctx, movie_vectors, target_movie, dim=None):
    """
    Sum of the vectors of the movies attended by ``ctx``, ``target_movie`` left out.

    Args:
        ctx (UserContext): the user.
        movie_vectors (dict): movie id -> vector; must cover the attended movies.
        target_movie: id of the scored movie.
        dim (int, optional): vector length, needed only when ``movie_vectors`` is empty.

    Returns:
        the user vector, followed by ``ctx.demographics`` when present. An empty attendance
        set gives the zero vector.
    """
    if dim is None:
        if not movie_vectors:
            raise ValueError("dim is required when no movie vector is given")
        dim = len(next(iter(movie_vectors.values())))
    u = np.zeros(int(dim))
    for movie in ctx.attended_without(target_movie):
        if movie not in movie_vectors:
            raise KeyError(f"no movie vector for attended movie {movie!r} of user {ctx.user_id!r}")
        u += movie_vectors[movie]
    if ctx.demographics is not None:
        u = np.concatenate([u, ctx.demographics])
    return u


def cf_score(user_vector, movie_vector):
    """Dot product CF score."""
    return dot(user_vector, movie_vector)


def scaled_cf_score(user_vector, movie_vector, history_size):
    """:func:`cf_score` divided by the number of movies summed into ``user_vector``, at least one."""
    return cf_score(user_vector, movie_vector) / max(int(history_size), 1)


def predict_attendance(score, frequency, recency, lr_params):
    """``sigmoid(w1 score + w2 frequency + w3 recency + b)`` with ``lr_params = (w, b)``."""
    weights, bias = lr_params
    weights = get_vector(weights, name="lr weights")
    check_shape(weights, (3,), "lr weights")
    logit = weights @ np.array([score, frequency, recency], dtype=np.float64) + float(np.ravel(bias)[0])
    return sigmoid_bce(logit, 1)[0]


def _movie_side(v, params, config):
    if config.demographics_dim:
        return np.concatenate([v, params["demo.weight"] @ v])
    return v


def _check_demographics(ctx, config):
    size = 0 if ctx.demographics is None else len(ctx.demographics)
    if size != config.demographics_dim:
        raise ShapeError(
            f"user {ctx.user_id!r}: expected {config.demographics_dim} demographics, got {size}"
        )


def _stack_features(features, movie_ids):
    if hasattr(features, "stack"):
        return features.stack(movie_ids)
    return np.stack([_frames_array(features[m]) for m in movie_ids])


def _involved_movies(pairs):
    movies = {}
    for ctx, movie in pairs:
        movies[movie] = None
        for attended in ctx.attended_without(movie):
            movies[attended] = None
    return sorted(movies)


def _score_pairs(pairs, params, config, encoder_kind, features):
    movie_ids = _involved_movies(pairs)
    index = {m: i for i, m in enumerate(movie_ids)}
    V, cache = encode_movies(_stack_features(features, movie_ids), params, config, encoder_kind)
    vectors = {m: V[i] for m, i in index.items()}
    weights, bias = params.lr_params()
    rows = []
    for ctx, movie in pairs:
        _check_demographics(ctx, config)
        u = build_user_vector(ctx, vectors, movie, dim=V.shape[1])
        side = _movie_side(vectors[movie], params, config)
        n_history = max(len(ctx.attended_without(movie)), 1)
        score = scaled_cf_score(u, side, n_history)
        logit = weights @ np.array([score, ctx.frequency, ctx.recency]) + bias
        rows.append((u, side, score, logit, n_history))
    return rows, V, cache, index


def predict_pairs(pairs, params, config, encoder_kind, features):
    """
    Attendance probabilities of ``(UserContext, movie_id)`` pairs.

    ``features`` maps movie ids to normalized trailers, or is a
    :class:`trailercf.data.FeatureBank`. All movies are encoded in one batched pass.
    """
    if not pairs:
        return np.zeros(0)
    rows, _, _, _ = _score_pairs(pairs, params, config, encoder_kind, features)
    return np.array([sigmoid_bce(logit, 1)[0] for _, _, _, logit, _ in rows])


def forward_loss(batch, params, config, encoder_kind, features):
    """
    Mean binary cross entropy of a batch and its gradient w.r.t. every parameter.

    Args:
        batch: list of ``(UserContext, movie_id, label)``.
        params (ModelParams): current parameters.
        config (EncoderConfig): architecture.
        encoder_kind: ``"conv"`` or ``"avgpool"``.
        features: movie id -> trailer, or a :class:`trailercf.data.FeatureBank`.

    Returns:
        ``(mean_loss, grads)``, ``grads`` a :class:`ModelParams` shaped as ``params``.

    The gradient reaches the target movie vector through the CF score and every other
    attended movie vector through the user vector sum.
    """
    if not len(batch):
        raise ValueError("empty batch")
    check_encoder_kind(encoder_kind)
    pairs = [(ctx, movie) for ctx, movie, _ in batch]
    rows, V, cache, index = _score_pairs(pairs, params, config, encoder_kind, features)
    weights, _ = params.lr_params()
    grads = params.zeros_like()
    dV = np.zeros_like(V)
    dim = V.shape[1]
    N = len(batch)
    total = 0.0
    for (ctx, movie, label), (u, side, score, logit, n_history) in zip(batch, rows):
        _, loss, dlogit = sigmoid_bce(logit, label)
        total += loss
        dz = dlogit / N
        grads["lr.weight"] += dz * np.array([score, ctx.frequency, ctx.recency])
        grads["lr.bias"] += dz
        dscore = dz * weights[0] / n_history
        dside, du = dscore * u, dscore * side
        t = index[movie]
        dV[t] += dside[:dim]
        if config.demographics_dim:
            grads["demo.weight"] += np.outer(dside[dim:], V[t])
            dV[t] += params["demo.weight"].T @ dside[dim:]
        for attended in ctx.attended_without(movie):
            dV[index[attended]] += du[:dim]
    encode_movies_backward(cache, dV, params, config, encoder_kind, grads)
    return total / N, grads

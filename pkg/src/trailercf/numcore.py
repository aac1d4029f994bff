"""
Dense numerical kernels used by the trailer encoders.

Every kernel is a pure function of its inputs and works on ``float64`` arrays.
Sequences are matrices whose last two axes are (time, channels); any leading
axes are treated as batch axes, so a stack of trailers ``(M, T, D)`` goes
through the same code path as a single trailer ``(T, D)``.

Each forward kernel has a matching ``*_backward`` returning the gradients of a
scalar loss given the upstream gradient of the kernel output. :func:`grad_check`
is the finite difference oracle used to validate them.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from trailercf.data_conversion import check_shape, get_matrix, get_vector
from trailercf.errors import ShapeError
from trailercf.metrics import get_relative_error


class ConvSpec:
    """
    Shape of a temporal convolution layer.

    :param in_channels: number of input channels :math:`C_{in}`.
    :param out_channels: number of filters :math:`C_{out}`.
    :param filter_width: filter size :math:`k`, in frames.
    :param stride: temporal stride :math:`s`, in frames.
    """

    def __init__(self, in_channels, out_channels, filter_width, stride=1):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.filter_width = int(filter_width)
        self.stride = int(stride)
        for name in ["in_channels", "out_channels", "filter_width", "stride"]:
            if getattr(self, name) < 1:
                raise ShapeError(f"ConvSpec.{name} must be >= 1, got {getattr(self, name)}")

    def output_length(self, T):
        """Number of output timesteps, ``floor((T - k) / s) + 1``. No padding is applied."""
        T, k = int(T), self.filter_width
        if T < k:
            raise ShapeError(f"sequence shorter than filter: T={T} < k={k}")
        return (T - k) // self.stride + 1

    def weights_shape(self):
        return (self.out_channels, self.filter_width, self.in_channels)

    def __repr__(self):
        return (
            f"ConvSpec(in_channels={self.in_channels}, out_channels={self.out_channels}, "
            f"filter_width={self.filter_width}, stride={self.stride})"
        )


class ConvParams:
    """Weights ``(C_out, k, C_in)`` and bias ``(C_out,)`` of one temporal convolution."""

    def __init__(self, weights, bias, spec=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if spec is not None:
            check_shape(self.weights, spec.weights_shape(), "conv weights")
            check_shape(self.bias, (spec.out_channels,), "conv bias")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ShapeError("conv parameters hold non finite values")

    @classmethod
    def zeros(cls, spec):
        return cls(np.zeros(spec.weights_shape()), np.zeros(spec.out_channels), spec)

    @classmethod
    def glorot(cls, spec, rng):
        """Uniform weights in :math:`\\pm\\sqrt{6/(fan_{in}+fan_{out})}`, zero bias."""
        fan_in = spec.filter_width * spec.in_channels
        fan_out = spec.filter_width * spec.out_channels
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=spec.weights_shape())
        return cls(weights, np.zeros(spec.out_channels), spec)


def _check_input(x, spec):
    x = get_matrix(x)
    if x.shape[-1] != spec.in_channels:
        raise ShapeError(
            f"expected {spec.in_channels} input channels, got {x.shape[-1]} (shape {x.shape})"
        )
    return x


def _windows(x, spec, T_out):
    """View of shape ``(..., T_out, C_in, k)``, window ``t`` starting at frame ``s*t``."""
    view = sliding_window_view(x, spec.filter_width, axis=-2)
    return view[..., :: spec.stride, :, :][..., :T_out, :, :]


def temporal_conv_forward(x, p, spec):
    """
    Temporal convolution without padding.

    .. math:: y[t,o] = b[o] + \\sum_{j<k} \\sum_c W[o,j,c] \\, x[s t + j, c]

    Args:
        x: ``(..., T, C_in)`` input sequence(s).
        p (ConvParams): layer parameters.
        spec (ConvSpec): layer shape.

    Returns:
        ``(..., T', C_out)`` with ``T' = floor((T - k)/s) + 1``.

    Example:

        >>> spec = ConvSpec(1024, 1024, 8, 2)
        >>> spec.output_length(120)
        57
    """
    x = _check_input(x, spec)
    T_out = spec.output_length(x.shape[-2])
    windows = _windows(x, spec, T_out)
    # windows (..., t, c, j) against weights (o, j, c)
    y = np.tensordot(windows, p.weights, axes=([-2, -1], [2, 1]))
    return y + p.bias


def temporal_conv_backward(x, p, spec, upstream_grad):
    """
    Gradients of :func:`temporal_conv_forward`.

    Returns:
        ``(grad_x, grad_weights, grad_bias)``, shaped as ``x``, ``p.weights`` and ``p.bias``.
        Weight and bias gradients are summed over any leading batch axes.
    """
    x = _check_input(x, spec)
    T_out = spec.output_length(x.shape[-2])
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    check_shape(upstream_grad, x.shape[:-2] + (T_out, spec.out_channels), "upstream_grad")

    windows = _windows(x, spec, T_out)
    lead = list(range(upstream_grad.ndim - 1))
    grad_weights = np.tensordot(upstream_grad, windows, axes=(lead, lead))
    grad_weights = np.ascontiguousarray(grad_weights.transpose(0, 2, 1))
    grad_bias = upstream_grad.reshape(-1, spec.out_channels).sum(axis=0)

    grad_x = np.zeros_like(x)
    last = spec.stride * (T_out - 1) + 1
    for j in range(spec.filter_width):
        grad_x[..., j : j + last : spec.stride, :] += upstream_grad @ p.weights[:, j, :]
    return grad_x, grad_weights, grad_bias


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x, upstream_grad):
    """The relu gradient is the 0/1 mask of ``x > 0`` applied to the upstream gradient."""
    return np.asarray(upstream_grad, dtype=np.float64) * (np.asarray(x) > 0.0)


def avg_pool_time(x):
    """
    Mean over the time axis, ``(..., T, C) -> (..., C)``.

    Values are summed in ascending order of magnitude per channel, so the result is
    bit-identical under any permutation of the rows.
    """
    x = get_matrix(x)
    T = x.shape[-2]
    return np.sort(x, axis=-2).sum(axis=-2) / T


def avg_pool_time_backward(x_shape, upstream_grad):
    T = x_shape[-2]
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    check_shape(upstream_grad, tuple(x_shape[:-2]) + (x_shape[-1],), "upstream_grad")
    return np.broadcast_to(upstream_grad[..., None, :] / T, tuple(x_shape)).copy()


def _check_affine(x, weights, bias):
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2:
        raise ShapeError(f"affine weights must be a matrix, got shape {weights.shape}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != weights.shape[1]:
        raise ShapeError(f"affine input: expected {weights.shape[1]} features, got {x.shape[-1]}")
    if bias is not None:
        check_shape(bias, (weights.shape[0],), "affine bias")
    return x, weights


def affine_forward(x, weights, bias):
    """``y = W x + b`` applied along the last axis of ``x``."""
    x, weights = _check_affine(x, weights, bias)
    return x @ weights.T + bias


def affine_backward(x, weights, upstream_grad):
    """Returns ``(grad_x, grad_weights, grad_bias)``; parameter gradients sum over leading axes."""
    x, weights = _check_affine(x, weights, None)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    check_shape(upstream_grad, x.shape[:-1] + (weights.shape[0],), "upstream_grad")
    lead = list(range(x.ndim - 1))
    grad_weights = np.tensordot(upstream_grad, x, axes=(lead, lead))
    grad_bias = upstream_grad.reshape(-1, weights.shape[0]).sum(axis=0)
    return upstream_grad @ weights, grad_weights, grad_bias


def sigmoid_bce(logit, label):
    """
    Logistic probability, binary cross entropy and its derivative w.r.t. the logit.

    The loss is evaluated as ``y softplus(-z) + (1 - y) softplus(z)`` which neither
    overflows nor cancels for large ``|z|``.

    Returns:
        ``(probability, loss, dloss_dlogit)``; scalars in, scalars out.

    Example:

        >>> p, loss, g = sigmoid_bce(0.0, 1)
        >>> p, round(loss, 6), g
        (0.5, 0.693147, -0.5)
    """
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    p = expit(z)
    softplus_neg, softplus_pos = np.logaddexp(0.0, -z), np.logaddexp(0.0, z)
    loss = np.where(
        y == 1.0,
        softplus_neg,
        np.where(y == 0.0, softplus_pos, y * softplus_neg + (1.0 - y) * softplus_pos),
    )
    grad = p - y
    if p.ndim == 0:
        return float(p), float(loss), float(grad)
    return p, loss, grad


def grad_check(op_under_test, inputs, eps=1e-5, floor=1e-12):
    """
    Compare analytic gradients with central differences.

    Args:
        op_under_test: callable ``f(inputs) -> (value, grads)`` where ``value`` is a scalar
            and ``grads`` maps every key of ``inputs`` to an array of the same shape.
        inputs (dict): name -> array. Arrays are copied to ``float64`` before perturbation.
        eps (float): central difference step.
        floor (float): lower bound of the relative error denominator.

    Returns:
        float: the maximum over all coordinates of
        ``|a - n| / max(|a|, |n|, floor)``, ``a`` analytic and ``n`` numerical.
    """
    inputs = {name: np.array(value, dtype=np.float64) for name, value in inputs.items()}
    _, analytic = op_under_test(inputs)
    worst = 0.0
    for name, x in inputs.items():
        grad = np.asarray(analytic[name], dtype=np.float64)
        check_shape(grad, x.shape, f"gradient of {name}")
        for idx in np.ndindex(x.shape):
            origin = x[idx]
            x[idx] = origin + eps
            f_plus, _ = op_under_test(inputs)
            x[idx] = origin - eps
            f_minus, _ = op_under_test(inputs)
            x[idx] = origin
            numerical = (f_plus - f_minus) / (2.0 * eps)
            worst = max(worst, get_relative_error(grad[idx], numerical, floor=floor))
    return worst


def mlp_forward(x, layers):
    """
    Multi layer perceptron: each hidden layer is affine + relu, the last one affine only.

    Args:
        x: ``(..., C)`` input.
        layers: list of ``(weights, bias)`` pairs; an empty list is the identity.

    Returns:
        ``(output, cache)``, the cache being consumed by :func:`mlp_backward`.
    """
    cache = []
    h = np.asarray(x, dtype=np.float64)
    for n, (weights, bias) in enumerate(layers):
        pre = affine_forward(h, weights, bias)
        cache.append((h, pre))
        h = relu(pre) if n + 1 < len(layers) else pre
    return h, cache


def mlp_backward(layers, cache, upstream_grad):
    """Returns ``(grad_x, [(grad_weights, grad_bias), ...])``."""
    grads = [None] * len(layers)
    g = np.asarray(upstream_grad, dtype=np.float64)
    for n in reversed(range(len(layers))):
        h, pre = cache[n]
        if n + 1 < len(layers):
            g = relu_backward(pre, g)
        g, grad_weights, grad_bias = affine_backward(h, layers[n][0], g)
        grads[n] = (grad_weights, grad_bias)
    return g, grads


def dot(u, v):
    u, v = get_vector(u, name="u"), get_vector(v, name="v")
    if u.shape != v.shape:
        raise ShapeError(f"vector lengths differ: {u.shape[0]} != {v.shape[0]}")
    return float(u @ v)

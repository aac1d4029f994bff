"""
Central difference checks of every backward kernel and of the full model gradient.

Each check draws small random instances from a seed and reports the worst relative error
of :func:`trailercf.numcore.grad_check` over them.
"""

import logging

import numpy as np
import pandas as pd

from trailercf.model import EncoderConfig, ModelParams, UserContext, forward_loss, init_params
from trailercf.numcore import (
    ConvParams,
    ConvSpec,
    affine_backward,
    affine_forward,
    avg_pool_time,
    avg_pool_time_backward,
    grad_check,
    mlp_backward,
    mlp_forward,
    relu,
    relu_backward,
    sigmoid_bce,
    temporal_conv_backward,
    temporal_conv_forward,
)
from trailercf.random_utils import derive_seed, get_rng

logger = logging.getLogger(__name__)

GRADCHECK_COLUMNS = ["check", "instances", "max_rel_error", "passed"]


def _away_from_zero(rng, shape, margin=0.1):
    """Uniform values with ``|x| >= margin``, keeping relu kinks out of the difference stencil."""
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def temporal_conv_instance(rng):
    k = int(rng.integers(1, 4))
    s = int(rng.integers(1, 3))
    spec = ConvSpec(int(rng.integers(1, 4)), int(rng.integers(1, 4)), k, s)
    T = k + int(rng.integers(0, 6))
    inputs = {
        "x": rng.normal(size=(T, spec.in_channels)),
        "weights": rng.normal(size=spec.weights_shape()),
        "bias": rng.normal(size=spec.out_channels),
    }
    upstream = rng.normal(size=(spec.output_length(T), spec.out_channels))

    def op(inputs):
        p = ConvParams(inputs["weights"], inputs["bias"])
        y = temporal_conv_forward(inputs["x"], p, spec)
        grad_x, grad_weights, grad_bias = temporal_conv_backward(inputs["x"], p, spec, upstream)
        return float(np.sum(y * upstream)), {"x": grad_x, "weights": grad_weights, "bias": grad_bias}

    return op, inputs


def relu_instance(rng):
    shape = (int(rng.integers(1, 6)), int(rng.integers(1, 4)))
    upstream = rng.normal(size=shape)

    def op(inputs):
        return float(np.sum(relu(inputs["x"]) * upstream)), {"x": relu_backward(inputs["x"], upstream)}

    return op, {"x": _away_from_zero(rng, shape)}


def avg_pool_instance(rng):
    shape = (int(rng.integers(1, 7)), int(rng.integers(1, 4)))
    upstream = rng.normal(size=shape[1])

    def op(inputs):
        value = float(avg_pool_time(inputs["x"]) @ upstream)
        return value, {"x": avg_pool_time_backward(shape, upstream)}

    return op, {"x": rng.normal(size=shape)}


def affine_instance(rng):
    n_out, n_in = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    upstream = rng.normal(size=n_out)
    inputs = {"x": rng.normal(size=n_in), "weights": rng.normal(size=(n_out, n_in)), "bias": rng.normal(size=n_out)}

    def op(inputs):
        y = affine_forward(inputs["x"], inputs["weights"], inputs["bias"])
        grad_x, grad_weights, grad_bias = affine_backward(inputs["x"], inputs["weights"], upstream)
        return float(y @ upstream), {"x": grad_x, "weights": grad_weights, "bias": grad_bias}

    return op, inputs


def sigmoid_bce_instance(rng):
    label = int(rng.integers(2))

    def op(inputs):
        _, loss, grad = sigmoid_bce(inputs["logit"], label)
        return loss, {"logit": np.asarray(grad)}

    return op, {"logit": np.asarray(rng.normal(scale=3.0))}


def mlp_instance(rng):
    widths = [int(rng.integers(1, 4)) for _ in range(3)]
    inputs = {"x": rng.normal(size=widths[0])}
    for n in range(2):
        inputs[f"weights{n}"] = rng.normal(size=(widths[n + 1], widths[n]))
        inputs[f"bias{n}"] = rng.normal(size=widths[n + 1])
    upstream = rng.normal(size=widths[-1])

    def op(inputs):
        layers = [(inputs[f"weights{n}"], inputs[f"bias{n}"]) for n in range(2)]
        y, cache = mlp_forward(inputs["x"], layers)
        grad_x, grads = mlp_backward(layers, cache, upstream)
        out = {"x": grad_x}
        for n, (grad_weights, grad_bias) in enumerate(grads):
            out[f"weights{n}"], out[f"bias{n}"] = grad_weights, grad_bias
        return float(y @ upstream), out

    return op, inputs


def full_model_instance(rng, n=0):
    """
    Two users, three movies, ``D = 4``, ``T = 9``. Instances cycle through the skip,
    plain and absent second layer, the average pooling encoder and demographics.
    """
    variant = n % 4
    config = EncoderConfig(
        feature_dim=4,
        max_frames=9,
        conv_out_channels=3,
        filter_width=3,
        stride=2,
        residual_filter_width=[1, 2, 0, 1][variant],
        mlp_layer_widths=[2] if variant % 2 else [],
        demographics_dim=2 if variant == 3 else 0,
    )
    kind = "avgpool" if variant == 2 and rng.integers(2) else "conv"
    params = init_params(config, kind, seed=int(rng.integers(2**31)))
    params["lr.weight"] = rng.normal(size=3)
    params["lr.bias"] = rng.normal(size=1)
    for name, value in params.items():
        if name.endswith(".bias"):
            params[name] = rng.normal(scale=0.1, size=value.shape)
    features = {m: rng.normal(size=(9, 4)) for m in ["m0", "m1", "m2"]}
    demographics = (lambda: rng.normal(size=2)) if config.demographics_dim else (lambda: None)
    u0 = UserContext("u0", ["m0", "m1"], rng.uniform(), rng.uniform(), demographics())
    u1 = UserContext("u1", ["m1", "m2"], rng.uniform(), rng.uniform(), demographics())
    batch = [(u0, "m0", 1), (u0, "m2", 0), (u1, "m2", 1), (u1, "m0", 0)]

    def op(inputs):
        loss, grads = forward_loss(batch, ModelParams(inputs), config, kind, features)
        return loss, grads.tensors

    return op, dict(params.items())


CHECKS = {
    "temporal_conv": temporal_conv_instance,
    "relu": relu_instance,
    "avg_pool_time": avg_pool_instance,
    "affine": affine_instance,
    "sigmoid_bce": sigmoid_bce_instance,
    "mlp": mlp_instance,
    "full_model": full_model_instance,
}


def check_layer(name, n_instances=20, seed=0, eps=1e-5):
    """Worst relative error of check ``name`` over ``n_instances`` seeded instances."""
    rng = get_rng(derive_seed(seed, name))
    worst = 0.0
    for n in range(int(n_instances)):
        make = CHECKS[name]
        op, inputs = make(rng, n) if name == "full_model" else make(rng)
        worst = max(worst, grad_check(op, inputs, eps=eps))
    return worst


def run_suite(n_instances=20, seed=0, eps=1e-5, tolerance=1e-4):
    """
    Run every check.

    Returns:
        DataFrame ``check, instances, max_rel_error, passed``.
    """
    rows = []
    for name in CHECKS:
        worst = check_layer(name, n_instances, seed, eps)
        passed = worst < tolerance
        (logger.info if passed else logger.error)("gradcheck %s: max relative error %.3e", name, worst)
        rows.append((name, int(n_instances), worst, bool(passed)))
    return pd.DataFrame(rows, columns=GRADCHECK_COLUMNS)

"""
Minibatch SGD with validation early stopping, and the binary checkpoint format.

Checkpoint layout (little endian): magic ``MCK1``, ``u32`` version, ``u32`` tensor count,
then per tensor a ``u16`` name length, the UTF-8 name, a ``u8`` rank, ``rank`` ``u32``
dimensions and the ``float64`` values in row-major order. The encoder configuration is
stored as ``config.*`` tensors ahead of the parameters.
"""

import logging
import os
import struct

import numpy as np
import pandas as pd
from tqdm import tqdm

from trailercf.data import UserIndex
from trailercf.errors import CheckpointError, ConfigError, TrainingDiverged
from trailercf.file import save_to_file
from trailercf.metrics import auc
from trailercf.model import (
    EncoderConfig,
    ModelParams,
    check_encoder_kind,
    encoder_kind_of,
    forward_loss,
    init_params,
    predict_pairs,
)
from trailercf.random_utils import derive_seed, get_rng
from trailercf.sampling import sample_eval_pairs, sample_training_batch

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MCK1"
CHECKPOINT_VERSION = 1
CONFIG_PREFIX = "config."
HISTORY_COLUMNS = ["epoch", "train_loss", "validation_auc"]


class TrainConfig:
    """
    :param encoder_kind: ``"conv"`` or ``"avgpool"``.
    :param batch_size: pairs per SGD step, half positive; must be even.
    :param learning_rate: SGD step size, ``> 0`` (``0`` is accepted to freeze parameters).
    :param max_epochs: epoch budget.
    :param patience: epochs without validation improvement before stopping.
    :param steps_per_epoch: SGD steps between two validations.
    :param validation_pairs: size of the fixed validation sample, a multiple of 10.
    :param seed: seeds initialization, batches and the validation sample.
    """

    def __init__(
        self,
        encoder_kind="conv",
        batch_size=64,
        learning_rate=0.05,
        max_epochs=20,
        patience=3,
        steps_per_epoch=100,
        validation_pairs=2000,
        seed=0,
        **kwargs,
    ):
        self.encoder_kind = check_encoder_kind(encoder_kind)
        self.batch_size = int(batch_size)
        self.learning_rate = float(learning_rate)
        self.max_epochs = int(max_epochs)
        self.patience = int(patience)
        self.steps_per_epoch = int(steps_per_epoch)
        self.validation_pairs = int(validation_pairs)
        self.seed = int(seed)
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.learning_rate < 0 or not np.isfinite(self.learning_rate):
            raise ConfigError(f"learning_rate must be a finite value >= 0, got {self.learning_rate}")
        if self.patience < 1 or self.max_epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("patience, max_epochs and steps_per_epoch must be >= 1")
        if self.validation_pairs < 10 or self.validation_pairs % 10:
            raise ConfigError(f"validation_pairs must be a positive multiple of 10, got {self.validation_pairs}")

    def __repr__(self):
        return "TrainConfig(" + ", ".join(f"{k}={v!r}" for k, v in vars(self).items()) + ")"


class TrainHistory:
    """Per epoch ``(train_loss, validation_auc)``; ``best_epoch`` is the argmax of the validation AUC."""

    def __init__(self):
        self.epochs = []
        self.best_epoch = -1

    def append(self, train_loss, validation_auc):
        self.epochs.append((float(train_loss), float(validation_auc)))
        if self.best_epoch < 0 or validation_auc > self.epochs[self.best_epoch][1]:
            self.best_epoch = len(self.epochs) - 1
        return self.best_epoch == len(self.epochs) - 1

    @property
    def best_validation_auc(self):
        return self.epochs[self.best_epoch][1] if self.epochs else float("nan")

    def to_frame(self):
        return pd.DataFrame(
            [(n, loss, score) for n, (loss, score) in enumerate(self.epochs)], columns=HISTORY_COLUMNS
        )

    def save(self, path):
        save_to_file(self.to_frame(), path)

    def __len__(self):
        return len(self.epochs)

    def __eq__(self, other):
        return isinstance(other, TrainHistory) and self.epochs == other.epochs and self.best_epoch == other.best_epoch


def sgd_step(params, grads, lr):
    """``theta - lr * grad`` for every named tensor, as a new :class:`ModelParams`."""
    return ModelParams({name: value - lr * grads[name] for name, value in params.items()})


def validation_score(params, model_config, encoder_kind, features, users, pairs):
    """AUC of ``params`` on labeled ``(user_id, movie_id, label)`` pairs."""
    scores = predict_pairs(users.contexts(pairs), params, model_config, encoder_kind, features)
    return auc(scores, [label for _, _, label in pairs])


def train(config, split, features, model_config, users=None, progress=False):
    """
    Train the model of ``config.encoder_kind`` on ``split``.

    Args:
        config (TrainConfig): optimization settings.
        split (DatasetSplit): pair pools.
        features: :class:`trailercf.data.FeatureBank` covering every in-matrix movie.
        model_config (EncoderConfig): architecture.
        users (UserIndex, optional): user histories and features; built from the split pools
            when omitted.
        progress (bool): show a tqdm bar over epochs.

    Returns:
        ``(params, history)``: parameters of the best validation epoch and the history.

    Raises:
        TrainingDiverged: a loss or a parameter became non finite.
    """
    kind = config.encoder_kind
    users = users if users is not None else UserIndex.from_pools(split)
    params = init_params(model_config, kind, seed=derive_seed(config.seed, "init"))
    batch_rng = get_rng(derive_seed(config.seed, "batches"))
    validation_pairs = sample_eval_pairs(
        split, "validation", config.validation_pairs, derive_seed(config.seed, "validation")
    )
    logger.info("training %s encoder, %d parameters, %s", kind, params.n_parameters(), config)

    history = TrainHistory()
    best_params = params.copy()
    stale = 0
    step = 0
    for epoch in tqdm(range(config.max_epochs), desc="epochs", ncols=75, disable=not progress):
        losses = []
        for _ in range(config.steps_per_epoch):
            batch = users.labeled(sample_training_batch(split, config.batch_size, batch_rng))
            loss, grads = forward_loss(batch, params, model_config, kind, features)
            if not np.isfinite(loss):
                raise TrainingDiverged(step)
            params = sgd_step(params, grads, config.learning_rate)
            if not params.all_finite():
                raise TrainingDiverged(step)
            losses.append(loss)
            step += 1
        score = validation_score(params, model_config, kind, features, users, validation_pairs)
        if history.append(np.mean(losses), score):
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
        logger.info(
            "epoch %d: train loss %.6f, validation AUC %.6f, best epoch %d",
            epoch, np.mean(losses), score, history.best_epoch,
        )
        if stale >= config.patience:
            logger.info("no validation improvement for %d epochs, stopping", stale)
            break
    return best_params, history


############################## checkpoints ##############################


def _config_tensors(config):
    out = {}
    for key, value in config.to_dict().items():
        if isinstance(value, list):
            out[CONFIG_PREFIX + key] = np.asarray(value, dtype=np.float64).reshape(len(value))
        else:
            out[CONFIG_PREFIX + key] = np.asarray(float(value))
    return out


def _config_from_tensors(tensors, path):
    values = {}
    for name, value in tensors.items():
        key = name[len(CONFIG_PREFIX) :]
        if value.ndim == 1:
            values[key] = [int(v) for v in value]
        elif key == "residual_enabled":
            values[key] = bool(value)
        else:
            values[key] = int(value)
    try:
        return EncoderConfig(**values)
    except (TypeError, ValueError) as error:
        raise CheckpointError(f"invalid encoder configuration in {path}: {error}")


def save_checkpoint(params, config, path):
    """Write ``params`` and the :class:`EncoderConfig` ``config`` to ``path``."""
    tensors = {**_config_tensors(config), **params.tensors}
    directory = os.path.dirname(str(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(tensors)))
        for name, value in tensors.items():
            encoded = name.encode("utf-8")
            value = np.asarray(value, dtype=np.float64)
            f.write(struct.pack("<H", len(encoded)) + encoded)
            f.write(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
            f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, blob, path):
        self.blob, self.path, self.offset = blob, path, 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.blob):
            raise CheckpointError(f"truncated checkpoint {self.path} at byte {self.offset}")
        values = struct.unpack_from(fmt, self.blob, self.offset)
        self.offset += size
        return values

    def bytes(self, size):
        if self.offset + size > len(self.blob):
            raise CheckpointError(f"truncated checkpoint {self.path} at byte {self.offset}")
        out = self.blob[self.offset : self.offset + size]
        self.offset += size
        return out


def load_checkpoint(path):
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Returns:
        ``(params, config)``. Values are bit-identical to the saved ones.

    Raises:
        CheckpointError: bad magic, unknown version, truncation, trailing bytes or tensors
        inconsistent with the stored configuration.
    """
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)
    magic, version, count = reader.take("<4sII")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r} in {path}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} in {path}")
    config_tensors, params = {}, ModelParams()
    for _ in range(count):
        (length,) = reader.take("<H")
        name = reader.bytes(length).decode("utf-8")
        (rank,) = reader.take("<B")
        shape = reader.take(f"<{rank}I")
        size = int(np.prod(shape, dtype=np.int64))
        value = np.frombuffer(reader.bytes(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        if name.startswith(CONFIG_PREFIX):
            config_tensors[name] = value
        else:
            params[name] = value
    if reader.offset != len(reader.blob):
        raise CheckpointError(f"{len(reader.blob) - reader.offset} trailing bytes in {path}")
    config = _config_from_tensors(config_tensors, path)
    kind = encoder_kind_of(params)
    expected = init_params(config, kind)
    if [(n, v.shape) for n, v in expected.items()] != [(n, v.shape) for n, v in params.items()]:
        raise CheckpointError(f"tensors of {path} do not match its encoder configuration")
    if not params.all_finite():
        raise CheckpointError(f"non finite parameters in {path}")
    return params, config

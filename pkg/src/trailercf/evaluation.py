"""
In-matrix and cold-start evaluation, and the filter size / residual layer ablation sweep.
"""

import itertools
import logging
import warnings

import numpy as np
import pandas as pd

from trailercf.data import UserIndex
from trailercf.file import read_table, save_to_file
from trailercf.metrics import auc
from trailercf.model import EncoderConfig, encoder_kind_of, predict_pairs
from trailercf.parallel import parallel_task
from trailercf.random_utils import derive_seed
from trailercf.sampling import sample_eval_pairs
from trailercf.train import TrainConfig, train

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["pool", "auc", "n_pairs", "n_positive", "n_negative"]
SWEEP_COLUMNS = ["filter_width", "residual", "seed", "in_matrix_auc", "cold_start_auc"]
DECIMALS = 6


class EvalReport:
    """
    AUCs on the in-matrix test pool and on the cold-start pool.

    ``pair_counts[pool]`` is ``(n_pairs, n_positive, n_negative)`` for ``pool`` in
    ``"in_matrix"`` and ``"cold_start"``. A pool that could not be evaluated has AUC ``nan``.
    """

    def __init__(self, in_matrix_auc, cold_start_auc, pair_counts):
        self.in_matrix_auc = float(in_matrix_auc)
        self.cold_start_auc = float(cold_start_auc)
        self.pair_counts = {pool: tuple(int(c) for c in counts) for pool, counts in pair_counts.items()}

    def to_frame(self):
        rows = []
        for pool, score in [("in_matrix", self.in_matrix_auc), ("cold_start", self.cold_start_auc)]:
            rows.append((pool, score) + self.pair_counts.get(pool, (0, 0, 0)))
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def save(self, path):
        save_to_file(self.to_frame(), path)

    def __eq__(self, other):
        return (
            isinstance(other, EvalReport)
            and self.to_frame().equals(other.to_frame())
        )

    def __repr__(self):
        return f"EvalReport(in_matrix_auc={self.in_matrix_auc:.6f}, cold_start_auc={self.cold_start_auc:.6f})"


def _score_pool(params, model_config, encoder_kind, split, features, users, which, total, seed):
    pairs = sample_eval_pairs(split, which, total, derive_seed(seed, which))
    labels = np.array([label for _, _, label in pairs])
    scores = predict_pairs(users.contexts(pairs), params, model_config, encoder_kind, features)
    n_positive = int(labels.sum())
    return auc(scores, labels), (len(pairs), n_positive, len(pairs) - n_positive)


def evaluate(params, model_config, split, features, eval_pair_total=5000, seed=0, users=None, encoder_kind=None):
    """
    Score 1:9 samples of the test pool and of the cold-start pool.

    Cold-start movie vectors come from their trailers only; the user side is built from
    training visible attendance.

    Args:
        params (ModelParams): trained parameters.
        model_config (EncoderConfig): architecture.
        split (DatasetSplit): pools.
        features (FeatureBank): trailers of every movie.
        eval_pair_total (int): pairs per pool, a multiple of 10.
        seed (int): sampling seed; the same seed gives the same pairs.
        users (UserIndex, optional): defaults to one built from the split pools.
        encoder_kind: defaults to the kind ``params`` were trained for.

    Returns:
        EvalReport
    """
    kind = encoder_kind or encoder_kind_of(params)
    users = users if users is not None else UserIndex.from_pools(split)
    in_matrix_auc, in_matrix_counts = _score_pool(
        params, model_config, kind, split, features, users, "test", eval_pair_total, seed
    )
    counts = {"in_matrix": in_matrix_counts}
    cold_start_auc = float("nan")
    if len(split.cold_start):
        cold_start_auc, counts["cold_start"] = _score_pool(
            params, model_config, kind, split, features, users, "cold_start", eval_pair_total, seed
        )
    else:
        warnings.warn("no cold-start pair, cold-start AUC not evaluated")
    report = EvalReport(in_matrix_auc, cold_start_auc, counts)
    logger.info("%s", report)
    return report


############################## sweep ##############################


def parse_residual(option):
    """``"none"`` (no second convolution) or a positive filter width."""
    if option is None or str(option).strip().lower() == "none":
        return "none"
    width = int(option)
    if width < 1:
        raise ValueError(f"residual width must be >= 1 or 'none', got {option!r}")
    return width


class SweepRow:
    def __init__(self, filter_width, residual, seed, in_matrix_auc, cold_start_auc):
        self.filter_width = int(filter_width)
        self.residual = parse_residual(residual)
        self.seed = int(seed)
        self.in_matrix_auc = float(in_matrix_auc)
        self.cold_start_auc = float(cold_start_auc)

    def as_tuple(self):
        return (self.filter_width, self.residual, self.seed, self.in_matrix_auc, self.cold_start_auc)

    def rounded(self):
        """The row as printed in ``sweep.csv``."""
        return SweepRow(
            self.filter_width,
            self.residual,
            self.seed,
            round(self.in_matrix_auc, DECIMALS),
            round(self.cold_start_auc, DECIMALS),
        )

    def __eq__(self, other):
        return isinstance(other, SweepRow) and self.as_tuple() == other.as_tuple()

    def __repr__(self):
        return "SweepRow(" + ", ".join(f"{c}={v!r}" for c, v in zip(SWEEP_COLUMNS, self.as_tuple())) + ")"


def sweep_frame(rows):
    return pd.DataFrame([r.as_tuple() for r in rows], columns=SWEEP_COLUMNS).astype({"residual": str})


def write_sweep(rows, path):
    save_to_file(sweep_frame(rows), path, float_format=f"%.{DECIMALS}f")


def load_sweep(path):
    frame = read_table(
        path, SWEEP_COLUMNS, integer_columns=["filter_width", "seed"], real_columns=["in_matrix_auc", "cold_start_auc"]
    )
    return [SweepRow(*row) for row in frame.itertuples(index=False, name=None)]


def summarize_sweep(rows):
    """Seed averaged AUCs per ``(filter_width, residual)``."""
    frame = sweep_frame(rows)
    return (
        frame.groupby(["filter_width", "residual"], sort=True)[["in_matrix_auc", "cold_start_auc"]]
        .mean()
        .reset_index()
    )


def sweep_model_config(base_config, filter_width, residual):
    residual = parse_residual(residual)
    return EncoderConfig(
        **{
            **base_config,
            "filter_width": filter_width,
            "residual_filter_width": 0 if residual == "none" else residual,
            "residual_enabled": True,
        }
    )


def ablation_sweep(filter_widths, residual_options, seeds, base_config, split, features, users=None, path=None):
    """
    Train and evaluate the convolution model for every ``(filter_width, residual, seed)``.

    Args:
        filter_widths: first layer filter widths.
        residual_options: ``"none"`` or second layer widths.
        seeds: training seeds; the data, validation and evaluation samples stay shared.
        base_config (dict): flat run parameters, see :class:`trailercf.config.RunConfig`.
            ``workers > 1`` runs configurations on a thread pool.
        split, features, users: the dataset, shared by every run.
        path (str, optional): where to write ``sweep.csv``.

    Returns:
        list of :class:`SweepRow`, in ``filter_widths x residual_options x seeds`` order.
    """
    users = users if users is not None else UserIndex.from_pools(split)
    eval_seed = int(base_config.get("seed", 0))
    combos = [
        {"filter_width": int(w), "residual": parse_residual(r), "run_seed": int(s)}
        for w, r, s in itertools.product(filter_widths, residual_options, seeds)
    ]

    def run(p):
        model_config = sweep_model_config(base_config, p["filter_width"], p["residual"])
        train_config = TrainConfig(**{**base_config, "encoder_kind": "conv", "seed": p["run_seed"]})
        params, _ = train(train_config, split, features, model_config, users=users)
        report = evaluate(
            params, model_config, split, features, base_config.get("eval_pairs", 5000), eval_seed, users, "conv"
        )
        logger.info("filter %d, residual %s, seed %d: %s", p["filter_width"], p["residual"], p["run_seed"], report)
        return SweepRow(p["filter_width"], p["residual"], p["run_seed"], report.in_matrix_auc, report.cold_start_auc)

    workers = int(base_config.get("workers", 1))
    rows = parallel_task(combos, run, desc="sweep", debug=workers <= 1, max_workers=workers)
    if path is not None:
        write_sweep(rows, path)
    return rows

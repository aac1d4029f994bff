"""
Command line front end.

Usage::

    trailercf [--config FILE] [--seed N] [--out DIR] [--KEY VALUE ...] COMMAND [options]

Commands: ``synth``, ``split``, ``train``, ``eval``, ``sweep``, ``explain`` and
``gradcheck``. Every output lands in ``--out`` (default ``out``), which is also where the
manifest and attendance files are looked for unless the configuration names them.
Diagnostics go to stderr; the exit code is 0 only when the command completed.
"""

import argparse
import logging
import os
import sys

from trailercf.config import RunConfig
from trailercf.data import (
    FeatureBank,
    UserIndex,
    load_attendance,
    load_demographics,
    load_manifest,
    load_split,
    make_splits,
    movie_release_order,
    reference_time_for,
    save_split,
)
from trailercf.errors import ConfigError, TrailerCFError
from trailercf.evaluation import ablation_sweep, evaluate
from trailercf.explain import channel_activation_stats, export_hits, mine_channels
from trailercf.file import save_to_file
from trailercf.gradcheck import run_suite
from trailercf.model import EncoderConfig
from trailercf.parallel import elapsed_time
from trailercf.plot_utils import plot_history, plot_sweep
from trailercf.synthgen import generate_world, write_world
from trailercf.train import TrainConfig, encoder_kind_of, load_checkpoint, save_checkpoint, train

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.mck"


class Dataset:
    """Everything a command reads: manifest, records, split, features and user index."""

    def __init__(self, config, out_dir):
        manifest_path = config.path("manifest", out_dir, "manifest.csv")
        attendance_path = config.path("attendance", out_dir, "attendance.csv")
        config.check_paths([manifest_path, attendance_path, config.split_path, config.demographics])
        self.manifest = load_manifest(manifest_path)
        self.records = load_attendance(attendance_path)
        order = movie_release_order(self.manifest)
        if config.n_cold > len(order):
            raise ConfigError(f"n_cold={config.n_cold} exceeds the {len(order)} movies of the manifest")
        cold, in_matrix = order[len(order) - config.n_cold :], order[: len(order) - config.n_cold]
        if config.split_path:
            self.split = load_split(config.split_path, cold, in_matrix, config.seed)
        else:
            ratios = (config.train_ratio, config.validation_ratio, config.test_ratio)
            self.split = make_splits(self.records, order, config.n_cold, ratios, config.seed)
        self.features = FeatureBank.from_manifest(
            self.manifest, config.max_frames, debug=config.workers <= 1, max_workers=config.workers, progress=False
        )
        if self.features.feature_dim != config.feature_dim:
            raise ConfigError(
                f"feature files hold {self.features.feature_dim} features per frame, feature_dim={config.feature_dim}"
            )
        demographics = load_demographics(config.demographics) if config.demographics else None
        release_ts = dict(zip(self.manifest["movie_id"], self.manifest["release_ts"]))
        reference_time = reference_time_for(self.records, release_ts, self.split.cold_start_movies)
        self.users = UserIndex.from_split(
            self.split, self.records, reference_time, config.window_days, config.max_history, demographics
        )


def encoder_config(config):
    values = config.as_dict()
    if config.demographics:
        values["demographics_dim"] = len(next(iter(load_demographics(config.demographics).values())))
    return EncoderConfig(**values)


def cmd_synth(config, out_dir):
    world = generate_world(**config.as_dict())
    write_world(world, out_dir)
    return 0


def cmd_split(config, out_dir):
    dataset = Dataset(config, out_dir)
    save_split(dataset.split, os.path.join(out_dir, "split.csv"))
    return 0


def cmd_train(config, out_dir):
    dataset = Dataset(config, out_dir)
    model_config = encoder_config(config)
    verbose = logger.getEffectiveLevel() <= logging.DEBUG
    params, history = train(
        TrainConfig(**config.as_dict()), dataset.split, dataset.features, model_config, dataset.users, verbose
    )
    save_checkpoint(params, model_config, os.path.join(out_dir, CHECKPOINT_NAME))
    history.save(os.path.join(out_dir, "history.csv"))
    plot_history(history, os.path.join(out_dir, "history.png"))
    logger.info("best epoch %d, validation AUC %.6f", history.best_epoch, history.best_validation_auc)
    return 0


def _checkpoint(config, out_dir, checkpoint):
    checkpoint = checkpoint or os.path.join(out_dir, CHECKPOINT_NAME)
    config.check_paths([checkpoint])
    return load_checkpoint(checkpoint)


def cmd_eval(config, out_dir, checkpoint=None):
    params, model_config = _checkpoint(config, out_dir, checkpoint)
    dataset = Dataset(config, out_dir)
    report = evaluate(
        params, model_config, dataset.split, dataset.features, config.eval_pairs, config.seed, dataset.users
    )
    report.save(os.path.join(out_dir, "report.csv"))
    return 0


def cmd_sweep(config, out_dir):
    dataset = Dataset(config, out_dir)
    rows = ablation_sweep(
        config.sweep_filter_widths,
        config.sweep_residual,
        config.sweep_seeds,
        config.as_dict(),
        dataset.split,
        dataset.features,
        dataset.users,
        path=os.path.join(out_dir, "sweep.csv"),
    )
    plot_sweep(rows, os.path.join(out_dir, "sweep.png"))
    return 0


def cmd_explain(config, out_dir, checkpoint=None, channel=None):
    params, model_config = _checkpoint(config, out_dir, checkpoint)
    if encoder_kind_of(params) != "conv":
        raise ConfigError("explain needs a convolution model checkpoint")
    dataset = Dataset(config, out_dir)
    stats = channel_activation_stats(params, model_config, dataset.features)
    channels = None if channel is None else [channel]
    hits = mine_channels(params, model_config, dataset.features, stats, channels, config.max_hits)
    export_hits(hits, os.path.join(out_dir, "hits.csv"))
    logger.info("%d hits written", len(hits))
    return 0


def cmd_gradcheck(config, out_dir):
    report = run_suite(config.gradcheck_instances, config.seed, tolerance=config.gradcheck_tolerance)
    save_to_file(report, os.path.join(out_dir, "gradcheck.csv"), float_format="%.6e")
    failed = report.loc[~report["passed"], "check"].tolist()
    if failed:
        logger.error("gradient check failed: %s", ", ".join(failed))
        return 1
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "explain": cmd_explain,
    "gradcheck": cmd_gradcheck,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trailercf",
        description="Temporal convolution hybrid collaborative filtering on movie trailers.",
    )
    parser.add_argument("--config", default=None, help="key = value configuration file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: 0)")
    parser.add_argument("--out", default="out", help="output and default data directory (default: out)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging and progress bars")
    RunConfig.add_arguments(parser)
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    commands.add_parser("synth", help="write a synthetic world (trailers, manifest, attendance)")
    commands.add_parser("split", help="write the dataset split to split.csv")
    commands.add_parser("train", help="train, write checkpoint.mck and history.csv")
    evaluate_parser = commands.add_parser("eval", help="write report.csv for a checkpoint")
    evaluate_parser.add_argument("--checkpoint", default=None, help="default <out>/checkpoint.mck")
    commands.add_parser("sweep", help="filter width / residual ablation, write sweep.csv")
    explain_parser = commands.add_parser("explain", help="write hits.csv of strongly activating windows")
    explain_parser.add_argument("--checkpoint", default=None, help="default <out>/checkpoint.mck")
    explain_parser.add_argument("--channel", type=int, default=None, help="one channel instead of all")
    commands.add_parser("gradcheck", help="central difference gradient checks, write gradcheck.csv")
    return parser


def configure_logging(verbose=False):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    logging.captureWarnings(True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = RunConfig.from_args(args)
        os.makedirs(args.out, exist_ok=True)
        kwargs = {"config": config, "out_dir": args.out}
        if args.command in ("eval", "explain"):
            kwargs["checkpoint"] = args.checkpoint
        if args.command == "explain":
            kwargs["channel"] = args.channel
        return elapsed_time(COMMANDS[args.command], msg=f"{args.command} done in seconds:", **kwargs)
    except (TrailerCFError, OSError, KeyError, ValueError) as error:
        logger.error("%s: %s", type(error).__name__, error)
        return 1


if __name__ == "__main__":
    sys.exit(main())

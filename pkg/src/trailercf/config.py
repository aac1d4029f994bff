"""
Flat ``key = value`` run configuration.

Values come from the defaults below, then from an optional configuration file, then from
command line flags, the last source winning. Lists are comma separated.

Example file::

    # desk scale run
    n_users = 500
    filter_width = 6
    sweep_filter_widths = 1, 2, 4, 8
"""

import os

from trailercf.errors import ConfigError


def _parse_bool(text):
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list_of(kind):
    def parse(text):
        if isinstance(text, (list, tuple)):
            return [kind(v) for v in text]
        return [kind(v.strip()) for v in str(text).split(",") if v.strip()]

    parse.__name__ = f"list[{kind.__name__}]"
    return parse


parse_switchDict = {bool: _parse_bool, int: int, float: float, str: str}

# key, default, type, help
RUN_KEYS = [
    # paths, empty means <out>/<default name>
    ("manifest", "", str, "manifest CSV (movie_id,release_ts,feature_path); default <out>/manifest.csv"),
    ("attendance", "", str, "attendance CSV (user_id,movie_id,timestamp); default <out>/attendance.csv"),
    ("split_path", "", str, "split CSV to reuse instead of recomputing the split"),
    ("demographics", "", str, "optional user demographics CSV (user_id,f0,f1,...)"),
    ("seed", 0, int, "master seed"),
    # synthetic world
    ("n_prototypes", 8, int, "synthetic object prototypes"),
    ("n_genre_pairs", 2, int, "synthetic order-only genre pairs"),
    ("template_len", 6, int, "synthetic template length, in frames"),
    ("n_movies", 200, int, "synthetic movies"),
    ("n_users", 2000, int, "synthetic users"),
    ("noise_sigma", 0.3, float, "synthetic frame noise"),
    ("p_hi", 0.8, float, "attendance probability for a preferred genre"),
    ("p_lo", 0.1, float, "attendance probability for the other genre"),
    # encoder
    ("feature_dim", 32, int, "per frame feature dimension"),
    ("max_frames", 40, int, "trailer length after truncation or padding"),
    ("conv_out_channels", 32, int, "filters per convolution layer"),
    ("filter_width", 8, int, "first convolution filter width, in frames"),
    ("stride", 2, int, "first convolution stride"),
    ("residual_filter_width", 1, int, "second convolution width, 0 for none"),
    ("residual_enabled", True, bool, "skip connection around a 1-frame second convolution"),
    ("mlp_layer_widths", [], _list_of(int), "MLP widths after pooling, empty for identity"),
    # training
    ("encoder_kind", "conv", str, "conv or avgpool"),
    ("batch_size", 64, int, "pairs per SGD step, half positive"),
    ("learning_rate", 0.05, float, "SGD learning rate"),
    ("max_epochs", 20, int, "epoch budget"),
    ("patience", 3, int, "epochs without validation improvement before stopping"),
    ("steps_per_epoch", 100, int, "SGD steps per epoch"),
    ("validation_pairs", 2000, int, "validation sample size (1:9), multiple of 10"),
    ("max_history", 32, int, "most recent attended movies kept per user"),
    ("window_days", 365, int, "frequency/recency window"),
    # split and evaluation
    ("n_cold", 50, int, "newest movies held out as cold-start"),
    ("train_ratio", 0.8, float, "share of in-matrix pairs for training"),
    ("validation_ratio", 0.1, float, "share of in-matrix pairs for validation"),
    ("test_ratio", 0.1, float, "share of in-matrix pairs for testing"),
    ("eval_pairs", 5000, int, "pairs per evaluated pool (1:9), multiple of 10"),
    # sweep
    ("sweep_filter_widths", [1, 2, 4, 8], _list_of(int), "filter widths of the ablation sweep"),
    ("sweep_residual", ["none", "1"], _list_of(str), "second layer options of the sweep, 'none' or widths"),
    ("sweep_seeds", [0, 1, 2], _list_of(int), "training seeds of the sweep"),
    ("workers", 1, int, "threads for feature loading and sweep runs"),
    # explain and gradcheck
    ("max_hits", 20, int, "hits kept per channel"),
    ("gradcheck_instances", 20, int, "random instances per gradient check"),
    ("gradcheck_tolerance", 1e-4, float, "maximum relative error of a passing gradient check"),
]

RUN_DEFAULTS = {key: default for key, default, _, _ in RUN_KEYS}
RUN_TYPES = {key: kind for key, _, kind, _ in RUN_KEYS}
PATH_KEYS = ("manifest", "attendance", "split_path", "demographics")


def parse_value(key, value):
    if key not in RUN_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = RUN_TYPES[key]
    try:
        return parse_switchDict.get(kind, kind)(value)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"bad value for {key}: {value!r} ({error})")


class RunConfig:
    """
    The flat run configuration, read like a dict or through attributes.

    ``EncoderConfig(**run_config.as_dict())`` and ``TrainConfig(**run_config.as_dict())``
    pick the keys they know.
    """

    def __init__(self, **overrides):
        self.values = {key: (list(v) if isinstance(v, list) else v) for key, v in RUN_DEFAULTS.items()}
        self.update(overrides)

    def update(self, mapping):
        for key, value in mapping.items():
            self.values[key] = parse_value(key, value)
        return self

    @classmethod
    def from_file(cls, path):
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        if not os.path.exists(path):
            raise ConfigError(f"configuration file not found: {path}")
        values = {}
        with open(path, encoding="utf-8") as f:
            for number, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}, line {number}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                try:
                    values[key] = parse_value(key, value)
                except ConfigError as error:
                    raise ConfigError(f"{path}, line {number}: {error}")
        return cls(**values)

    @staticmethod
    def add_arguments(parser):
        """One ``--key-name`` flag per key; unset flags leave the value untouched."""
        group = parser.add_argument_group("configuration keys")
        for key, default, kind, help in RUN_KEYS:
            if key == "seed":
                continue
            shown = ",".join(str(v) for v in default) if isinstance(default, list) else default
            group.add_argument(
                "--" + key.replace("_", "-"),
                dest=key,
                default=None,
                metavar=getattr(kind, "__name__", "value").upper(),
                help=f"{help} (default: {shown!r})",
            )

    @classmethod
    def from_args(cls, args):
        config = cls.from_file(args.config) if getattr(args, "config", None) else cls()
        flags = {key: getattr(args, key) for key in RUN_DEFAULTS if getattr(args, key, None) is not None}
        return config.update(flags)

    def path(self, key, out_dir, default_name=None):
        """Value of path ``key``, or ``out_dir/default_name`` when unset."""
        value = self.values[key]
        if value:
            return value
        return os.path.join(out_dir, default_name) if default_name else ""

    def check_paths(self, paths):
        """Raise :class:`ConfigError` naming the first path of ``paths`` that does not exist."""
        for path in paths:
            if path and not os.path.exists(path):
                raise ConfigError(f"missing input file: {path}")

    def as_dict(self):
        return dict(self.values)

    def __getattr__(self, key):
        values = self.__dict__.get("values", {})
        if key in values:
            return values[key]
        raise AttributeError(key)

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def __repr__(self):
        return f"RunConfig({self.values})"

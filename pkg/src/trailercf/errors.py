"""Exception hierarchy shared by every trailercf module."""


class TrailerCFError(Exception):
    """Base class of all errors raised by trailercf."""


class ShapeError(TrailerCFError, ValueError):
    pass


class FeatureFileError(TrailerCFError, ValueError):
    """A ``.tfv`` feature file could not be decoded."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{message}: {self.path}")


class BadMagicError(FeatureFileError):
    pass


class TruncatedPayloadError(FeatureFileError):
    pass


class NonFiniteError(FeatureFileError):
    pass


class EmptySequenceError(FeatureFileError):
    pass


class RecordFormatError(TrailerCFError, ValueError):
    """A malformed row in one of the CSV inputs. ``line`` is 1-based, header included."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = int(line)
        super().__init__(f"{self.path}, line {self.line}: {message}")


class CheckpointError(TrailerCFError, ValueError):
    pass


class SamplingError(TrailerCFError, ValueError):
    pass


class TrainingDiverged(TrailerCFError, RuntimeError):
    def __init__(self, step):
        self.step = int(step)
        super().__init__(f"diverged at step {self.step}")


class ConfigError(TrailerCFError, ValueError):
    pass

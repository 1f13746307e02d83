"""Exception hierarchy shared across the toolkit."""


class SerForgeError(Exception):
    """Base class for all toolkit errors."""

    category = "error"


class DecodeError(SerForgeError):
    """Malformed or unsupported audio container."""

    category = "decode"


class UnsupportedFormatError(DecodeError):
    """Recognized container but unsupported codec."""

    category = "unsupported-format"


class ConfigError(SerForgeError):
    """Invalid configuration value or combination."""

    category = "config"


class ShapeError(SerForgeError):
    """Tensor or matrix shape mismatch."""

    category = "shape"


class DegenerateInputError(SerForgeError):
    """Input outside an operation's meaningful domain (e.g. silent signal + finite SNR)."""

    category = "degenerate-input"


class FramingError(SerForgeError):
    """Signal too short for the requested analysis framing."""

    category = "framing"


class ManifestError(SerForgeError):
    """Unparseable dataset file name or corrupt manifest."""

    category = "manifest"


class SplitError(SerForgeError):
    """Impossible dataset split request."""

    category = "split"


class LabelError(SerForgeError):
    """Class label out of range."""

    category = "label"


class TrainingError(SerForgeError):
    """Inconsistent trainer state (missing gradients, NaN loss...)."""

    category = "training"


class CheckpointError(SerForgeError):
    """Unreadable, truncated, or incompatible checkpoint file."""

    category = "checkpoint"


class EvalError(SerForgeError):
    """Invalid evaluation request (e.g. empty sample set)."""

    category = "eval"

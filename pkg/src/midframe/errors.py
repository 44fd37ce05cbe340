"""Exception hierarchy. The CLI maps these onto its exit codes."""


class MidframeError(Exception):
    pass


class DimensionError(MidframeError, ValueError):
    """Array shapes disagree or are too small for the requested operation."""


class DomainError(MidframeError, ValueError):
    """A scalar argument lies outside its admissible range (e.g. t not in [0, 1])."""


class ConfigError(MidframeError, ValueError):
    pass


class FormatError(MidframeError, ValueError):
    """A file on disk does not match the expected binary or image format."""


class NumericError(MidframeError, ArithmeticError):
    """Non-finite values appeared during a computation."""

"""Exception types shared across the package.

ConfigError and ParseError map to CLI exit code 2 (bad usage, bad config,
bad input data); everything else is an internal failure (exit code 1).
"""

from __future__ import annotations


class IcppmError(Exception):
    """Base class for all package errors."""


class ConfigError(IcppmError):
    """Invalid configuration, flag value, or argument combination."""


class ParseError(IcppmError):
    """Input log could not be parsed.

    ``line`` is set when the underlying XML parser reports a position.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class RecordError(ParseError):
    """A single trace or row is malformed (missing activity, bad timestamp)."""


class DegenerateModelError(IcppmError):
    """Training labels contain a single class; no decision boundary exists."""


class ConvergenceError(IcppmError):
    """Optimizer exceeded its iteration budget without satisfying tolerances."""


class TrainingError(IcppmError):
    """Loss diverged (NaN/inf) during training.

    ``epoch`` points at the first epoch where divergence was observed.
    """

    def __init__(self, message: str, epoch: int | None = None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch

"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: bad content or bad arguments exit 1,
I/O and adapter protocol failures exit 2.
"""

from __future__ import annotations


class CfgkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(CfgkitError):
    """Input violates a documented invariant (dangling edge, bad schema, ...)."""


class ParseError(ValidationError):
    """A document could not be parsed; the message names the offending path."""


class ArgumentError(CfgkitError):
    """An operation was called with out-of-range or inconsistent arguments."""


class EncodingError(CfgkitError):
    """An instruction record cannot be encoded into the fixed bit layout."""


class TrainingError(CfgkitError):
    """Training diverged; carries the epoch at which the loss became non-finite."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class ModelQueryError(CfgkitError):
    """A classifier query failed; carries the graph variant that triggered it."""

    def __init__(self, message: str, variant: str | None = None):
        super().__init__(message)
        self.variant = variant


class AdapterError(CfgkitError):
    """Failure while talking to an external adapter process."""


class SpawnError(AdapterError):
    """The adapter child process could not be started."""


class ProtocolError(AdapterError):
    """The adapter violated the wire protocol (bad id, bad payload, garbage)."""


class AdapterTimeout(AdapterError):
    """The adapter did not answer within the allowed time."""

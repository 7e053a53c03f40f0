"""Exception taxonomy shared across the toolkit.

The CLI maps these onto distinct exit codes so scripts can branch on the
failure class: validation errors (bad manifests, bad flags, contract
violations) exit 2, data errors (unreadable or malformed referenced files)
exit 3, and metrics that are undefined under the active policy exit 4.
"""
from __future__ import annotations


class GatesegError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(GatesegError):
    """Input contract violation (manifest, config, or argument level).

    ``code`` is a stable machine-readable tag such as ``duplicate-query-id``;
    the message carries the human-readable context (offending query_id,
    field name, ...).
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class DataError(GatesegError):
    """Referenced data could not be read or does not match the manifest."""


class FormatError(DataError):
    """A serialized payload (RLE, feature tensor, head file) violates its schema."""


class MetricUndefinedError(GatesegError):
    """A requested metric has an empty denominator under the active policy.

    Raised instead of coercing the value to 0 or 1; report emitters render
    the affected cells as ``n/a``.
    """


class TrainingError(GatesegError):
    """Existence-head training diverged (non-finite loss)."""

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch

"""Shared exception types.

All package errors derive from :class:`ClsVerifyError` so callers can catch
one base class at the CLI boundary and map it to an exit code.
"""

from __future__ import annotations

__all__ = [
    "ClsVerifyError",
    "ParseError",
    "ShapeError",
    "UnsupportedLayer",
    "LabelMismatch",
    "DomainError",
    "InsufficientBatches",
]


class ClsVerifyError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ClsVerifyError):
    """A model or dataset file is malformed."""


class ShapeError(ClsVerifyError):
    """Tensor shapes do not chain or do not match a declared input shape."""


class UnsupportedLayer(ClsVerifyError):
    """A layer kind or activation outside the supported set."""


class LabelMismatch(ClsVerifyError):
    """A segment check was requested between images with different label sets."""


class DomainError(ClsVerifyError):
    """A numeric argument is outside its documented domain."""


class InsufficientBatches(ClsVerifyError):
    """Batch statistics need at least two complete batches."""

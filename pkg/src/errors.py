"""
Exception types raised by the irregular convolution library.

Each error also derives from the closest builtin so callers can catch
either the library type or the builtin one.
"""

from typing import Optional


class ICNNError(Exception):
    """Base class for all library errors."""


class ShapeError(ICNNError, ValueError):
    """Tensor or parameter shapes do not fit together."""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class ArgumentError(ICNNError, ValueError):
    """An argument is outside its documented range."""


class SizeError(ICNNError, ValueError):
    """Requested extents exceed the addressable size."""


class StateError(ICNNError, RuntimeError):
    """Operation called in the wrong state (e.g. backward before forward)."""


class FormatError(ICNNError, ValueError):
    """A tensor, model or snapshot file is malformed."""


class ConfigError(ICNNError, ValueError):
    """Training configuration is invalid."""


class NumericError(ICNNError, ArithmeticError):
    """A computation produced a non-finite value."""

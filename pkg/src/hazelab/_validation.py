"""Validation errors and shared shape/value checks."""

from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np


class HazelabError(ValueError):
    """Base error for every hazelab failure that a caller can act on."""

    def __init__(self, message: str, suggestion: Optional[str] = None):
        self.suggestion = suggestion

        full_message = message
        if suggestion:
            full_message += f"\n\nSuggestion: {suggestion}"

        super().__init__(full_message)


class ShapeError(HazelabError):
    """Raised when tensor shapes are incompatible with an operation."""


class ConfigError(HazelabError):
    """Raised when a configuration value violates its invariant."""


class ManifestError(HazelabError):
    """Raised when a manifest file is malformed."""

    def __init__(self, message: str, line: Optional[int] = None, suggestion: Optional[str] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, suggestion=suggestion)


class NonFiniteError(HazelabError):
    """Raised when a loss term or gradient is NaN or infinite."""

    def __init__(self, term: str, value: object = None):
        self.term = term
        message = f"non-finite value in '{term}'"
        if value is not None:
            message += f": {value}"
        super().__init__(message)


class CheckpointError(HazelabError):
    """Raised when a checkpoint cannot be read or does not match its config."""


class ImageIOError(HazelabError):
    """Raised when an image file cannot be read or written."""

    def __init__(self, message: str, path: Union[str, Path]):
        self.path = Path(path)
        super().__init__(f"{message}: {self.path}")


Shape = Tuple[int, ...]


def check_same_shape(a: Sequence[int], b: Sequence[int], op: str) -> None:
    """Raise ShapeError naming both shapes unless they are identical."""
    if tuple(a) != tuple(b):
        raise ShapeError(f"{op}: shape mismatch {tuple(a)} vs {tuple(b)}")


def check_finite(value: Union[float, np.ndarray], name: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(name, value if np.ndim(value) == 0 else None)


def check_even_spatial(shape: Sequence[int], op: str) -> None:
    h, w = shape[-2], shape[-1]
    if h % 2 or w % 2:
        raise ShapeError(
            f"{op}: spatial dims must be even, got {h}x{w}",
            suggestion="Pad or crop the input to even height and width first",
        )


def check_odd_patch(patch: int) -> None:
    if patch < 1 or patch % 2 == 0:
        raise ShapeError(f"patch size must be a positive odd number, got {patch}")

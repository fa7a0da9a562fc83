"""Tests for the error types and shared checks."""

import numpy as np
import pytest

from hazelab._validation import (
    CheckpointError,
    ConfigError,
    HazelabError,
    ImageIOError,
    ManifestError,
    NonFiniteError,
    ShapeError,
    check_even_spatial,
    check_finite,
    check_odd_patch,
    check_same_shape,
)


class TestErrors:
    """Test error formatting."""

    def test_every_error_is_a_value_error(self):
        for cls in (ShapeError, ConfigError, CheckpointError):
            assert issubclass(cls, HazelabError)
            assert issubclass(cls, ValueError)

    def test_suggestion_is_appended(self):
        error = ConfigError("bad crop", suggestion="Use a multiple of 8")
        assert str(error) == "bad crop\n\nSuggestion: Use a multiple of 8"
        assert error.suggestion == "Use a multiple of 8"

    def test_no_suggestion(self):
        assert str(ShapeError("oops")) == "oops"

    def test_manifest_error_line_prefix(self):
        error = ManifestError("duplicate id 'a'", line=4)
        assert str(error) == "line 4: duplicate id 'a'"
        assert error.line == 4

    def test_non_finite_names_term(self):
        error = NonFiniteError("tv", float("inf"))
        assert error.term == "tv"
        assert str(error) == "non-finite value in 'tv': inf"

    def test_image_error_names_path(self, temp_dir):
        error = ImageIOError("image not found", temp_dir / "x.png")
        assert str(error) == f"image not found: {temp_dir / 'x.png'}"


class TestChecks:
    def test_same_shape(self):
        check_same_shape((1, 3, 4, 4), [1, 3, 4, 4], "add")
        with pytest.raises(ShapeError, match=r"add: shape mismatch \(1, 3, 4, 4\) vs \(1, 3, 4, 5\)"):
            check_same_shape((1, 3, 4, 4), (1, 3, 4, 5), "add")

    def test_finite(self):
        check_finite(1.0, "x")
        check_finite(np.zeros(3), "x")
        with pytest.raises(NonFiniteError, match="'grad'"):
            check_finite(np.array([0.0, np.nan]), "grad")

    def test_even_spatial(self):
        check_even_spatial((1, 3, 4, 6), "dwt2")
        with pytest.raises(ShapeError, match="dwt2: spatial dims must be even, got 5x6") as excinfo:
            check_even_spatial((1, 3, 5, 6), "dwt2")
        assert "Suggestion:" in str(excinfo.value)

    @pytest.mark.parametrize("patch", [0, -3, 2, 4])
    def test_odd_patch_rejects(self, patch):
        with pytest.raises(ShapeError):
            check_odd_patch(patch)

    def test_odd_patch_accepts(self):
        for patch in (1, 3, 15):
            check_odd_patch(patch)

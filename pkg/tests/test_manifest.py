"""Tests for manifest parsing and writing."""

from pathlib import Path

import numpy as np
import pytest

from hazelab._validation import ManifestError
from hazelab.file_ops import save_image
from hazelab.manifest import load_manifest, write_manifest


@pytest.fixture
def images(temp_dir):
    """Three hazy/clear pairs on disk."""
    for i in range(3):
        save_image(np.full((3, 4, 4), 0.1 * i), temp_dir / "hazy" / f"{i}.png")
        save_image(np.full((3, 4, 4), 0.2 * i), temp_dir / "clear" / f"{i}.png")
    return temp_dir


def _write(path: Path, *rows: str) -> Path:
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


class TestLoadManifest:
    """Test parsing and validation."""

    def test_entries_keep_file_order(self, images):
        path = _write(images / "m.tsv", "c\thazy/2.png\tclear/2.png", "a\thazy/0.png\tclear/0.png", "b\thazy/1.png\tclear/1.png")
        manifest = load_manifest(path)
        assert manifest.ids == ["c", "a", "b"]
        assert manifest.kind == "labeled"
        assert len(manifest) == 3

    def test_relative_paths_resolve_against_manifest(self, images):
        path = _write(images / "m.tsv", "a\thazy/0.png\tclear/0.png")
        entry = load_manifest(path).entries[0]
        assert entry.hazy == images / "hazy" / "0.png"
        assert entry.clear == images / "clear" / "0.png"

    def test_comments_and_blank_lines(self, images):
        path = _write(images / "m.tsv", "# a comment", "", "a\thazy/0.png")
        manifest = load_manifest(path)
        assert manifest.kind == "unlabeled"
        assert manifest.entries[0].clear is None

    def test_empty_manifest(self, temp_dir):
        with pytest.raises(ManifestError, match="empty manifest"):
            load_manifest(_write(temp_dir / "m.tsv", "# kind: labeled"))

    def test_missing_manifest(self, temp_dir):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(temp_dir / "absent.tsv")

    def test_duplicate_id_names_line(self, images):
        path = _write(images / "m.tsv", "a\thazy/0.png", "b\thazy/1.png", "a\thazy/2.png")
        with pytest.raises(ManifestError, match="line 3") as excinfo:
            load_manifest(path)
        assert "duplicate id 'a'" in str(excinfo.value)

    def test_missing_file_names_line(self, images):
        path = _write(images / "m.tsv", "a\thazy/0.png", "b\thazy/9.png")
        with pytest.raises(ManifestError, match="line 2: hazy file not found"):
            load_manifest(path)

    def test_missing_files_allowed_without_check(self, temp_dir):
        path = _write(temp_dir / "m.tsv", "a\tnowhere.png")
        assert load_manifest(path, check_paths=False).ids == ["a"]

    def test_bad_field_count(self, images):
        path = _write(images / "m.tsv", "just-an-id")
        with pytest.raises(ManifestError, match="line 1") as excinfo:
            load_manifest(path)
        assert "Suggestion:" in str(excinfo.value)

    def test_labeled_entry_without_clear(self, images):
        path = _write(images / "m.tsv", "# kind: labeled", "a\thazy/0.png\tclear/0.png", "b\thazy/1.png")
        with pytest.raises(ManifestError, match="line 3: labeled entry 'b' has no clear path"):
            load_manifest(path)

    def test_requested_kind(self, images):
        path = _write(images / "m.tsv", "a\thazy/0.png\tclear/0.png")
        assert load_manifest(path, kind="unlabeled").kind == "unlabeled"

    def test_kind_conflict(self, images):
        path = _write(images / "m.tsv", "# kind: unlabeled", "a\thazy/0.png\tclear/0.png")
        with pytest.raises(ManifestError, match="declares kind 'unlabeled'"):
            load_manifest(path, kind="labeled")

    def test_unknown_kind(self, images):
        path = _write(images / "m.tsv", "# kind: partial", "a\thazy/0.png")
        with pytest.raises(ManifestError, match="unknown manifest kind"):
            load_manifest(path)


class TestWriteManifest:
    def test_written_manifest_loads_back(self, images):
        original = load_manifest(_write(images / "m.tsv", "a\thazy/0.png\tclear/0.png", "b\thazy/1.png\tclear/1.png"))
        written = write_manifest(original, images / "copy" / "m.tsv")
        text = written.read_text(encoding="utf-8")
        assert text.startswith("# kind: labeled\n")
        assert "../hazy/0.png" in text
        reloaded = load_manifest(written)
        assert reloaded.ids == original.ids
        assert [e.hazy.resolve() for e in reloaded.entries] == [e.hazy.resolve() for e in original.entries]

"""Tests for checkpoint encoding and files."""

import struct

import numpy as np
import pytest

from hazelab._validation import CheckpointError
from hazelab.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from hazelab.models import DiscriminatorConfig
from hazelab.network import DiscriminatorParams, GeneratorParams, build_discriminator, build_generator


@pytest.fixture
def generator(gen_config):
    params = build_generator(gen_config(), seed=3, zero_init_output=False)
    return params


class TestEncoding:
    """Test the in-memory format."""

    def test_round_trip_restores_every_tensor(self, generator):
        restored, metadata = decode_checkpoint(encode_checkpoint(generator, {"step": 7}))
        assert isinstance(restored, GeneratorParams)
        assert restored.config == generator.config
        assert restored.names == generator.names
        assert np.array_equal(restored.flat(), generator.flat())
        assert metadata == {"step": 7}

    def test_identical_params_identical_bytes(self, gen_config):
        a = build_generator(gen_config(), seed=3)
        b = build_generator(gen_config(), seed=3)
        assert encode_checkpoint(a, {"x": 1, "a": 2}) == encode_checkpoint(b, {"a": 2, "x": 1})

    def test_starts_with_magic(self, generator):
        assert encode_checkpoint(generator)[:4] == MAGIC

    def test_discriminator_kind(self):
        disc = build_discriminator(DiscriminatorConfig(base_channels=2, blocks=2, input_size=8), 1)
        restored, _ = decode_checkpoint(encode_checkpoint(disc))
        assert isinstance(restored, DiscriminatorParams)
        assert np.array_equal(restored.flat(), disc.flat())

    def test_restored_tensors_are_trainable(self, generator):
        restored, _ = decode_checkpoint(encode_checkpoint(generator))
        assert all(t.requires_grad for t in restored.tensors)


class TestCorruption:
    """Test that damaged blobs are rejected with a CheckpointError."""

    def test_bad_magic(self, generator):
        blob = b"XXXX" + encode_checkpoint(generator)[4:]
        with pytest.raises(CheckpointError, match="not a hazelab checkpoint"):
            decode_checkpoint(blob)

    def test_unknown_version(self, generator):
        blob = bytearray(encode_checkpoint(generator))
        struct.pack_into("<H", blob, 4, 99)
        with pytest.raises(CheckpointError, match="version 99"):
            decode_checkpoint(bytes(blob))

    def test_too_short(self):
        with pytest.raises(CheckpointError, match="truncated"):
            decode_checkpoint(b"HZ")

    def test_truncated_data(self, generator):
        blob = encode_checkpoint(generator)
        with pytest.raises(CheckpointError, match="truncated"):
            decode_checkpoint(blob[:-3])

    def test_missing_values(self, generator):
        blob = encode_checkpoint(generator)
        with pytest.raises(CheckpointError, match="parameter values"):
            decode_checkpoint(blob[:-8])


class TestFiles:
    """Test saving and loading on disk."""

    def test_save_and_load(self, temp_dir, generator):
        path = save_checkpoint(generator, temp_dir / "runs" / "generator.ckpt", {"epoch": 2})
        params, metadata = load_checkpoint(path, expected_config=generator.config)
        assert np.array_equal(params.flat(), generator.flat())
        assert metadata["epoch"] == 2

    def test_no_temporary_files_left(self, temp_dir, generator):
        save_checkpoint(generator, temp_dir / "generator.ckpt")
        save_checkpoint(generator, temp_dir / "generator.ckpt")
        assert [p.name for p in temp_dir.iterdir()] == ["generator.ckpt"]

    def test_overwrite_replaces_content(self, temp_dir, gen_config):
        path = temp_dir / "generator.ckpt"
        save_checkpoint(build_generator(gen_config(), seed=1), path)
        second = build_generator(gen_config(), seed=2)
        save_checkpoint(second, path)
        assert path.read_bytes() == encode_checkpoint(second)

    def test_missing_file(self, temp_dir):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(temp_dir / "absent.ckpt")

    def test_config_mismatch(self, temp_dir, generator, gen_config):
        path = save_checkpoint(generator, temp_dir / "generator.ckpt")
        with pytest.raises(CheckpointError, match="does not match") as excinfo:
            load_checkpoint(path, expected_config=gen_config(base_channels=8))
        assert "Suggestion:" in str(excinfo.value)

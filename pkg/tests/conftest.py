"""Pytest configuration and fixtures for hazelab tests"""

import os
import shutil
import sys
import tempfile
from pathlib import Path

# single-threaded BLAS keeps floating point results bit-reproducible
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from hazelab.datasets import ImageSet
from hazelab.haze import HazeScene, make_toy_scene, procedural_depth, synthesize_haze
from hazelab.models import GeneratorConfig, TrainConfig
from hazelab.tensor import Tape, Tensor4, backward

FD_STEP = 1e-5
FD_TOLERANCE = 1e-4


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files"""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240611))


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def numeric_gradient(fn, tensor: Tensor4, step: float = FD_STEP) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``tensor.data``."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = fn().item()
        flat[i] = original - step
        minus = fn().item()
        flat[i] = original
        out[i] = (plus - minus) / (2 * step)
    return grad


def analytic_gradient(fn, tensor: Tensor4) -> np.ndarray:
    tensor.requires_grad = True
    tensor.zero_grad()
    with Tape() as tape:
        loss = fn()
    backward(loss, tape, [tensor])
    return tensor.grad


@pytest.fixture
def gradcheck():
    """Assert that autodiff and central differences agree for ``fn`` at ``tensor``."""

    def check(fn, *tensors: Tensor4, tolerance: float = FD_TOLERANCE) -> None:
        for tensor in tensors:
            analytic = analytic_gradient(fn, tensor).copy()
            numeric = numeric_gradient(fn, tensor)
            error = relative_error(analytic, numeric)
            assert error < tolerance, f"gradient mismatch for {tensor.shape}: relative error {error:.2e}"

    return check


def tiny_generator_config(**overrides) -> GeneratorConfig:
    values = {"base_channels": 4}
    values.update(overrides)
    return GeneratorConfig(**values)


def tiny_train_config(**overrides) -> TrainConfig:
    values = {
        "epochs": 2,
        "crop": 16,
        "batch_labeled": 2,
        "batch_unlabeled": 2,
        "generator": tiny_generator_config(),
        "discriminator": {"base_channels": 4, "blocks": 2, "input_size": 16},
        "log_every": 1000,
        "checkpoint_every": 1000,
    }
    values.update(overrides)
    return TrainConfig(**values)


def toy_pairs(count: int, size: int, seed: int, beta: float = 1.2, airlight: float = 0.9):
    """(ids, hazy, clear) lists of (3, size, size) arrays from procedural scenes."""
    rng = np.random.Generator(np.random.PCG64(seed))
    depth = procedural_depth("ramp", size, size, 1.0)[None, None]
    ids, hazy, clear = [], [], []
    for i in range(count):
        scene = HazeScene(clear=make_toy_scene(size, rng), depth=depth, beta=beta, airlight=airlight)
        ids.append(f"img{i:03d}")
        hazy.append(synthesize_haze(scene).data[0])
        clear.append(scene.clear.data[0])
    return ids, hazy, clear


@pytest.fixture
def toy_sets():
    """Builder for small labeled/unlabeled ImageSets."""

    def build(labeled: int = 4, unlabeled: int = 2, size: int = 16, seed: int = 7):
        ids, hazy, clear = toy_pairs(labeled + unlabeled, size, seed)
        labeled_set = ImageSet(ids[:labeled], hazy[:labeled], clear[:labeled])
        unlabeled_set = ImageSet(ids[labeled:], hazy[labeled:])
        return labeled_set, unlabeled_set

    return build


@pytest.fixture
def gen_config():
    return tiny_generator_config


@pytest.fixture
def train_config():
    return tiny_train_config

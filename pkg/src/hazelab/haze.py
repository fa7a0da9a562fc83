"""
Haze physics: the atmospheric scattering model, its analytic inverse, the dark
channel, and the dark-channel-prior baseline dehazer.

Images in this module live in [0, 1]. Conversion to the network's [-1, 1]
domain happens in the trainer.
"""

from typing import Literal, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ._validation import ConfigError, ShapeError, check_odd_patch, check_same_shape
from .functional import channel_min, minpool_patch
from .tensor import Tensor4

Airlight = Union[float, Sequence[float], np.ndarray]
DepthKind = Literal["ramp", "radial", "constant"]
DEPTH_KINDS = ("ramp", "radial", "constant")


def _as_tensor(value: object) -> object:
    if isinstance(value, np.ndarray):
        return Tensor4(value)
    return value


class TransmissionMap(BaseModel):
    """Single-channel transmission t(x) with values in (0, 1]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: Tensor4

    @field_validator("t", mode="before")
    @classmethod
    def _wrap(cls, value: object) -> object:
        return _as_tensor(value)

    @field_validator("t")
    @classmethod
    def _check_range(cls, t: Tensor4) -> Tensor4:
        if t.shape[1] != 1:
            raise ValueError(f"transmission map must have one channel, got shape {t.shape}")
        if not (np.all(t.data > 0) and np.all(t.data <= 1)):
            raise ValueError("transmission values must lie in (0, 1]")
        return t

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.t.shape


class HazeScene(BaseModel):
    """Clear image, depth, scattering coefficient and airlight of one hazy capture."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    clear: Tensor4
    depth: Tensor4
    beta: float
    airlight: Tuple[float, ...]

    @field_validator("clear", "depth", mode="before")
    @classmethod
    def _wrap(cls, value: object) -> object:
        return _as_tensor(value)

    @field_validator("airlight", mode="before")
    @classmethod
    def _broadcast_airlight(cls, value: Airlight) -> Tuple[float, ...]:
        return tuple(float(v) for v in np.atleast_1d(np.asarray(value, dtype=float)))

    @model_validator(mode="after")
    def _check_scene(self) -> "HazeScene":
        clear, depth = self.clear.data, self.depth.data
        if clear.min() < 0 or clear.max() > 1:
            raise ValueError("clear image values must lie in [0, 1]")
        if depth.min() < 0:
            raise ValueError("depth must be nonnegative")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        n, c, h, w = self.clear.shape
        if self.depth.shape != (n, 1, h, w):
            raise ValueError(f"depth shape {self.depth.shape} does not match clear image {self.clear.shape}")
        if len(self.airlight) == 1:
            object.__setattr__(self, "airlight", self.airlight * c)
        if len(self.airlight) != c:
            raise ValueError(f"airlight has {len(self.airlight)} components for a {c}-channel image")
        if not all(0 < a <= 1 for a in self.airlight):
            raise ValueError(f"airlight components must lie in (0, 1], got {self.airlight}")
        return self

    def transmission(self) -> TransmissionMap:
        return transmission_from_depth(self.depth, self.beta)


def _airlight_array(airlight: Airlight, n: int, c: int) -> np.ndarray:
    """Broadcast a scalar, per-channel or per-image airlight to (n, c, 1, 1)."""
    a = np.asarray(airlight, dtype=float)
    if a.ndim == 0:
        a = np.full((n, c), float(a))
    elif a.ndim == 1:
        if a.shape[0] != c:
            raise ShapeError(f"airlight has {a.shape[0]} components for {c} channels")
        a = np.broadcast_to(a, (n, c))
    elif a.shape != (n, c):
        raise ShapeError(f"airlight shape {a.shape} does not match (n, c) = {(n, c)}")
    return a.reshape(n, c, 1, 1)


def transmission_from_depth(depth: Union[Tensor4, np.ndarray], beta: float) -> TransmissionMap:
    """t = exp(-beta * d), kept strictly positive even when the exponent underflows."""
    d = depth.data if isinstance(depth, Tensor4) else np.asarray(depth, dtype=float)
    if not beta > 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    if d.min() < 0:
        raise ConfigError("depth must be nonnegative")
    t = np.maximum(np.exp(-beta * d), np.finfo(np.float64).tiny)
    return TransmissionMap(t=Tensor4(t))


def synthesize_haze(scene: HazeScene) -> Tensor4:
    """I = J t + A (1 - t), per channel."""
    n, c, _, _ = scene.clear.shape
    t = scene.transmission().t.data
    a = _airlight_array(scene.airlight, n, c)
    return Tensor4(scene.clear.data * t + a * (1.0 - t))


def invert_haze(hazy: Tensor4, transmission: TransmissionMap, airlight: Airlight, t_floor: float = 0.1) -> Tensor4:
    """Recover J from I given t and A, clamped to [0, 1]."""
    if not t_floor > 0:
        raise ConfigError(f"t_floor must be positive, got {t_floor}")
    n, c, h, w = hazy.shape
    check_same_shape(transmission.shape, (n, 1, h, w), "invert_haze")
    a = _airlight_array(airlight, n, c)
    t = np.maximum(transmission.t.data, t_floor)
    clipped = int((transmission.t.data < t_floor).sum())
    if clipped:
        logger.debug(f"invert_haze: {clipped} transmission values raised to t_floor={t_floor}")
    # I + (I - A)(1/t - 1) == (I - A)/t + A, and leaves I untouched where t == 1
    restored = hazy.data + (hazy.data - a) * (1.0 / t - 1.0)
    return Tensor4(np.clip(restored, 0.0, 1.0))


def dark_channel(image: Tensor4, patch: int = 3) -> Tensor4:
    """Patch minimum of the channel minimum, shape (n, 1, h, w)."""
    check_odd_patch(patch)
    pooled, _ = minpool_patch(channel_min(image), patch)
    return pooled


def estimate_airlight(hazy: Tensor4, fraction: float = 0.001, patch: int = 15) -> np.ndarray:
    """Per-image airlight, shape (n, c).

    The brightest ``fraction`` of dark-channel pixels (at least one) are
    selected; ties keep raster order. A is the per-channel mean of the hazy
    image at those pixels.
    """
    if not 0 < fraction <= 1:
        raise ConfigError(f"airlight fraction must lie in (0, 1], got {fraction}: the selection would be empty")
    n, c, h, w = hazy.shape
    dark = dark_channel(hazy, patch).data.reshape(n, h * w)
    count = max(1, int(np.floor(fraction * h * w)))
    pixels = hazy.data.reshape(n, c, h * w)
    airlight = np.empty((n, c))
    for i in range(n):
        top = np.argsort(-dark[i], kind="stable")[:count]
        airlight[i] = pixels[i][:, top].mean(axis=1)
    return airlight


def dcp_dehaze(hazy: Tensor4, omega: float = 0.95, patch: int = 15, t_floor: float = 0.1, fraction: float = 0.001) -> Tensor4:
    """Dark-channel-prior dehazing of a [0, 1] image batch."""
    if not 0 <= omega <= 1:
        raise ConfigError(f"omega must lie in [0, 1], got {omega}")
    n, c, _, _ = hazy.shape
    airlight = estimate_airlight(hazy, fraction=fraction, patch=patch)
    normalized = Tensor4(hazy.data / np.maximum(airlight.reshape(n, c, 1, 1), 1e-6))
    t_hat = 1.0 - omega * dark_channel(normalized, patch).data
    logger.debug(f"dcp_dehaze: airlight={airlight.round(4).tolist()} mean t={t_hat.mean():.4f}")
    return invert_haze(hazy, TransmissionMap(t=np.clip(t_hat, np.finfo(np.float64).tiny, 1.0)), airlight, t_floor)


# ---------------------------------------------------------------------------
# Procedural fixtures
# ---------------------------------------------------------------------------


def procedural_depth(kind: DepthKind, height: int, width: int, scale: float = 1.0) -> np.ndarray:
    """(h, w) depth map: ``ramp`` grows toward the top row, ``radial`` from the center."""
    if kind not in DEPTH_KINDS:
        raise ConfigError(f"unknown depth kind {kind!r}", suggestion=f"Use one of {', '.join(DEPTH_KINDS)}")
    rows, cols = np.mgrid[0:height, 0:width].astype(float)
    if kind == "constant":
        return np.full((height, width), float(scale))
    if kind == "ramp":
        return scale * (1.0 - rows / max(height - 1, 1))
    radius = np.hypot(rows - (height - 1) / 2, cols - (width - 1) / 2)
    return scale * radius / max(radius.max(), 1e-12)


def make_toy_scene(size: int, rng: np.random.Generator) -> Tensor4:
    """A (1, 3, size, size) clear image of colour gradients, blobs and a block.

    Each pixel has one channel pulled close to zero, so toy scenes obey the
    dark channel prior the way outdoor photographs do.
    """
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    image = np.stack([rng.uniform(0.2, 0.8) + rng.uniform(-0.4, 0.4) * xx + rng.uniform(-0.4, 0.4) * yy for _ in range(3)])
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(0, 1, 2)
        radius = rng.uniform(0.08, 0.3)
        weight = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * radius**2))
        image += weight * rng.uniform(-0.5, 0.5, 3)[:, None, None]
    top, left = rng.integers(0, size // 2, 2)
    height, width = rng.integers(size // 8 + 1, size // 2 + 1, 2)
    image[:, top : top + height, left : left + width] = rng.uniform(0, 1, 3)[:, None, None]

    image = image - 0.9 * image.min(axis=0, keepdims=True)
    image = np.clip(image, 0.0, None)
    image = image / max(image.max(), 1e-12)
    return Tensor4(image[None])

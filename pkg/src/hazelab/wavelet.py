"""
One-level 2D Haar wavelet transform and its inverse.

The analysis filters are the unnormalized +/-1 Haar kernels, so the LL
coefficient of a 2x2 block is the plain sum of its four pixels. The inverse
applies the transposed filters and divides by 4. ``orthonormal=True`` scales
the filters by 1/2 instead, which makes both directions energy preserving.
"""

from typing import Iterator, Tuple

import numpy as np

from ._validation import ShapeError, check_even_spatial
from .functional import conv2d, conv_transpose2d
from .tensor import Tensor4, concat_channels, reshape, scale, slice_channels

BAND_NAMES = ("ll", "lh", "hl", "hh")


class HaarFilters:
    """The four 2x2 Haar analysis kernels."""

    f_ll = np.array([[1.0, 1.0], [1.0, 1.0]])
    f_lh = np.array([[-1.0, -1.0], [1.0, 1.0]])
    f_hl = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    f_hh = np.array([[1.0, -1.0], [-1.0, 1.0]])

    @classmethod
    def stack(cls) -> np.ndarray:
        """(4, 1, 2, 2) kernel in LL, LH, HL, HH order."""
        return np.stack([cls.f_ll, cls.f_lh, cls.f_hl, cls.f_hh])[:, None]

    @classmethod
    def kernel(cls, orthonormal: bool = False) -> Tensor4:
        k = cls.stack()
        return Tensor4(k * 0.5 if orthonormal else k)


class WaveletBands:
    """Four half-resolution sub-bands of one decomposition level."""

    __slots__ = BAND_NAMES

    def __init__(self, ll: Tensor4, lh: Tensor4, hl: Tensor4, hh: Tensor4):
        shapes = {ll.shape, lh.shape, hl.shape, hh.shape}
        if len(shapes) != 1:
            raise ShapeError(f"wavelet bands must share one shape, got {sorted(shapes)}")
        self.ll = ll
        self.lh = lh
        self.hl = hl
        self.hh = hh

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.ll.shape

    def __iter__(self) -> Iterator[Tensor4]:
        return iter((self.ll, self.lh, self.hl, self.hh))

    def items(self) -> Iterator[Tuple[str, Tensor4]]:
        return zip(BAND_NAMES, self)

    def energy(self) -> float:
        return float(sum((band.data**2).sum() for band in self))

    def pack(self) -> Tensor4:
        """Concatenate along channels: C -> 4C, band-major."""
        return concat_channels(list(self))

    @classmethod
    def unpack(cls, packed: Tensor4) -> "WaveletBands":
        channels = packed.shape[1]
        if channels % 4:
            raise ShapeError(f"packed wavelet tensor needs a multiple of 4 channels, got {channels}")
        c = channels // 4
        return cls(*(slice_channels(packed, i * c, (i + 1) * c) for i in range(4)))


def dwt2(x: Tensor4, orthonormal: bool = False) -> WaveletBands:
    """Haar analysis applied to every channel independently."""
    check_even_spatial(x.shape, "dwt2")
    n, c, h, w = x.shape
    per_channel = reshape(x, (n * c, 1, h, w))
    coeffs = conv2d(per_channel, HaarFilters.kernel(orthonormal), stride=2)
    half = (n, c, h // 2, w // 2)
    return WaveletBands(*(reshape(slice_channels(coeffs, i, i + 1), half) for i in range(4)))


def iwt2(bands: WaveletBands, orthonormal: bool = False) -> Tensor4:
    """Exact inverse of :func:`dwt2`."""
    n, c, h2, w2 = bands.shape
    stacked = concat_channels([reshape(band, (n * c, 1, h2, w2)) for band in bands])
    pixels = conv_transpose2d(stacked, HaarFilters.kernel(orthonormal), stride=2)
    if not orthonormal:
        pixels = scale(pixels, 0.25)
    return reshape(pixels, (n, c, 2 * h2, 2 * w2))


def rescale_for_display(band: np.ndarray) -> np.ndarray:
    """Linearly map a band to [0, 1]; a flat band maps to 0.5."""
    low, high = float(band.min()), float(band.max())
    if high - low <= 0:
        return np.full_like(band, 0.5)
    return (band - low) / (high - low)

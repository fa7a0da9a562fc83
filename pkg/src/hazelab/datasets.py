"""
In-memory image sets, crops and batch sampling for training and evaluation.

Images are stored as (3, h, w) arrays in [0, 1]; batches handed to the
networks are (n, 3, crop, crop) tensors in [-1, 1].
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ._validation import ShapeError
from .file_ops import load_image
from .models import Manifest
from .tensor import Tensor4


def to_network(images: np.ndarray) -> np.ndarray:
    """[0, 1] -> [-1, 1]"""
    return images * 2.0 - 1.0


def from_network(images: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 1]"""
    return (images + 1.0) * 0.5


class ImageSet:
    """Hazy images with optional clear counterparts, addressed by id."""

    def __init__(self, ids: Sequence[str], hazy: Sequence[np.ndarray], clear: Optional[Sequence[np.ndarray]] = None):
        if len(ids) != len(hazy) or (clear is not None and len(clear) != len(hazy)):
            raise ShapeError("ids, hazy and clear images must have the same length")
        if len(set(ids)) != len(ids):
            raise ShapeError("image ids must be unique")
        if clear is not None:
            for i, (h, c) in enumerate(zip(hazy, clear)):
                if h.shape != c.shape:
                    raise ShapeError(f"{ids[i]}: hazy {h.shape} and clear {c.shape} differ")
        self.ids = list(ids)
        self.hazy = [np.asarray(h, dtype=np.float64) for h in hazy]
        self.clear = None if clear is None else [np.asarray(c, dtype=np.float64) for c in clear]

    def __len__(self) -> int:
        return len(self.ids)

    def __repr__(self) -> str:
        return f"ImageSet({len(self)} images, labeled={self.is_labeled})"

    @property
    def is_labeled(self) -> bool:
        return self.clear is not None

    @classmethod
    def from_manifest(cls, manifest: Manifest) -> "ImageSet":
        hazy, clear = [], []
        for entry in manifest.entries:
            hazy.append(load_image(entry.hazy).data[0])
            if manifest.kind == "labeled":
                clear.append(load_image(entry.clear).data[0])  # type: ignore[arg-type]
        logger.info(f"Loaded {len(hazy)} {manifest.kind} images from {manifest.source or 'manifest'}")
        return cls(manifest.ids, hazy, clear if manifest.kind == "labeled" else None)

    def min_size(self) -> Tuple[int, int]:
        return min(h.shape[1] for h in self.hazy), min(h.shape[2] for h in self.hazy)


def _check_crop(image: np.ndarray, crop: int) -> None:
    if image.shape[1] < crop or image.shape[2] < crop:
        raise ShapeError(
            f"image {image.shape[1]}x{image.shape[2]} is smaller than the crop size {crop}",
            suggestion="Lower the crop size or use larger images",
        )


def random_crop(rng: np.random.Generator, crop: int, *images: np.ndarray) -> List[np.ndarray]:
    """The same random window cut from every image."""
    _check_crop(images[0], crop)
    _, h, w = images[0].shape
    top = int(rng.integers(0, h - crop + 1))
    left = int(rng.integers(0, w - crop + 1))
    return [image[:, top : top + crop, left : left + crop] for image in images]


def center_crop(crop: int, *images: np.ndarray) -> List[np.ndarray]:
    _check_crop(images[0], crop)
    _, h, w = images[0].shape
    top, left = (h - crop) // 2, (w - crop) // 2
    return [image[:, top : top + crop, left : left + crop] for image in images]


class BatchSampler:
    """Reshuffled passes over ``size`` indices, ``batch`` at a time, cycling forever.

    A pass ends with a short batch when ``size`` is not a multiple of
    ``batch``; batches never straddle two passes.
    """

    def __init__(self, size: int, batch: int, rng: np.random.Generator):
        if size < 1:
            raise ShapeError("cannot sample batches from an empty set")
        self.size = size
        self.batch = batch
        self.rng = rng
        self.passes = 0
        self._order: List[int] = []

    @property
    def batches_per_pass(self) -> int:
        return math.ceil(self.size / self.batch)

    def next_batch(self) -> List[int]:
        if not self._order:
            self._order = [int(i) for i in self.rng.permutation(self.size)]
            self.passes += 1
        batch, self._order = self._order[: self.batch], self._order[self.batch :]
        return batch


def labeled_batch(images: ImageSet, indices: Sequence[int], crop: int, rng: np.random.Generator) -> Tuple[Tensor4, Tensor4]:
    """(hazy, clear) tensors in [-1, 1], one random crop per sample."""
    hazy, clear = [], []
    for i in indices:
        h, c = random_crop(rng, crop, images.hazy[i], images.clear[i])  # type: ignore[index]
        hazy.append(h)
        clear.append(c)
    return Tensor4(to_network(np.stack(hazy))), Tensor4(to_network(np.stack(clear)))


def unlabeled_batch(images: ImageSet, indices: Sequence[int], crop: int, rng: np.random.Generator) -> Tensor4:
    return Tensor4(to_network(np.stack([random_crop(rng, crop, images.hazy[i])[0] for i in indices])))

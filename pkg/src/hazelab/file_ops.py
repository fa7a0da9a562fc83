# hazelab file_ops - Image reading, writing and directory listing

from pathlib import Path
from typing import List, Union

import numpy as np
from loguru import logger
from PIL import Image, UnidentifiedImageError

from ._validation import ImageIOError, ShapeError
from .tensor import Tensor4

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


def quantize(values: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and map to bytes, rounding halves up."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_image(path: Union[str, Path]) -> Tensor4:
    """Read an 8-bit image as a (1, 3, h, w) tensor in [0, 1]; grayscale is replicated."""
    path = Path(path)
    if not path.is_file():
        raise ImageIOError("image not found", path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ("L", "1", "P", "LA"):
                img = img.convert("L")
            elif mode != "RGB":
                img = img.convert("RGB")
            pixels = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise ImageIOError(f"cannot decode image ({e.__class__.__name__})", path) from e

    if pixels.ndim == 2:
        pixels = np.repeat(pixels[:, :, None], 3, axis=2)
    return Tensor4(pixels.transpose(2, 0, 1)[None] / 255.0)


def save_image(image: Union[Tensor4, np.ndarray], path: Union[str, Path]) -> Path:
    """Write one (1, 3, h, w) or (3, h, w) image losslessly; the suffix picks PNG or PPM."""
    path = Path(path)
    data = image.data if isinstance(image, Tensor4) else np.asarray(image, dtype=float)
    if data.ndim == 4:
        if data.shape[0] != 1:
            raise ShapeError(f"save_image writes one image at a time, got batch of {data.shape[0]}")
        data = data[0]
    if data.ndim != 3 or data.shape[0] not in (1, 3):
        raise ShapeError(f"save_image needs (1|3, h, w) pixels, got {data.shape}")

    pixels = quantize(data).transpose(1, 2, 0)
    img = Image.fromarray(np.ascontiguousarray(pixels[:, :, 0] if pixels.shape[2] == 1 else pixels))
    fmt = "PPM" if path.suffix.lower() in (".ppm", ".pgm", ".pnm") else "PNG"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        img.save(path, format=fmt)
    except OSError as e:
        raise ImageIOError(f"cannot write image ({e.strerror or e})", path) from e
    logger.debug(f"Wrote {path}")
    return path


def list_images(directory: Union[str, Path]) -> List[Path]:
    """Supported image files in a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageIOError("not a directory", directory)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def load_depth(path: Union[str, Path]) -> np.ndarray:
    """Depth map stored as an image: first channel, scaled to [0, 1]."""
    return load_image(path).data[0, 0]

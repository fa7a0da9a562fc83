"""
Full-reference image quality: PSNR and SSIM on [0, 1] images, plus
dataset-level evaluation keyed by manifest id.
"""

from typing import Callable, Mapping, Optional, Union

import numpy as np
from loguru import logger
from scipy.ndimage import correlate1d

from ._validation import ShapeError, check_same_shape
from .config import settings
from .datasets import ImageSet, center_crop
from .models import ImageScore, MetricsReport
from .tensor import Tensor4

ImageLike = Union[Tensor4, np.ndarray]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _array(image: ImageLike) -> np.ndarray:
    return image.data if isinstance(image, Tensor4) else np.asarray(image, dtype=np.float64)


def _planes(image: np.ndarray) -> np.ndarray:
    """Every (h, w) plane of an image or batch, stacked on axis 0."""
    if image.ndim < 2:
        raise ShapeError(f"image needs at least two dimensions, got shape {image.shape}")
    return image.reshape(-1, image.shape[-2], image.shape[-1])


def psnr(a: ImageLike, b: ImageLike, cap: Optional[float] = None) -> float:
    """10 log10(1 / MSE) in dB with peak 1; identical images give ``cap``."""
    cap = settings.psnr_cap if cap is None else cap
    x, y = _array(a), _array(b)
    check_same_shape(x.shape, y.shape, "psnr")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return cap
    return min(cap, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1D Gaussian taps; the 2D window is their outer product."""
    offsets = np.arange(size) - (size - 1) / 2
    taps = np.exp(-(offsets**2) / (2 * sigma**2))
    return taps / taps.sum()


def ssim(
    a: ImageLike,
    b: ImageLike,
    window: int = SSIM_WINDOW,
    k1: float = SSIM_K1,
    k2: float = SSIM_K2,
    sigma: float = SSIM_SIGMA,
) -> float:
    """Mean local SSIM over every full window position, averaged over channels."""
    x, y = _array(a), _array(b)
    check_same_shape(x.shape, y.shape, "ssim")
    x, y = _planes(x), _planes(y)
    _, h, w = x.shape
    if window > min(h, w) or window % 2 == 0:
        raise ShapeError(f"ssim window {window} must be odd and fit in a {h}x{w} image")

    taps = gaussian_window(window, sigma)
    r = window // 2

    def local_mean(z: np.ndarray) -> np.ndarray:
        z = correlate1d(z, taps, axis=1, mode="constant")
        z = correlate1d(z, taps, axis=2, mode="constant")
        return z[:, r : h - r, r : w - r]

    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    mu_x, mu_y = local_mean(x), local_mean(y)
    var_x = local_mean(x * x) - mu_x * mu_x
    var_y = local_mean(y * y) - mu_y * mu_y
    cov = local_mean(x * y) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    per_plane = (numerator / denominator).reshape(x.shape[0], -1).mean(axis=1)
    return float(per_plane.mean())


def evaluate_dataset(
    outputs: Mapping[str, ImageLike],
    truths: Mapping[str, ImageLike],
    method: str = "method",
    dataset: str = "dataset",
) -> MetricsReport:
    """Per-image PSNR/SSIM for outputs paired with ground truth by id, sorted by id."""
    unmatched = sorted(set(outputs) ^ set(truths))
    if unmatched:
        raise ShapeError(f"unmatched image ids: {', '.join(unmatched)}")
    scores = []
    for image_id in sorted(outputs):
        score = ImageScore(
            id=image_id,
            psnr=psnr(outputs[image_id], truths[image_id]),
            ssim=float(np.clip(ssim(outputs[image_id], truths[image_id]), -1.0, 1.0)),
        )
        scores.append(score)
    report = MetricsReport(method=method, dataset=dataset, images=scores)
    logger.info(f"{method} on {dataset}: PSNR {report.mean_psnr:.2f} dB, SSIM {report.mean_ssim:.4f} over {len(scores)} images")
    return report


def evaluate_images(
    dehaze: Callable[[np.ndarray], np.ndarray],
    images: ImageSet,
    method: str,
    dataset: str,
    crop: Optional[int] = None,
) -> MetricsReport:
    """Run ``dehaze`` on every hazy image of a labeled set and score it.

    With ``crop`` both images are center cropped first.
    """
    if not images.is_labeled:
        raise ShapeError(f"{dataset}: evaluation needs clear images")
    outputs, truths = {}, {}
    for image_id, hazy, clear in zip(images.ids, images.hazy, images.clear):  # type: ignore[arg-type]
        if crop is not None:
            hazy, clear = center_crop(crop, hazy, clear)
        outputs[image_id] = dehaze(hazy)
        truths[image_id] = clear
    return evaluate_dataset(outputs, truths, method=method, dataset=dataset)

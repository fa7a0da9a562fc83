"""Tests for PSNR, SSIM and dataset evaluation."""

import numpy as np
import pytest

from hazelab._validation import ShapeError
from hazelab.datasets import ImageSet
from hazelab.metrics import evaluate_dataset, evaluate_images, gaussian_window, psnr, ssim
from hazelab.tensor import Tensor4


def ssim_by_loops(x, y, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Straightforward per-window SSIM for (c, h, w) arrays."""
    taps = gaussian_window(window, sigma)
    weights = np.outer(taps, taps)
    c1, c2 = k1**2, k2**2
    r = window // 2
    planes = []
    for px, py in zip(x, y):
        values = []
        for i in range(r, px.shape[0] - r):
            for j in range(r, px.shape[1] - r):
                wx = px[i - r : i + r + 1, j - r : j + r + 1]
                wy = py[i - r : i + r + 1, j - r : j + r + 1]
                mx, my = (weights * wx).sum(), (weights * wy).sum()
                vx = (weights * wx * wx).sum() - mx * mx
                vy = (weights * wy * wy).sum() - my * my
                cov = (weights * wx * wy).sum() - mx * my
                values.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        planes.append(np.mean(values))
    return float(np.mean(planes))


class TestPsnr:
    """Test peak signal-to-noise ratio."""

    def test_identical_images_hit_cap(self, rng):
        x = rng.uniform(size=(3, 8, 8))
        assert psnr(x, x) == 99.0
        assert psnr(x, x, cap=50.0) == 50.0

    def test_known_mse(self):
        assert psnr(np.zeros((3, 4, 4)), np.full((3, 4, 4), 0.1)) == pytest.approx(20.0, abs=1e-9)
        assert psnr(np.zeros((3, 4, 4)), np.ones((3, 4, 4))) == pytest.approx(0.0, abs=1e-12)

    def test_accepts_tensors(self):
        a = Tensor4(np.zeros((1, 3, 4, 4)))
        b = Tensor4(np.full((1, 3, 4, 4), 0.1))
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_decreases_with_noise(self, rng):
        clean = rng.uniform(size=(3, 16, 16))
        noise = rng.normal(size=clean.shape)
        values = [psnr(clean, clean + s * noise) for s in (0.01, 0.05, 0.2)]
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


class TestSsim:
    """Test structural similarity."""

    def test_self_similarity_is_one(self, rng):
        x = rng.uniform(size=(3, 16, 16))
        assert ssim(x, x) == 1.0

    def test_symmetric(self, rng):
        x, y = rng.uniform(size=(2, 3, 16, 16))
        assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-15)

    def test_black_against_white(self):
        c1 = 0.01**2
        value = ssim(np.zeros((3, 12, 12)), np.ones((3, 12, 12)))
        assert value == pytest.approx(c1 / (1 + c1), rel=1e-6)

    def test_matches_windowed_reference(self, rng):
        for _ in range(20):
            x = rng.uniform(size=(3, 16, 16))
            y = np.clip(x + rng.normal(scale=0.1, size=x.shape), 0, 1)
            assert abs(ssim(x, y) - ssim_by_loops(x, y)) < 1e-10

    def test_channel_order_does_not_matter(self, rng):
        x, y = rng.uniform(size=(2, 3, 16, 16))
        order = [2, 0, 1]
        assert ssim(x[order], y[order]) == pytest.approx(ssim(x, y), abs=1e-12)

    def test_noise_lowers_similarity(self, rng):
        x = rng.uniform(size=(3, 16, 16))
        noisy = x + rng.normal(scale=0.2, size=x.shape)
        assert ssim(x, noisy) < 1.0

    def test_window_must_fit(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))

    def test_window_taps_sum_to_one(self):
        assert gaussian_window().sum() == pytest.approx(1.0, abs=1e-15)


class TestEvaluation:
    """Test dataset-level scoring."""

    def test_means_and_sorted_ids(self, rng):
        truths = {name: rng.uniform(size=(3, 12, 12)) for name in ("b", "a", "c")}
        outputs = {name: np.clip(t + 0.05, 0, 1) for name, t in truths.items()}
        report = evaluate_dataset(outputs, truths, method="m", dataset="d")

        assert [s.id for s in report.images] == ["a", "b", "c"]
        assert report.mean_psnr == pytest.approx(np.mean([s.psnr for s in report.images]))
        assert report.mean_ssim == pytest.approx(np.mean([s.ssim for s in report.images]))
        assert report.row()["method"] == "m"

    def test_unmatched_ids(self, rng):
        image = rng.uniform(size=(3, 12, 12))
        with pytest.raises(ShapeError, match="unmatched image ids: b"):
            evaluate_dataset({"a": image, "b": image}, {"a": image})

    def test_empty_report_means_are_nan(self):
        report = evaluate_dataset({}, {})
        assert np.isnan(report.mean_psnr)

    def test_identity_method(self, rng):
        clear = [rng.uniform(size=(3, 16, 16)) for _ in range(2)]
        images = ImageSet(["x", "y"], clear, clear)
        report = evaluate_images(lambda hazy: hazy, images, method="identity", dataset="toy")
        assert all(s.psnr == 99.0 and s.ssim == 1.0 for s in report.images)

    def test_center_crop_applied(self, rng):
        hazy = [rng.uniform(size=(3, 20, 24))]
        seen = []
        evaluate_images(lambda h: seen.append(h.shape) or h, ImageSet(["x"], hazy, hazy), "m", "d", crop=12)
        assert seen == [(3, 12, 12)]

    def test_unlabeled_set_rejected(self, rng):
        with pytest.raises(ShapeError):
            evaluate_images(lambda h: h, ImageSet(["x"], [rng.uniform(size=(3, 12, 12))]), "m", "d")

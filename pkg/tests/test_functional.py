"""Tests for convolution, normalization and min-pool operators."""

import numpy as np
import pytest

from hazelab._validation import ShapeError
from hazelab.functional import channel_min, conv2d, conv_transpose2d, instance_norm, minpool_patch, relu
from hazelab.tensor import Tape, Tensor4, backward, total_sum
from hazelab.wavelet import HaarFilters


class TestConv2d:
    """Test the forward contract of conv2d."""

    def test_sum_kernel_on_ones(self):
        """All-ones input with a 2x2 sum kernel at stride 2 gives 4 everywhere."""
        out = conv2d(Tensor4(np.ones((1, 1, 4, 4))), Tensor4(np.ones((1, 1, 2, 2))), stride=2)
        assert out.shape == (1, 1, 2, 2)
        assert np.all(out.data == 4)

    def test_haar_ll_block(self):
        """The LL filter sums a 2x2 block."""
        x = Tensor4(np.array([[1.0, 2.0], [3.0, 4.0]])[None, None])
        out = conv2d(x, Tensor4(HaarFilters.f_ll[None, None]), stride=2)
        assert out.data.item() == 10

    def test_output_shape_with_padding(self, rng):
        x = Tensor4(rng.normal(size=(2, 3, 7, 5)))
        k = Tensor4(rng.normal(size=(4, 3, 3, 3)))
        assert conv2d(x, k, stride=2, padding=1).shape == (2, 4, 4, 3)

    def test_channel_mismatch_names_shapes(self):
        x = Tensor4(np.zeros((1, 2, 4, 4)))
        k = Tensor4(np.zeros((1, 3, 3, 3)))
        with pytest.raises(ShapeError, match=r"\(1, 3, 3, 3\).*\(1, 2, 4, 4\)"):
            conv2d(x, k)

    def test_empty_output_rejected(self):
        with pytest.raises(ShapeError, match="empty output"):
            conv2d(Tensor4(np.zeros((1, 1, 2, 2))), Tensor4(np.zeros((1, 1, 3, 3))))

    def test_linearity(self, rng):
        """conv2d(ax + by, k) = a conv2d(x, k) + b conv2d(y, k)."""
        x = rng.normal(size=(1, 2, 6, 6))
        y = rng.normal(size=(1, 2, 6, 6))
        k = Tensor4(rng.normal(size=(3, 2, 3, 3)))
        combined = conv2d(Tensor4(2.0 * x - 0.5 * y), k, padding=1).data
        separate = 2.0 * conv2d(Tensor4(x), k, padding=1).data - 0.5 * conv2d(Tensor4(y), k, padding=1).data
        np.testing.assert_allclose(combined, separate, atol=1e-12)

    def test_gradients(self, rng, gradcheck):
        """Input, kernel and bias gradients match central differences."""
        for _ in range(5):
            x = Tensor4(rng.normal(size=(1, 2, 6, 6)))
            k = Tensor4(rng.normal(size=(3, 2, 3, 3)))
            b = Tensor4(rng.normal(size=(1, 3, 1, 1)))
            gradcheck(lambda: total_sum(conv2d(x, k, b)), x, k, b)

    def test_gradients_strided_padded(self, rng, gradcheck):
        for _ in range(5):
            x = Tensor4(rng.normal(size=(2, 2, 5, 5)))
            k = Tensor4(rng.normal(size=(2, 2, 3, 3)))
            weights = Tensor4(rng.normal(size=(2, 2, 3, 3)))
            gradcheck(lambda: total_sum(conv2d(x, k, stride=2, padding=1) * weights), x, k)


class TestConvTranspose2d:
    """Test the transposed convolution."""

    def test_single_pixel_broadcast(self):
        out = conv_transpose2d(Tensor4(np.full((1, 1, 1, 1), 2.5)), Tensor4(np.ones((1, 1, 2, 2))), stride=2)
        assert out.shape == (1, 1, 2, 2)
        assert np.all(out.data == 2.5)

    def test_output_size(self, rng):
        x = Tensor4(rng.normal(size=(1, 4, 3, 5)))
        k = Tensor4(rng.normal(size=(4, 2, 2, 2)))
        assert conv_transpose2d(x, k, stride=2).shape == (1, 2, 6, 10)

    def test_adjoint_of_conv2d(self, rng):
        """<conv2d(x, k), y> = <x, conv_transpose2d(y, k)>."""
        for stride in (1, 2):
            x = rng.normal(size=(2, 3, 8, 8))
            k = rng.normal(size=(4, 3, 2, 2))
            forward = conv2d(Tensor4(x), Tensor4(k), stride=stride)
            y = rng.normal(size=forward.shape)
            lhs = float((forward.data * y).sum())
            rhs = float((x * conv_transpose2d(Tensor4(y), Tensor4(k), stride=stride).data).sum())
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)

    def test_gradients(self, rng, gradcheck):
        for _ in range(5):
            x = Tensor4(rng.normal(size=(1, 3, 3, 3)))
            k = Tensor4(rng.normal(size=(3, 2, 2, 2)))
            b = Tensor4(rng.normal(size=(1, 2, 1, 1)))
            weights = Tensor4(rng.normal(size=(1, 2, 6, 6)))
            gradcheck(lambda: total_sum(conv_transpose2d(x, k, b, stride=2) * weights), x, k, b)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv_transpose2d(Tensor4(np.zeros((1, 2, 2, 2))), Tensor4(np.zeros((3, 1, 2, 2))))


class TestRelu:
    """Test the rectifier."""

    def test_values(self):
        out = relu(Tensor4(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3)))
        assert out.data.ravel().tolist() == [0.0, 0.0, 2.0]

    def test_negative_input_has_zero_gradient(self):
        x = Tensor4(-np.ones((1, 1, 2, 2)), requires_grad=True)
        with Tape() as tape:
            loss = total_sum(relu(x))
        backward(loss, tape)
        assert np.all(relu(x).data == 0)
        assert np.all(x.grad == 0)

    def test_gradient_away_from_kink(self, rng, gradcheck):
        for _ in range(5):
            values = rng.uniform(1e-3, 1.0, size=(1, 2, 3, 3)) * rng.choice([-1, 1], size=(1, 2, 3, 3))
            x = Tensor4(values)
            gradcheck(lambda: total_sum(relu(x) * x), x)


class TestInstanceNorm:
    """Test per-slice normalization."""

    def test_constant_slice_goes_to_zero(self):
        out = instance_norm(Tensor4(np.full((1, 2, 3, 3), 4.0)))
        assert np.all(out.data == 0)

    def test_two_pixel_slice(self):
        """[1, 3] normalizes to [-1, 1] as eps vanishes."""
        out = instance_norm(Tensor4(np.array([1.0, 3.0]).reshape(1, 1, 1, 2)), eps=1e-12)
        np.testing.assert_allclose(out.data.ravel(), [-1.0, 1.0], atol=1e-9)

    def test_zero_mean_unit_variance(self, rng):
        out = instance_norm(Tensor4(rng.normal(3.0, 5.0, size=(2, 3, 8, 8)))).data
        np.testing.assert_allclose(out.mean(axis=(2, 3)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=(2, 3)), 1.0, atol=1e-5)

    def test_single_pixel_rejected(self):
        with pytest.raises(ShapeError):
            instance_norm(Tensor4(np.zeros((1, 1, 1, 1))))

    def test_gradient(self, rng, gradcheck):
        for _ in range(5):
            x = Tensor4(rng.normal(size=(2, 2, 3, 3)))
            weights = Tensor4(rng.normal(size=(2, 2, 3, 3)))
            gradcheck(lambda: total_sum(instance_norm(x) * weights), x)


class TestMinpool:
    """Test the patch minimum and its lookup table."""

    def test_constant_image_points_at_center(self):
        """Ties on a constant image resolve to each pixel itself."""
        out, table = minpool_patch(Tensor4(np.full((1, 1, 4, 5), 0.3)), 3)
        assert np.all(out.data == 0.3)
        rows, cols = np.indices((4, 5))
        assert np.array_equal(table.rows[0, 0], rows)
        assert np.array_equal(table.cols[0, 0], cols)

    def test_single_center_minimum(self):
        """A 3x3 image with its minimum in the middle routes all gradient there."""
        image = np.full((1, 1, 3, 3), 0.5)
        image[0, 0, 1, 1] = 0.0
        x = Tensor4(image, requires_grad=True)
        with Tape() as tape:
            out, table = minpool_patch(x, 3)
            loss = total_sum(out)
        backward(loss, tape)
        assert np.all(out.data == 0)
        assert np.all(table.coordinates() == [1, 1])
        expected = np.zeros((3, 3))
        expected[1, 1] = 9
        assert np.array_equal(x.grad[0, 0], expected)

    def test_first_minimum_in_row_major_order(self):
        """Off-center ties go to the first minimum scanning the patch row by row."""
        image = np.ones((1, 1, 3, 3))
        image[0, 0, 2, 0] = 0.0
        image[0, 0, 0, 2] = 0.0
        _, table = minpool_patch(Tensor4(image), 3)
        assert table.coordinates()[1, 1].tolist() == [0, 2]

    def test_replicate_border(self):
        """Border pixels see replicated edges, not zeros."""
        image = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
        out, _ = minpool_patch(Tensor4(image), 3)
        assert out.data[0, 0, 0, 0] == 1.0
        assert out.data[0, 0, 2, 2] == 5.0

    def test_even_patch_rejected(self):
        with pytest.raises(ShapeError):
            minpool_patch(Tensor4(np.zeros((1, 1, 4, 4))), 2)

    def test_gradient_on_distinct_values(self, rng, gradcheck):
        for _ in range(5):
            x = Tensor4(rng.permutation(36).reshape(1, 1, 6, 6) / 36.0 + rng.uniform(0, 1e-3, size=(1, 1, 6, 6)))
            weights = Tensor4(rng.normal(size=(1, 1, 6, 6)))
            gradcheck(lambda: total_sum(minpool_patch(x, 3)[0] * weights), x)

    def test_gradient_only_at_argmin(self, rng):
        """Backward writes nowhere except recorded argmin coordinates."""
        x = Tensor4(rng.uniform(size=(1, 1, 7, 7)), requires_grad=True)
        with Tape() as tape:
            out, table = minpool_patch(x, 3)
            loss = total_sum(out)
        backward(loss, tape)
        winners = np.zeros((7, 7), dtype=bool)
        winners[table.rows[0, 0], table.cols[0, 0]] = True
        assert np.all(x.grad[0, 0][~winners] == 0)
        assert x.grad.sum() == pytest.approx(49.0)


class TestChannelMin:
    def test_values_and_gradient(self, rng, gradcheck):
        x = Tensor4(rng.uniform(size=(2, 3, 4, 4)))
        assert np.array_equal(channel_min(x).data[:, 0], x.data.min(axis=1))
        weights = Tensor4(rng.normal(size=(2, 1, 4, 4)))
        gradcheck(lambda: total_sum(channel_min(x) * weights), x)

    def test_gradient_on_random_inputs(self, rng, gradcheck):
        for _ in range(5):
            x = Tensor4(rng.permutation(48).reshape(1, 3, 4, 4) / 48.0)
            weights = Tensor4(rng.normal(size=(1, 1, 4, 4)))
            gradcheck(lambda: total_sum(channel_min(x) * weights), x)

"""
Training losses for the dehazing generator.

Every function returns a (1, 1, 1, 1) tensor so it can be fed to
``backward``. Image arguments are in the network's [-1, 1] domain.
"""

from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from ._validation import check_finite, check_same_shape
from .functional import conv2d, relu
from .haze import dark_channel
from .models import LossReport, LossWeights
from .network import DiscriminatorParams, discriminator_forward
from .tensor import (
    Tensor4,
    absolute,
    add,
    add_scalar,
    clamp,
    div,
    log,
    mul,
    norm_per_sample,
    scale,
    slice_spatial,
    sub,
    total_mean,
    total_sum,
)

PROB_CLAMP = 1e-7
RATIO_EPS = 1e-7

ContrastiveMode = Literal["difference", "ratio"]


class FeatureExtractor:
    """Fixed random conv stack standing in for a pretrained backbone.

    Each stage is conv 3x3 stride 2 pad 1 followed by ReLU. Kernels are drawn
    once from ``seed`` and frozen. The perceptual loss uses the last stage;
    the contrastive loss uses every stage weighted by ``stage_weights``.
    """

    def __init__(
        self,
        seed: int = 1234,
        widths: Sequence[int] = (8, 16, 32),
        input_channels: int = 3,
        stage_weights: Optional[Sequence[float]] = None,
    ):
        stage_weights = list(stage_weights) if stage_weights is not None else [1.0 / len(widths)] * len(widths)
        if len(stage_weights) != len(widths):
            raise ValueError("one stage weight per stage is required")
        if min(stage_weights) < 0 or not np.isclose(sum(stage_weights), 1.0):
            raise ValueError(f"stage weights must be nonnegative and sum to 1, got {stage_weights}")

        self.seed = seed
        self.widths = tuple(widths)
        self.stage_weights = tuple(float(w) for w in stage_weights)
        rng = np.random.Generator(np.random.PCG64(seed))
        self._stages: List[Tuple[Tensor4, Tensor4]] = []
        channels = input_channels
        for width in self.widths:
            bound = 1.0 / np.sqrt(channels * 9)
            kernel = Tensor4(rng.uniform(-bound, bound, size=(width, channels, 3, 3)))
            bias = Tensor4(rng.uniform(-bound, bound, size=(1, width, 1, 1)))
            kernel.data.flags.writeable = False
            bias.data.flags.writeable = False
            self._stages.append((kernel, bias))
            channels = width

    def __len__(self) -> int:
        return len(self._stages)

    def features(self, x: Tensor4) -> List[Tensor4]:
        """Output of every stage, shallow to deep."""
        outputs = []
        for kernel, bias in self._stages:
            x = relu(conv2d(x, kernel, bias, stride=2, padding=1))
            outputs.append(x)
        return outputs


def _distance(diff: Tensor4, squared: bool) -> Tensor4:
    """Batch mean of per-image L2 norms, or the MSE in squared mode."""
    if squared:
        return total_mean(mul(diff, diff))
    return total_mean(norm_per_sample(diff))


def _mean_l1(a: Tensor4, b: Tensor4) -> Tensor4:
    return total_mean(absolute(sub(a, b)))


def loss_msl(pred: Tensor4, target: Tensor4, squared: bool = False) -> Tensor4:
    check_same_shape(pred.shape, target.shape, "loss_msl")
    return _distance(sub(pred, target), squared)


def loss_perceptual(pred: Tensor4, target: Tensor4, fx: FeatureExtractor, squared: bool = False) -> Tensor4:
    check_same_shape(pred.shape, target.shape, "loss_perceptual")
    return _distance(sub(fx.features(pred)[-1], fx.features(target)[-1]), squared)


def _probabilities(d_params: DiscriminatorParams, images: Tensor4) -> Tensor4:
    return clamp(discriminator_forward(d_params, images), PROB_CLAMP, 1.0 - PROB_CLAMP)


def generator_adversarial(d_params: DiscriminatorParams, fake: Tensor4, non_saturating: bool = True) -> Tensor4:
    """-mean log D(fake), or mean log(1 - D(fake)) in saturating mode."""
    p_fake = _probabilities(d_params, fake)
    if non_saturating:
        return scale(total_mean(log(p_fake)), -1.0)
    return total_mean(log(1.0 - p_fake))


def discriminator_adversarial(d_params: DiscriminatorParams, real: Tensor4, fake: Tensor4) -> Tensor4:
    """-(mean log D(real) + mean log(1 - D(fake)))."""
    check_same_shape(real.shape, fake.shape, "loss_adversarial")
    p_real = _probabilities(d_params, real)
    p_fake = _probabilities(d_params, fake)
    return scale(add(total_mean(log(p_real)), total_mean(log(1.0 - p_fake))), -1.0)


def loss_adversarial(
    d_params: DiscriminatorParams, real: Tensor4, fake: Tensor4, non_saturating: bool = True
) -> Tuple[Tensor4, Tensor4]:
    """(discriminator loss, generator loss) for one real/fake batch."""
    return discriminator_adversarial(d_params, real, fake), generator_adversarial(d_params, fake, non_saturating)


def loss_tv(pred: Tensor4) -> Tensor4:
    """Batch mean of the L1 norms of horizontal and vertical forward differences."""
    n, _, h, w = pred.shape
    terms = []
    if w >= 2:
        terms.append(total_sum(absolute(sub(slice_spatial(pred, slice(None), slice(1, None)), slice_spatial(pred, slice(None), slice(None, -1))))))
    if h >= 2:
        terms.append(total_sum(absolute(sub(slice_spatial(pred, slice(1, None), slice(None)), slice_spatial(pred, slice(None, -1), slice(None))))))
    if not terms:
        return scale(total_sum(pred), 0.0)
    total = terms[0] if len(terms) == 1 else add(terms[0], terms[1])
    return scale(total, 1.0 / n)


def loss_dark_channel(pred: Tensor4, patch: int = 3) -> Tensor4:
    """Batch mean of the per-image L1 norm (sum over pixels) of the dark channel."""
    n = pred.shape[0]
    unit = scale(add_scalar(pred, 1.0), 0.5)
    return scale(total_sum(absolute(dark_channel(unit, patch))), 1.0 / n)


def loss_reconstruction_l1(restored: Tensor4, clear: Tensor4) -> Tensor4:
    check_same_shape(restored.shape, clear.shape, "loss_reconstruction_l1")
    return _mean_l1(clear, restored)


def loss_contrastive(
    hazy: Tensor4,
    clear: Tensor4,
    restored: Tensor4,
    fx: FeatureExtractor,
    mode: ContrastiveMode = "difference",
) -> Tensor4:
    """Pull the restored features toward the clear image and away from the hazy one.

    ``difference``: sum_i w_i [D(G_i(J), G_i(phi)) - D(G_i(I), G_i(phi))]
    ``ratio``:      sum_i w_i D(G_i(J), G_i(phi)) / (D(G_i(I), G_i(phi)) + eps)

    D is the mean absolute difference and G_i the extractor stages. The L1
    reconstruction term is separate, see :func:`loss_reconstruction_l1`.
    """
    check_same_shape(hazy.shape, clear.shape, "loss_contrastive")
    check_same_shape(restored.shape, clear.shape, "loss_contrastive")
    if mode not in ("difference", "ratio"):
        raise ValueError(f"unknown contrastive mode {mode!r}")

    total: Optional[Tensor4] = None
    for weight, f_hazy, f_clear, f_restored in zip(
        fx.stage_weights, fx.features(hazy), fx.features(clear), fx.features(restored)
    ):
        positive = _mean_l1(f_clear, f_restored)
        negative = _mean_l1(f_hazy, f_restored)
        if mode == "difference":
            term = sub(positive, negative)
        else:
            term = div(positive, add_scalar(negative, RATIO_EPS))
        term = scale(term, weight)
        total = term if total is None else add(total, term)
    return total  # type: ignore[return-value]


def term_weights(weights: LossWeights) -> Dict[str, float]:
    """Coefficient of every generator term in the total objective."""
    return {
        "msl": 1.0,
        "pl": weights.alpha,
        "tv": weights.tv_weight,
        "dc": weights.gamma,
        "adv_g": weights.delta,
        "cont": weights.epsilon,
    }


def combine(terms: Mapping[str, Tensor4], weights: LossWeights) -> Tensor4:
    """Weighted sum of the tensor terms that are present."""
    coefficients = term_weights(weights)
    total: Optional[Tensor4] = None
    for name, value in terms.items():
        if name not in coefficients:
            raise KeyError(f"unknown loss term {name!r}")
        weighted = scale(value, coefficients[name])
        total = weighted if total is None else add(total, weighted)
    if total is None:
        raise ValueError("no loss terms to combine")
    return total


def loss_total(components: Mapping[str, float], weights: Optional[LossWeights] = None, **fields: float) -> LossReport:
    """Validate component values and attach their weighted total.

    Missing generator terms count as zero. Extra report fields (step, epoch,
    lr, adv_d, l1, cr) pass through via ``components`` or keyword arguments.
    """
    weights = weights or LossWeights()
    values = {**components, **fields}
    for name, value in values.items():
        check_finite(float(value), name)
    report = LossReport(**values)
    total = report.weighted_total(weights)
    check_finite(total, "total")
    return report.model_copy(update={"total": total})

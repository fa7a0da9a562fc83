"""
Semi-supervised adversarial training of the dehazing generator.

Every step runs one supervised pass on labeled pairs and one unsupervised pass
on unlabeled hazy images through the same generator parameters. Their
gradients are summed into a single Adam update. Every ``d_update_period``
steps the discriminator takes one Adam step on labeled clear images (real)
against the supervised generator output (fake, detached).
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from ._validation import ConfigError, NonFiniteError, ShapeError, check_finite
from .checkpoint import save_checkpoint
from .datasets import BatchSampler, ImageSet, from_network, labeled_batch, to_network, unlabeled_batch
from .losses import (
    FeatureExtractor,
    combine,
    discriminator_adversarial,
    generator_adversarial,
    loss_contrastive,
    loss_dark_channel,
    loss_msl,
    loss_perceptual,
    loss_reconstruction_l1,
    loss_total,
    loss_tv,
)
from .models import LOG_COLUMNS, AdamSettings, LossReport, TrainConfig
from .network import (
    DiscriminatorParams,
    GeneratorParams,
    ParamStore,
    build_discriminator,
    build_generator,
    generator_forward,
    generator_inference,
)
from .tensor import Tape, Tensor4, add, backward, scale

GENERATOR_CHECKPOINT = "generator.ckpt"
DISCRIMINATOR_CHECKPOINT = "discriminator.ckpt"
LOG_FILE = "train_log.csv"


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """Constant until ``decay_start_epoch``, then linear down to ``lr_end`` at the last epoch."""
    if not 1 <= epoch <= config.epochs:
        raise ConfigError(f"epoch {epoch} outside 1..{config.epochs}")
    start = int(config.decay_start_epoch or 0)
    if epoch <= start:
        return config.lr_start
    return config.lr_start - (config.lr_start - config.lr_end) / config.decay_span * (epoch - start)


class OptimizerState:
    """Adam moments per parameter name plus the shared step counter."""

    def __init__(self) -> None:
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step = 0

    def __repr__(self) -> str:
        return f"OptimizerState(step={self.step}, params={len(self.m)})"


def adam_step(
    params: ParamStore,
    state: OptimizerState,
    lr: float,
    settings: AdamSettings,
    grads: Optional[Mapping[str, np.ndarray]] = None,
) -> None:
    """One Adam update with coupled L2 weight decay, in place.

    Gradients default to each tensor's ``.grad``; a missing gradient counts
    as zero.
    """
    state.step += 1
    t = state.step
    b1, b2 = settings.beta1, settings.beta2
    for name, param in params:
        grad = grads[name] if grads is not None else param.grad
        grad = np.zeros_like(param.data) if grad is None else grad
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"gradient of {name}")
        grad = grad + settings.weight_decay * param.data
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * grad if m is None else b1 * m + (1 - b1) * grad
        v = (1 - b2) * grad**2 if v is None else b2 * v + (1 - b2) * grad**2
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + settings.eps)


@dataclass
class StepResult:
    """Loss values of one branch and the generator output it produced."""

    terms: Dict[str, float]
    output: Tensor4


def supervised_step(
    gen: GeneratorParams,
    disc: DiscriminatorParams,
    fx: FeatureExtractor,
    hazy: Tensor4,
    clear: Tensor4,
    config: TrainConfig,
) -> StepResult:
    """Supervised losses on labeled pairs; gradients accumulate into ``gen`` only."""
    if hazy.shape[0] == 0:
        raise ConfigError("supervised batch is empty")
    with Tape() as tape:
        restored = generator_forward(gen, hazy)
        tensors = {
            "msl": loss_msl(restored, clear, squared=config.squared_l2),
            "pl": loss_perceptual(restored, clear, fx, squared=config.squared_l2),
            "adv_g": generator_adversarial(disc, restored, non_saturating=config.non_saturating),
        }
        extra = {}
        if config.enable_contrastive:
            l1 = loss_reconstruction_l1(restored, clear)
            cr = loss_contrastive(hazy, clear, restored, fx, mode=config.contrastive_mode)
            tensors["cont"] = add(l1, scale(cr, config.contrastive_balance))
            extra = {"l1": l1.item(), "cr": cr.item()}
        loss = combine(tensors, config.weights)
    for name, value in tensors.items():
        check_finite(value.item(), name)
    backward(loss, tape, gen.tensors())
    terms = {name: value.item() for name, value in tensors.items()}
    terms.update(extra)
    return StepResult(terms, restored.detach())


def unsupervised_step(gen: GeneratorParams, hazy: Tensor4, config: TrainConfig) -> StepResult:
    """Total-variation and dark-channel priors on unlabeled images, into the same ``gen``."""
    if hazy.shape[0] == 0:
        raise ConfigError("unsupervised batch is empty")
    with Tape() as tape:
        restored = generator_forward(gen, hazy)
        tensors = {"tv": loss_tv(restored), "dc": loss_dark_channel(restored, config.dark_channel_patch)}
        loss = combine(tensors, config.weights)
    for name, value in tensors.items():
        check_finite(value.item(), name)
    backward(loss, tape, gen.tensors())
    return StepResult({name: value.item() for name, value in tensors.items()}, restored.detach())


def discriminator_step(
    disc: DiscriminatorParams, state: OptimizerState, real: Tensor4, fake: Tensor4, lr: float, settings: AdamSettings
) -> float:
    """One discriminator update; the generator is untouched."""
    disc.zero_grad()
    with Tape() as tape:
        loss = discriminator_adversarial(disc, real, fake.detach())
    check_finite(loss.item(), "adv_d")
    backward(loss, tape, disc.tensors())
    adam_step(disc, state, lr, settings)
    return loss.item()


@dataclass
class TrainResult:
    generator: GeneratorParams
    discriminator: DiscriminatorParams
    reports: List[LossReport] = field(default_factory=list)
    discriminator_updates: int = 0
    checkpoint: Optional[Path] = None
    log_path: Optional[Path] = None

    @property
    def steps(self) -> int:
        return len(self.reports)

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.reports], columns=LOG_COLUMNS)


def _write_outputs(result: TrainResult, out_dir: Path, config: TrainConfig, step: int) -> None:
    metadata = {"step": step, "seed": config.seed}
    result.checkpoint = save_checkpoint(result.generator, out_dir / GENERATOR_CHECKPOINT, metadata)
    save_checkpoint(result.discriminator, out_dir / DISCRIMINATOR_CHECKPOINT, metadata)
    result.log_path = out_dir / LOG_FILE
    result.log_frame().to_csv(result.log_path, index=False)


def train(
    config: TrainConfig,
    labeled: ImageSet,
    unlabeled: ImageSet,
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """Run the full schedule; returns the trained networks and per-step reports."""
    if len(labeled) == 0 or len(unlabeled) == 0:
        raise ConfigError("training needs nonempty labeled and unlabeled sets")
    if not labeled.is_labeled:
        raise ConfigError("the labeled set has no clear images")
    for name, images in (("labeled", labeled), ("unlabeled", unlabeled)):
        height, width = images.min_size()
        if min(height, width) < config.crop:
            raise ShapeError(
                f"smallest {name} image is {height}x{width}, below the crop size {config.crop}",
                suggestion="Lower crop in the run config or use larger images",
            )

    gen = build_generator(config.generator, config.seed)
    disc = build_discriminator(config.discriminator, config.seed + 1)  # type: ignore[arg-type]
    fx = FeatureExtractor(seed=config.feature_seed)
    g_state, d_state = OptimizerState(), OptimizerState()

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 2])))
    labeled_sampler = BatchSampler(len(labeled), config.batch_labeled, rng)
    unlabeled_sampler = BatchSampler(len(unlabeled), config.batch_unlabeled, rng)

    steps_per_epoch = labeled_sampler.batches_per_pass
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    logger.info(
        f"Training {gen.count()} generator / {disc.count()} discriminator parameters for {total_steps} steps "
        f"({steps_per_epoch} per epoch) on {len(labeled)} labeled + {len(unlabeled)} unlabeled images"
    )

    result = TrainResult(gen, disc)
    last_d_loss = 0.0
    for step in range(1, total_steps + 1):
        epoch = min(math.ceil(step / steps_per_epoch), config.epochs)
        lr = lr_at_epoch(epoch, config)

        hazy_l, clear_l = labeled_batch(labeled, labeled_sampler.next_batch(), config.crop, rng)
        hazy_u = unlabeled_batch(unlabeled, unlabeled_sampler.next_batch(), config.crop, rng)

        gen.zero_grad()
        sup = supervised_step(gen, disc, fx, hazy_l, clear_l, config)
        unsup = unsupervised_step(gen, hazy_u, config)
        adam_step(gen, g_state, lr, config.adam)

        if step % config.d_update_period == 0:
            last_d_loss = discriminator_step(disc, d_state, clear_l, sup.output, lr, config.adam)
            result.discriminator_updates += 1

        report = loss_total({**sup.terms, **unsup.terms}, config.weights, step=step, epoch=epoch, lr=lr, adv_d=last_d_loss)
        result.reports.append(report)

        if step % config.log_every == 0 or step == total_steps:
            logger.info(
                f"step {step}/{total_steps} epoch {epoch} lr {lr:.2e} total {report.total:.4f} "
                f"msl {report.msl:.4f} tv {report.tv:.2f} dc {report.dc:.2f} adv_d {report.adv_d:.4f}"
            )
        if out_path is not None and (step % config.checkpoint_every == 0 or step == total_steps):
            _write_outputs(result, out_path, config, step)

    logger.info(f"Finished {total_steps} steps with {result.discriminator_updates} discriminator updates")
    return result


def _pad_to_multiple(image: np.ndarray, divisor: int) -> np.ndarray:
    _, h, w = image.shape
    pad_h = (-h) % divisor
    pad_w = (-w) % divisor
    if not pad_h and not pad_w:
        return image
    mode = "reflect" if h > pad_h and w > pad_w else "edge"
    return np.pad(image, ((0, 0), (0, pad_h), (0, pad_w)), mode=mode)


def dehaze_image(gen: GeneratorParams, image: np.ndarray) -> np.ndarray:
    """Dehaze one (3, h, w) image in [0, 1] of any size; returns the same shape in [0, 1]."""
    _, h, w = image.shape
    padded = _pad_to_multiple(image, gen.config.size_divisor)
    out = generator_inference(gen, Tensor4(to_network(padded)[None]))
    return from_network(out.data[0, :, :h, :w])

"""
Core records for hazelab: hyperparameters, run configuration, manifests and
reports. Every invariant is checked on construction.
"""

import math
from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

LOG_COLUMNS = ["step", "epoch", "lr", "msl", "pl", "adv_g", "adv_d", "tv", "dc", "cont", "total"]

ABLATION_LABELS = {
    (False, False): "Baseline* + L",
    (True, False): "Baseline* + DWT & IWT",
    (False, True): "Baseline* + Contrastive loss",
    (True, True): "Ours",
}


class LossWeights(BaseModel):
    """Weights of the total generator objective."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(default=1e-2, ge=0)  # perceptual
    tv_weight: float = Field(default=1e-5, ge=0)
    gamma: float = Field(default=1e-5, ge=0)  # dark channel
    delta: float = Field(default=1e-3, ge=0)  # adversarial
    epsilon: float = Field(default=1e-1, ge=0)  # contrastive


class AdamSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.99, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)


class GeneratorConfig(BaseModel):
    """Shape of the residual encoder-decoder."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base_channels: int = Field(default=16, ge=1)
    scales: int = Field(default=3, ge=1)
    blocks_per_scale: int = Field(default=3, ge=0)
    bottleneck_blocks: int = Field(default=1, ge=0)
    input_channels: int = 3
    output_channels: int = 3
    enable_dwt_bottleneck: bool = True
    orthonormal_wavelet: bool = False
    reference_layout: bool = True

    @model_validator(mode="after")
    def _check_layout(self) -> "GeneratorConfig":
        if self.reference_layout and (self.scales != 3 or self.blocks_per_scale != 3):
            raise ValueError("reference layout needs scales=3 and blocks_per_scale=3")
        if self.input_channels != self.output_channels:
            raise ValueError("global residual learning needs input_channels == output_channels")
        return self

    @property
    def widths(self) -> List[int]:
        return [self.base_channels * 2**s for s in range(self.scales)]

    @property
    def size_divisor(self) -> int:
        return 2**self.scales


class DiscriminatorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_channels: int = Field(default=8, ge=1)
    blocks: int = Field(default=4, ge=1)
    input_channels: int = 3
    input_size: int = Field(default=32, ge=2)

    @model_validator(mode="after")
    def _check_size(self) -> "DiscriminatorConfig":
        final = self.input_size / 2**self.blocks
        if final < 2 or final != int(final):
            raise ValueError(
                f"discriminator input_size {self.input_size} must be a multiple of {2**self.blocks} "
                f"and leave at least 2x2 pixels after {self.blocks} stride-2 blocks"
            )
        return self


class TrainConfig(BaseModel):
    """Every optimization hyperparameter of a training run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=10, ge=1)
    lr_start: float = 1e-4
    lr_end: float = 1e-6
    decay_start_epoch: Optional[int] = None
    crop: int = 32
    batch_labeled: int = Field(default=4, ge=1)
    batch_unlabeled: int = Field(default=4, ge=1)
    d_update_period: int = Field(default=5, ge=1)
    adam: AdamSettings = Field(default_factory=AdamSettings)
    weights: LossWeights = Field(default_factory=LossWeights)
    seed: int = 0
    feature_seed: int = 1234
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    discriminator: Optional[DiscriminatorConfig] = None
    enable_contrastive: bool = True
    contrastive_mode: Literal["difference", "ratio"] = "difference"
    contrastive_balance: float = Field(default=1.0, ge=0)
    non_saturating: bool = True
    squared_l2: bool = False
    dark_channel_patch: int = 3
    checkpoint_every: int = Field(default=50, ge=1)
    log_every: int = Field(default=10, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        if not self.lr_start > self.lr_end > 0:
            raise ValueError(f"need lr_start > lr_end > 0, got {self.lr_start} and {self.lr_end}")
        if self.crop % self.generator.size_divisor:
            raise ValueError(f"crop {self.crop} must be divisible by {self.generator.size_divisor}")
        if self.decay_start_epoch is None:
            object.__setattr__(self, "decay_start_epoch", self.epochs // 2)
        elif not 0 <= self.decay_start_epoch < self.epochs:
            raise ValueError(f"decay_start_epoch must lie in [0, {self.epochs}), got {self.decay_start_epoch}")
        if self.discriminator is None:
            object.__setattr__(self, "discriminator", DiscriminatorConfig(input_size=self.crop))
        elif self.discriminator.input_size != self.crop:
            raise ValueError(f"discriminator input_size {self.discriminator.input_size} != crop {self.crop}")
        if self.dark_channel_patch < 1 or self.dark_channel_patch % 2 == 0:
            raise ValueError("dark_channel_patch must be a positive odd number")
        return self

    @classmethod
    def full_scale(cls, **overrides: object) -> "TrainConfig":
        """Full-scale schedule: 300 epochs, decay after 150, 256 crops."""
        values: Dict[str, object] = {"epochs": 300, "decay_start_epoch": 150, "crop": 256}
        values.update(overrides)
        return cls(**values)

    @property
    def decay_span(self) -> int:
        return self.epochs - int(self.decay_start_epoch or 0)


class RunConfig(BaseModel):
    """A training configuration plus data locations and ablation switches."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    train: TrainConfig = Field(default_factory=TrainConfig)
    labeled: Optional[Path] = None
    unlabeled: Optional[Path] = None
    validation: Optional[Path] = None
    out_dir: Path = Path("runs/default")
    enable_dwt_bottleneck: bool = True
    enable_contrastive: bool = True

    @property
    def label(self) -> str:
        return ABLATION_LABELS[(self.enable_dwt_bottleneck, self.enable_contrastive)]

    def to_train_config(self) -> TrainConfig:
        """TrainConfig with the ablation switches applied."""
        generator = self.train.generator.model_copy(update={"enable_dwt_bottleneck": self.enable_dwt_bottleneck})
        data = self.train.model_dump()
        data["generator"] = generator.model_dump()
        data["enable_contrastive"] = self.enable_contrastive
        return TrainConfig(**data)


class ManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    hazy: Path
    clear: Optional[Path] = None
    depth: Optional[Path] = None


class Manifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["labeled", "unlabeled"]
    entries: List[ManifestEntry]
    source: Optional[Path] = None

    @model_validator(mode="after")
    def _check_entries(self) -> "Manifest":
        ids = [e.id for e in self.entries]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValueError(f"duplicate ids: {duplicates}")
        if self.kind == "labeled":
            missing = [e.id for e in self.entries if e.clear is None]
            if missing:
                raise ValueError(f"labeled entries without clear path: {missing}")
        return self

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> List[str]:
        return [e.id for e in self.entries]


class LossReport(BaseModel):
    """Per-step loss terms and their weighted total.

    ``cont`` already contains ``l1``; ``l1`` and ``cr`` are reported for
    inspection only. ``adv_d`` is the most recent discriminator loss and is
    not part of the generator total.
    """

    step: int = 0
    epoch: int = 0
    lr: float = 0.0
    msl: float = 0.0
    pl: float = 0.0
    adv_g: float = 0.0
    adv_d: float = 0.0
    tv: float = 0.0
    dc: float = 0.0
    cont: float = 0.0
    l1: float = 0.0
    cr: float = 0.0
    total: float = 0.0

    @field_validator("msl", "pl", "adv_g", "adv_d", "tv", "dc", "cont", "l1", "cr", "total")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("loss terms must be finite")
        return value

    def weighted_total(self, weights: LossWeights) -> float:
        return (
            self.msl
            + weights.alpha * self.pl
            + weights.tv_weight * self.tv
            + weights.gamma * self.dc
            + weights.delta * self.adv_g
            + weights.epsilon * self.cont
        )

    def to_row(self) -> Dict[str, float]:
        data = self.model_dump()
        return {column: data[column] for column in LOG_COLUMNS}


class ImageScore(BaseModel):
    id: str
    psnr: float
    ssim: float = Field(ge=-1.0, le=1.0)


class MetricsReport(BaseModel):
    """Per-image PSNR/SSIM with dataset means for one method on one dataset."""

    method: str
    dataset: str
    images: List[ImageScore] = Field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return sum(s.psnr for s in self.images) / len(self.images) if self.images else float("nan")

    @property
    def mean_ssim(self) -> float:
        return sum(s.ssim for s in self.images) / len(self.images) if self.images else float("nan")

    def row(self) -> Dict[str, object]:
        return {"method": self.method, "dataset": self.dataset, "psnr": self.mean_psnr, "ssim": self.mean_ssim}

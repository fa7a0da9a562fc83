"""
Component ablation: the baseline, the wavelet bottleneck, the contrastive
term, and both together, trained from one seed and scored on one validation
set.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import pandas as pd
from loguru import logger

from .datasets import ImageSet
from .display import ablation_frame
from .metrics import evaluate_images
from .models import MetricsReport, RunConfig
from .trainer import TrainResult, dehaze_image, train

# (enable_dwt_bottleneck, enable_contrastive) in report order
VARIANTS: List[Tuple[bool, bool]] = [(False, False), (True, False), (False, True), (True, True)]


@dataclass
class AblationRun:
    label: str
    config: RunConfig
    training: TrainResult
    metrics: MetricsReport


@dataclass
class AblationReport:
    runs: List[AblationRun]

    @property
    def labels(self) -> List[str]:
        return [run.label for run in self.runs]

    def frame(self) -> pd.DataFrame:
        return ablation_frame([run.metrics for run in self.runs])


def run_ablation(
    config: RunConfig,
    labeled: ImageSet,
    unlabeled: ImageSet,
    validation: ImageSet,
    out_dir: Optional[Union[str, Path]] = None,
    dataset: str = "validation",
) -> AblationReport:
    """Train and evaluate every variant with the same seed and data."""
    runs = []
    for letter, (dwt, contrastive) in zip("abcd", VARIANTS):
        variant = config.model_copy(update={"enable_dwt_bottleneck": dwt, "enable_contrastive": contrastive})
        label = variant.label
        logger.info(f"Ablation variant '{label}': dwt_bottleneck={dwt} contrastive={contrastive}")
        variant_dir = None
        if out_dir is not None:
            variant_dir = Path(out_dir) / f"variant_{letter}"
        result = train(variant.to_train_config(), labeled, unlabeled, variant_dir)
        metrics = evaluate_images(
            lambda image: dehaze_image(result.generator, image),
            validation,
            method=label,
            dataset=dataset,
            crop=variant.train.crop,
        )
        runs.append(AblationRun(label, variant, result, metrics))
    return AblationReport(runs)

"""Dice evaluation against clean and noisy reference masks."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from exceptions import ManifestError, ParameterError
from models.grids import BinaryMask, GrayImage, ProbMap
from models.manifest import Manifest
from services import codecs
from services.learner import SegmentationLearner

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class DiceReport:
    """Mean test Dice against clean and noisy masks."""

    d_clean: float
    d_noisy: float
    image_count: int

    @property
    def overfits_noise(self) -> bool:
        """True in the regime where predictions agree more with the noisy masks."""
        return self.d_noisy > self.d_clean


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|A∩B| / (|A| + |B|); two empty masks score 1.0.

    Raises:
        ParameterError: If the masks differ in size
    """
    if a.shape != b.shape:
        raise ParameterError(f"masks differ in size: {a.shape} vs {b.shape}")
    total = a.foreground_count + b.foreground_count
    if total == 0:
        return 1.0
    intersection = int(np.count_nonzero(a.data & b.data))
    return 2.0 * intersection / total


def mean_dice(predictions: Sequence[BinaryMask], references: Sequence[BinaryMask]) -> float:
    """Unweighted mean of per-image Dice."""
    if len(predictions) != len(references):
        raise ParameterError(f"{len(predictions)} predictions for {len(references)} references")
    if not predictions:
        raise ParameterError("mean Dice of an empty set is undefined")
    return float(np.mean([dice(p, r) for p, r in zip(predictions, references)]))


def evaluate_predictions(
    predictions: Sequence[ProbMap],
    clean: Sequence[BinaryMask],
    noisy: Sequence[BinaryMask],
    threshold: float = DEFAULT_THRESHOLD,
) -> DiceReport:
    """Binarize predictions at ``threshold`` and average Dice against both references."""
    binary = [p.binarize(threshold) for p in predictions]
    return DiceReport(
        d_clean=mean_dice(binary, clean),
        d_noisy=mean_dice(binary, noisy),
        image_count=len(binary),
    )


def evaluate_model(
    model: SegmentationLearner,
    images: Sequence[GrayImage],
    clean: Sequence[BinaryMask],
    noisy: Sequence[BinaryMask],
    threshold: float = DEFAULT_THRESHOLD,
) -> DiceReport:
    return evaluate_predictions([model.predict(image) for image in images], clean, noisy, threshold)


def evaluate_manifest(
    model: SegmentationLearner, manifest: Manifest, threshold: float = DEFAULT_THRESHOLD
) -> DiceReport:
    """Evaluate on the test split of a manifest.

    Raises:
        ManifestError: If the test split is empty or lacks clean or noisy masks
    """
    entries = manifest.test
    if not entries:
        raise ManifestError("manifest has no test entries")
    missing = [e.image.name for e in entries if e.clean_mask is None or e.noisy_mask is None]
    if missing:
        raise ManifestError(f"test entries without clean and noisy masks: {', '.join(missing)}")
    return evaluate_model(
        model,
        [codecs.read_image(e.image) for e in entries],
        [codecs.read_mask(e.clean_mask) for e in entries],  # type: ignore[arg-type]
        [codecs.read_mask(e.noisy_mask) for e in entries],  # type: ignore[arg-type]
        threshold,
    )

"""Prediction ensembles by Monte Carlo dropout, deep ensembles and test-time augmentation."""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np
from loguru import logger

from exceptions import DegenerateEnsembleWarning, ParameterError
from models.grids import GrayImage, PredictionEnsemble, ProbMap
from models.specs import EnsembleMethod, EnsembleSpec
from services.learner import SegmentationLearner

T = TypeVar("T")


@dataclass(frozen=True)
class DihedralTransform:
    """One element of the symmetry group of the square."""

    name: str
    rotations: int
    flip: bool

    @property
    def swaps_axes(self) -> bool:
        return self.rotations % 2 == 1

    def apply(self, grid: np.ndarray) -> np.ndarray:
        out = np.fliplr(grid) if self.flip else grid
        return np.ascontiguousarray(np.rot90(out, self.rotations))

    def invert(self, grid: np.ndarray) -> np.ndarray:
        out = np.rot90(grid, -self.rotations)
        return np.ascontiguousarray(np.fliplr(out) if self.flip else out)


DIHEDRAL_TRANSFORMS = (
    DihedralTransform("identity", 0, False),
    DihedralTransform("flip_horizontal", 0, True),
    DihedralTransform("flip_vertical", 2, True),
    DihedralTransform("rotate_180", 2, False),
    DihedralTransform("rotate_90", 1, False),
    DihedralTransform("rotate_270", 3, False),
    DihedralTransform("transpose", 1, True),
    DihedralTransform("anti_transpose", 3, True),
)
TRANSFORMS_BY_NAME = {t.name: t for t in DIHEDRAL_TRANSFORMS}


def map_ordered(func: Callable[[int], T], count: int, workers: int = 1) -> List[T]:
    """Evaluate ``func(i)`` for every index, placing results by index."""
    if workers <= 1 or count <= 1:
        return [func(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(count)))


def mcdo_ensemble(
    model: SegmentationLearner, image: GrayImage, n: int, base_seed: int, workers: int = 1
) -> PredictionEnsemble:
    """``n`` stochastic forward passes with dropout active; member i uses seed ``base_seed + i``."""
    if n < 1:
        raise ParameterError(f"ensemble size must be >= 1, got {n}")
    if model.dropout_rate <= 0.0:
        logger.warning("MCDO degenerate: identical members")
        warnings.warn("MCDO degenerate: identical members", DegenerateEnsembleWarning, stacklevel=2)
    members = map_ordered(
        lambda i: model.predict(image, dropout_active=True, seed=base_seed + i), n, workers
    )
    return PredictionEnsemble(members)


def de_ensemble(
    models: Sequence[SegmentationLearner], image: GrayImage, workers: int = 1
) -> PredictionEnsemble:
    """One deterministic prediction per model, in model order."""
    if not models:
        raise ParameterError("deep ensemble needs at least one model")
    members = map_ordered(lambda i: models[i].predict(image), len(models), workers)
    return PredictionEnsemble(members)


def resolve_transforms(names: Sequence[str]) -> List[DihedralTransform]:
    try:
        return [TRANSFORMS_BY_NAME[name] for name in names]
    except KeyError as e:
        raise ParameterError(f"unknown transform {e.args[0]!r}")


def tta_ensemble(
    model: SegmentationLearner,
    image: GrayImage,
    transforms: Sequence[DihedralTransform],
    workers: int = 1,
) -> PredictionEnsemble:
    """Predict on each transformed image and map the prediction back to the original frame.

    Raises:
        ParameterError: If no transform is given, or an axis-swapping transform
            is requested for a non-square image
    """
    if not transforms:
        raise ParameterError("test-time augmentation needs at least one transform")
    if image.height != image.width:
        swapping = [t.name for t in transforms if t.swaps_axes]
        if swapping:
            raise ParameterError(
                f"90-degree transforms {swapping} need a square image, got {image.height}x{image.width}"
            )

    def member(i: int) -> ProbMap:
        transform = transforms[i]
        raw = model.predict(GrayImage(transform.apply(image.data)))
        return ProbMap(transform.invert(raw.data))

    return PredictionEnsemble(map_ordered(member, len(transforms), workers))


def build_ensemble(
    spec: EnsembleSpec,
    models: Sequence[SegmentationLearner],
    image: GrayImage,
    base_seed: Optional[int] = None,
    workers: int = 1,
) -> PredictionEnsemble:
    """Dispatch on ``spec.method``.

    MCDO and TTA use the first model; DE uses every model. TTA uses the first
    ``spec.n`` dihedral transforms, restricted to those valid for the image shape.
    """
    if not models:
        raise ParameterError("no models given")
    seed = spec.base_seed if base_seed is None else base_seed
    if spec.method == EnsembleMethod.MCDO:
        return mcdo_ensemble(models[0], image, spec.n, seed, workers)
    if spec.method == EnsembleMethod.DE:
        return de_ensemble(models, image, workers)
    transforms = [
        t for t in DIHEDRAL_TRANSFORMS if image.height == image.width or not t.swaps_axes
    ][: spec.n]
    return tta_ensemble(models[0], image, transforms, workers)

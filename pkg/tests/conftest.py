"""Shared fixtures for the maskmend test suite."""

from typing import Callable

import numpy as np
import pytest

from models.grids import BinaryMask
from models.pipeline_config import PipelineConfig
from models.specs import SyntheticCorpusSpec

EllipseFactory = Callable[..., BinaryMask]


def _ellipse(
    height: int,
    width: int,
    cy: float,
    cx: float,
    ry: float,
    rx: float,
    angle: float = 0.0,
) -> BinaryMask:
    ys, xs = np.mgrid[0:height, 0:width] + 0.5
    cos, sin = np.cos(angle), np.sin(angle)
    u = (xs - cx) * cos + (ys - cy) * sin
    v = -(xs - cx) * sin + (ys - cy) * cos
    return BinaryMask((u / rx) ** 2 + (v / ry) ** 2 <= 1.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def ellipse() -> EllipseFactory:
    """Factory for filled (optionally rotated) ellipse masks."""
    return _ellipse


@pytest.fixture
def random_ellipses() -> Callable[[int, int, int], list]:
    """Factory for ``count`` random convex masks on a ``size``×``size`` grid."""

    def make(count: int, size: int = 48, seed: int = 7) -> list:
        gen = np.random.default_rng(seed)
        masks = []
        for _ in range(count):
            ry, rx = gen.uniform(0.2, 0.35, size=2) * size
            cy, cx = gen.uniform(0.45, 0.55, size=2) * size
            masks.append(_ellipse(size, size, cy, cx, ry, rx, gen.uniform(0.0, np.pi)))
        return masks

    return make


@pytest.fixture
def tiny_corpus_spec() -> SyntheticCorpusSpec:
    return SyntheticCorpusSpec(train_count=6, test_count=3, size=24, seed=3)


@pytest.fixture
def tiny_pipeline_config(tmp_path) -> Callable[..., PipelineConfig]:
    """Factory for a seconds-scale pipeline config writing under ``tmp_path``."""

    def make(name: str = "run", **overrides) -> PipelineConfig:
        values = dict(
            output_dir=tmp_path / name,
            seed=1,
            epochs=3,
            batch_size=128,
            ensemble_size=3,
            corpus_train=6,
            corpus_test=3,
            corpus_size=24,
        )
        values.update(overrides)
        return PipelineConfig(**values)

    return make

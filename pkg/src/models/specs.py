"""Validated parameter specs for the maskmend services."""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

DIHEDRAL_GROUP_SIZE = 8
# model files store seeds as uint32
MAX_SEED = 2**32 - 1
DEFAULT_LEARNING_RATE = 0.005


class NoiseKind(str, Enum):
    """Mask corruption families."""

    POLYGON = "polygon"
    SMOOTH = "smooth"


class EnsembleMethod(str, Enum):
    """Prediction ensemble mechanisms."""

    MCDO = "mcdo"
    DE = "de"
    TTA = "tta"


class DetectorMode(str, Enum):
    """How the relabeling epoch is selected during a pipeline run."""

    ONLINE = "online"
    OFFLINE = "offline"


class _Spec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)


class NoiseSpec(_Spec):
    """Corruption recipe: vertex reduction, optionally followed by spline smoothing."""

    kind: NoiseKind = NoiseKind.POLYGON
    vertex_count: int = Field(default=3, ge=3)
    samples_per_segment: int = Field(default=8, ge=2)


class TrainConfig(_Spec):
    """Hyperparameters of the reference learner."""

    epochs: int = Field(default=15, ge=1)
    learning_rate: float = Field(default=DEFAULT_LEARNING_RATE, ge=0.0)
    batch_size: int = Field(default=256, ge=1)
    dropout_rate: float = Field(default=0.2, ge=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    loss: str = "binary_cross_entropy"

    @model_validator(mode="after")
    def _check_loss(self) -> "TrainConfig":
        if self.loss != "binary_cross_entropy":
            raise ValueError(f"unsupported loss {self.loss!r}")
        return self


class EnsembleSpec(_Spec):
    """Ensemble mechanism and member count."""

    method: EnsembleMethod = EnsembleMethod.MCDO
    n: int = Field(default=8, ge=1)
    base_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_tta_size(self) -> "EnsembleSpec":
        if self.method == EnsembleMethod.TTA and self.n > DIHEDRAL_GROUP_SIZE:
            raise ValueError(f"tta ensembles hold at most {DIHEDRAL_GROUP_SIZE} members")
        return self


class RelabelSpec(_Spec):
    """Uncertainty threshold for the flip rule and hole filling switch."""

    delta: float = Field(default=0.125, gt=0.0, lt=0.25)
    fill_holes: bool = True


class DetectorSpec(_Spec):
    """Relabel-epoch detector settings."""

    warmup: int = Field(default=1, ge=0)
    patience: int = Field(default=2, ge=1)
    mode: DetectorMode = DetectorMode.ONLINE


class SyntheticCorpusSpec(_Spec):
    """Desk-scale synthetic corpus of single-blob images."""

    train_count: int = Field(default=100, ge=1)
    test_count: int = Field(default=20, ge=1)
    size: int = Field(default=64, ge=16)
    contrast: float = Field(default=0.45, gt=0.0, le=1.0)
    noise_level: float = Field(default=0.08, ge=0.0)
    background: float = Field(default=0.25, ge=0.0, le=1.0)
    radial_perturbation: float = Field(default=0.18, ge=0.0, lt=0.5)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_learnable(self) -> "SyntheticCorpusSpec":
        if self.contrast <= self.noise_level:
            raise ValueError(
                f"contrast {self.contrast} must exceed noise level {self.noise_level}"
            )
        if self.background + self.contrast > 1.0:
            raise ValueError("background + contrast must stay within [0, 1]")
        return self

    @property
    def image_count(self) -> int:
        return self.train_count + self.test_count


def optional_noise(
    kind: Optional[str], vertex_count: int, samples_per_segment: int
) -> Optional[NoiseSpec]:
    """Build a NoiseSpec unless corruption is switched off."""
    if kind is None or kind == "none":
        return None
    return NoiseSpec(
        kind=NoiseKind(kind), vertex_count=vertex_count, samples_per_segment=samples_per_segment
    )

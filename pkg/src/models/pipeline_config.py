"""Flat pipeline configuration; every field mirrors a ``maskmend pipeline`` flag."""

from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.specs import (
    DEFAULT_LEARNING_RATE,
    MAX_SEED,
    DetectorMode,
    DetectorSpec,
    EnsembleMethod,
    EnsembleSpec,
    NoiseSpec,
    RelabelSpec,
    SyntheticCorpusSpec,
    TrainConfig,
    optional_noise,
)


class PipelineConfig(BaseModel):
    """Settings of one pipeline run.

    Without ``manifest`` a synthetic corpus is generated from the ``corpus_*``
    fields. ``noise_kind = "none"`` keeps the noisy masks listed in the
    manifest instead of corrupting the clean ones.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    manifest: Optional[Path] = None
    output_dir: Path = Path("maskmend_out")
    seed: int = Field(default=0, ge=0)

    noise_kind: str = "polygon"
    noise_vertices: int = 3
    noise_samples: int = 8

    epochs: int = 15
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = 256
    dropout: float = 0.2

    method: EnsembleMethod = EnsembleMethod.MCDO
    ensemble_size: int = 8

    delta: float = 0.125
    fill_holes: bool = True
    relabel: bool = True

    warmup: int = 1
    patience: int = 2
    detector_mode: DetectorMode = DetectorMode.ONLINE

    corpus_train: int = 100
    corpus_test: int = 20
    corpus_size: int = 64
    corpus_contrast: float = 0.45
    corpus_noise: float = 0.08

    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_components(self) -> "PipelineConfig":
        if self.noise_kind not in ("polygon", "smooth", "none"):
            raise ValueError(f"noise_kind must be polygon, smooth or none, got {self.noise_kind!r}")
        if self.seed + self.ensemble_size - 1 > MAX_SEED:
            raise ValueError(f"seed + ensemble_size - 1 must not exceed {MAX_SEED}")
        # building each spec surfaces its own constraint violations
        _ = (
            self.noise_spec,
            self.train_config,
            self.ensemble_spec,
            self.relabel_spec,
            self.detector_spec,
        )
        if self.manifest is None:
            _ = self.corpus_spec
        return self

    @property
    def noise_spec(self) -> Optional[NoiseSpec]:
        return optional_noise(self.noise_kind, self.noise_vertices, self.noise_samples)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            dropout_rate=self.dropout,
            seed=self.seed,
        )

    @property
    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec(method=self.method, n=self.ensemble_size, base_seed=self.seed)

    @property
    def relabel_spec(self) -> RelabelSpec:
        return RelabelSpec(delta=self.delta, fill_holes=self.fill_holes)

    @property
    def detector_spec(self) -> DetectorSpec:
        return DetectorSpec(warmup=self.warmup, patience=self.patience, mode=self.detector_mode)

    @property
    def corpus_spec(self) -> SyntheticCorpusSpec:
        return SyntheticCorpusSpec(
            train_count=self.corpus_train,
            test_count=self.corpus_test,
            size=self.corpus_size,
            contrast=self.corpus_contrast,
            noise_level=self.corpus_noise,
            seed=self.seed,
        )

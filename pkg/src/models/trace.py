"""Per-epoch training records used by the epoch detector and reports."""

from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional

from exceptions import InvariantError


@dataclass(frozen=True)
class UncertaintySummary:
    """Mean over images of the pixel-summed uncertainty (ΣU_p)."""

    sigma_u: float
    image_count: int = 0

    def __post_init__(self) -> None:
        if self.sigma_u < 0:
            raise InvariantError(f"sigma_u must be nonnegative, got {self.sigma_u}")


@dataclass(frozen=True)
class EpochRecord:
    """One row of a training trace."""

    epoch: int
    sigma_u: float
    delta_sigma_u: Optional[float] = None
    d_clean: Optional[float] = None
    d_noisy: Optional[float] = None


@dataclass(frozen=True)
class TrainingTrace:
    """Ordered per-epoch records with strictly increasing epoch indices."""

    records: List[EpochRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        records = list(self.records)
        for previous, current in zip(records, records[1:]):
            if current.epoch <= previous.epoch:
                raise InvariantError(
                    f"trace epochs must increase strictly: {previous.epoch} then {current.epoch}"
                )
        for record in records:
            if record.sigma_u < 0:
                raise InvariantError(f"epoch {record.epoch} has negative sigma_u")
        object.__setattr__(self, "records", records)

    @classmethod
    def from_sigma(cls, sigma_u: List[float], first_epoch: int = 0) -> "TrainingTrace":
        """Build a trace holding only ΣU_p values for consecutive epochs."""
        return cls(
            [EpochRecord(epoch=first_epoch + i, sigma_u=value) for i, value in enumerate(sigma_u)]
        )

    def with_delta(self, deltas: List[Optional[float]]) -> "TrainingTrace":
        if len(deltas) != len(self.records):
            raise InvariantError("delta list length differs from trace length")
        return TrainingTrace(
            [replace(r, delta_sigma_u=d) for r, d in zip(self.records, deltas)]
        )

    @property
    def epochs(self) -> List[int]:
        return [r.epoch for r in self.records]

    @property
    def sigma_u(self) -> List[float]:
        return [r.sigma_u for r in self.records]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EpochRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> EpochRecord:
        return self.records[index]

"""Relabel-epoch selection from the relative change of cumulative uncertainty.

ΔΣU_t = (ΣU_t − ΣU_{t−1}) / ΣU_{t−1}. The relabeling epoch is where ΣU
falls fastest, i.e. the minimum of ΔΣU after a warmup.
"""

from typing import List, Optional, Sequence

from loguru import logger

from exceptions import NotEnoughDataError, ParameterError
from models.trace import EpochRecord, TrainingTrace


def _relative(previous: float, current: float, epoch: int) -> Optional[float]:
    if previous <= 0.0:
        logger.warning(f"Relative change undefined at epoch {epoch}: previous sigma_u is {previous}")
        return None
    return (current - previous) / previous


def relative_change(trace: TrainingTrace) -> List[Optional[float]]:
    """Backward relative change per record; ``None`` for the first record and zero denominators.

    Raises:
        NotEnoughDataError: If the trace holds fewer than two epochs
    """
    if len(trace) < 2:
        raise NotEnoughDataError(f"relative change needs >= 2 epochs, got {len(trace)}")
    deltas: List[Optional[float]] = [None]
    for previous, current in zip(trace.records, trace.records[1:]):
        deltas.append(_relative(previous.sigma_u, current.sigma_u, current.epoch))
    return deltas


def argmin_epoch(epochs: Sequence[int], deltas: Sequence[Optional[float]], warmup: int) -> int:
    """Earliest epoch after ``warmup`` holding the smallest defined delta.

    Raises:
        NotEnoughDataError: If no epoch after the warmup has a defined delta
    """
    eligible = [(d, e) for e, d in zip(epochs, deltas) if e > warmup and d is not None]
    if not eligible:
        raise NotEnoughDataError(f"no epoch after warmup {warmup} with a defined relative change")
    best_delta = min(d for d, _ in eligible)
    return min(e for d, e in eligible if d == best_delta)


def detect_relabel_epoch(trace: TrainingTrace, warmup: int = 1) -> int:
    """Offline detection: the argmin of ΔΣU_p over epochs after ``warmup``."""
    if warmup < 0:
        raise ParameterError(f"warmup must be >= 0, got {warmup}")
    return argmin_epoch(trace.epochs, relative_change(trace), warmup)


class OnlineEpochDetector:
    """Patience-based detector for live training.

    Epoch ``m`` is declared the minimum once ΔΣU has not dropped below its
    value at ``m`` for ``patience`` consecutive epochs. Fires at most once.
    """

    def __init__(self, warmup: int = 1, patience: int = 2):
        if warmup < 0 or patience < 1:
            raise ParameterError(f"need warmup >= 0 and patience >= 1, got {warmup}, {patience}")
        self.warmup = warmup
        self.patience = patience
        self._previous: Optional[EpochRecord] = None
        self._best_delta: Optional[float] = None
        self._best_epoch: Optional[int] = None
        self._since_best = 0
        self.fired_epoch: Optional[int] = None

    @property
    def best_epoch(self) -> Optional[int]:
        """Current running-minimum epoch (``None`` before any eligible epoch)."""
        return self._best_epoch

    def observe(self, record: EpochRecord) -> Optional[int]:
        """Feed the next epoch; return the detected epoch when the rule fires, else ``None``."""
        previous, self._previous = self._previous, record
        if self.fired_epoch is not None or previous is None:
            return None
        delta = _relative(previous.sigma_u, record.sigma_u, record.epoch)
        if record.epoch <= self.warmup:
            return None

        if delta is not None and (self._best_delta is None or delta < self._best_delta):
            self._best_delta, self._best_epoch, self._since_best = delta, record.epoch, 0
            return None
        if self._best_epoch is None:
            return None
        self._since_best += 1
        if self._since_best >= self.patience:
            self.fired_epoch = self._best_epoch
            logger.info(
                f"Relabel epoch detected: {self._best_epoch} "
                f"(ΔΣU = {self._best_delta:.4f}, confirmed at epoch {record.epoch})"
            )
            return self.fired_epoch
        return None

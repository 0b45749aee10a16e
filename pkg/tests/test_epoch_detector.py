"""Tests for the relative uncertainty change and relabel-epoch detection."""

import numpy as np
import pytest

from exceptions import InvariantError, NotEnoughDataError, ParameterError
from models.trace import TrainingTrace
from services.epoch_detector import OnlineEpochDetector, detect_relabel_epoch, relative_change

# steep drop at epoch 3, then flattening toward zero change
STEEP_DROP = [10.0, 9.5, 9.0, 4.0, 2.5, 2.2, 2.1, 2.05, 2.04]


def _run_online(sigma, warmup=1, patience=2):
    detector = OnlineEpochDetector(warmup=warmup, patience=patience)
    fired = [detector.observe(record) for record in TrainingTrace.from_sigma(sigma)]
    return detector, fired


class TestTrainingTrace:
    def test_with_delta_fills_every_record(self):
        trace = TrainingTrace.from_sigma([4.0, 2.0, 1.0], first_epoch=3)
        filled = trace.with_delta(relative_change(trace))
        assert filled.epochs == [3, 4, 5]
        assert [r.delta_sigma_u for r in filled] == [None, -0.5, -0.5]
        assert filled.sigma_u == trace.sigma_u

    def test_with_delta_length_mismatch(self):
        with pytest.raises(InvariantError, match="length"):
            TrainingTrace.from_sigma([4.0, 2.0]).with_delta([None])

    def test_epochs_must_increase(self):
        records = TrainingTrace.from_sigma([1.0, 1.0]).records
        with pytest.raises(InvariantError, match="increase strictly"):
            TrainingTrace([records[1], records[0]])


class TestRelativeChange:
    def test_halving(self):
        assert relative_change(TrainingTrace.from_sigma([4.0, 2.0])) == [None, -0.5]

    def test_constant(self):
        assert relative_change(TrainingTrace.from_sigma([3.0] * 4))[1:] == [0.0] * 3

    def test_zero_denominator(self):
        assert relative_change(TrainingTrace.from_sigma([1.0, 0.0, 0.0])) == [None, -1.0, None]

    def test_single_epoch(self):
        with pytest.raises(NotEnoughDataError):
            relative_change(TrainingTrace.from_sigma([1.0]))


class TestDetectRelabelEpoch:
    def test_argmin(self):
        # deltas -0.1, -0.6, -0.2, 0.0
        trace = TrainingTrace.from_sigma([1.0, 0.9, 0.36, 0.288, 0.288])
        assert detect_relabel_epoch(trace, warmup=0) == 2

    def test_ties_pick_earliest(self):
        trace = TrainingTrace.from_sigma([16.0, 8.0, 4.0, 2.0, 1.0])
        assert detect_relabel_epoch(trace, warmup=1) == 2

    def test_steep_drop(self):
        assert detect_relabel_epoch(TrainingTrace.from_sigma(STEEP_DROP)) == 3

    def test_scale_invariance(self, rng):
        for _ in range(50):
            sigma = rng.uniform(0.5, 5.0, size=8)
            expected = detect_relabel_epoch(TrainingTrace.from_sigma(list(sigma)))
            for scale in (0.25, 4.0):
                scaled = TrainingTrace.from_sigma(list(sigma * scale))
                assert detect_relabel_epoch(scaled) == expected

    def test_never_within_warmup(self, rng):
        for _ in range(50):
            sigma = list(np.sort(rng.uniform(0.1, 5.0, size=8))[::-1])
            warmup = int(rng.integers(0, 5))
            assert detect_relabel_epoch(TrainingTrace.from_sigma(sigma), warmup) > warmup

    def test_not_enough_epochs(self):
        with pytest.raises(NotEnoughDataError):
            detect_relabel_epoch(TrainingTrace.from_sigma([2.0, 1.0]), warmup=1)

    def test_only_undefined_deltas(self):
        with pytest.raises(NotEnoughDataError):
            detect_relabel_epoch(TrainingTrace.from_sigma([1.0, 0.0, 0.0]), warmup=1)

    def test_negative_warmup(self):
        with pytest.raises(ParameterError):
            detect_relabel_epoch(TrainingTrace.from_sigma(STEEP_DROP), warmup=-1)


class TestOnlineEpochDetector:
    def test_fires_after_patience(self):
        detector, fired = _run_online(STEEP_DROP)
        assert fired[5] == 3
        assert [f for i, f in enumerate(fired) if i != 5] == [None] * (len(STEEP_DROP) - 1)
        assert detector.fired_epoch == 3

    def test_longer_patience_confirms_later(self):
        _, fired = _run_online(STEEP_DROP, patience=4)
        assert fired.index(3) == 7

    def test_agrees_with_offline_on_steep_drop(self):
        detector, _ = _run_online(STEEP_DROP)
        assert detector.fired_epoch == detect_relabel_epoch(TrainingTrace.from_sigma(STEEP_DROP))

    def test_running_minimum_moves(self):
        detector = OnlineEpochDetector(warmup=0, patience=2)
        for record in TrainingTrace.from_sigma([10.0, 9.0, 5.0]):
            detector.observe(record)
        assert detector.best_epoch == 2

    def test_never_fires_on_steadily_accelerating_drop(self):
        detector, fired = _run_online([10.0, 9.0, 7.0, 4.0, 1.5])
        assert fired == [None] * 5
        assert detector.fired_epoch is None
        assert detector.best_epoch == 4

    @pytest.mark.parametrize("warmup, patience", [(-1, 2), (1, 0)])
    def test_invalid_parameters(self, warmup, patience):
        with pytest.raises(ParameterError):
            OnlineEpochDetector(warmup=warmup, patience=patience)

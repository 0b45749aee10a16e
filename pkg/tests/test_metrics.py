"""Tests for Dice scoring and test-split evaluation."""

import numpy as np
import pytest

from exceptions import ManifestError, ParameterError
from models.grids import BinaryMask, GrayImage, ProbMap
from models.manifest import Manifest, ManifestEntry, Split
from services import codecs
from services.metrics import dice, evaluate_manifest, evaluate_predictions, mean_dice


class _FixedModel:
    """Learner stand-in predicting the same map for every image."""

    dropout_rate = 0.0

    def __init__(self, prediction: ProbMap):
        self.prediction = prediction

    def fit_epoch(self, data, cfg):
        return self

    def predict(self, image, dropout_active=False, seed=0):
        return self.prediction


class TestDice:
    def test_partial_overlap(self):
        a = BinaryMask.from_rows([[1, 1], [0, 0]])
        b = BinaryMask.from_rows([[1, 0], [0, 0]])
        assert dice(a, b) == pytest.approx(2 / 3)

    def test_empty_masks(self):
        assert dice(BinaryMask.zeros(3, 3), BinaryMask.zeros(3, 3)) == 1.0

    def test_disjoint(self):
        assert dice(BinaryMask.from_rows([[1, 0]]), BinaryMask.from_rows([[0, 1]])) == 0.0

    def test_symmetric(self, rng):
        for _ in range(20):
            a = BinaryMask(rng.integers(0, 2, size=(8, 8)))
            b = BinaryMask(rng.integers(0, 2, size=(8, 8)))
            assert dice(a, b) == dice(b, a)

    def test_size_mismatch(self):
        with pytest.raises(ParameterError):
            dice(BinaryMask.zeros(2, 2), BinaryMask.zeros(2, 3))

    def test_mean_of_empty_set(self):
        with pytest.raises(ParameterError):
            mean_dice([], [])


class TestEvaluatePredictions:
    def test_clean_and_noisy_references(self):
        clean = BinaryMask.from_rows([[1, 1], [0, 0]])
        noisy = BinaryMask.from_rows([[1, 1], [1, 1]])
        prediction = ProbMap(np.array([[0.9, 0.6], [0.2, 0.5]]))
        report = evaluate_predictions([prediction], [clean], [noisy])
        assert report.d_clean == pytest.approx(0.8)
        assert report.d_noisy == pytest.approx(6 / 7)
        assert report.image_count == 1
        assert report.overfits_noise

    def test_threshold(self):
        clean = BinaryMask.from_rows([[1, 0]])
        report = evaluate_predictions([ProbMap(np.array([[0.7, 0.6]]))], [clean], [clean], 0.65)
        assert report.d_clean == 1.0
        assert not report.overfits_noise


class TestEvaluateManifest:
    def _entry(self, tmp_path, name, split, with_noisy=True):
        clean = BinaryMask.from_rows([[1, 1], [0, 0]])
        codecs.write_image(GrayImage(np.full((2, 2), 0.5)), tmp_path / f"{name}.pgm")
        codecs.write_mask(clean, tmp_path / f"{name}_clean.pgm")
        noisy = None
        if with_noisy:
            noisy = tmp_path / f"{name}_noisy.pgm"
            codecs.write_mask(BinaryMask.from_rows([[1, 0], [0, 0]]), noisy)
        return ManifestEntry(
            image=tmp_path / f"{name}.pgm",
            clean_mask=tmp_path / f"{name}_clean.pgm",
            noisy_mask=noisy,
            split=split,
        )

    def test_scores_test_split_only(self, tmp_path):
        manifest = Manifest(
            root=tmp_path,
            entries=[
                self._entry(tmp_path, "a", Split.TRAIN),
                self._entry(tmp_path, "b", Split.TEST),
            ],
        )
        model = _FixedModel(ProbMap(np.array([[1.0, 1.0], [0.0, 0.0]])))
        report = evaluate_manifest(model, manifest)
        assert report.image_count == 1
        assert report.d_clean == 1.0
        assert report.d_noisy == pytest.approx(2 / 3)

    def test_no_test_entries(self, tmp_path):
        manifest = Manifest(root=tmp_path, entries=[self._entry(tmp_path, "a", Split.TRAIN)])
        with pytest.raises(ManifestError, match="no test entries"):
            evaluate_manifest(_FixedModel(ProbMap(np.zeros((2, 2)))), manifest)

    def test_missing_noisy_mask(self, tmp_path):
        manifest = Manifest(
            root=tmp_path, entries=[self._entry(tmp_path, "a", Split.TEST, with_noisy=False)]
        )
        with pytest.raises(ManifestError, match="a"):
            evaluate_manifest(_FixedModel(ProbMap(np.zeros((2, 2)))), manifest)

"""Tests for the synthetic blob corpus."""

import pytest
from scipy import ndimage

from models.manifest import Split
from models.specs import SyntheticCorpusSpec
from services import codecs
from services.corpus import MANIFEST_NAME, generate_corpus, split_indices, synthesize_sample


class TestSynthesizeSample:
    def test_deterministic(self, tiny_corpus_spec):
        first_image, first_mask = synthesize_sample(tiny_corpus_spec, 2)
        second_image, second_mask = synthesize_sample(tiny_corpus_spec, 2)
        assert first_image == second_image
        assert first_mask == second_mask

    def test_samples_differ(self, tiny_corpus_spec):
        assert synthesize_sample(tiny_corpus_spec, 0)[1] != synthesize_sample(tiny_corpus_spec, 1)[1]

    def test_single_connected_blob(self):
        spec = SyntheticCorpusSpec(train_count=10, test_count=5, size=32, seed=9)
        for index in range(spec.image_count):
            _, mask = synthesize_sample(spec, index)
            _, count = ndimage.label(mask.data)
            assert count == 1
            assert 0.03 < mask.foreground_count / mask.data.size < 0.5

    def test_blob_is_brighter(self, tiny_corpus_spec):
        image, mask = synthesize_sample(tiny_corpus_spec, 0)
        inside = image.data[mask.data == 1].mean()
        outside = image.data[mask.data == 0].mean()
        assert inside - outside > tiny_corpus_spec.contrast / 2


class TestSpecValidation:
    def test_contrast_must_exceed_noise(self):
        with pytest.raises(ValueError):
            SyntheticCorpusSpec(contrast=0.05, noise_level=0.08)

    def test_zero_contrast(self):
        with pytest.raises(ValueError):
            SyntheticCorpusSpec(contrast=0.0)


class TestGenerateCorpus:
    def test_split_sizes(self, tiny_corpus_spec):
        train, test = split_indices(tiny_corpus_spec)
        assert len(train) == 6 and len(test) == 3
        assert sorted(train + test) == list(range(9))

    def test_writes_manifest(self, tiny_corpus_spec, tmp_path):
        manifest = generate_corpus(tiny_corpus_spec, tmp_path)
        loaded = codecs.read_manifest(tmp_path / MANIFEST_NAME)
        assert len(loaded.train) == 6 and len(loaded.test) == 3
        assert [e.name for e in loaded.entries] == [e.name for e in manifest.entries]
        entry = loaded.split(Split.TEST)[0]
        assert entry.noisy_mask is None
        assert codecs.read_mask(entry.clean_mask).shape == (24, 24)

    def test_byte_identical_reruns(self, tiny_corpus_spec, tmp_path):
        generate_corpus(tiny_corpus_spec, tmp_path / "a")
        generate_corpus(tiny_corpus_spec, tmp_path / "b")
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.pgm"))
        assert len(files) == 18
        for name in files:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        manifests = [(tmp_path / run / MANIFEST_NAME).read_text() for run in ("a", "b")]
        assert manifests[0] == manifests[1]

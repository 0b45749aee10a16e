"""Desk-scale synthetic corpus: one smooth blob per image on a noisy background."""

from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from loguru import logger
from scipy import ndimage
from sklearn.model_selection import train_test_split

from models.grids import BinaryMask, GrayImage
from models.manifest import Manifest, ManifestEntry, Split
from models.specs import SyntheticCorpusSpec
from services import codecs
from services.noise_synth import largest_component

HARMONICS = (2, 3, 4)
RADIUS_RANGE = (0.18, 0.28)
CENTER_RANGE = (0.4, 0.6)
EDGE_BLUR_SIGMA = 0.8
MANIFEST_NAME = "manifest.csv"


def _blob(rng: np.random.Generator, spec: SyntheticCorpusSpec) -> BinaryMask:
    size = spec.size
    cy, cx = rng.uniform(*CENTER_RANGE, size=2) * size
    radius = rng.uniform(*RADIUS_RANGE) * size
    amplitudes = rng.uniform(0.0, 1.0, size=len(HARMONICS))
    amplitudes *= spec.radial_perturbation / max(float(amplitudes.sum()), 1e-12)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(HARMONICS))

    ys, xs = np.mgrid[0:size, 0:size] + 0.5
    theta = np.arctan2(ys - cy, xs - cx)
    outline = radius * (
        1.0 + sum(a * np.cos(k * theta + p) for a, k, p in zip(amplitudes, HARMONICS, phases))
    )
    inside = np.hypot(ys - cy, xs - cx) <= outline
    return BinaryMask(largest_component(BinaryMask(inside)))


def synthesize_sample(spec: SyntheticCorpusSpec, index: int) -> Tuple[GrayImage, BinaryMask]:
    """Image and clean mask number ``index``; depends only on ``(spec.seed, index)``."""
    rng = np.random.default_rng([spec.seed, index])
    mask = _blob(rng, spec)
    intensity = spec.background + spec.contrast * mask.data.astype(np.float64)
    intensity = ndimage.gaussian_filter(intensity, sigma=EDGE_BLUR_SIGMA, mode="nearest")
    intensity = intensity + rng.normal(0.0, spec.noise_level, size=intensity.shape)
    image = GrayImage(codecs.quantize_intensities(intensity) / 255.0)
    return image, mask


def generate_samples(spec: SyntheticCorpusSpec) -> List[Tuple[GrayImage, BinaryMask]]:
    return [synthesize_sample(spec, i) for i in range(spec.image_count)]


def split_indices(spec: SyntheticCorpusSpec) -> Tuple[List[int], List[int]]:
    """Deterministic train/test partition of the sample indices."""
    train, test = train_test_split(
        np.arange(spec.image_count),
        train_size=spec.train_count,
        test_size=spec.test_count,
        random_state=spec.seed,
        shuffle=True,
    )
    return sorted(int(i) for i in train), sorted(int(i) for i in test)


def generate_corpus(spec: SyntheticCorpusSpec, out_dir: Union[str, Path]) -> Manifest:
    """Write images, clean masks and ``manifest.csv`` under ``out_dir``.

    Layout: ``images/blob_NNNN.pgm``, ``masks/blob_NNNN.pgm``. Running twice
    with the same spec produces identical files.
    """
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    train, _ = split_indices(spec)
    train_set = set(train)

    entries = []
    for index, (image, mask) in enumerate(generate_samples(spec)):
        name = f"blob_{index:04d}.pgm"
        image_path, mask_path = root / "images" / name, root / "masks" / name
        codecs.write_image(image, image_path)
        codecs.write_mask(mask, mask_path)
        entries.append(
            ManifestEntry(
                image=image_path,
                clean_mask=mask_path,
                split=Split.TRAIN if index in train_set else Split.TEST,
            )
        )

    manifest = Manifest(root=root, entries=entries)
    codecs.write_manifest(manifest, root / MANIFEST_NAME)
    logger.info(
        f"Generated corpus in {root}: {spec.train_count} train / {spec.test_count} test, "
        f"{spec.size}x{spec.size}"
    )
    return manifest

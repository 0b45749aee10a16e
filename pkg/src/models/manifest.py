"""Dataset manifest models."""

from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field


class Split(str, Enum):
    """Dataset split."""

    TRAIN = "train"
    TEST = "test"


class ManifestEntry(BaseModel):
    """One image with its clean and (optionally) noisy annotation.

    Paths are absolute once loaded; they are written back relative to the
    manifest location.
    """

    image: Path
    clean_mask: Optional[Path] = None
    noisy_mask: Optional[Path] = None
    split: Split

    @property
    def name(self) -> str:
        return self.image.stem


class Manifest(BaseModel):
    """Ordered collection of manifest entries rooted at a directory."""

    root: Path
    entries: List[ManifestEntry] = Field(default_factory=list)

    def split(self, split: Split) -> List[ManifestEntry]:
        return [entry for entry in self.entries if entry.split == split]

    @property
    def train(self) -> List[ManifestEntry]:
        return self.split(Split.TRAIN)

    @property
    def test(self) -> List[ManifestEntry]:
        return self.split(Split.TEST)

"""Uncertainty-driven label flipping followed by hole filling."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from exceptions import ParameterError
from models.grids import BinaryMask, UncertaintyMap
from models.specs import RelabelSpec

# 4-connectivity for the background flood from the border
_CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class RelabelOutcome:
    """Relabeled mask with counts for auditing the threshold."""

    mask: BinaryMask
    flipped: int
    filled: int

    @property
    def flipped_fraction(self) -> float:
        return self.flipped / (self.mask.height * self.mask.width)


def flip_labels(noisy: BinaryMask, umap: UncertaintyMap, delta: float) -> BinaryMask:
    """Invert every label whose uncertainty exceeds ``delta`` (strictly).

    Raises:
        ParameterError: On a dimension mismatch or ``delta`` outside (0, 0.25)
    """
    if noisy.shape != umap.shape:
        raise ParameterError(f"mask {noisy.shape} and uncertainty map {umap.shape} differ in size")
    if not 0.0 < delta < 0.25:
        raise ParameterError(f"delta must lie within (0, 0.25), got {delta}")
    return BinaryMask(np.where(umap.data > delta, 1 - noisy.data, noisy.data))


def fill_holes(mask: BinaryMask) -> BinaryMask:
    """Set background pixels not 4-connected to the border through background to 1."""
    return BinaryMask(ndimage.binary_fill_holes(mask.as_bool(), structure=_CROSS))


def relabel_with_audit(noisy: BinaryMask, umap: UncertaintyMap, spec: RelabelSpec) -> RelabelOutcome:
    flipped = flip_labels(noisy, umap, spec.delta)
    changed = int(np.count_nonzero(flipped.data != noisy.data))
    if not spec.fill_holes:
        return RelabelOutcome(mask=flipped, flipped=changed, filled=0)
    filled = fill_holes(flipped)
    return RelabelOutcome(
        mask=filled,
        flipped=changed,
        filled=int(filled.foreground_count - flipped.foreground_count),
    )


def relabel(noisy: BinaryMask, umap: UncertaintyMap, spec: RelabelSpec) -> BinaryMask:
    """Flip high-uncertainty labels, then fill holes when ``spec.fill_holes`` is set."""
    return relabel_with_audit(noisy, umap, spec).mask

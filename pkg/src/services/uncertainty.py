"""Per-pixel uncertainty maps from prediction ensembles.

For binary segmentation with foreground probability ``p`` the matrix
``diag(p̂) − p̂p̂ᵀ`` over the one-hot class vector has ``p(1 − p)`` on both
diagonal entries, so the aleatoric map is the ensemble mean of ``p(1 − p)``.
The complementary epistemic term is the between-member variance; the two add
up to ``p̄(1 − p̄)``.
"""

import warnings
from typing import Sequence

import numpy as np
from loguru import logger

from exceptions import DegenerateEnsembleWarning, ParameterError
from models.grids import PredictionEnsemble, UncertaintyMap
from models.trace import UncertaintySummary


def aleatoric_map(ensemble: PredictionEnsemble) -> UncertaintyMap:
    """U = (1/N) Σ p̂_n (1 − p̂_n) per pixel."""
    stack = ensemble.stack()
    return UncertaintyMap(np.mean(stack * (1.0 - stack), axis=0))


def epistemic_map(ensemble: PredictionEnsemble) -> UncertaintyMap:
    """Between-member variance (1/N) Σ (p̂_n − p̄)² per pixel.

    A single-member ensemble yields an all-zero map and a warning.
    """
    if ensemble.n < 2:
        logger.warning("Epistemic map of a single-member ensemble is identically zero")
        warnings.warn(
            "degenerate ensemble: epistemic map needs n >= 2", DegenerateEnsembleWarning, stacklevel=2
        )
        return UncertaintyMap.zeros(ensemble.height, ensemble.width)
    return UncertaintyMap(np.var(ensemble.stack(), axis=0))


def cumulative_uncertainty(maps: Sequence[UncertaintyMap]) -> UncertaintySummary:
    """Mean over maps of the pixel-summed uncertainty (ΣU_p).

    Raises:
        ParameterError: If ``maps`` is empty
    """
    if not maps:
        raise ParameterError("cumulative uncertainty needs at least one map")
    totals = np.array([m.total() for m in maps], dtype=np.float64)
    return UncertaintySummary(sigma_u=float(totals.mean()), image_count=len(maps))

"""Grid and geometry types shared by every service.

All grids are row-major numpy arrays indexed ``[row, column]``; geometric
coordinates are ``(x, y) = (column, row)`` with the origin at the top-left
corner of the image, so the center of pixel ``(r, c)`` is ``(c + 0.5, r + 0.5)``.
Instances are immutable: the wrapped arrays are marked read-only.
"""

from dataclasses import dataclass, field
from typing import Iterator, List, Sequence

import numpy as np

from exceptions import InvariantError

PROBABILITY_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


def _check_grid(name: str, data: np.ndarray) -> None:
    if data.ndim != 2:
        raise InvariantError(f"{name} must be a 2-D grid, got shape {data.shape}")
    if data.shape[0] < 1 or data.shape[1] < 1:
        raise InvariantError(f"{name} must have height >= 1 and width >= 1, got {data.shape}")


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """H×W grid of {0, 1} labels."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        _check_grid("BinaryMask", data)
        if data.dtype == np.bool_:
            data = data.astype(np.uint8)
        if not np.isin(data, (0, 1)).all():
            raise InvariantError("BinaryMask elements must be exactly 0 or 1")
        object.__setattr__(self, "data", _frozen(data.astype(np.uint8)))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "BinaryMask":
        return cls(np.array(rows, dtype=np.int64))

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def foreground_count(self) -> int:
        return int(self.data.sum())

    def as_bool(self) -> np.ndarray:
        return self.data.astype(bool)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((self.shape, self.data.tobytes()))


@dataclass(frozen=True, eq=False)
class GrayImage:
    """H×W grid of intensities in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        _check_grid("GrayImage", data)
        if not np.isfinite(data).all() or data.min() < 0.0 or data.max() > 1.0:
            raise InvariantError("GrayImage intensities must lie within [0, 1]")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class ProbMap:
    """H×W grid of foreground probabilities; one model prediction."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        _check_grid("ProbMap", data)
        if not np.isfinite(data).all():
            raise InvariantError("ProbMap contains non-finite values")
        if data.min() < -PROBABILITY_TOLERANCE or data.max() > 1.0 + PROBABILITY_TOLERANCE:
            raise InvariantError("ProbMap values must lie within [0, 1]")
        object.__setattr__(self, "data", _frozen(np.clip(data, 0.0, 1.0)))

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def binarize(self, threshold: float = 0.5) -> BinaryMask:
        """Label pixels with probability >= threshold as foreground."""
        return BinaryMask(self.data >= threshold)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class PredictionEnsemble:
    """Ordered stack of N probability maps over the same image (N×H×W)."""

    members: List[ProbMap] = field(default_factory=list)

    def __post_init__(self) -> None:
        members = list(self.members)
        if not members:
            raise InvariantError("ensemble must have n >= 1")
        shape = members[0].shape
        for index, member in enumerate(members):
            if member.shape != shape:
                raise InvariantError(
                    f"ensemble member {index} has shape {member.shape}, expected {shape}"
                )
        object.__setattr__(self, "members", members)

    @classmethod
    def from_array(cls, stack: np.ndarray) -> "PredictionEnsemble":
        stack = np.asarray(stack, dtype=np.float64)
        if stack.ndim != 3:
            raise InvariantError(f"ensemble stack must be N×H×W, got shape {stack.shape}")
        return cls([ProbMap(member) for member in stack])

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def height(self) -> int:
        return self.members[0].height

    @property
    def width(self) -> int:
        return self.members[0].width

    @property
    def shape(self) -> tuple:
        return self.members[0].shape

    def stack(self) -> np.ndarray:
        """Return the N×H×W float64 array of member probabilities."""
        return np.stack([member.data for member in self.members])

    def __iter__(self) -> Iterator[ProbMap]:
        return iter(self.members)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PredictionEnsemble):
            return NotImplemented
        return self.n == other.n and all(a == b for a, b in zip(self.members, other.members))


@dataclass(frozen=True, eq=False)
class UncertaintyMap:
    """H×W grid of nonnegative per-pixel uncertainty values."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        _check_grid("UncertaintyMap", data)
        if not np.isfinite(data).all():
            raise InvariantError("UncertaintyMap contains non-finite values")
        if data.min() < -PROBABILITY_TOLERANCE:
            raise InvariantError("UncertaintyMap values must be nonnegative")
        object.__setattr__(self, "data", _frozen(np.maximum(data, 0.0)))

    @classmethod
    def zeros(cls, height: int, width: int) -> "UncertaintyMap":
        return cls(np.zeros((height, width)))

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def total(self) -> float:
        """Sum of the map over all pixels."""
        return float(self.data.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UncertaintyMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class Polygon:
    """Implicitly closed polygon with (x, y) vertices in pixel space."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=np.float64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise InvariantError(f"Polygon vertices must be K×2, got shape {vertices.shape}")
        if len(vertices) < 3:
            raise InvariantError(f"Polygon needs at least 3 vertices, got {len(vertices)}")
        if not np.isfinite(vertices).all():
            raise InvariantError("Polygon vertices must be finite")
        following = np.roll(vertices, -1, axis=0)
        if np.any(np.all(vertices == following, axis=1)):
            raise InvariantError("Polygon has repeated consecutive vertices")
        object.__setattr__(self, "vertices", _frozen(vertices))

    @property
    def size(self) -> int:
        return int(len(self.vertices))

    def signed_area(self) -> float:
        """Shoelace area; positive for counterclockwise order in the (x, y) frame."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polygon):
            return NotImplemented
        return bool(np.array_equal(self.vertices, other.vertices))

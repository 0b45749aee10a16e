"""Portable readers and writers for masks, images, ensembles, manifests and traces.

Masks and images are 8-bit portable graymaps (binary P5 or plain P2, maxval up
to 255). Ensembles and uncertainty maps use the little-endian ``UENS``
container: magic ``b"UENS"``, version byte ``0x01``, three uint32 values
``N, H, W`` and then ``N·H·W`` float32 values, member-major and row-major.
"""

import csv
import struct
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from exceptions import (
    DimensionMismatchError,
    HeaderError,
    InputFormatError,
    MagicMismatchError,
    ManifestError,
    MaskWriteError,
    TruncatedPayloadError,
)
from models.grids import BinaryMask, GrayImage, PredictionEnsemble, UncertaintyMap
from models.manifest import Manifest, ManifestEntry, Split
from models.trace import EpochRecord, TrainingTrace

PathLike = Union[str, Path]

ENSEMBLE_MAGIC = b"UENS"
ENSEMBLE_VERSION = 1
_ENSEMBLE_HEADER = struct.Struct("<4sBIII")
_FLOAT32_LE = np.dtype("<f4")

MANIFEST_COLUMNS = ["image", "clean_mask", "noisy_mask", "split"]
TRACE_COLUMNS = ["epoch", "sigma_u", "delta_sigma_u", "d_clean", "d_noisy"]


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise InputFormatError(f"Cannot read {path}: {e}", path=str(path))


def _write_bytes(path: PathLike, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise MaskWriteError(f"Cannot write {path}: {e}")


# --- graymaps -------------------------------------------------------------


def _graymap_tokens(raw: bytes, count: int, path: PathLike) -> Tuple[List[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns:
        The tokens and the offset just past the whitespace byte following the last one
    """
    tokens: List[bytes] = []
    position = 0
    length = len(raw)
    while len(tokens) < count:
        while position < length and raw[position : position + 1].isspace():
            position += 1
        if position >= length:
            raise HeaderError(f"{path}: header ends after {len(tokens)} fields", path=str(path))
        if raw[position : position + 1] == b"#":
            while position < length and raw[position : position + 1] not in (b"\n", b"\r"):
                position += 1
            continue
        start = position
        while position < length and not raw[position : position + 1].isspace():
            position += 1
        tokens.append(raw[start:position])
    # exactly one whitespace byte separates the header from a binary payload
    return tokens, position + 1


def _decode_graymap(raw: bytes, path: PathLike) -> Tuple[np.ndarray, int]:
    if len(raw) < 2 or raw[:2] not in (b"P5", b"P2"):
        raise HeaderError(f"{path}: not a P5/P2 graymap", path=str(path))
    tokens, offset = _graymap_tokens(raw, 4, path)
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError:
        raise HeaderError(f"{path}: non-numeric header field", path=str(path))
    if width < 1 or height < 1:
        raise HeaderError(f"{path}: dimensions must be positive, got {width}x{height}", path=str(path))
    if not 1 <= maxval <= 255:
        raise HeaderError(f"{path}: maxval must be within 1..255, got {maxval}", path=str(path))

    expected = width * height
    if tokens[0] == b"P5":
        payload = raw[offset:]
        if len(payload) < expected:
            raise TruncatedPayloadError("payload shorter than header dims", path=str(path))
        if len(payload) > expected:
            raise DimensionMismatchError("payload longer than header dims", path=str(path))
        values = np.frombuffer(payload, dtype=np.uint8)
    else:
        try:
            values = np.array([int(v) for v in raw[offset - 1 :].split()], dtype=np.int64)
        except ValueError:
            raise HeaderError(f"{path}: non-numeric plain graymap value", path=str(path))
        if len(values) < expected:
            raise TruncatedPayloadError("payload shorter than header dims", path=str(path))
        if len(values) > expected:
            raise DimensionMismatchError("payload longer than header dims", path=str(path))
    if values.max(initial=0) > maxval:
        raise HeaderError(f"{path}: pixel value exceeds maxval {maxval}", path=str(path))
    return values.reshape(height, width), maxval


def _encode_graymap(values: np.ndarray) -> bytes:
    height, width = values.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(values, dtype=np.uint8).tobytes()


def read_mask(path: PathLike) -> BinaryMask:
    """Read a graymap as a binary mask; any stored value above 0 is foreground."""
    values, _ = _decode_graymap(_read_bytes(path), path)
    return BinaryMask(values > 0)


def write_mask(mask: BinaryMask, path: PathLike) -> None:
    """Write a mask as a P5 graymap with values 0 and 255."""
    _write_bytes(path, _encode_graymap(mask.data * 255))


def read_image(path: PathLike) -> GrayImage:
    """Read a graymap as intensities ``value / maxval``."""
    values, maxval = _decode_graymap(_read_bytes(path), path)
    return GrayImage(values.astype(np.float64) / maxval)


def write_image(image: GrayImage, path: PathLike) -> None:
    """Write an image as an 8-bit P5 graymap (intensities rounded to 1/255 steps)."""
    _write_bytes(path, _encode_graymap(quantize_intensities(image.data)))


def quantize_intensities(data: np.ndarray) -> np.ndarray:
    """Map [0, 1] intensities onto 8-bit levels."""
    return np.rint(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


# --- ensemble container ----------------------------------------------------


def encode_stack(stack: np.ndarray) -> bytes:
    n, height, width = stack.shape
    header = _ENSEMBLE_HEADER.pack(ENSEMBLE_MAGIC, ENSEMBLE_VERSION, n, height, width)
    return header + np.ascontiguousarray(stack, dtype=_FLOAT32_LE).tobytes()


def decode_stack(raw: bytes, path: PathLike = "<bytes>") -> np.ndarray:
    """Decode a UENS payload into an N×H×W float64 array."""
    if len(raw) < _ENSEMBLE_HEADER.size:
        raise TruncatedPayloadError("file shorter than the ensemble header", path=str(path))
    magic, version, n, height, width = _ENSEMBLE_HEADER.unpack_from(raw)
    if magic != ENSEMBLE_MAGIC:
        raise MagicMismatchError(f"{path}: bad magic {magic!r}", path=str(path))
    if version != ENSEMBLE_VERSION:
        raise HeaderError(f"{path}: unsupported version {version}", path=str(path))
    if n < 1:
        raise HeaderError("ensemble must have n >= 1", path=str(path))
    if height < 1 or width < 1:
        raise HeaderError(f"{path}: dimensions must be positive", path=str(path))
    payload = raw[_ENSEMBLE_HEADER.size :]
    expected = n * height * width * _FLOAT32_LE.itemsize
    if len(payload) < expected:
        raise TruncatedPayloadError("payload shorter than header dims", path=str(path))
    if len(payload) > expected:
        raise DimensionMismatchError(
            f"{path}: payload holds {len(payload)} bytes, header announces {expected}",
            path=str(path),
        )
    values = np.frombuffer(payload, dtype=_FLOAT32_LE).astype(np.float64)
    return values.reshape(n, height, width)


def read_ensemble(path: PathLike) -> PredictionEnsemble:
    return PredictionEnsemble.from_array(decode_stack(_read_bytes(path), path))


def write_ensemble(ensemble: PredictionEnsemble, path: PathLike) -> None:
    _write_bytes(path, encode_stack(ensemble.stack()))


def read_uncertainty(path: PathLike) -> UncertaintyMap:
    stack = decode_stack(_read_bytes(path), path)
    if stack.shape[0] != 1:
        raise DimensionMismatchError(
            f"{path}: uncertainty container must hold one map, found {stack.shape[0]}",
            path=str(path),
        )
    return UncertaintyMap(stack[0])


def write_uncertainty(umap: UncertaintyMap, path: PathLike) -> None:
    _write_bytes(path, encode_stack(umap.data[np.newaxis]))


# --- manifests ---------------------------------------------------------------


def _resolve(root: Path, value: str) -> Optional[Path]:
    value = value.strip()
    if not value:
        return None
    path = Path(value)
    return path if path.is_absolute() else (root / path)


def read_manifest(path: PathLike, require_files: bool = True) -> Manifest:
    """Read a manifest CSV, resolving paths against its directory.

    Args:
        path: Manifest location
        require_files: Fail when a referenced file does not exist

    Raises:
        ManifestError: On missing columns, unknown splits or missing files
    """
    manifest_path = Path(path)
    root = manifest_path.parent
    try:
        with open(manifest_path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or list(reader.fieldnames) != MANIFEST_COLUMNS:
                raise ManifestError(
                    f"{path}: header must be {','.join(MANIFEST_COLUMNS)}, got {reader.fieldnames}"
                )
            rows = list(reader)
    except OSError as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}")

    entries = []
    for line, row in enumerate(rows, start=2):
        try:
            split = Split(row["split"].strip())
        except ValueError:
            raise ManifestError(f"{path}:{line}: split must be train or test, got {row['split']!r}")
        image = _resolve(root, row["image"])
        if image is None:
            raise ManifestError(f"{path}:{line}: image path is empty")
        entry = ManifestEntry(
            image=image,
            clean_mask=_resolve(root, row["clean_mask"]),
            noisy_mask=_resolve(root, row["noisy_mask"]),
            split=split,
        )
        if require_files:
            for file in (entry.image, entry.clean_mask, entry.noisy_mask):
                if file is not None and not file.exists():
                    raise ManifestError(f"{path}:{line}: missing file {file}")
        entries.append(entry)

    logger.debug(f"Manifest {path}: {len(entries)} entries")
    return Manifest(root=root, entries=entries)


def _relative(root: Path, file: Optional[Path]) -> str:
    if file is None:
        return ""
    try:
        return file.relative_to(root).as_posix()
    except ValueError:
        return str(file)


def write_manifest(manifest: Manifest, path: PathLike) -> None:
    """Write a manifest CSV with paths relative to its own directory."""
    manifest_path = Path(path)
    root = manifest_path.parent
    try:
        with open(manifest_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(MANIFEST_COLUMNS)
            for entry in manifest.entries:
                writer.writerow(
                    [
                        _relative(root, entry.image),
                        _relative(root, entry.clean_mask),
                        _relative(root, entry.noisy_mask),
                        entry.split.value,
                    ]
                )
    except OSError as e:
        raise MaskWriteError(f"Cannot write manifest {path}: {e}")


# --- traces and tables -------------------------------------------------------


def _format_float(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _parse_float(value: str) -> Optional[float]:
    value = value.strip()
    return float(value) if value else None


def write_trace(trace: TrainingTrace, path: PathLike) -> None:
    """Write a trace as ``epoch,sigma_u,delta_sigma_u,d_clean,d_noisy`` CSV."""
    write_table(
        path,
        TRACE_COLUMNS,
        (
            [
                str(r.epoch),
                _format_float(r.sigma_u),
                _format_float(r.delta_sigma_u),
                _format_float(r.d_clean),
                _format_float(r.d_noisy),
            ]
            for r in trace
        ),
    )


def read_trace(path: PathLike) -> TrainingTrace:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or not set(TRACE_COLUMNS[:2]) <= set(reader.fieldnames):
                raise InputFormatError(f"{path}: trace needs epoch and sigma_u columns", path=str(path))
            records = [
                EpochRecord(
                    epoch=int(row["epoch"]),
                    sigma_u=float(row["sigma_u"]),
                    delta_sigma_u=_parse_float(row.get("delta_sigma_u") or ""),
                    d_clean=_parse_float(row.get("d_clean") or ""),
                    d_noisy=_parse_float(row.get("d_noisy") or ""),
                )
                for row in reader
            ]
    except OSError as e:
        raise InputFormatError(f"Cannot read trace {path}: {e}", path=str(path))
    except ValueError as e:
        raise InputFormatError(f"{path}: malformed trace row: {e}", path=str(path))
    return TrainingTrace(records)


def write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise MaskWriteError(f"Cannot write {path}: {e}")

"""Synthetic annotation noise: crude polygon and smooth-curve versions of clean masks.

The boundary of the largest foreground component is traced into a closed
polygon through pixel centers, reduced to a handful of vertices with
Visvalingam–Whyatt elimination, and rasterized either directly or through a
closed centripetal Catmull-Rom spline.
"""

from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from loguru import logger
from scipy import ndimage

from exceptions import EmptyMaskError, InvariantError, ParameterError
from models.grids import BinaryMask, Polygon
from models.manifest import Manifest
from models.specs import NoiseKind, NoiseSpec
from services import codecs

# Moore neighborhood as (row, column) offsets, clockwise on screen starting west.
_MOORE_RING: Tuple[Tuple[int, int], ...] = (
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
)
_RING_INDEX = {offset: index for index, offset in enumerate(_MOORE_RING)}

CATMULL_ROM_ALPHA = 0.5
_KNOT_EPSILON = 1e-9
_EDGE_TOLERANCE = 1e-9


def largest_component(mask: BinaryMask) -> np.ndarray:
    """Boolean grid of the largest 4-connected foreground component.

    Ties between equally large components go to the lowest label, i.e. the
    component met first in raster order.

    Raises:
        EmptyMaskError: If the mask has no foreground
    """
    labels, count = ndimage.label(mask.data)
    if count == 0:
        raise EmptyMaskError("no foreground component")
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def _outline(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Corner outline of the bounding box of the given pixels."""
    top, bottom = float(rows.min()), float(rows.max() + 1)
    left, right = float(cols.min()), float(cols.max() + 1)
    return np.array([[left, top], [right, top], [right, bottom], [left, bottom]])


def _moore_trace(component: np.ndarray) -> List[Tuple[int, int]]:
    """Ordered boundary pixels of a single 8-connected component.

    Starts at the first pixel in raster order, entered from the west, and
    stops when the first move is about to repeat.
    """
    padded = np.pad(component, 1)
    rows, cols = np.nonzero(padded)
    start = (int(rows[0]), int(cols[0]))

    def step(current: Tuple[int, int], backtrack: Tuple[int, int]):
        offset = (backtrack[0] - current[0], backtrack[1] - current[1])
        first = _RING_INDEX[offset]
        previous = backtrack
        for turn in range(1, 9):
            dr, dc = _MOORE_RING[(first + turn) % 8]
            candidate = (current[0] + dr, current[1] + dc)
            if padded[candidate]:
                return candidate, previous
            previous = candidate
        return None, None

    first_pixel, first_backtrack = step(start, (start[0], start[1] - 1))
    if first_pixel is None:
        return [(start[0] - 1, start[1] - 1)]

    contour = [start]
    current, backtrack = first_pixel, first_backtrack
    limit = 4 * int(component.sum()) + 8
    while len(contour) <= limit:
        nxt, nxt_backtrack = step(current, backtrack)
        if current == start and nxt == first_pixel:
            break
        contour.append(current)
        current, backtrack = nxt, nxt_backtrack
    return [(r - 1, c - 1) for r, c in contour]


def trace_boundary(mask: BinaryMask) -> Polygon:
    """Closed boundary polygon of the largest 4-connected foreground component.

    One vertex per boundary pixel, placed at the pixel center, ordered
    counterclockwise (positive shoelace area in the x = column, y = row frame).
    A lone pixel traces to its four corners, and so does any component whose
    center trace encloses no area (a one-pixel-thick line), using the corners
    of its bounding box.

    Raises:
        EmptyMaskError: If the mask is empty
    """
    component = largest_component(mask)
    contour = _moore_trace(component)

    distinct = {pixel for pixel in contour}
    if len(distinct) < 3:
        rows, cols = np.nonzero(component)
        return Polygon(_outline(rows, cols))

    vertices = np.array([[c + 0.5, r + 0.5] for r, c in contour], dtype=np.float64)
    polygon = Polygon(vertices)
    if polygon.signed_area() == 0:
        logger.debug("Boundary trace encloses no area; using the bounding-box outline")
        rows, cols = np.nonzero(component)
        return Polygon(_outline(rows, cols))
    if polygon.signed_area() < 0:
        polygon = Polygon(vertices[::-1].copy())
    return polygon


def _triangle_areas(points: np.ndarray) -> np.ndarray:
    before = np.roll(points, 1, axis=0)
    after = np.roll(points, -1, axis=0)
    return 0.5 * np.abs(
        (before[:, 0] - after[:, 0]) * (points[:, 1] - before[:, 1])
        - (before[:, 0] - points[:, 0]) * (after[:, 1] - before[:, 1])
    )


def simplify_polygon(polygon: Polygon, k: int) -> Polygon:
    """Reduce a polygon to exactly ``k`` of its own vertices (Visvalingam–Whyatt).

    The vertex whose triangle with its current neighbours has the smallest
    area is removed until ``k`` remain; ties go to the lowest index. A vertex
    whose two neighbours coincide (the tip of a one-pixel spur) is never
    removed, since its neighbours would become consecutive duplicates.

    Raises:
        ParameterError: If ``k < 3`` or ``k`` exceeds the vertex count
        InvariantError: If every remaining vertex is such a tip, which only
            happens for a polygon that folds back on itself with zero area
    """
    if k < 3 or k > polygon.size:
        raise ParameterError(f"k must lie within [3, {polygon.size}], got {k}")

    points = polygon.vertices.copy()
    while len(points) > k:
        areas = _triangle_areas(points)
        spur_tips = np.all(np.roll(points, 1, axis=0) == np.roll(points, -1, axis=0), axis=1)
        areas[spur_tips] = np.inf
        index = int(np.argmin(areas))
        if spur_tips[index]:
            raise InvariantError(
                f"cannot reduce a folded polygon to {k} vertices without repeating vertices"
            )
        points = np.delete(points, index, axis=0)
    return Polygon(points)


def polygon_to_mask(polygon: Polygon, height: int, width: int) -> BinaryMask:
    """Scanline even-odd rasterization of a closed polygon.

    A pixel is foreground when its center lies inside the polygon or on one of
    its edges.
    """
    if height < 1 or width < 1:
        raise ParameterError(f"target dimensions must be positive, got {height}x{width}")
    vertices = polygon.vertices
    x0, y0 = vertices[:, 0], vertices[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)

    centers_x = np.arange(width) + 0.5
    centers_y = np.arange(height) + 0.5
    grid = np.zeros((height, width), dtype=bool)

    for row, cy in enumerate(centers_y):
        # half-open rule: an edge counts when it straddles the scanline
        crossing = (y0 <= cy) != (y1 <= cy)
        if np.any(crossing):
            ax, ay, bx, by = x0[crossing], y0[crossing], x1[crossing], y1[crossing]
            xs = np.sort(ax + (cy - ay) * (bx - ax) / (by - ay))
            counts = np.searchsorted(xs, centers_x, side="right")
            grid[row] = (len(xs) - counts) % 2 == 1

    grid |= _on_edges(vertices, centers_x, centers_y)
    return BinaryMask(grid)


def _on_edges(vertices: np.ndarray, centers_x: np.ndarray, centers_y: np.ndarray) -> np.ndarray:
    """Pixel centers lying on any polygon edge."""
    height, width = len(centers_y), len(centers_x)
    on_edge = np.zeros((height, width), dtype=bool)
    following = np.roll(vertices, -1, axis=0)
    for (ax, ay), (bx, by) in zip(vertices, following):
        r0 = max(int(np.floor(min(ay, by) - 0.5)), 0)
        r1 = min(int(np.ceil(max(ay, by) - 0.5)), height - 1)
        c0 = max(int(np.floor(min(ax, bx) - 0.5)), 0)
        c1 = min(int(np.ceil(max(ax, bx) - 0.5)), width - 1)
        if r0 > r1 or c0 > c1:
            continue
        py = centers_y[r0 : r1 + 1, np.newaxis]
        px = centers_x[np.newaxis, c0 : c1 + 1]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        scale = max(abs(bx - ax), abs(by - ay), 1.0)
        within = (
            (px >= min(ax, bx) - _EDGE_TOLERANCE)
            & (px <= max(ax, bx) + _EDGE_TOLERANCE)
            & (py >= min(ay, by) - _EDGE_TOLERANCE)
            & (py <= max(ay, by) + _EDGE_TOLERANCE)
        )
        on_edge[r0 : r1 + 1, c0 : c1 + 1] |= within & (np.abs(cross) <= _EDGE_TOLERANCE * scale)
    return on_edge


def catmull_rom_closed(vertices: np.ndarray, samples_per_segment: int) -> np.ndarray:
    """Sample a closed centripetal Catmull-Rom spline through ``vertices``.

    Each segment ``P_i -> P_{i+1}`` is sampled at ``samples_per_segment``
    parameter values including its start and excluding its end.
    """
    if samples_per_segment < 2:
        raise ParameterError(f"samples_per_segment must be >= 2, got {samples_per_segment}")
    p0 = np.roll(vertices, 1, axis=0)[:, np.newaxis, :]
    p1 = vertices[:, np.newaxis, :]
    p2 = np.roll(vertices, -1, axis=0)[:, np.newaxis, :]
    p3 = np.roll(vertices, -2, axis=0)[:, np.newaxis, :]

    def knot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        distance = np.linalg.norm(b - a, axis=-1, keepdims=True)
        return np.maximum(distance**CATMULL_ROM_ALPHA, _KNOT_EPSILON)

    t0 = np.zeros_like(p1[..., :1])
    t1 = t0 + knot(p0, p1)
    t2 = t1 + knot(p1, p2)
    t3 = t2 + knot(p2, p3)

    fractions = np.arange(samples_per_segment)[np.newaxis, :, np.newaxis] / samples_per_segment
    t = t1 + (t2 - t1) * fractions

    # Barry–Goldman pyramid
    a1 = ((t1 - t) * p0 + (t - t0) * p1) / (t1 - t0)
    a2 = ((t2 - t) * p1 + (t - t1) * p2) / (t2 - t1)
    a3 = ((t3 - t) * p2 + (t - t2) * p3) / (t3 - t2)
    b1 = ((t2 - t) * a1 + (t - t0) * a2) / (t2 - t0)
    b2 = ((t3 - t) * a2 + (t - t1) * a3) / (t3 - t1)
    curve = ((t2 - t) * b1 + (t - t1) * b2) / (t2 - t1)
    return curve.reshape(-1, 2)


def _drop_repeats(points: np.ndarray) -> np.ndarray:
    keep = ~np.all(np.isclose(points, np.roll(points, 1, axis=0), rtol=0.0, atol=1e-12), axis=1)
    return points[keep] if keep.any() else points[:1]


def smooth_curve_to_mask(
    polygon: Polygon, samples_per_segment: int, height: int, width: int
) -> BinaryMask:
    """Rasterize the closed spline through the polygon's vertices."""
    samples = _drop_repeats(catmull_rom_closed(polygon.vertices, samples_per_segment))
    if len(samples) < 3 or not np.isfinite(samples).all():
        logger.debug("Spline collapsed; rasterizing the control polygon instead")
        return polygon_to_mask(polygon, height, width)
    return polygon_to_mask(Polygon(samples), height, width)


def corrupt(mask: BinaryMask, spec: NoiseSpec) -> BinaryMask:
    """Turn a clean mask into a crude annotation of its largest component."""
    boundary = trace_boundary(mask)
    vertex_count = min(spec.vertex_count, boundary.size)
    reduced = simplify_polygon(boundary, vertex_count)
    if spec.kind == NoiseKind.SMOOTH:
        noisy = smooth_curve_to_mask(reduced, spec.samples_per_segment, mask.height, mask.width)
    else:
        noisy = polygon_to_mask(reduced, mask.height, mask.width)
    logger.debug(
        f"Corrupted mask ({spec.kind.value}/{spec.vertex_count}): "
        f"{mask.foreground_count} -> {noisy.foreground_count} foreground pixels"
    )
    return noisy


def corrupt_manifest(
    manifest: Manifest, spec: NoiseSpec, out_dir: Union[str, Path]
) -> Manifest:
    """Corrupt every clean mask of a manifest and return the updated manifest.

    Noisy masks are written to ``out_dir`` as ``<image stem>.pgm``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in manifest.entries:
        if entry.clean_mask is None:
            raise ParameterError(f"{entry.image}: no clean mask to corrupt")
        noisy = corrupt(codecs.read_mask(entry.clean_mask), spec)
        noisy_path = out / f"{entry.name}.pgm"
        codecs.write_mask(noisy, noisy_path)
        entries.append(entry.model_copy(update={"noisy_mask": noisy_path}))
    logger.info(f"Wrote {len(entries)} noisy masks to {out}")
    return Manifest(root=manifest.root, entries=entries)

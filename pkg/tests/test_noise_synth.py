"""Tests for boundary tracing, vertex reduction, rasterization and mask corruption."""

import numpy as np
import pytest

from exceptions import EmptyMaskError, InvariantError, ParameterError
from models.grids import BinaryMask, Polygon
from models.manifest import Manifest, ManifestEntry, Split
from models.specs import NoiseKind, NoiseSpec
from services import codecs
from services.metrics import dice
from services.noise_synth import (
    catmull_rom_closed,
    corrupt,
    corrupt_manifest,
    polygon_to_mask,
    simplify_polygon,
    smooth_curve_to_mask,
    trace_boundary,
)


def _point_in_polygon(x: float, y: float, vertices: np.ndarray) -> bool:
    """Plain even-odd ray casting toward +x."""
    inside = False
    count = len(vertices)
    for i in range(count):
        xi, yi = vertices[i]
        xj, yj = vertices[(i + 1) % count]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
    return inside


def _square_mask(size: int, top: int, left: int, side: int) -> BinaryMask:
    data = np.zeros((size, size), dtype=np.uint8)
    data[top : top + side, left : left + side] = 1
    return BinaryMask(data)


class TestTraceBoundary:
    def test_single_pixel_traces_to_its_corners(self):
        mask = BinaryMask.zeros(5, 5)
        data = mask.data.copy()
        data[2, 2] = 1
        polygon = trace_boundary(BinaryMask(data))
        assert polygon.size == 4
        assert {tuple(v) for v in polygon.vertices} == {(2.0, 2.0), (3.0, 2.0), (3.0, 3.0), (2.0, 3.0)}
        assert polygon.signed_area() == pytest.approx(1.0)

    def test_filled_square_has_eight_boundary_vertices(self):
        polygon = trace_boundary(_square_mask(5, 1, 1, 3))
        assert polygon.size == 8
        expected = {(c + 0.5, r + 0.5) for r in range(1, 4) for c in range(1, 4) if (r, c) != (2, 2)}
        assert {tuple(v) for v in polygon.vertices} == expected

    def test_orientation_is_counterclockwise(self, ellipse):
        polygon = trace_boundary(ellipse(32, 32, 16, 16, 9, 12, 0.4))
        assert polygon.signed_area() > 0

    def test_largest_component_only(self):
        data = np.zeros((12, 12), dtype=np.uint8)
        data[1:3, 1:3] = 1
        data[5:10, 5:10] = 1
        polygon = trace_boundary(BinaryMask(data))
        assert polygon.vertices[:, 0].min() >= 5.5

    def test_one_pixel_thick_line_traces_to_its_outline(self):
        data = np.zeros((5, 7), dtype=np.uint8)
        data[2, 2:5] = 1
        polygon = trace_boundary(BinaryMask(data))
        corners = {(2.0, 2.0), (5.0, 2.0), (5.0, 3.0), (2.0, 3.0)}
        assert {tuple(v) for v in polygon.vertices} == corners
        assert polygon.signed_area() == pytest.approx(3.0)

    def test_empty_mask(self):
        with pytest.raises(EmptyMaskError, match="no foreground component"):
            trace_boundary(BinaryMask.zeros(4, 4))


class TestSimplifyPolygon:
    SQUARE = np.array(
        [[0, 0], [1, 0], [2, 0], [2, 1], [2, 2], [1, 2], [0, 2], [0, 1]], dtype=np.float64
    )

    def test_square_keeps_its_corners(self):
        reduced = simplify_polygon(Polygon(self.SQUARE), 4)
        np.testing.assert_array_equal(reduced.vertices, [[0, 0], [2, 0], [2, 2], [0, 2]])

    def test_identity_when_k_equals_size(self):
        polygon = Polygon(self.SQUARE)
        assert simplify_polygon(polygon, polygon.size) == polygon

    def test_triangle_is_subset_of_contour(self, ellipse):
        boundary = trace_boundary(ellipse(40, 40, 20, 20, 10, 15))
        triangle = simplify_polygon(boundary, 3)
        assert triangle.size == 3
        contour = {tuple(v) for v in boundary.vertices}
        assert all(tuple(v) in contour for v in triangle.vertices)

    def test_ties_go_to_lowest_index(self):
        # every corner of a unit square spans the same triangle area
        square = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
        reduced = simplify_polygon(square, 3)
        np.testing.assert_array_equal(reduced.vertices, square.vertices[1:])

    def test_spur_tip_is_kept_until_its_base_goes(self):
        spur = np.array(
            [[0, 0], [4, 0], [4, 2], [6, 2], [4, 2], [4, 4], [0, 4]], dtype=np.float64
        )
        reduced = simplify_polygon(Polygon(spur), 4)
        np.testing.assert_array_equal(reduced.vertices, [[0, 0], [4, 0], [4, 4], [0, 4]])

    def test_folded_polygon_cannot_be_reduced(self):
        folded = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(InvariantError, match="folded polygon"):
            simplify_polygon(folded, 3)

    @pytest.mark.parametrize("k", [2, 9])
    def test_invalid_k(self, k):
        with pytest.raises(ParameterError):
            simplify_polygon(Polygon(self.SQUARE), k)


class TestPolygonToMask:
    def test_lower_left_triangle(self):
        triangle = Polygon(np.array([[0.5, 0.5], [6.5, 0.5], [0.5, 6.5]]))
        mask = polygon_to_mask(triangle, 8, 8)
        rows, cols = np.mgrid[0:8, 0:8]
        np.testing.assert_array_equal(mask.data, (rows + cols <= 6).astype(np.uint8))

    def test_matches_point_in_polygon_oracle(self):
        gen = np.random.default_rng(2024)
        for _ in range(200):
            count = int(gen.integers(3, 13))
            vertices = gen.uniform(0.0, 32.0, size=(count, 2))
            mask = polygon_to_mask(Polygon(vertices), 32, 32)
            expected = np.array(
                [
                    [_point_in_polygon(c + 0.5, r + 0.5, vertices) for c in range(32)]
                    for r in range(32)
                ],
                dtype=np.uint8,
            )
            np.testing.assert_array_equal(mask.data, expected)

    def test_near_collinear_polygon(self):
        sliver = Polygon(np.array([[0.5, 0.5], [10.5, 0.50001], [20.5, 0.5]]))
        mask = polygon_to_mask(sliver, 8, 24)
        assert mask.shape == (8, 24)
        assert mask.foreground_count <= 24

    def test_rasterized_trace_reproduces_convex_masks(self, random_ellipses):
        for mask in random_ellipses(20):
            restored = polygon_to_mask(trace_boundary(mask), mask.height, mask.width)
            assert dice(restored, mask) >= 0.99


class TestSmoothCurve:
    @staticmethod
    def _circle_polygon(count: int, radius: float, center: float) -> Polygon:
        angles = np.arange(count) * 2 * np.pi / count
        return Polygon(
            np.stack([center + radius * np.cos(angles), center + radius * np.sin(angles)], axis=1)
        )

    @pytest.mark.parametrize("count, tolerance", [(4, 0.15), (8, 0.10)])
    def test_disk_area(self, count, tolerance):
        radius = 24.0
        mask = smooth_curve_to_mask(self._circle_polygon(count, radius, 32.0), 64, 64, 64)
        disk = np.pi * radius**2
        assert abs(mask.foreground_count - disk) / disk < tolerance

    def test_curve_passes_through_vertices(self):
        vertices = self._circle_polygon(5, 10.0, 16.0).vertices
        samples = catmull_rom_closed(vertices, 6)
        np.testing.assert_allclose(samples[::6], vertices, atol=1e-9)

    def test_two_samples_stay_close_to_polygon(self):
        polygon = self._circle_polygon(6, 20.0, 32.0)
        smooth = smooth_curve_to_mask(polygon, 2, 64, 64)
        assert dice(smooth, polygon_to_mask(polygon, 64, 64)) >= 0.85

    def test_collinear_control_points(self):
        line = Polygon(np.array([[1.0, 1.0], [5.0, 5.0], [9.0, 9.0]]))
        samples = catmull_rom_closed(line.vertices, 8)
        assert np.isfinite(samples).all()
        mask = smooth_curve_to_mask(line, 8, 12, 12)
        assert mask.shape == (12, 12)


class TestCorrupt:
    def test_triangle_noise_bounds(self, random_ellipses):
        spec = NoiseSpec(kind=NoiseKind.POLYGON, vertex_count=3)
        for mask in random_ellipses(100):
            score = dice(corrupt(mask, spec), mask)
            assert 0.3 < score < 0.95

    def test_exact_vertex_count_is_near_identity(self):
        mask = _square_mask(8, 2, 2, 3)
        noisy = corrupt(mask, NoiseSpec(kind=NoiseKind.POLYGON, vertex_count=8))
        assert dice(noisy, mask) >= 0.99

    @pytest.mark.parametrize("kind", [NoiseKind.POLYGON, NoiseKind.SMOOTH])
    def test_dimensions_preserved(self, ellipse, kind):
        mask = ellipse(30, 41, 15, 20, 8, 12)
        assert corrupt(mask, NoiseSpec(kind=kind, vertex_count=5)).shape == (30, 41)

    @pytest.mark.parametrize("kind", [NoiseKind.POLYGON, NoiseKind.SMOOTH])
    def test_one_pixel_thick_line(self, kind):
        data = np.zeros((5, 7), dtype=np.uint8)
        data[2, 2:5] = 1
        noisy = corrupt(BinaryMask(data), NoiseSpec(kind=kind, vertex_count=3))
        assert noisy.shape == (5, 7)
        assert noisy.foreground_count > 0

    def test_empty_mask(self):
        with pytest.raises(EmptyMaskError):
            corrupt(BinaryMask.zeros(6, 6), NoiseSpec())

    def test_severity_ordering(self, random_ellipses):
        masks = random_ellipses(100, seed=11)
        coarse = np.mean([dice(corrupt(m, NoiseSpec(vertex_count=3)), m) for m in masks])
        fine = np.mean([dice(corrupt(m, NoiseSpec(vertex_count=7)), m) for m in masks])
        assert fine - coarse >= 0.05

    def test_corrupt_manifest_writes_noisy_masks(self, tmp_path, ellipse):
        clean_path = tmp_path / "clean.pgm"
        codecs.write_mask(ellipse(24, 24, 12, 12, 6, 8), clean_path)
        manifest = Manifest(
            root=tmp_path,
            entries=[
                ManifestEntry(image=clean_path, clean_mask=clean_path, split=Split.TRAIN)
            ],
        )
        updated = corrupt_manifest(manifest, NoiseSpec(vertex_count=4), tmp_path / "noisy")
        noisy_path = updated.entries[0].noisy_mask
        assert noisy_path == tmp_path / "noisy" / "clean.pgm"
        assert codecs.read_mask(noisy_path).shape == (24, 24)

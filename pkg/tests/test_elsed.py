import math

import numpy as np
import pytest

from oracles import anchors_brute, bresenham_midpoint
from pitchlines.elsed import (
    Anchor,
    DetectorParams,
    Segment,
    bresenham,
    detect,
    draw_segments,
    extract_anchors,
    validate_segment,
)
from pitchlines.errors import InvalidParam
from pitchlines.imaging import (
    GradientField,
    HORIZONTAL_EDGE,
    VERTICAL_EDGE,
    gaussian_smooth,
    sobel_gradients,
    to_gray,
)


def rgb(gray2d: np.ndarray) -> np.ndarray:
    return np.repeat(gray2d[:, :, None], 3, axis=2).astype(np.uint8)


def pipeline_field(gray2d: np.ndarray, threshold: int = 30) -> GradientField:
    smooth = gaussian_smooth(gray2d, 5, 1.0)
    return sobel_gradients(smooth, threshold)


def aa_vertical_step(h: int = 64, w: int = 64, pos: float = 31.3) -> np.ndarray:
    """Dark-to-bright step at fractional column pos, single-pixel coverage ramp."""
    cov = np.clip(np.arange(w) + 0.5 - pos, 0.0, 1.0)
    img = np.floor(255.0 * cov + 0.5).astype(np.uint8)
    return np.tile(img, (h, 1))


def assert_chain_invariants(seg: Segment, fit_tol: float = 2.0) -> None:
    pts = seg.pixels
    assert pts.ndim == 2 and pts.shape[1] == 2
    steps = np.diff(pts, axis=0)
    assert np.all(np.abs(steps) <= 1), "chain must be 8-connected"
    assert np.all(np.any(steps != 0, axis=1)), "chain must not repeat a pixel"
    as_set = {(int(x), int(y)) for x, y in pts}
    assert len(as_set) == len(pts), "chain pixels must be unique"
    # every traversed pixel stays close to the reported line
    p1 = np.array([seg.x1, seg.y1])
    d = np.array([seg.x2 - seg.x1, seg.y2 - seg.y1])
    n = np.hypot(d[0], d[1])
    assert n > 0
    normal = np.array([-d[1], d[0]]) / n
    dist = np.abs((pts - p1) @ normal)
    assert dist.max() <= fit_tol + 1e-6


class TestBresenham:
    def test_single_point(self):
        assert bresenham(3, -2, 3, -2) == [(3, -2)]

    def test_axis_lines(self):
        assert bresenham(0, 0, 3, 0) == [(0, 0), (1, 0), (2, 0), (3, 0)]
        assert bresenham(0, 2, 0, 0) == [(0, 2), (0, 1), (0, 0)]

    def test_exact_diagonal(self):
        assert bresenham(0, 0, 3, 3) == [(0, 0), (1, 1), (2, 2), (3, 3)]
        assert bresenham(0, 0, -3, 3) == [(0, 0), (-1, 1), (-2, 2), (-3, 3)]

    def test_matches_midpoint_oracle_exhaustively(self):
        for x0 in range(12):
            for y0 in range(12):
                for x1 in range(12):
                    for y1 in range(12):
                        got = bresenham(x0, y0, x1, y1)
                        want = bresenham_midpoint(x0, y0, x1, y1)
                        assert got == want, (x0, y0, x1, y1)

    def test_line_properties_random(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            x0, y0, x1, y1 = rng.integers(-40, 41, size=4)
            pts = bresenham(int(x0), int(y0), int(x1), int(y1))
            assert pts[0] == (x0, y0)
            assert pts[-1] == (x1, y1)
            assert len(pts) == max(abs(x1 - x0), abs(y1 - y0)) + 1
            steps = np.diff(np.asarray(pts), axis=0)
            if len(steps):
                assert np.abs(steps).max() <= 1
                assert np.all(np.any(steps != 0, axis=1))


class TestExtractAnchors:
    def random_field(self, seed: int) -> GradientField:
        rng = np.random.default_rng(seed)
        img = rng.integers(0, 256, size=(24, 24), dtype=np.uint8)
        return pipeline_field(img, threshold=10)

    @pytest.mark.parametrize("scan_interval", [1, 2, 3])
    @pytest.mark.parametrize("threshold", [1, 8])
    def test_matches_brute_force(self, scan_interval, threshold):
        for seed in range(10):
            field = self.random_field(seed)
            got = extract_anchors(field, scan_interval, threshold)
            assert {(a.x, a.y) for a in got} == anchors_brute(field, scan_interval, threshold)
            for a in got:
                assert a.orient == field.orient[a.y, a.x]

    def test_sorted_by_descending_magnitude(self):
        field = self.random_field(42)
        anchors = extract_anchors(field, 1, 1)
        assert len(anchors) > 5
        keys = [(-int(field.mag[a.y, a.x]), a.y, a.x) for a in anchors]
        assert keys == sorted(keys)

    def test_denser_scan_is_superset(self):
        field = self.random_field(3)
        sparse = {(a.x, a.y) for a in extract_anchors(field, 3, 8)}
        dense = {(a.x, a.y) for a in extract_anchors(field, 1, 8)}
        assert sparse <= dense

    def test_higher_threshold_is_subset(self):
        field = self.random_field(4)
        strict = {(a.x, a.y) for a in extract_anchors(field, 1, 16)}
        loose = {(a.x, a.y) for a in extract_anchors(field, 1, 8)}
        assert strict <= loose

    def test_symmetric_step_has_twin_peaks_and_no_anchors(self):
        # A step on the pixel grid smooths into two equal magnitude
        # columns; neither beats the other by the margin, so no anchors.
        img = np.zeros((64, 64), dtype=np.uint8)
        img[:, 32:] = 255
        field = pipeline_field(img)
        row = field.mag[20].astype(int)
        top_two = np.sort(row)[-2:]
        assert top_two[0] == top_two[1] > 0
        assert extract_anchors(field, 2, 8) == []

    def test_fractional_step_anchors_on_peak_column(self):
        field = pipeline_field(aa_vertical_step())
        anchors = extract_anchors(field, 2, 8)
        assert len(anchors) > 10
        assert {a.x for a in anchors} == {31}
        assert all(a.orient == VERTICAL_EDGE for a in anchors)

    def test_invalid_scan_interval(self):
        field = self.random_field(0)
        with pytest.raises(InvalidParam):
            extract_anchors(field, 0, 8)


def six_stroke_scene() -> np.ndarray:
    img = np.zeros((480, 640, 3), dtype=np.uint8)
    img[:, :] = (0, 128, 0)
    for k in range(6):
        x0 = 40 + 90 * k
        img[60:420, x0 : x0 + 5] = (255, 255, 255)
    return img


class TestDrawAndDetect:
    def test_fractional_step_yields_one_full_height_segment(self):
        segs = detect(rgb(aa_vertical_step()))
        assert len(segs) == 1
        s = segs[0]
        assert abs(s.direction[1]) > 0.999
        assert min(s.y1, s.y2) <= 3 and max(s.y1, s.y2) >= 60
        assert 30.0 <= s.x1 <= 33.0 and 30.0 <= s.x2 <= 33.0

    def test_single_line_known_answer(self):
        # One thin bright line: its two flanks are the only detections,
        # and both end where the line ends.
        img = np.zeros((64, 64), dtype=np.uint8)
        img[32, 10:54] = 255
        segs = detect(rgb(img))
        assert len(segs) == 2
        for s in segs:
            ends = sorted([(s.x1, s.y1), (s.x2, s.y2)])
            assert math.hypot(ends[0][0] - 10, ends[0][1] - 32) <= 2.0
            assert math.hypot(ends[1][0] - 53, ends[1][1] - 32) <= 2.0

    def test_six_strokes_two_flanks_each(self):
        segs = detect(six_stroke_scene())
        assert 6 <= len(segs) <= 12
        for k in range(6):
            x0 = 40 + 90 * k
            near = [s for s in segs if min(s.x1, s.x2) >= x0 - 3 and max(s.x1, s.x2) <= x0 + 7]
            assert near, f"stroke at x={x0} must be detected"
            assert any(s.length > 300 for s in near)

    def test_pixel_exclusivity_and_chain_invariants(self):
        segs = detect(six_stroke_scene())
        all_pts = np.vstack([s.pixels for s in segs])
        unique = np.unique(all_pts, axis=0)
        assert len(unique) == len(all_pts), "no pixel may belong to two segments"
        for s in segs:
            assert_chain_invariants(s)
            assert len(s.pixels) >= 40  # resolved min_line_length for 480x640

    def test_small_gap_is_bridged(self):
        img = np.zeros((80, 64), dtype=np.uint8)
        img[:38, 32:] = 255
        img[41:, 32:] = 255
        segs = detect(rgb(img))
        vertical = [s for s in segs if abs(s.direction[1]) > 0.9]
        spanning = [
            s for s in vertical
            if min(s.y1, s.y2) < 5 and max(s.y1, s.y2) > 75
        ]
        assert len(spanning) == 1

    def test_wide_gap_splits_the_edge(self):
        img = np.zeros((80, 64), dtype=np.uint8)
        img[:34, 32:] = 255
        img[46:, 32:] = 255
        segs = detect(rgb(img))
        vertical = [s for s in segs if abs(s.direction[1]) > 0.9]
        assert len(vertical) == 2
        tops = sorted(max(s.y1, s.y2) for s in vertical)
        bots = sorted(min(s.y1, s.y2) for s in vertical)
        assert tops[0] <= 40.0 and bots[1] >= 40.0
        for s in vertical:
            assert s.length >= 25

    def test_diagonal_stroke(self):
        img = np.zeros((96, 96), dtype=np.uint8)
        for t in range(60):
            img[15 + t : 19 + t, 15 + t] = 255
        segs = detect(rgb(img))
        assert segs
        best = max(segs, key=lambda s: s.length)
        angle = math.degrees(math.atan2(abs(best.y2 - best.y1), abs(best.x2 - best.x1)))
        assert abs(angle - 45.0) < 3.0
        assert best.length > 60

    def test_deterministic(self):
        scene = six_stroke_scene()
        a = detect(scene)
        b = detect(scene)
        assert [(s.x1, s.y1, s.x2, s.y2, s.length) for s in a] == [
            (s.x1, s.y1, s.x2, s.y2, s.length) for s in b
        ]
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.pixels, sb.pixels)

    def test_blank_images_give_nothing(self):
        assert detect(np.full((64, 64, 3), 128, dtype=np.uint8)) == []
        assert detect(np.zeros((64, 64, 3), dtype=np.uint8)) == []

    def test_too_small_image_rejected(self):
        with pytest.raises(InvalidParam):
            detect(np.zeros((15, 15, 3), dtype=np.uint8))
        assert detect(np.zeros((16, 16, 3), dtype=np.uint8)) == []

    def test_min_line_length_resolution(self):
        assert DetectorParams().resolve_min_length(640, 480) == 40
        assert DetectorParams(min_line_length=10).resolve_min_length(640, 480) == 10


def manual_segment(x: int, y0: int, y1: int) -> Segment:
    ys = np.arange(y0, y1 + 1)
    pts = np.stack([np.full_like(ys, x), ys], axis=1).astype(np.int32)
    return Segment(
        x1=float(x), y1=float(y0), x2=float(x), y2=float(y1),
        pixels=pts, length=float(y1 - y0),
    )


def manual_field(h: int, w: int) -> dict:
    return {
        "gx": np.zeros((h, w), dtype=np.int32),
        "gy": np.zeros((h, w), dtype=np.int32),
        "mag": np.zeros((h, w), dtype=np.uint16),
        "orient": np.zeros((h, w), dtype=np.uint8),
    }


class TestValidateSegment:
    def test_exactly_half_aligned_passes(self):
        arrays = manual_field(20, 20)
        seg = manual_segment(5, 2, 13)  # 12 chain pixels
        for i, (x, y) in enumerate(seg.pixels):
            if i < 6:
                arrays["gx"][y, x] = 200  # gradient along the normal
            else:
                arrays["gy"][y, x] = 200  # gradient 90 degrees off
            arrays["mag"][y, x] = 200
        field = GradientField(**arrays)
        assert validate_segment(seg, field, DetectorParams()) is True

    def test_just_under_half_fails(self):
        arrays = manual_field(20, 20)
        seg = manual_segment(5, 2, 13)
        for i, (x, y) in enumerate(seg.pixels):
            if i < 5:
                arrays["gx"][y, x] = 200
            else:
                arrays["gy"][y, x] = 200
            arrays["mag"][y, x] = 200
        field = GradientField(**arrays)
        assert validate_segment(seg, field, DetectorParams()) is False

    def test_thresholded_out_pixels_count_misaligned(self):
        # all gradients point the right way, but most fell below the
        # magnitude threshold: they must count as fully misaligned
        arrays = manual_field(20, 20)
        seg = manual_segment(5, 2, 13)
        for i, (x, y) in enumerate(seg.pixels):
            arrays["gx"][y, x] = 200
            if i < 5:
                arrays["mag"][y, x] = 200
        field = GradientField(**arrays)
        assert validate_segment(seg, field, DetectorParams()) is False

    def test_angle_tolerance_boundary(self):
        params = DetectorParams()  # 15 degree tolerance
        for gy, expected in ((266, True), (269, False)):
            arrays = manual_field(20, 20)
            seg = manual_segment(5, 2, 13)
            for x, y in seg.pixels:
                arrays["gx"][y, x] = 1000
                arrays["gy"][y, x] = gy
                arrays["mag"][y, x] = 1000 + gy
            field = GradientField(**arrays)
            angle = math.degrees(math.atan2(gy, 1000))
            assert (angle < 15.0) is expected
            assert validate_segment(seg, field, params) is expected

    def test_degenerate_segment_fails(self):
        arrays = manual_field(20, 20)
        seg = Segment(
            x1=5.0, y1=5.0, x2=5.0, y2=5.0,
            pixels=np.array([[5, 5]], dtype=np.int32), length=0.0,
        )
        field = GradientField(**arrays)
        assert validate_segment(seg, field, DetectorParams()) is False

    def test_detected_segments_validate_but_rotated_field_fails(self):
        img = aa_vertical_step()
        segs = detect(rgb(img))
        assert len(segs) == 1
        field = pipeline_field(img)
        assert validate_segment(segs[0], field, DetectorParams()) is True
        swapped = GradientField(
            gx=field.gy, gy=field.gx, mag=field.mag, orient=field.orient
        )
        assert validate_segment(segs[0], swapped, DetectorParams()) is False

import math

import numpy as np
import pytest

from oracles import point_segment_distance_brute
from pitchlines.classifier import (
    FIELD_BOUNDARY,
    FIELD_LINE,
    GB_DELTA,
    GW_DELTA,
    NONE_LABEL,
    RgbGradient,
    TransitionRef,
    similarity,
)
from pitchlines.errors import InvalidParam, InvalidSpec
from pitchlines.pso import reduce_records
from pitchlines.synthetic import (
    SceneSpec,
    TruthLine,
    _segment_point_distance,
    _segment_segment_distance,
    edge_distance,
    endpoints_near,
    feature_record,
    generate_scene,
    separable_records,
    transition_gradient,
    truth_label,
)

GW = TransitionRef("GW", GW_DELTA)
GB = TransitionRef("GB", GB_DELTA)


class TestTransitionGradient:
    @pytest.mark.parametrize("ref", [GW, GB, TransitionRef("X", (60.0, -20.0, 10.0))])
    def test_round_trips_through_similarity(self, ref):
        for angle in (0.0, 3.0, 15.0, 44.0):
            for proj in (20.0, 90.0, 160.0):
                grad_h, grad_v = transition_gradient(ref, angle, proj)
                got_angle, got_proj = similarity(RgbGradient(h=grad_h, v=grad_v), ref)
                assert abs(got_proj - proj) < 1e-9
                assert abs(got_angle - angle) < 1e-6

    def test_channels_stay_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            angle = float(rng.uniform(0.0, 40.0))
            proj = float(rng.uniform(1.0, 150.0))
            grad_h, _ = transition_gradient(GW, angle, proj)
            assert max(abs(c) for c in grad_h) <= 255.0

    @pytest.mark.parametrize(
        "angle,proj",
        [(-1.0, 50.0), (90.0, 50.0), (10.0, 0.0), (10.0, -5.0), (60.0, 300.0)],
    )
    def test_rejects_unrealizable_requests(self, angle, proj):
        with pytest.raises(InvalidParam):
            transition_gradient(GW, angle, proj)


class TestFeatureRecord:
    def test_builds_valid_record(self):
        record = feature_record("img.ppm", GW, 5.0, 120.0, 60.0, FIELD_LINE)
        record.validate()
        assert record.image == "img.ppm"
        assert record.length == 60.0
        assert record.human_label == FIELD_LINE
        assert math.hypot(record.x2 - record.x1, record.y2 - record.y1) == 60.0


class TestSeparableRecords:
    def test_counts_and_labels(self):
        records = separable_records(GW, n_pos=30, n_neg=20, seed=5)
        assert len(records) == 50
        labels = [r.human_label for r in records]
        assert labels.count(FIELD_LINE) == 30
        assert labels.count(NONE_LABEL) == 20

    def test_deterministic(self):
        a = separable_records(GW, n_pos=10, n_neg=10, seed=3)
        b = separable_records(GW, n_pos=10, n_neg=10, seed=3)
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]

    def test_positives_inside_box_negatives_violate(self):
        records = separable_records(GW, n_pos=40, n_neg=40, seed=9)
        angles, projs, lens, pos = reduce_records(records, GW)
        assert np.all(angles[pos] <= 9.0 + 1e-6)
        assert np.all(projs[pos] >= 105.0 - 1e-6)
        assert np.all(lens[pos] >= 21.0)
        neg = ~pos
        violates = (
            (angles[neg] > 40.0) | (projs[neg] < 56.0) | (lens[neg] < 12.0)
        )
        assert np.all(violates)

    def test_all_mode_violates_every_dimension(self):
        records = separable_records(GW, n_pos=10, n_neg=30, seed=2, negatives="all")
        angles, projs, lens, pos = reduce_records(records, GW)
        neg = ~pos
        assert np.all(angles[neg] > 40.0)
        assert np.all(projs[neg] < 56.0)
        assert np.all(lens[neg] < 12.0)

    def test_invalid_arguments(self):
        with pytest.raises(InvalidParam):
            separable_records(GW, n_pos=5, n_neg=5, negatives="some")
        with pytest.raises(InvalidParam):
            separable_records(GW, n_pos=0, n_neg=5)


class TestSceneSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"width": 32},
            {"height": 8192},
            {"n_lines": 13},
            {"n_lines": -1},
            {"n_distractors": 13},
            {"stroke_width": 1.0},
            {"stroke_width": 15.0},
            {"field_color": (0, 220, 0)},
            {"field_color": (0, 128)},
            {"brightness": 0.0},
            {"brightness": 2.0},
            {"tint": (1.0, 1.0)},
            {"tint": (0.0, 1.0, 1.0)},
            {"noise_sigma": -0.5},
            {"noise_sigma": 80.0},
        ],
    )
    def test_invalid_specs(self, kwargs):
        with pytest.raises(InvalidSpec):
            SceneSpec(**kwargs)

    def test_dict_round_trip(self):
        spec = SceneSpec(n_lines=2, boundary=True, brightness=0.8, tint=(1.1, 1.0, 0.9))
        assert SceneSpec.from_dict(spec.to_dict()) == spec

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(InvalidSpec):
            SceneSpec.from_dict({"n_lines": 2, "shape": "oval"})
        with pytest.raises(InvalidSpec):
            SceneSpec.from_dict({"field_color": [0, 128]})
        with pytest.raises(InvalidSpec):
            SceneSpec.from_dict(["not", "a", "dict"])


class TestGenerateScene:
    def test_deterministic_bytes(self):
        spec = SceneSpec(n_lines=3, noise_sigma=4.0)
        a = generate_scene(11, spec)
        b = generate_scene(11, spec)
        assert np.array_equal(a.image, b.image)
        assert a.truth_lines == b.truth_lines
        c = generate_scene(12, spec)
        assert not np.array_equal(a.image, c.image)

    def test_single_clean_line(self):
        spec = SceneSpec(n_lines=1)
        scene = generate_scene(4, spec)
        assert len(scene.truth_lines) == 1
        line = scene.truth_lines[0]
        assert line.label == FIELD_LINE
        h, w = scene.image.shape[:2]
        assert 0 <= min(line.x1, line.x2) and max(line.x1, line.x2) <= w - 1
        assert 0 <= min(line.y1, line.y2) and max(line.y1, line.y2) <= h - 1
        ys, xs = np.mgrid[0:h, 0:w]
        d = edge_distance(xs.astype(float), ys.astype(float), line)
        far = d > 4.0
        inner = _segment_point_distance(
            xs.astype(float), ys.astype(float), line.x1, line.y1, line.x2, line.y2
        ) > line.width / 2.0 + 4.0
        field = np.asarray(spec.field_color, dtype=np.uint8)
        assert np.all(scene.image[far & inner] == field)
        assert scene.image.max() == 255

    def test_blank_scene_is_uniform_field(self):
        spec = SceneSpec(n_lines=0)
        scene = generate_scene(0, spec)
        assert scene.truth_lines == ()
        assert np.all(scene.image == np.asarray(spec.field_color, dtype=np.uint8))

    def test_brightness_scales_field_pixels(self):
        bright = generate_scene(8, SceneSpec(n_lines=2, brightness=1.0))
        dim = generate_scene(8, SceneSpec(n_lines=2, brightness=0.6))
        field_mask = np.all(bright.image == np.array([0, 128, 0], dtype=np.uint8), axis=2)
        assert field_mask.sum() > 1000
        dim_green = dim.image[field_mask][:, 1]
        assert np.all(dim_green == round(0.6 * 128))
        ratio = float(dim_green.mean()) / 128.0
        assert abs(ratio - 0.6) <= 1.0 / 128.0

    def test_tint_scales_channels(self):
        neutral = generate_scene(8, SceneSpec(n_lines=1))
        tinted = generate_scene(8, SceneSpec(n_lines=1, tint=(1.0, 0.8, 1.0)))
        field_mask = np.all(neutral.image == np.array([0, 128, 0], dtype=np.uint8), axis=2)
        assert np.all(tinted.image[field_mask][:, 1] == round(0.8 * 128))

    def test_lighting_field_recorded(self):
        scene = generate_scene(1, SceneSpec(n_lines=1, brightness=0.7, tint=(1.1, 1.0, 0.9)))
        assert scene.lighting == (0.7, (1.1, 1.0, 0.9))

    def test_boundary_band(self):
        scene = generate_scene(21, SceneSpec(n_lines=2, boundary=True))
        boundary = [t for t in scene.truth_lines if t.label == FIELD_BOUNDARY]
        assert len(boundary) == 1
        band_y = boundary[0].y1
        assert boundary[0].width == 0.0
        assert 0.25 <= band_y - math.floor(band_y) <= 0.75
        assert np.all(scene.image[: int(band_y) - 1] == 0)
        row = scene.image[int(band_y) + 2]
        assert np.any(np.all(row == np.array([0, 128, 0], dtype=np.uint8), axis=1))

    def test_strokes_keep_separation(self):
        scene = generate_scene(17, SceneSpec(n_lines=6, n_distractors=2))
        lines = scene.truth_lines
        for i in range(len(lines)):
            for j in range(i + 1, len(lines)):
                a, b = lines[i], lines[j]
                d = _segment_segment_distance(
                    (a.x1, a.y1), (a.x2, a.y2), (b.x1, b.y1), (b.x2, b.y2)
                )
                assert d >= a.width / 2.0 + b.width / 2.0 + 10.0 - 1e-9

    def test_impossible_placement_rejected(self):
        with pytest.raises(InvalidSpec):
            generate_scene(0, SceneSpec(width=64, height=64, n_lines=12))

    def test_noise_changes_pixels_deterministically(self):
        clean = generate_scene(5, SceneSpec(n_lines=1))
        noisy = generate_scene(5, SceneSpec(n_lines=1, noise_sigma=3.0))
        assert not np.array_equal(clean.image, noisy.image)
        field_mask = np.all(clean.image == np.array([0, 128, 0], dtype=np.uint8), axis=2)
        spread = noisy.image[field_mask][:, 1].astype(np.float64).std()
        assert 1.5 <= spread <= 4.5


class TestGeometryHelpers:
    def test_point_segment_distance_against_sampling(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            x1, y1, x2, y2 = rng.uniform(-20.0, 20.0, size=4)
            px, py = rng.uniform(-30.0, 30.0, size=2)
            got = float(_segment_point_distance(px, py, x1, y1, x2, y2))
            want = point_segment_distance_brute(px, py, x1, y1, x2, y2)
            assert abs(got - want) < 1e-3

    def test_degenerate_segment_is_a_point(self):
        assert float(_segment_point_distance(3.0, 4.0, 0.0, 0.0, 0.0, 0.0)) == 5.0

    def test_segment_segment_distance(self):
        # crossing
        assert _segment_segment_distance((0, 0), (10, 10), (0, 10), (10, 0)) == 0.0
        # parallel gap
        assert abs(_segment_segment_distance((0, 0), (10, 0), (0, 3), (10, 3)) - 3.0) < 1e-12
        # closest at endpoints
        assert abs(_segment_segment_distance((0, 0), (1, 0), (5, 0), (6, 0)) - 4.0) < 1e-12

    def test_edge_distance_band_and_bare_edge(self):
        band = TruthLine(10.0, 20.0, 110.0, 20.0, width=6.0, label=FIELD_LINE)
        assert float(edge_distance(60.0, 20.0, band)) == 3.0  # centerline sits half-width away
        assert float(edge_distance(60.0, 23.0, band)) == 0.0
        assert float(edge_distance(60.0, 26.0, band)) == 3.0
        bare = TruthLine(0.0, 50.5, 100.0, 50.5, width=0.0, label=FIELD_BOUNDARY)
        assert float(edge_distance(40.0, 50.5, bare)) == 0.0
        assert float(edge_distance(40.0, 53.5, bare)) == 3.0

    def test_truth_label_coverage_rule(self):
        line = TruthLine(0.0, 10.0, 100.0, 10.0, width=4.0, label=FIELD_LINE)
        on_edge = [(x, 12) for x in range(5, 13)]  # y = 10 + width/2
        off_edge = [(x, 40) for x in range(5, 7)]
        pixels = np.array(on_edge + off_edge, dtype=np.int32)
        assert truth_label(pixels, [line]) == FIELD_LINE  # exactly 80%
        pixels = np.array(on_edge[:7] + off_edge + [(90, 40)], dtype=np.int32)
        assert truth_label(pixels, [line]) == NONE_LABEL  # 70%
        assert truth_label(np.empty((0, 2), dtype=np.int32), [line]) == NONE_LABEL

    def test_truth_label_picks_best_coverage(self):
        a = TruthLine(0.0, 10.0, 100.0, 10.0, width=0.0, label=FIELD_LINE)
        b = TruthLine(0.0, 11.0, 100.0, 11.0, width=0.0, label=FIELD_BOUNDARY)
        pixels = np.array([(x, 11) for x in range(20)], dtype=np.int32)
        # within 2 px of both edges, but exactly on b
        assert truth_label(pixels, [a, b]) == FIELD_BOUNDARY

    def test_endpoints_near(self):
        line = TruthLine(0.0, 10.0, 100.0, 10.0, width=4.0, label=FIELD_LINE)

        class Seg:
            x1, y1, x2, y2 = 2.0, 12.5, 98.0, 12.5

        assert endpoints_near(Seg, line, tol=3.0)

        class Far:
            x1, y1, x2, y2 = 2.0, 12.5, 98.0, 17.0

        assert not endpoints_near(Far, line, tol=3.0)

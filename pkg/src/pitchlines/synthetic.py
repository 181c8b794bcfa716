"""Synthetic data: field scenes with ground truth, and labeled feature
records with exact similarity geometry.

Scenes are green fields with anti-aliased white strokes (optionally a
black boundary band and off-color distractor strokes), a multiplicative
lighting model, and Gaussian pixel noise. Strokes sit at fractional
positions: pixel-aligned edges smooth into twin gradient peaks that tie
away the local-maximum test, while anti-aliased ones keep a unique peak.

Feature records are built the other way around: a gradient realized as
ref_unit * proj + orthogonal_unit * proj * tan(angle) scores back as
exactly (angle, proj), so training sets have separability by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifier import (
    FIELD_BOUNDARY,
    FIELD_LINE,
    LABELS,
    NONE_LABEL,
    TransitionRef,
    positive_label_for,
)
from .dataset import SegmentRecord
from .errors import InvalidParam, InvalidSpec

# feature boxes for constructed sets; margins keep every boundary strictly
# between a positive and a negative so integer threshold grids separate them
_POS_ANGLE = (1.0, 9.0)
_POS_PROJ = (105.0, 195.0)
_POS_LEN = (21.0, 99.0)
_NEG_ANGLE = (41.0, 54.0)
_NEG_PROJ = (10.0, 55.0)
_NEG_LEN = (1.0, 11.0)
# an angle-violating negative keeps its channel values in range only while
# proj * (1 + tan(angle)) / sqrt(2) <= 255
_NEG_ANGLE_PROJ_CAP = 148.0


def _orthogonal_unit(unit: np.ndarray) -> np.ndarray:
    helper = np.array([1.0, 0.0, 0.0])
    if abs(float(np.dot(unit, helper))) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    ortho = helper - float(np.dot(unit, helper)) * unit
    return ortho / np.linalg.norm(ortho)


def transition_gradient(
    ref: TransitionRef, angle_deg: float, proj: float
) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Horizontal/vertical gradient pair whose similarity against ref is
    exactly (angle_deg, proj). The vertical axis is left zero so the
    horizontal axis always wins axis selection."""
    if not 0.0 <= angle_deg < 90.0:
        raise InvalidParam(f"angle_deg must be in [0, 90), got {angle_deg}")
    if proj <= 0.0:
        raise InvalidParam(f"proj must be positive, got {proj}")
    unit = np.asarray(ref.unit, dtype=np.float64)
    ortho = _orthogonal_unit(unit)
    g = proj * unit + proj * math.tan(math.radians(angle_deg)) * ortho
    if np.abs(g).max() > 255.0:
        raise InvalidParam(
            f"angle {angle_deg} with proj {proj} exceeds the per-channel range"
        )
    return tuple(float(c) for c in g), (0.0, 0.0, 0.0)


def feature_record(
    image: str,
    ref: TransitionRef,
    angle_deg: float,
    proj: float,
    length: float,
    human_label: str | None,
    predicted: str = NONE_LABEL,
) -> SegmentRecord:
    grad_h, grad_v = transition_gradient(ref, angle_deg, proj)
    return SegmentRecord(
        image=image,
        x1=0.0,
        y1=0.0,
        x2=float(length),
        y2=0.0,
        length=float(length),
        grad_h=grad_h,
        grad_v=grad_v,
        predicted=predicted,
        human_label=human_label,
    )


def separable_records(
    ref: TransitionRef,
    n_pos: int = 100,
    n_neg: int = 100,
    seed: int = 0,
    negatives: str = "any",
    positive_label: str | None = None,
) -> list[SegmentRecord]:
    """Labeled records a threshold box can separate perfectly.

    Positives sit inside a fixed feature box; negatives violate margin
    bands around it. negatives="any" violates a random non-empty subset
    of the three dimensions, "all" violates every dimension at once.
    """
    if negatives not in ("any", "all"):
        raise InvalidParam(f"negatives must be 'any' or 'all', got {negatives!r}")
    if n_pos < 1 or n_neg < 0:
        raise InvalidParam(f"need n_pos >= 1 and n_neg >= 0, got {n_pos}, {n_neg}")
    label = positive_label_for(ref, positive_label)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_pos):
        records.append(
            feature_record(
                image=f"synthetic/{i:04d}.ppm",
                ref=ref,
                angle_deg=float(rng.uniform(*_POS_ANGLE)),
                proj=float(rng.uniform(*_POS_PROJ)),
                length=float(rng.uniform(*_POS_LEN)),
                human_label=label,
            )
        )
    for i in range(n_neg):
        if negatives == "all":
            violate = (True, True, True)
        else:
            violate = tuple(rng.random() < 0.5 for _ in range(3))
            if not any(violate):
                violate = (False, False, True)
        angle = float(rng.uniform(*(_NEG_ANGLE if violate[0] else _POS_ANGLE)))
        if violate[1]:
            proj = float(rng.uniform(*_NEG_PROJ))
        else:
            hi = min(_POS_PROJ[1], _NEG_ANGLE_PROJ_CAP) if violate[0] else _POS_PROJ[1]
            proj = float(rng.uniform(_POS_PROJ[0], hi))
        length = float(rng.uniform(*(_NEG_LEN if violate[2] else _POS_LEN)))
        records.append(
            feature_record(
                image=f"synthetic/{n_pos + i:04d}.ppm",
                ref=ref,
                angle_deg=angle,
                proj=proj,
                length=length,
                human_label=NONE_LABEL,
            )
        )
    order = rng.permutation(len(records))
    return [records[int(k)] for k in order]


WHITE = (255.0, 255.0, 255.0)
BLACK = (0.0, 0.0, 0.0)
# off-color stroke whose transition direction sits far from both the
# green-to-white and green-to-black references
DISTRACTOR_COLOR = (80.0, 0.0, 80.0)

_PLACEMENT_ATTEMPTS = 300
_BORDER_MARGIN = 14.0
_STROKE_GAP = 10.0


@dataclass(frozen=True)
class TruthLine:
    """Ground-truth stroke centerline. width 0 describes a bare edge
    (the field boundary) rather than a painted band."""

    x1: float
    y1: float
    x2: float
    y2: float
    width: float
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise InvalidParam(f"unknown truth label {self.label!r}")
        if self.width < 0.0:
            raise InvalidParam(f"width must be >= 0, got {self.width}")


@dataclass(frozen=True)
class SceneSpec:
    width: int = 640
    height: int = 480
    n_lines: int = 4
    stroke_width: float = 5.0
    n_distractors: int = 0
    boundary: bool = False
    field_color: tuple[int, int, int] = (0, 128, 0)
    brightness: float = 1.0
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0)
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not (64 <= self.width <= 4096 and 64 <= self.height <= 4096):
            raise InvalidSpec(f"image size {self.width}x{self.height} out of range")
        if not 0 <= self.n_lines <= 12:
            raise InvalidSpec(f"n_lines must be in [0, 12], got {self.n_lines}")
        if not 0 <= self.n_distractors <= 12:
            raise InvalidSpec(f"n_distractors must be in [0, 12], got {self.n_distractors}")
        if not 2.0 <= self.stroke_width <= 12.0:
            raise InvalidSpec(f"stroke_width must be in [2, 12], got {self.stroke_width}")
        if len(self.field_color) != 3 or any(
            not (0 <= int(c) <= 200) for c in self.field_color
        ):
            raise InvalidSpec(
                f"field_color channels must be ints in [0, 200], got {self.field_color}"
            )
        if not 0.1 <= self.brightness <= 1.5:
            raise InvalidSpec(f"brightness must be in [0.1, 1.5], got {self.brightness}")
        if len(self.tint) != 3 or any(not 0.1 <= t <= 1.5 for t in self.tint):
            raise InvalidSpec(f"tint factors must be in [0.1, 1.5], got {self.tint}")
        if not 0.0 <= self.noise_sigma <= 50.0:
            raise InvalidSpec(f"noise_sigma must be in [0, 50], got {self.noise_sigma}")

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "n_lines": self.n_lines,
            "stroke_width": self.stroke_width,
            "n_distractors": self.n_distractors,
            "boundary": self.boundary,
            "field_color": list(self.field_color),
            "brightness": self.brightness,
            "tint": list(self.tint),
            "noise_sigma": self.noise_sigma,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        if not isinstance(data, dict):
            raise InvalidSpec("scene spec must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown scene spec fields: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("field_color", "tint"):
            if key in kwargs:
                value = kwargs[key]
                if not isinstance(value, (list, tuple)) or len(value) != 3:
                    raise InvalidSpec(f"{key} must be a 3-element list")
                kwargs[key] = tuple(value)
        if "field_color" in kwargs:
            kwargs["field_color"] = tuple(int(c) for c in kwargs["field_color"])
        return cls(**kwargs)


@dataclass(frozen=True)
class SyntheticScene:
    image: np.ndarray
    truth_lines: tuple[TruthLine, ...]
    lighting: tuple[float, tuple[float, float, float]]


def _segment_point_distance(px, py, x1, y1, x2, y2):
    """Distance from points (arrays or scalars) to one segment."""
    dx, dy = x2 - x1, y2 - y1
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return np.hypot(px - x1, py - y1)
    t = np.clip(((px - x1) * dx + (py - y1) * dy) / denom, 0.0, 1.0)
    return np.hypot(px - (x1 + t * dx), py - (y1 + t * dy))


def _segments_cross(a1, a2, b1, b2) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(b1, b2, a1)
    d2 = orient(b1, b2, a2)
    d3 = orient(a1, a2, b1)
    d4 = orient(a1, a2, b2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _segment_segment_distance(a1, a2, b1, b2) -> float:
    if _segments_cross(a1, a2, b1, b2):
        return 0.0
    return min(
        float(_segment_point_distance(b1[0], b1[1], a1[0], a1[1], a2[0], a2[1])),
        float(_segment_point_distance(b2[0], b2[1], a1[0], a1[1], a2[0], a2[1])),
        float(_segment_point_distance(a1[0], a1[1], b1[0], b1[1], b2[0], b2[1])),
        float(_segment_point_distance(a2[0], a2[1], b1[0], b1[1], b2[0], b2[1])),
    )


def _paint_stroke(canvas, x1, y1, x2, y2, width, color):
    """Alpha-blend a band of the given width onto the float canvas with a
    one-pixel anti-aliasing ramp at its edges."""
    h, w = canvas.shape[:2]
    half = width / 2.0
    x_lo = max(0, int(math.floor(min(x1, x2) - half - 2)))
    x_hi = min(w, int(math.ceil(max(x1, x2) + half + 3)))
    y_lo = max(0, int(math.floor(min(y1, y2) - half - 2)))
    y_hi = min(h, int(math.ceil(max(y1, y2) + half + 3)))
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    d = _segment_point_distance(xs.astype(np.float64), ys.astype(np.float64), x1, y1, x2, y2)
    alpha = np.clip(half + 0.5 - d, 0.0, 1.0)[:, :, None]
    region = canvas[y_lo:y_hi, x_lo:x_hi]
    region *= 1.0 - alpha
    region += alpha * np.asarray(color, dtype=np.float64)


def _place_strokes(rng, spec, count, widths, blocked):
    """Rejection-sample non-crossing, well-separated stroke centerlines."""
    placed = []
    min_side = min(spec.width, spec.height)
    for i in range(count):
        width = widths[i]
        ok = False
        for _ in range(_PLACEMENT_ATTEMPTS):
            theta = rng.uniform(0.0, math.pi)
            length = rng.uniform(0.3, 0.7) * min_side
            ex = abs(math.cos(theta)) * length / 2.0
            ey = abs(math.sin(theta)) * length / 2.0
            pad = _BORDER_MARGIN + width / 2.0 + 1.0
            if spec.width - 1 - 2 * (pad + ex) <= 0 or spec.height - 1 - 2 * (pad + ey) <= 0:
                continue
            cx = rng.uniform(pad + ex, spec.width - 1 - pad - ex)
            cy = rng.uniform(pad + ey, spec.height - 1 - pad - ey)
            p1 = (cx - math.cos(theta) * length / 2.0, cy - math.sin(theta) * length / 2.0)
            p2 = (cx + math.cos(theta) * length / 2.0, cy + math.sin(theta) * length / 2.0)
            clearance_ok = True
            for (q1, q2, other_w) in placed + blocked:
                need = width / 2.0 + other_w / 2.0 + _STROKE_GAP
                if _segment_segment_distance(p1, p2, q1, q2) < need:
                    clearance_ok = False
                    break
            if clearance_ok:
                placed.append((p1, p2, width))
                ok = True
                break
        if not ok:
            raise InvalidSpec(
                f"could not place stroke {i + 1} of {count} inside "
                f"{spec.width}x{spec.height} with the required separation"
            )
    return placed


def generate_scene(seed: int, spec: SceneSpec) -> SyntheticScene:
    """Deterministic field scene: uniform field, anti-aliased strokes,
    optional boundary band and distractors, lighting, then noise. The
    random stream covers placement first and pixel noise last, so two
    specs differing only in lighting share identical geometry."""
    rng = np.random.default_rng(seed)
    h, w = spec.height, spec.width
    canvas = np.empty((h, w, 3), dtype=np.float64)
    canvas[:, :] = np.asarray(spec.field_color, dtype=np.float64)

    truth = []
    blocked = []
    if spec.boundary:
        # keep the edge clearly off the pixel grid: an integer-aligned edge
        # smooths into two equal gradient rows and the local-maximum anchor
        # test ties both away
        band_y = math.floor(0.12 * h) + rng.uniform(0.25, 0.75)
        ys = np.arange(h, dtype=np.float64)
        alpha = np.clip(band_y - ys, 0.0, 1.0)[:, None, None]
        canvas *= 1.0 - alpha
        truth.append(
            TruthLine(x1=0.0, y1=band_y, x2=float(w - 1), y2=band_y, width=0.0,
                      label=FIELD_BOUNDARY)
        )
        # keep strokes clear of the band the same way they avoid each other
        blocked.append(((0.0, band_y), (float(w - 1), band_y), 2.0 * _STROKE_GAP))

    widths = [
        float(np.clip(spec.stroke_width + rng.uniform(-1.5, 1.5), 2.0, 12.0))
        for _ in range(spec.n_lines + spec.n_distractors)
    ]
    placed = _place_strokes(rng, spec, spec.n_lines + spec.n_distractors, widths, blocked)
    for k, (p1, p2, width) in enumerate(placed):
        is_line = k < spec.n_lines
        _paint_stroke(
            canvas, p1[0], p1[1], p2[0], p2[1], width,
            WHITE if is_line else DISTRACTOR_COLOR,
        )
        if is_line:
            truth.append(
                TruthLine(x1=p1[0], y1=p1[1], x2=p2[0], y2=p2[1], width=width,
                          label=FIELD_LINE)
            )

    canvas *= spec.brightness
    canvas *= np.asarray(spec.tint, dtype=np.float64)
    if spec.noise_sigma > 0.0:
        canvas += rng.normal(0.0, spec.noise_sigma, size=canvas.shape)
    image = np.rint(np.clip(canvas, 0.0, 255.0)).astype(np.uint8)
    return SyntheticScene(
        image=image,
        truth_lines=tuple(truth),
        lighting=(spec.brightness, tuple(spec.tint)),
    )


def edge_distance(px, py, line: TruthLine):
    """Distance from points to the nearest painted edge of a truth line
    (to the line itself when it describes a bare edge)."""
    d = _segment_point_distance(
        np.asarray(px, dtype=np.float64),
        np.asarray(py, dtype=np.float64),
        line.x1, line.y1, line.x2, line.y2,
    )
    return np.abs(d - line.width / 2.0)


def truth_label(pixels: np.ndarray, truth_lines, tol: float = 2.0,
                coverage: float = 0.8) -> str:
    """Label a detected chain by ground truth: the truth line whose edges
    cover the largest fraction of chain pixels within tol wins, provided
    it covers at least the required fraction. Coverage ties go to the
    closer edge."""
    if len(pixels) == 0:
        return NONE_LABEL
    xs = pixels[:, 0].astype(np.float64)
    ys = pixels[:, 1].astype(np.float64)
    best_label = NONE_LABEL
    best_key = (0.0, -np.inf)
    for line in truth_lines:
        d = edge_distance(xs, ys, line)
        frac = float((d <= tol).mean())
        key = (frac, -float(d.mean()))
        if frac >= coverage and key > best_key:
            best_label, best_key = line.label, key
    return best_label


def endpoints_near(segment, line: TruthLine, tol: float = 3.0) -> bool:
    """True when both segment endpoints lie within tol of the truth edge."""
    d1 = float(edge_distance(segment.x1, segment.y1, line))
    d2 = float(edge_distance(segment.x2, segment.y2, line))
    return d1 <= tol and d2 <= tol

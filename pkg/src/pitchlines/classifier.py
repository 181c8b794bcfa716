"""Color-transition classification of detected segments.

A segment crossing a painted line shows a characteristic RGB change
perpendicular to it (green to white for field lines, green to black for
boundaries). The mean 3x3 color window along the chain is reduced to
one horizontal and one vertical RGB gradient; projecting those onto a
reference transition vector gives an (angle, projection) similarity
that is thresholded into a label.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .elsed import Segment
from .errors import EmptyChain, InvalidParam, InvalidSpec, IoError

FIELD_LINE = "field_line"
FIELD_BOUNDARY = "field_boundary"
NONE_LABEL = "none"
LABELS = (FIELD_LINE, FIELD_BOUNDARY, NONE_LABEL)

# largest possible projection: a full black-to-white transition
PROJ_MAX = float(np.linalg.norm([255.0, 255.0, 255.0]))

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T

# conventional reference names carry their label implicitly
_NAME_LABELS = {"GW": FIELD_LINE, "GB": FIELD_BOUNDARY}


def positive_label_for(ref, positive_label: str | None = None) -> str:
    """Label a reference detects: explicit argument, else by convention
    of the reference name. Custom names must state their label."""
    if positive_label is not None:
        return positive_label
    label = _NAME_LABELS.get(ref.name)
    if label is None:
        raise InvalidParam(
            f"reference {ref.name!r} has no conventional label; pass positive_label"
        )
    return label


@dataclass(frozen=True)
class RgbGradient:
    """Mean color change across a segment, split into image axes."""

    h: tuple[float, float, float]
    v: tuple[float, float, float]


@dataclass(frozen=True)
class TransitionRef:
    """Reference color transition, e.g. field green to line white."""

    name: str
    delta: tuple[float, float, float]

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.delta):
            raise InvalidParam(f"reference {self.name}: delta must be finite, got {self.delta}")
        if np.linalg.norm(self.delta) == 0:
            raise InvalidParam(f"reference {self.name}: delta must have nonzero magnitude")

    @property
    def unit(self) -> np.ndarray:
        d = np.asarray(self.delta, dtype=np.float64)
        return d / np.linalg.norm(d)


@dataclass(frozen=True)
class Thresholds:
    """Acceptance box for one reference: max angle, min projection, min length."""

    angle_max: float
    proj_min: float
    len_min: float

    def __post_init__(self):
        if not (math.isfinite(self.angle_max) and 0.0 < self.angle_max <= 90.0):
            raise InvalidParam(f"angle_max must be in (0, 90], got {self.angle_max}")
        if not (math.isfinite(self.proj_min) and 0.0 <= self.proj_min <= PROJ_MAX):
            raise InvalidParam(f"proj_min must be in [0, {PROJ_MAX:.1f}], got {self.proj_min}")
        if not (math.isfinite(self.len_min) and self.len_min >= 0.0):
            raise InvalidParam(f"len_min must be >= 0, got {self.len_min}")


@dataclass(frozen=True)
class ConfiguredReference:
    ref: TransitionRef
    thresholds: Thresholds
    label: str

    def __post_init__(self):
        if self.label not in (FIELD_LINE, FIELD_BOUNDARY):
            raise InvalidParam(f"reference label must be a positive class, got {self.label!r}")


@dataclass(frozen=True)
class ClassifiedSegment:
    segment: Segment
    grad: RgbGradient
    label: str
    angle_deg: float
    proj_len: float


def mean_window(img: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Mean 3x3 RGB neighborhood over the chain, from the unsmoothed image.

    Chain pixels touching the border are dropped rather than padded, so
    no fabricated colors enter the mean. Returns a (3, 3, 3) float grid
    indexed [row, column, channel].
    """
    h, w = img.shape[:2]
    pts = np.asarray(pixels)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidParam(f"pixels must be an (n, 2) array, got shape {pts.shape}")
    xs = pts[:, 0]
    ys = pts[:, 1]
    keep = (xs >= 1) & (xs < w - 1) & (ys >= 1) & (ys < h - 1)
    xs = xs[keep]
    ys = ys[keep]
    if len(xs) == 0:
        raise EmptyChain("no chain pixel lies clear of the image border")
    grid = np.zeros((3, 3, 3), dtype=np.float64)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            window = img[ys + dy, xs + dx].astype(np.float64)
            grid[dy + 1, dx + 1] = window.mean(axis=0)
    return grid


def segment_gradient(grid: np.ndarray) -> RgbGradient:
    """One Sobel application per channel on the mean window, scaled by 1/4
    so components stay within [-255, 255]."""
    g = np.asarray(grid, dtype=np.float64)
    if g.shape != (3, 3, 3):
        raise InvalidParam(f"grid must be 3x3x3, got shape {g.shape}")
    h = tuple(float((g[:, :, ch] * _SOBEL_X).sum() / 4.0) for ch in range(3))
    v = tuple(float((g[:, :, ch] * _SOBEL_Y).sum() / 4.0) for ch in range(3))
    return RgbGradient(h=h, v=v)


def extract_gradient(img: np.ndarray, pixels: np.ndarray) -> RgbGradient:
    """Convenience composition: mean_window then segment_gradient."""
    return segment_gradient(mean_window(img, pixels))


def _axis_similarity(g: np.ndarray, unit: np.ndarray, signed: bool) -> tuple[float, float]:
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return 90.0, 0.0
    dot = float(g @ unit)
    proj = dot if signed else abs(dot)
    cos_v = max(-1.0, min(1.0, proj / norm))
    return math.degrees(math.acos(cos_v)), proj


def similarity(grad: RgbGradient, ref: TransitionRef, signed: bool = False) -> tuple[float, float]:
    """(angle_deg, projection) of the better-matching gradient axis.

    Both axes are scored against the reference unit vector; the one with
    the larger projection wins (the transition lives in whichever axis
    crosses the line). Matching is sign-insensitive unless signed is set.
    """
    unit = ref.unit
    ah, ph = _axis_similarity(np.asarray(grad.h, dtype=np.float64), unit, signed)
    av, pv = _axis_similarity(np.asarray(grad.v, dtype=np.float64), unit, signed)
    if pv > ph:
        return av, pv
    return ah, ph


def classify_features(length: float, grad: RgbGradient, config: ClassifierConfig) -> tuple[str, float, float]:
    """Label (and achieved angle/projection) from stored features alone.

    This is the replay path: training re-scores persisted records with
    exactly the same logic the live pipeline uses.
    """
    if not config.references:
        raise InvalidParam("classifier needs at least one configured reference")
    best: tuple[float, float] | None = None
    for cr in config.references:
        angle, proj = similarity(grad, cr.ref, config.signed_match)
        t = cr.thresholds
        if angle <= t.angle_max and proj >= t.proj_min and length >= t.len_min:
            return cr.label, angle, proj
        if best is None or proj > best[1]:
            best = (angle, proj)
    return NONE_LABEL, best[0], best[1]


def classify(seg: Segment, grad: RgbGradient, config: ClassifierConfig) -> ClassifiedSegment:
    """First matching reference wins; no match yields the none label with
    the best-scoring reference's angle and projection recorded."""
    label, angle, proj = classify_features(seg.length, grad, config)
    return ClassifiedSegment(segment=seg, grad=grad, label=label, angle_deg=angle, proj_len=proj)


@dataclass(frozen=True)
class ClassifierConfig:
    references: tuple[ConfiguredReference, ...]
    signed_match: bool = False

    def to_dict(self) -> dict:
        refs = []
        for cr in self.references:
            entry = {
                "name": cr.ref.name,
                "delta": list(cr.ref.delta),
                "angle_max_deg": cr.thresholds.angle_max,
                "proj_min": cr.thresholds.proj_min,
                "len_min": cr.thresholds.len_min,
            }
            if _NAME_LABELS.get(cr.ref.name) != cr.label:
                entry["label"] = cr.label
            refs.append(entry)
        return {"references": refs, "signed_match": self.signed_match}

    @staticmethod
    def from_dict(data: dict) -> "ClassifierConfig":
        if not isinstance(data, dict):
            raise InvalidSpec(f"classifier config must be a JSON object, got {type(data).__name__}")
        unknown = set(data) - {"references", "signed_match"}
        if unknown:
            raise InvalidSpec(f"unknown classifier config keys: {sorted(unknown)}")
        raw_refs = data.get("references")
        if not isinstance(raw_refs, list) or not raw_refs:
            raise InvalidSpec("classifier config needs a non-empty references list")
        allowed = {"name", "delta", "angle_max_deg", "proj_min", "len_min", "label"}
        refs = []
        for i, entry in enumerate(raw_refs):
            if not isinstance(entry, dict):
                raise InvalidSpec(f"reference #{i} must be an object")
            unknown = set(entry) - allowed
            if unknown:
                raise InvalidSpec(f"reference #{i}: unknown keys {sorted(unknown)}")
            missing = {"name", "delta", "angle_max_deg", "proj_min", "len_min"} - set(entry)
            if missing:
                raise InvalidSpec(f"reference #{i}: missing keys {sorted(missing)}")
            delta = entry["delta"]
            if not (isinstance(delta, list) and len(delta) == 3):
                raise InvalidSpec(f"reference #{i}: delta must be a 3-element list")
            name = entry["name"]
            label = entry.get("label", _NAME_LABELS.get(name))
            if label is None:
                raise InvalidSpec(
                    f"reference #{i} ({name!r}): custom names need an explicit label"
                )
            ref = TransitionRef(name=name, delta=tuple(float(c) for c in delta))
            thresholds = Thresholds(
                angle_max=float(entry["angle_max_deg"]),
                proj_min=float(entry["proj_min"]),
                len_min=float(entry["len_min"]),
            )
            refs.append(ConfiguredReference(ref=ref, thresholds=thresholds, label=label))
        signed = data.get("signed_match", False)
        if not isinstance(signed, bool):
            raise InvalidSpec("signed_match must be a boolean")
        return ClassifierConfig(references=tuple(refs), signed_match=signed)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @staticmethod
    def loads(text: str) -> "ClassifierConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidSpec(f"classifier config is not valid JSON: {e}") from e
        return ClassifierConfig.from_dict(data)

    def save(self, path) -> None:
        try:
            with open(path, "w", encoding="utf-8") as f:
                f.write(self.dumps())
        except OSError as e:
            raise IoError(f"cannot write classifier config {path}: {e}") from e

    @staticmethod
    def load(path) -> "ClassifierConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise IoError(f"cannot read classifier config {path}: {e}") from e
        return ClassifierConfig.loads(text)


# Nominal field green is darker than pure green; white lines and black
# boundaries are the two transitions the game rules guarantee.
GW_DELTA = (255.0, 127.0, 255.0)  # white minus field green (0, 128, 0)
GB_DELTA = (0.0, -128.0, 0.0)  # black minus field green


def default_config() -> ClassifierConfig:
    """Permissive starting configuration; training replaces the thresholds."""
    loose = Thresholds(angle_max=20.0, proj_min=50.0, len_min=10.0)
    return ClassifierConfig(
        references=(
            ConfiguredReference(TransitionRef("GW", GW_DELTA), loose, FIELD_LINE),
            ConfiguredReference(TransitionRef("GB", GB_DELTA), loose, FIELD_BOUNDARY),
        )
    )

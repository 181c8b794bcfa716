"""Particle swarm training of classification thresholds.

The three thresholds (angle_max, proj_min, len_min) span a box search
space; the training signal is true positives minus false positives over
human-labeled records. Records are reduced once to (angle, projection,
length) triples via the exact classifier similarity path, so every
fitness evaluation replays classification bit-for-bit without touching
images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifier import (
    PROJ_MAX,
    ClassifierConfig,
    ConfiguredReference,
    RgbGradient,
    Thresholds,
    TransitionRef,
    positive_label_for,
    similarity,
)
from .errors import InvalidParam, NoPositives, UnlabeledRecord

# smallest admissible angle_max: the angle bound is an open interval at zero
_ANGLE_FLOOR = 1e-6

_DEFAULT_BOUNDS = ((0.0, 90.0), (0.0, PROJ_MAX), (0.0, 800.0))


@dataclass(frozen=True)
class PsoConfig:
    """Swarm hyperparameters. Defaults are the constriction-equivalent
    values commonly used when a problem gives no guidance. The third
    bound's ceiling is the frame diagonal the thresholds will serve."""

    swarm_size: int = 30
    iterations: int = 200
    w: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    seed: int = 0
    bounds: tuple[tuple[float, float], ...] = _DEFAULT_BOUNDS

    def __post_init__(self):
        if self.swarm_size < 2:
            raise InvalidParam(f"swarm_size must be >= 2, got {self.swarm_size}")
        if self.iterations < 1:
            raise InvalidParam(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 < self.w < 1.0:
            raise InvalidParam(f"inertia w must be in (0, 1), got {self.w}")
        if self.c1 <= 0.0 or self.c2 <= 0.0:
            raise InvalidParam(f"c1 and c2 must be positive, got {self.c1}, {self.c2}")
        if len(self.bounds) != 3:
            raise InvalidParam("bounds must cover the three threshold dimensions")
        for lo, hi in self.bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidParam(f"each bound needs lo < hi, got ({lo}, {hi})")
        (alo, ahi), (plo, phi), (llo, lhi) = self.bounds
        if alo < 0.0 or ahi > 90.0:
            raise InvalidParam(f"angle bounds must stay within (0, 90], got ({alo}, {ahi})")
        if plo < 0.0 or phi > PROJ_MAX:
            raise InvalidParam(f"projection bounds must stay within [0, {PROJ_MAX:.1f}]")
        if llo < 0.0:
            raise InvalidParam(f"length bounds must be non-negative, got lo {llo}")


@dataclass(frozen=True)
class FitnessReport:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def score(self) -> int:
        return self.tp - self.fp


def reduce_records(
    records, ref: TransitionRef, signed: bool = False, positive_label: str | None = None
):
    """Per-record (angle, projection, length, is_positive) arrays.

    Uses the classifier's own similarity function so threshold decisions
    on the reduced features equal full classification exactly.
    """
    label = positive_label_for(ref, positive_label)
    n = len(records)
    angles = np.empty(n, dtype=np.float64)
    projs = np.empty(n, dtype=np.float64)
    lens = np.empty(n, dtype=np.float64)
    pos = np.empty(n, dtype=bool)
    for i, r in enumerate(records):
        if r.human_label is None:
            raise UnlabeledRecord(f"record {i} ({r.image}) has no human label")
        grad = RgbGradient(h=tuple(r.grad_h), v=tuple(r.grad_v))
        angles[i], projs[i] = similarity(grad, ref, signed)
        lens[i] = r.length
        pos[i] = r.human_label == label
    return angles, projs, lens, pos


def _report(angles, projs, lens, pos, position) -> FitnessReport:
    predicted = (angles <= position[0]) & (projs >= position[1]) & (lens >= position[2])
    tp = int(np.count_nonzero(predicted & pos))
    fp = int(np.count_nonzero(predicted & ~pos))
    fn = int(np.count_nonzero(~predicted & pos))
    tn = int(np.count_nonzero(~predicted & ~pos))
    return FitnessReport(tp=tp, fp=fp, tn=tn, fn=fn)


def fitness(
    records,
    thresholds: Thresholds,
    ref: TransitionRef,
    signed: bool = False,
    positive_label: str | None = None,
) -> FitnessReport:
    """Score thresholds against labeled records by replaying classification
    on stored features only."""
    angles, projs, lens, pos = reduce_records(records, ref, signed, positive_label)
    position = (thresholds.angle_max, thresholds.proj_min, thresholds.len_min)
    return _report(angles, projs, lens, pos, position)


def _beats(score, position, best_score, best_position) -> bool:
    """Strict-improvement cascade: score first, then stricter thresholds
    (larger proj_min, then larger len_min, then smaller angle_max).

    The strictness preference only applies between candidates that accept
    positives (score > 0). Among useless candidates it would turn the
    reject-everything corner into an attractor and stall the swarm."""
    if score != best_score:
        return score > best_score
    if score <= 0:
        return False
    if position[1] != best_position[1]:
        return position[1] > best_position[1]
    if position[2] != best_position[2]:
        return position[2] > best_position[2]
    return position[0] < best_position[0]


def train(
    records,
    config: PsoConfig,
    ref: TransitionRef,
    signed: bool = False,
    positive_label: str | None = None,
) -> tuple[Thresholds, FitnessReport, list[int]]:
    """Canonical PSO over the threshold box.

    Deterministic for a fixed seed. Returns the global-best thresholds,
    their fitness report, and the best-score history (one entry for the
    initial swarm plus one per iteration, monotone non-decreasing).
    """
    angles, projs, lens, pos = reduce_records(records, ref, signed, positive_label)
    if not pos.any():
        raise NoPositives(
            "training set has no positive labels; rejecting everything would be optimal"
        )

    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    lo_eff = lo.copy()
    lo_eff[0] = max(lo[0], _ANGLE_FLOOR)
    span = hi - lo
    n = config.swarm_size

    rng = np.random.default_rng(config.seed)
    x = rng.uniform(lo, hi, size=(n, 3))
    x[:, 0] = np.maximum(x[:, 0], lo_eff[0])
    v = rng.uniform(-0.1 * span, 0.1 * span, size=(n, 3))

    def scores_of(positions: np.ndarray) -> np.ndarray:
        predicted = (
            (angles[None, :] <= positions[:, 0, None])
            & (projs[None, :] >= positions[:, 1, None])
            & (lens[None, :] >= positions[:, 2, None])
        )
        tp = (predicted & pos[None, :]).sum(axis=1)
        fp = (predicted & ~pos[None, :]).sum(axis=1)
        return (tp - fp).astype(np.int64)

    scores = scores_of(x)
    pbest = x.copy()
    pbest_scores = scores.copy()

    g_idx = 0
    for i in range(1, n):
        if _beats(scores[i], x[i], scores[g_idx], x[g_idx]):
            g_idx = i
    gbest = x[g_idx].copy()
    gbest_score = int(scores[g_idx])
    history = [gbest_score]

    for _ in range(config.iterations):
        r1 = rng.random(size=(n, 3))
        r2 = rng.random(size=(n, 3))
        v = config.w * v + config.c1 * r1 * (pbest - x) + config.c2 * r2 * (gbest[None, :] - x)
        moved = x + v
        x = np.clip(moved, lo_eff, hi)
        # reflect velocity where clamping bit, so particles sweep back into
        # the box instead of wedging against a wall
        v = np.where(moved != x, -v, v)
        scores = scores_of(x)

        stricter = (
            (x[:, 1] > pbest[:, 1])
            | ((x[:, 1] == pbest[:, 1]) & (x[:, 2] > pbest[:, 2]))
            | (
                (x[:, 1] == pbest[:, 1])
                & (x[:, 2] == pbest[:, 2])
                & (x[:, 0] < pbest[:, 0])
            )
        )
        better = (scores > pbest_scores) | (
            (scores == pbest_scores) & (scores > 0) & stricter
        )
        pbest[better] = x[better]
        pbest_scores[better] = scores[better]

        for i in range(n):
            if _beats(int(pbest_scores[i]), pbest[i], gbest_score, gbest):
                gbest = pbest[i].copy()
                gbest_score = int(pbest_scores[i])
        history.append(gbest_score)

    thresholds = Thresholds(
        angle_max=float(gbest[0]), proj_min=float(gbest[1]), len_min=float(gbest[2])
    )
    report = _report(angles, projs, lens, pos, gbest)
    return thresholds, report, history


def trained_config(
    ref: TransitionRef,
    thresholds: Thresholds,
    signed: bool = False,
    positive_label: str | None = None,
) -> ClassifierConfig:
    """Package one trained reference as a loadable classifier configuration."""
    label = positive_label_for(ref, positive_label)
    return ClassifierConfig(
        references=(ConfiguredReference(ref=ref, thresholds=thresholds, label=label),),
        signed_match=signed,
    )


def history_csv(history: list[int]) -> str:
    lines = ["iteration,best_score"]
    lines.extend(f"{i},{s}" for i, s in enumerate(history))
    return "\n".join(lines) + "\n"

"""Precision/recall scoring, latency benchmarking, and experiment drivers
for illumination robustness and training-set-size sweeps."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .classifier import (
    GW_DELTA,
    NONE_LABEL,
    ClassifierConfig,
    RgbGradient,
    TransitionRef,
    classify,
    classify_features,
    default_config,
    extract_gradient,
)
from .dataset import SegmentRecord, make_record
from .elsed import DetectorParams, detect
from .errors import InvalidParam, UnlabeledRecord
from .pso import PsoConfig, train, trained_config
from .synthetic import SyntheticScene, truth_label


@dataclass(frozen=True)
class PrAndTiming:
    """One result row: classification quality plus pipeline latency.
    n_lines counts records whose human label is a positive class."""

    precision: float
    recall: float
    n_lines: int
    mean_ms: float = 0.0
    std_ms: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.precision <= 1.0:
            raise InvalidParam(f"precision out of [0, 1]: {self.precision}")
        if not 0.0 <= self.recall <= 1.0:
            raise InvalidParam(f"recall out of [0, 1]: {self.recall}")
        if self.n_lines < 0:
            raise InvalidParam(f"n_lines must be >= 0, got {self.n_lines}")


@dataclass(frozen=True)
class BenchmarkResult:
    """Per-image and aggregate wall-clock of detect+classify, first
    iteration discarded as warm-up."""

    per_image: tuple[tuple[float, float], ...]
    mean_ms: float
    std_ms: float
    note: str = "timing excludes image decode"


def score(records, predictions=None) -> PrAndTiming:
    """Tally predictions against human labels.

    A record counts as TP when the prediction equals a positive human
    label, FP when a positive prediction disagrees with the human label,
    and FN when a positive human label is not predicted; a class mix-up
    is both an FP and an FN. Empty denominators score 1.0.
    """
    preds = list(predictions) if predictions is not None else [r.predicted for r in records]
    if len(preds) != len(records):
        raise InvalidParam(
            f"{len(preds)} predictions for {len(records)} records"
        )
    tp = fp = fn = 0
    n_lines = 0
    for record, pred in zip(records, preds):
        human = record.human_label
        if human is None:
            raise UnlabeledRecord(f"record for {record.image} has no human label")
        if human != NONE_LABEL:
            n_lines += 1
            if pred == human:
                tp += 1
            else:
                fn += 1
        if pred != NONE_LABEL and pred != human:
            fp += 1
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return PrAndTiming(precision=precision, recall=recall, n_lines=n_lines)


def _run_pipeline(image: np.ndarray, params: DetectorParams, config: ClassifierConfig):
    segments = detect(image, params)
    return [classify(s, extract_gradient(image, s.pixels), config) for s in segments]


def benchmark(
    images,
    params: DetectorParams | None = None,
    config: ClassifierConfig | None = None,
    repeat: int = 5,
) -> BenchmarkResult:
    """Wall-clock the full detect+classify pipeline over decoded images.

    Runs strictly sequentially; the first of the repeat iterations per
    image is discarded as warm-up, leaving (repeat - 1) samples each.
    """
    if repeat < 3:
        raise InvalidParam(f"repeat must be >= 3 to survive warm-up discard, got {repeat}")
    if not images:
        raise InvalidParam("need at least one image to benchmark")
    params = params or DetectorParams()
    config = config or default_config()
    per_image = []
    all_samples = []
    for image in images:
        samples = []
        for k in range(repeat):
            t0 = time.perf_counter()
            _run_pipeline(image, params, config)
            dt_ms = (time.perf_counter() - t0) * 1e3
            if k > 0:
                samples.append(dt_ms)
        per_image.append((statistics.fmean(samples), statistics.stdev(samples)))
        all_samples.extend(samples)
    return BenchmarkResult(
        per_image=tuple(per_image),
        mean_ms=statistics.fmean(all_samples),
        std_ms=statistics.stdev(all_samples),
    )


def records_from_scene(
    scene: SyntheticScene,
    image_name: str,
    params: DetectorParams | None = None,
    config: ClassifierConfig | None = None,
) -> list[SegmentRecord]:
    """Detect and classify a scene, labeling each record by ground truth."""
    params = params or DetectorParams()
    config = config or default_config()
    records = []
    for classified in _run_pipeline(scene.image, params, config):
        record = make_record(image_name, classified)
        record.human_label = truth_label(classified.segment.pixels, scene.truth_lines)
        records.append(record)
    return records


def predict_records(records, config: ClassifierConfig) -> list[str]:
    """Replay classification on stored features only."""
    labels = []
    for r in records:
        grad = RgbGradient(h=tuple(r.grad_h), v=tuple(r.grad_v))
        label, _, _ = classify_features(r.length, grad, config)
        labels.append(label)
    return labels


def cross_illumination(
    conditions,
    params: DetectorParams | None = None,
    pso_config: PsoConfig | None = None,
    ref: TransitionRef | None = None,
    signed: bool = False,
):
    """Train thresholds per lighting condition and evaluate every
    (train, eval) pair.

    conditions is a sequence of (name, scenes) pairs; returns the
    condition names and the precision matrix with training conditions as
    rows and evaluation conditions as columns.
    """
    conditions = list(conditions)
    if not conditions:
        raise InvalidParam("need at least one lighting condition")
    pso_config = pso_config or PsoConfig()
    ref = ref or TransitionRef("GW", GW_DELTA)
    names = []
    per_condition = []
    for name, scenes in conditions:
        names.append(name)
        records = []
        for i, scene in enumerate(scenes):
            records.extend(records_from_scene(scene, f"{name}/{i:03d}", params))
        per_condition.append(records)
    configs = []
    for records in per_condition:
        thresholds, _, _ = train(records, pso_config, ref, signed)
        configs.append(trained_config(ref, thresholds, signed))
    matrix = np.empty((len(conditions), len(conditions)), dtype=np.float64)
    for i, config in enumerate(configs):
        for j, records in enumerate(per_condition):
            matrix[i, j] = score(records, predict_records(records, config)).precision
    return names, matrix


def set_size_sweep(
    records,
    fractions,
    seeds,
    ref: TransitionRef | None = None,
    pso_config: PsoConfig | None = None,
    signed: bool = False,
    eval_fraction: float = 0.5,
    split_seed: int = 0,
):
    """Train on growing shares of a training pool, evaluate on a fixed
    held-out pool, one row of (fraction, precision, recall) per fraction
    averaged over seeds."""
    fractions = list(fractions)
    seeds = list(seeds)
    if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
        raise InvalidParam(f"fractions must lie in (0, 1], got {fractions}")
    if not seeds:
        raise InvalidParam("need at least one sampling seed")
    if not 0.0 < eval_fraction < 1.0:
        raise InvalidParam(f"eval_fraction must be in (0, 1), got {eval_fraction}")
    if len(records) < 2:
        raise InvalidParam("need at least two records to split train from eval")
    pso_config = pso_config or PsoConfig()
    ref = ref or TransitionRef("GW", GW_DELTA)

    order = np.random.default_rng(split_seed).permutation(len(records))
    n_eval = max(1, round(eval_fraction * len(records)))
    eval_pool = [records[int(i)] for i in order[:n_eval]]
    train_pool = [records[int(i)] for i in order[n_eval:]]
    if not train_pool:
        raise InvalidParam("split left no training records")

    rows = []
    for fraction in fractions:
        precisions = []
        recalls = []
        for seed in seeds:
            k = max(1, round(fraction * len(train_pool)))
            picked = np.random.default_rng(seed).choice(len(train_pool), size=k, replace=False)
            subset = [train_pool[int(i)] for i in picked]
            thresholds, _, _ = train(subset, pso_config, ref, signed)
            config = trained_config(ref, thresholds, signed)
            result = score(eval_pool, predict_records(eval_pool, config))
            precisions.append(result.precision)
            recalls.append(result.recall)
        rows.append((fraction, statistics.fmean(precisions), statistics.fmean(recalls)))
    return rows


def sweep_csv(rows) -> str:
    lines = ["fraction,precision,recall"]
    lines.extend(f"{f:g},{p:.6f},{r:.6f}" for f, p, r in rows)
    return "\n".join(lines) + "\n"


def matrix_csv(names, matrix) -> str:
    matrix = np.asarray(matrix)
    lines = ["train\\eval," + ",".join(names)]
    for name, row in zip(names, matrix):
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"

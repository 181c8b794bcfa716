"""Command-line entry point wiring detection, annotation, training,
evaluation, and benchmarking together.

Exit codes: 0 success, 1 IO or configuration error, 2 unmet training
precondition. The PITCHLINES_LOG environment variable (error, warn,
info, debug) controls stderr verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .classifier import (
    ClassifierConfig,
    FIELD_BOUNDARY,
    FIELD_LINE,
    GB_DELTA,
    GW_DELTA,
    TransitionRef,
    classify,
    default_config,
    extract_gradient,
)
from .dataset import SegmentRecord, make_record, read_records, write_records
from .elsed import DetectorParams, bresenham, detect
from .errors import (
    EmptyChain,
    FormatError,
    InvalidParam,
    InvalidSpec,
    IoError,
    NoPositives,
    SchemaError,
)
from .evaluation import benchmark, predict_records, score
from .imaging import decode_image
from .pso import PsoConfig, history_csv, train, trained_config

log = logging.getLogger("pitchlines.cli")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

_IMAGE_SUFFIXES = (".ppm", ".png")

_DEFAULT_PORT = 8008

# overlay palette: classified lines green, boundaries blue,
# rejected segments red and dashed
_OVERLAY_COLORS = {
    FIELD_LINE: (0, 255, 0),
    FIELD_BOUNDARY: (0, 0, 255),
}
_REJECT_COLOR = (255, 0, 0)
_DASH_PERIOD = 8  # pixels on, then off, along the rasterized line

_REFERENCES = {
    "GW": TransitionRef("GW", GW_DELTA),
    "GB": TransitionRef("GB", GB_DELTA),
}


def _setup_logging() -> None:
    name = os.environ.get("PITCHLINES_LOG", "warn").strip().lower()
    level = _LOG_LEVELS.get(name)
    if level is None:
        level = logging.WARNING
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if name not in _LOG_LEVELS:
        log.warning("unknown PITCHLINES_LOG value %r, using warn", name)


@dataclass(frozen=True)
class AppConfig:
    """Optional configuration file shared by all subcommands."""

    detector: DetectorParams = field(default_factory=DetectorParams)
    classifier: ClassifierConfig | None = None
    paths: dict = field(default_factory=dict)
    port: int = _DEFAULT_PORT

    def __post_init__(self):
        if not (1024 <= self.port <= 65535):
            raise InvalidSpec(f"port must be in [1024, 65535], got {self.port}")

    @staticmethod
    def from_dict(data: dict) -> "AppConfig":
        if not isinstance(data, dict):
            raise InvalidSpec(f"config must be a JSON object, got {type(data).__name__}")
        unknown = set(data) - {"detector", "classifier", "paths", "port"}
        if unknown:
            raise InvalidSpec(f"unknown config keys: {sorted(unknown)}")
        detector = DetectorParams()
        if "detector" in data:
            raw = data["detector"]
            if not isinstance(raw, dict):
                raise InvalidSpec("detector must be a JSON object")
            known = {f.name for f in fields(DetectorParams)}
            extra = set(raw) - known
            if extra:
                raise InvalidSpec(f"unknown detector keys: {sorted(extra)}")
            try:
                detector = DetectorParams(**raw)
            except (TypeError, InvalidParam) as e:
                raise InvalidSpec(f"bad detector parameters: {e}") from e
        classifier = None
        if "classifier" in data:
            classifier = ClassifierConfig.from_dict(data["classifier"])
        paths = data.get("paths", {})
        if not isinstance(paths, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in paths.items()
        ):
            raise InvalidSpec("paths must map string names to string paths")
        port = data.get("port", _DEFAULT_PORT)
        if not isinstance(port, int) or isinstance(port, bool):
            raise InvalidSpec(f"port must be an integer, got {port!r}")
        return AppConfig(detector=detector, classifier=classifier, paths=dict(paths), port=port)


def load_app_config(path: str | None) -> AppConfig:
    """Parse the optional app config; every referenced path must exist."""
    if path is None:
        return AppConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read config file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"config file {path} is not valid JSON: {e}") from e
    config = AppConfig.from_dict(data)
    for name, ref in sorted(config.paths.items()):
        if not Path(ref).exists():
            raise IoError(f"config file {path} references missing path {name}={ref}")
    return config


def load_thresholds(path: str) -> ClassifierConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read thresholds file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"thresholds file {path} is not valid JSON: {e}") from e
    try:
        return ClassifierConfig.from_dict(data)
    except InvalidSpec as e:
        raise InvalidSpec(f"thresholds file {path}: {e}") from e


def _resolve_classifier(app: AppConfig, thresholds_path: str | None) -> ClassifierConfig:
    # a trained thresholds file wins over the app config's classifier
    if thresholds_path is not None:
        return load_thresholds(thresholds_path)
    return app.classifier or default_config()


def _collect_images(input_path: str) -> list[tuple[str, Path]]:
    """Expand a file or directory into (record name, file path) pairs.

    Directory entries are keyed by their path relative to the directory
    so a records file stays valid when the tree moves as a whole.
    """
    root = Path(input_path)
    if root.is_dir():
        found = sorted(
            p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
        )
        return [(p.relative_to(root).as_posix(), p) for p in found]
    if root.is_file():
        return [(root.name, root)]
    raise IoError(f"input path does not exist: {input_path}")


def _detect_records(
    image: np.ndarray, name: str, params: DetectorParams, config: ClassifierConfig
) -> list[SegmentRecord]:
    records = []
    for seg in detect(image, params):
        try:
            grad = extract_gradient(image, seg.pixels)
        except EmptyChain:
            log.debug("segment in %s hugs the border, skipped", name)
            continue
        records.append(make_record(name, classify(seg, grad, config)))
    return records


def _draw_overlay(image: np.ndarray, records: list[SegmentRecord]) -> np.ndarray:
    canvas = image.copy()
    h, w = canvas.shape[:2]
    for r in records:
        color = _OVERLAY_COLORS.get(r.predicted)
        dashed = color is None
        if dashed:
            color = _REJECT_COLOR
        pts = bresenham(
            int(round(r.x1)), int(round(r.y1)), int(round(r.x2)), int(round(r.y2))
        )
        for i, (x, y) in enumerate(pts):
            if dashed and (i // _DASH_PERIOD) % 2:
                continue
            if 0 <= x < w and 0 <= y < h:
                canvas[y, x] = color
    return canvas


def _write_overlay(canvas: np.ndarray, path: Path) -> None:
    from PIL import Image

    try:
        Image.fromarray(canvas, mode="RGB").save(path, format="PNG")
    except OSError as e:
        raise IoError(f"cannot write overlay {path}: {e}") from e


def cmd_detect(args) -> int:
    app = load_app_config(args.config)
    classifier = _resolve_classifier(app, args.thresholds)
    images = _collect_images(args.input)

    all_records: list[SegmentRecord] = []
    overlays: list[tuple[Path, np.ndarray]] = []
    for name, path in images:
        image = decode_image(path)
        records = _detect_records(image, name, app.detector, classifier)
        log.info("%s: %d segments", name, len(records))
        all_records.extend(records)
        if args.draw is not None:
            out_name = Path(name.replace("/", "_")).with_suffix("").name + "_overlay.png"
            overlays.append((Path(args.draw) / out_name, _draw_overlay(image, records)))

    # defer all writes until every input decoded, so a bad input
    # leaves no partial output behind
    write_records(all_records, args.output)
    if args.draw is not None:
        draw_dir = Path(args.draw)
        draw_dir.mkdir(parents=True, exist_ok=True)
        for path, canvas in overlays:
            _write_overlay(canvas, path)
    print(f"wrote {len(all_records)} records from {len(images)} images to {args.output}")
    return 0


def cmd_annotate(args) -> int:
    from . import server

    app = load_app_config(args.config)
    classifier = _resolve_classifier(app, args.thresholds)
    port = args.port if args.port is not None else app.port
    if not (1024 <= port <= 65535):
        raise InvalidParam(f"port must be in [1024, 65535], got {port}")

    session_path = Path(args.session)
    if session_path.exists():
        session = read_records(session_path)
        session.path = str(session_path)
        log.info("loaded %d records from %s", len(session.records), session_path)
    else:
        log.info("session file missing, detecting over %s first", args.images)
        all_records: list[SegmentRecord] = []
        for name, path in _collect_images(args.images):
            image = decode_image(path)
            all_records.extend(_detect_records(image, name, app.detector, classifier))
        write_records(all_records, session_path)
        session = read_records(session_path)
        session.path = str(session_path)

    try:
        httpd = server.make_server(session, Path(args.images), port)
    except OSError as e:
        print(f"error: cannot bind port {port}: {e}", file=sys.stderr)
        return 1
    print(f"serving {len(session.records)} records on http://127.0.0.1:{port}/")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
        write_records(session.records, str(session_path))
        log.info("session flushed to %s", session_path)
    return 0


def cmd_train(args) -> int:
    records = []
    for path in args.annotations:
        records.extend(r for r in read_records(path).records if r.human_label is not None)
    ref = _REFERENCES[args.reference]
    config = PsoConfig(swarm_size=args.swarm, iterations=args.iters, seed=args.seed)
    thresholds, report, history = train(records, config, ref)

    out = Path(args.out)
    trained = trained_config(ref, thresholds)
    try:
        out.write_text(json.dumps(trained.to_dict(), indent=2) + "\n", encoding="utf-8")
        history_path = out.with_name(out.stem + "_history.csv")
        history_path.write_text(history_csv(history), encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write training output: {e}") from e

    print(
        json.dumps(
            {
                "tp": report.tp,
                "fp": report.fp,
                "tn": report.tn,
                "fn": report.fn,
                "score": report.score,
                "thresholds": {
                    "angle_max_deg": thresholds.angle_max,
                    "proj_min": thresholds.proj_min,
                    "len_min": thresholds.len_min,
                },
            }
        )
    )
    log.info("history written to %s", history_path)
    return 0


def cmd_eval(args) -> int:
    session = read_records(args.annotations)
    records = [r for r in session.records if r.human_label is not None]
    if args.thresholds is not None:
        config = load_thresholds(args.thresholds)
        predictions = predict_records(records, config)
    else:
        predictions = None
    result = score(records, predictions)
    print(
        json.dumps(
            {
                "precision": result.precision,
                "recall": result.recall,
                "n_lines": result.n_lines,
                "n_records": len(records),
            }
        )
    )
    return 0


def cmd_bench(args) -> int:
    app = load_app_config(args.config)
    classifier = _resolve_classifier(app, args.thresholds)
    pairs = _collect_images(args.input)
    if not pairs:
        raise IoError(f"no images found under {args.input}")
    names = [name for name, _ in pairs]
    images = [decode_image(path) for _, path in pairs]

    result = benchmark(images, app.detector, classifier, repeat=args.repeat)

    from datetime import datetime, timezone

    width = max(len(n) for n in names + ["aggregate"])
    print(f"{'image'.ljust(width)}  {'mean_ms':>9}  {'std_ms':>8}")
    for name, (mean_ms, std_ms) in zip(names, result.per_image):
        print(f"{name.ljust(width)}  {mean_ms:9.3f}  {std_ms:8.3f}")
    print(f"{'aggregate'.ljust(width)}  {result.mean_ms:9.3f}  {result.std_ms:8.3f}")
    print(f"note: {result.note}")
    print(f"generated_at: {datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pitchlines",
        description="Detect, annotate, and classify soccer-field lines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect segments and write a records file")
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--config", help="app config JSON")
    p.add_argument("--thresholds", help="trained thresholds JSON")
    p.add_argument("--output", required=True, help="records JSONL output path")
    p.add_argument("--draw", help="directory for overlay PNGs")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("annotate", help="serve the annotation UI and API")
    p.add_argument("--images", required=True, help="directory of session images")
    p.add_argument("--session", required=True, help="records file to serve and update")
    p.add_argument("--port", type=int, help=f"TCP port (default {_DEFAULT_PORT})")
    p.add_argument("--config", help="app config JSON")
    p.add_argument("--thresholds", help="trained thresholds JSON")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="fit thresholds to annotated records")
    p.add_argument("--annotations", required=True, nargs="+", help="records files")
    p.add_argument("--reference", required=True, choices=sorted(_REFERENCES))
    p.add_argument("--out", required=True, help="thresholds JSON output path")
    p.add_argument("--swarm", type=int, default=30, help="swarm size")
    p.add_argument("--iters", type=int, default=200, help="iteration count")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score predictions against human labels")
    p.add_argument("--annotations", required=True, help="records file")
    p.add_argument("--thresholds", help="trained thresholds JSON (else stored predictions)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="measure detection and classification latency")
    p.add_argument("--input", required=True, help="directory of images")
    p.add_argument("--config", help="app config JSON")
    p.add_argument("--thresholds", help="trained thresholds JSON")
    p.add_argument("--repeat", type=int, default=5, help="timed repetitions per image")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoPositives as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (IoError, FormatError, SchemaError, InvalidSpec, InvalidParam) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

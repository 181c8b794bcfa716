"""Persistence of detected-segment records and annotation sessions.

On-disk format is JSON Lines: a header object {"schema_version": 1}
followed by one record object per line. An empty session is a zero-byte
file. Records keep the model's prediction and the human label in
separate fields so retraining can never destroy ground truth. All
writes go through a temp-file-plus-rename so readers only ever see
complete files.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

from .classifier import LABELS
from .errors import InvalidParam, IoError, SchemaError

SCHEMA_VERSION = 1

_FIELDS = (
    "image",
    "x1",
    "y1",
    "x2",
    "y2",
    "length",
    "grad_h",
    "grad_v",
    "predicted",
    "human_label",
)


@dataclass
class SegmentRecord:
    """One detected segment: where it was found, its color gradients,
    what the classifier said, and (optionally) what a human said."""

    image: str
    x1: float
    y1: float
    x2: float
    y2: float
    length: float
    grad_h: tuple[float, float, float]
    grad_v: tuple[float, float, float]
    predicted: str
    human_label: str | None = None

    def validate(self) -> None:
        span = math.hypot(self.x2 - self.x1, self.y2 - self.y1)
        if not math.isclose(span, self.length, abs_tol=1e-3):
            raise InvalidParam(
                f"length {self.length} disagrees with endpoints (span {span:.6f})"
            )
        for name, grad in (("grad_h", self.grad_h), ("grad_v", self.grad_v)):
            if len(grad) != 3 or not all(
                isinstance(c, (int, float)) and math.isfinite(c) and -255.0 <= c <= 255.0
                for c in grad
            ):
                raise InvalidParam(f"{name} components must be finite in [-255, 255], got {grad}")
        if self.predicted not in LABELS:
            raise InvalidParam(f"predicted must be one of {LABELS}, got {self.predicted!r}")
        if self.human_label is not None and self.human_label not in LABELS:
            raise InvalidParam(f"human_label must be one of {LABELS}, got {self.human_label!r}")

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "x1": self.x1,
            "y1": self.y1,
            "x2": self.x2,
            "y2": self.y2,
            "length": self.length,
            "grad_h": list(self.grad_h),
            "grad_v": list(self.grad_v),
            "predicted": self.predicted,
            "human_label": self.human_label,
        }

    @staticmethod
    def from_dict(data: dict) -> "SegmentRecord":
        if not isinstance(data, dict):
            raise InvalidParam(f"record must be an object, got {type(data).__name__}")
        missing = set(_FIELDS) - set(data)
        if missing:
            raise InvalidParam(f"missing record fields: {sorted(missing)}")
        unknown = set(data) - set(_FIELDS)
        if unknown:
            raise InvalidParam(f"unknown record fields: {sorted(unknown)}")
        if not isinstance(data["image"], str):
            raise InvalidParam("image must be a string path")
        for key in ("x1", "y1", "x2", "y2", "length"):
            if not isinstance(data[key], (int, float)) or isinstance(data[key], bool):
                raise InvalidParam(f"{key} must be a number, got {data[key]!r}")
        for key in ("grad_h", "grad_v"):
            if not isinstance(data[key], list) or len(data[key]) != 3:
                raise InvalidParam(f"{key} must be a 3-element list")
        record = SegmentRecord(
            image=data["image"],
            x1=float(data["x1"]),
            y1=float(data["y1"]),
            x2=float(data["x2"]),
            y2=float(data["y2"]),
            length=float(data["length"]),
            grad_h=tuple(float(c) for c in data["grad_h"]),
            grad_v=tuple(float(c) for c in data["grad_v"]),
            predicted=data["predicted"],
            human_label=data["human_label"],
        )
        record.validate()
        return record


@dataclass
class AnnotationSession:
    """In-memory view of one records file."""

    records: list[SegmentRecord] = field(default_factory=list)
    images: set[str] = field(default_factory=set)
    schema_version: int = SCHEMA_VERSION
    path: str | None = None

    def image_list(self) -> list[str]:
        """Image paths in first-appearance order (stable across reloads)."""
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.image, None)
        return list(seen)


def make_record(image: str, classified) -> SegmentRecord:
    """Build a record from one classified segment."""
    seg = classified.segment
    return SegmentRecord(
        image=image,
        x1=seg.x1,
        y1=seg.y1,
        x2=seg.x2,
        y2=seg.y2,
        length=seg.length,
        grad_h=tuple(classified.grad.h),
        grad_v=tuple(classified.grad.v),
        predicted=classified.label,
        human_label=None,
    )


def write_records(records: list[SegmentRecord], path) -> None:
    """Atomically persist records as JSON Lines; empty list means a
    zero-byte file."""
    for r in records:
        r.validate()
    lines = []
    if records:
        lines.append(json.dumps({"schema_version": SCHEMA_VERSION}))
        lines.extend(json.dumps(r.to_dict()) for r in records)
    payload = "\n".join(lines) + ("\n" if lines else "")
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd = None
    tmp_path = None
    try:
        fd, tmp_path = tempfile.mkstemp(prefix=".records-", dir=directory)
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            fd = None
            f.write(payload)
        os.replace(tmp_path, path)
        tmp_path = None
    except OSError as e:
        raise IoError(f"cannot write records to {path}: {e}") from e
    finally:
        if tmp_path is not None:
            try:
                os.unlink(tmp_path)
            except OSError:
                pass


def read_records(path) -> AnnotationSession:
    """Parse a records file; schema problems are reported with their
    1-based line number."""
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise IoError(f"cannot read records from {path}: {e}") from e
    session = AnnotationSession(path=path)
    if text == "":
        return session
    lines = text.splitlines()
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise SchemaError(f"header is not valid JSON: {e}", line=1) from e
    if not isinstance(header, dict) or set(header) != {"schema_version"}:
        raise SchemaError('header must be exactly {"schema_version": ...}', line=1)
    if header["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported schema_version {header['schema_version']!r}", line=1
        )
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"record is not valid JSON: {e}", line=lineno) from e
        try:
            record = SegmentRecord.from_dict(data)
        except InvalidParam as e:
            raise SchemaError(str(e), line=lineno) from e
        session.records.append(record)
        session.images.add(record.image)
    return session


def set_label(session: AnnotationSession, record_index: int, label: str) -> AnnotationSession:
    """Set one record's human label and write the session through to disk.

    Rejects labels outside the closed vocabulary without touching the
    record. Negative indices are rejected rather than wrapping around.
    """
    if label not in LABELS:
        raise InvalidParam(f"label must be one of {LABELS}, got {label!r}")
    if not (0 <= record_index < len(session.records)):
        raise IndexError(f"record index {record_index} out of range (0..{len(session.records) - 1})")
    session.records[record_index].human_label = label
    if session.path is not None:
        write_records(session.records, session.path)
    return session

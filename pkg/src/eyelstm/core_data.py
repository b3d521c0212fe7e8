"""Domain types for raw gaze/tracker streams and the on-disk text formats."""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

SPACES = ("pixels_original", "pixels_display", "normalized")
EYE_HEADER = "timestamp_ms,x,y,valid"
TRUTH_HEADER = "frame,x,y"
FEATURES_HEADER = "frame,x,y,space"

_SEP = re.compile(r"[,\t ]+")


class DataFormatError(ValueError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataValidationError(DataFormatError):
    """Well-formed input whose values break a domain invariant."""


def fmt(value: float) -> str:
    """Shortest decimal text that round-trips a float64 exactly."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class EyeSample:
    t_ms: float
    x_px: float
    y_px: float
    valid: bool


@dataclass(frozen=True)
class TrackBox:
    frame: int
    x_px: float
    y_px: float
    w_px: float
    h_px: float

    def __post_init__(self):
        if not (self.w_px > 0 and self.h_px > 0):
            raise DataValidationError(f"box size must be positive, got w={self.w_px} h={self.h_px}")


@dataclass(frozen=True)
class FrameDims:
    """Original video size and the enlarged size it was shown at."""

    width_px: int = 720
    height_px: int = 400
    disp_width_px: int = 1440
    disp_height_px: int = 900

    def __post_init__(self):
        if min(self.width_px, self.height_px, self.disp_width_px, self.disp_height_px) <= 0:
            raise DataValidationError(f"frame dimensions must be positive: {self}")


class PointSeries:
    """An ordered (N, 2) array of finite points tagged with its coordinate space."""

    __slots__ = ("points", "space")

    def __init__(self, points, space: str = "pixels_original"):
        pts = np.array(points, dtype=np.float64).reshape(-1, 2)
        if space not in SPACES:
            raise DataValidationError(f"unknown coordinate space {space!r}")
        if not np.all(np.isfinite(pts)):
            raise DataValidationError("point series contains non-finite coordinates")
        if space == "normalized" and pts.size and (pts.min() < -0.5 or pts.max() > 1.5):
            raise DataValidationError("normalized coordinates outside [-0.5, 1.5]")
        pts.flags.writeable = False
        self.points = pts
        self.space = space

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"PointSeries(n={len(self)}, space={self.space!r})"

    def __eq__(self, other):
        if not isinstance(other, PointSeries):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.points, other.points)


def _read(text: str | TextIO) -> str:
    return text if isinstance(text, str) else text.read()


def _floats(fields: Sequence[str], lineno: int) -> list[float]:
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise DataFormatError(f"non-numeric field in {fields!r}", lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise DataFormatError("non-finite value", lineno)
    return vals


def parse_track_file(text: str | TextIO) -> list[TrackBox]:
    """Parse an OTB-style ``groundtruth_rect.txt``: ``x,y,w,h`` per line.

    Commas, tabs and spaces are all accepted as separators, even mixed within
    one file. Blank lines are skipped; the frame index counts data lines only.
    """
    boxes = []
    for lineno, line in enumerate(_read(text).splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = _SEP.split(line)
        if len(fields) != 4:
            raise DataFormatError(f"expected 4 numbers, got {len(fields)}", lineno)
        x, y, w, h = _floats(fields, lineno)
        if w <= 0 or h <= 0:
            raise DataValidationError(f"box size must be positive, got w={w} h={h}", lineno)
        boxes.append(TrackBox(len(boxes), x, y, w, h))
    return boxes


def write_track_file(boxes: Iterable[TrackBox], sink: TextIO | None = None) -> str:
    out = sink or io.StringIO()
    for b in boxes:
        out.write(f"{fmt(b.x_px)},{fmt(b.y_px)},{fmt(b.w_px)},{fmt(b.h_px)}\n")
    return out.getvalue() if sink is None else ""


def _data_lines(text: str | TextIO, header: str):
    lines = _read(text).splitlines()
    if not lines or lines[0].strip().replace(" ", "") != header:
        raise DataFormatError(f"missing header {header!r}", 1)
    for lineno, line in enumerate(lines[1:], start=2):
        if line.strip():
            yield lineno, [f.strip() for f in line.split(",")]


def parse_eye_file(text: str | TextIO) -> list[EyeSample]:
    """Parse ``eye.csv`` (header ``timestamp_ms,x,y,valid``)."""
    samples: list[EyeSample] = []
    for lineno, fields in _data_lines(text, EYE_HEADER):
        if len(fields) != 4:
            raise DataFormatError(f"expected 4 fields, got {len(fields)}", lineno)
        if fields[3] not in ("0", "1"):
            raise DataFormatError(f"valid must be 0 or 1, got {fields[3]!r}", lineno)
        t, x, y = _floats(fields[:3], lineno)
        if t < 0:
            raise DataValidationError("negative timestamp", lineno)
        if samples and t <= samples[-1].t_ms:
            raise DataValidationError(
                f"timestamps not strictly increasing ({fmt(t)} after {fmt(samples[-1].t_ms)})", lineno
            )
        samples.append(EyeSample(t, x, y, fields[3] == "1"))
    return samples


def write_eye_file(samples: Iterable[EyeSample], sink: TextIO | None = None) -> str:
    out = sink or io.StringIO()
    out.write(EYE_HEADER + "\n")
    for s in samples:
        out.write(f"{fmt(s.t_ms)},{fmt(s.x_px)},{fmt(s.y_px)},{int(s.valid)}\n")
    return out.getvalue() if sink is None else ""


def parse_truth_file(text: str | TextIO) -> np.ndarray:
    """Parse ``truth.csv`` into an (N, 2) array of centers in original pixels."""
    rows = []
    for lineno, fields in _data_lines(text, TRUTH_HEADER):
        if len(fields) != 3:
            raise DataFormatError(f"expected 3 fields, got {len(fields)}", lineno)
        frame, x, y = _floats(fields, lineno)
        if frame != len(rows):
            raise DataFormatError(f"expected frame {len(rows)}, got {fields[0]}", lineno)
        rows.append((x, y))
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def write_truth_file(centers, sink: TextIO | None = None) -> str:
    out = sink or io.StringIO()
    out.write(TRUTH_HEADER + "\n")
    for k, (x, y) in enumerate(np.asarray(centers, dtype=np.float64)):
        out.write(f"{k},{fmt(x)},{fmt(y)}\n")
    return out.getvalue() if sink is None else ""


def parse_features_file(text: str | TextIO) -> PointSeries:
    rows, space = [], None
    for lineno, fields in _data_lines(text, FEATURES_HEADER):
        if len(fields) != 4:
            raise DataFormatError(f"expected 4 fields, got {len(fields)}", lineno)
        frame, x, y = _floats(fields[:3], lineno)
        if frame != len(rows):
            raise DataFormatError(f"expected frame {len(rows)}, got {fields[0]}", lineno)
        if space is None:
            space = fields[3]
        elif fields[3] != space:
            raise DataFormatError("mixed coordinate spaces", lineno)
        rows.append((x, y))
    if not rows:
        raise DataFormatError("features file has no rows")
    return PointSeries(rows, space)


def write_features_file(series: PointSeries, sink: TextIO | None = None) -> str:
    out = sink or io.StringIO()
    out.write(FEATURES_HEADER + "\n")
    for k, (x, y) in enumerate(series.points):
        out.write(f"{k},{fmt(x)},{fmt(y)},{series.space}\n")
    return out.getvalue() if sink is None else ""


def bbox_center(b: TrackBox) -> tuple[float, float]:
    return (b.x_px + b.w_px / 2, b.y_px + b.h_px / 2)


def track_centers(boxes: Sequence[TrackBox]) -> PointSeries:
    return PointSeries([bbox_center(b) for b in boxes], "pixels_original")

"""Turning raw gaze samples and tracker centers into fixed-size model windows.

Order used by the pipeline (see :func:`eye_features` / :func:`track_features`):
per-frame averaging of gaze samples, display→original rescale, gap filling,
the two-stage spike filter, normalization by the frame size, and finally
grouping into 24-step windows that are mirror padded to 30 steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core_data import DataValidationError, EyeSample, FrameDims, PointSeries, TrackBox, track_centers

WINDOW = 24
PAD = 3
PADDED = WINDOW + 2 * PAD


class EmptySeriesError(DataValidationError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    theta1: float = 30.0
    theta2: float = 30.0

    def __post_init__(self):
        if not (self.theta1 > 0 and self.theta2 > 0):
            raise DataValidationError(f"filter thresholds must be positive: {self}")


@dataclass(frozen=True, eq=False)
class Window24:
    steps: np.ndarray
    origin_index: int = 0
    padded_tail: int = 0

    def __post_init__(self):
        steps = np.array(self.steps, dtype=np.float64)
        if steps.shape != (WINDOW, 2):
            raise DataValidationError(f"window must be {WINDOW}x2, got {steps.shape}")
        if not np.all(np.isfinite(steps)):
            raise DataValidationError("window contains non-finite values")
        if not 0 <= self.padded_tail < WINDOW:
            raise DataValidationError(f"padded_tail out of range: {self.padded_tail}")
        object.__setattr__(self, "steps", steps)

    @property
    def n_real(self) -> int:
        return WINDOW - self.padded_tail


@dataclass(frozen=True, eq=False)
class Padded30:
    steps: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.float64)
        if steps.shape != (PADDED, 2):
            raise DataValidationError(f"padded window must be {PADDED}x2, got {steps.shape}")
        object.__setattr__(self, "steps", steps)


def align_eye_to_frames(samples: Sequence[EyeSample], frame_ms: float = 70.0, n_frames: int = 1) -> list[list[EyeSample]]:
    """Bucket valid samples by the frame on screen when they were taken.

    Frame ``k`` owns ``[k*frame_ms, (k+1)*frame_ms)``. Invalid samples and
    samples past the last frame are dropped, so groups may be empty.
    """
    if frame_ms <= 0:
        raise DataValidationError("frame_ms must be positive")
    if n_frames < 1:
        raise DataValidationError("n_frames must be at least 1")
    groups: list[list[EyeSample]] = [[] for _ in range(n_frames)]
    for s in samples:
        if not s.valid:
            continue
        k = int(s.t_ms // frame_ms)
        if 0 <= k < n_frames:
            groups[k].append(s)
    return groups


def extract_frame_feature(group: Sequence[EyeSample], weights: Optional[Sequence[float]] = None) -> Optional[tuple[float, float]]:
    """Weighted mean gaze point of one frame's samples, or None for an empty group."""
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(group),):
            raise DataValidationError(f"expected {len(group)} weights, got {w.size}")
        if not np.all(w > 0):
            raise DataValidationError("weights must be positive")
    if not group:
        return None
    pts = np.array([(s.x_px, s.y_px) for s in group], dtype=np.float64)
    if weights is None:
        x, y = pts.mean(axis=0)
    else:
        x, y = (w @ pts) / w.sum()
    # rounding in the weighted sum can land one ulp outside the group's range
    x = min(max(x, pts[:, 0].min()), pts[:, 0].max())
    y = min(max(y, pts[:, 1].min()), pts[:, 1].max())
    return float(x), float(y)


def fill_gaps(series: Sequence[Optional[tuple[float, float]]], space: str = "pixels_display") -> PointSeries:
    """Linear interpolation across missing frames, edge hold at both ends."""
    present = [i for i, p in enumerate(series) if p is not None]
    if not present:
        raise EmptySeriesError("no valid samples: every frame is missing")
    idx = np.arange(len(series))
    known = np.array([series[i] for i in present], dtype=np.float64)
    out = np.column_stack([np.interp(idx, present, known[:, c]) for c in (0, 1)])
    return PointSeries(out, space)


def rescale_coords(series: PointSeries, dims: FrameDims) -> PointSeries:
    """Map display-pixel coordinates back onto the original video grid."""
    scale = np.array([dims.width_px / dims.disp_width_px, dims.height_px / dims.disp_height_px])
    return PointSeries(series.points * scale, "pixels_original")


def normalize(series: PointSeries, dims: FrameDims) -> PointSeries:
    return PointSeries(series.points / np.array([dims.width_px, dims.height_px], dtype=np.float64), "normalized")


def denormalize(points, dims: FrameDims) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) * np.array([dims.width_px, dims.height_px], dtype=np.float64)


def _spike_stage(v: np.ndarray, theta: float) -> None:
    for i in range(1, len(v) - 1):
        d_prev = v[i] - v[i - 1]
        d_next = v[i] - v[i + 1]
        if d_prev * d_next > 0 and abs(d_prev) > theta and abs(d_next) > theta:
            v[i] = v[i - 1] if abs(d_prev) <= abs(d_next) else v[i + 1]


def _pair_stage(v: np.ndarray, theta: float) -> None:
    for i in range(1, len(v) - 2):
        a, b = v[i - 1], v[i + 2]
        line1 = a + (b - a) / 3.0
        line2 = a + 2.0 * (b - a) / 3.0
        d1, d2 = v[i] - line1, v[i + 1] - line2
        if d1 * d2 > 0 and abs(d1) > theta and abs(d2) > theta:
            v[i], v[i + 1] = line1, line2


def heuristic_filter(series: PointSeries, cfg: FilterConfig = FilterConfig()) -> PointSeries:
    """Two-stage spike removal, applied to x and y independently.

    Stage 1 flattens single-sample spikes (both neighbours on the same side,
    farther than ``theta1``) onto the nearer neighbour. Stage 2 replaces a
    two-sample excursion away from the line joining its outer neighbours
    (both farther than ``theta2``) with that line. Each stage is one causal
    left-to-right pass, so an already-corrected value serves as the left
    neighbour of the next comparison.
    """
    pts = np.array(series.points, dtype=np.float64)
    for c in (0, 1):
        v = pts[:, c]
        if len(v) >= 3:
            _spike_stage(v, cfg.theta1)
        if len(v) >= 4:
            _pair_stage(v, cfg.theta2)
        # interpolation rounding must not leave the input range
        np.clip(v, series.points[:, c].min(), series.points[:, c].max(), out=v)
    return PointSeries(pts, series.space)


def make_windows(series: PointSeries) -> list[Window24]:
    """Split into consecutive 24-step windows; a short tail repeats its last point."""
    pts = series.points
    if len(pts) < 1:
        raise EmptySeriesError("cannot window an empty series")
    windows = []
    for start in range(0, len(pts), WINDOW):
        chunk = pts[start:start + WINDOW]
        tail = WINDOW - len(chunk)
        if tail:
            chunk = np.vstack([chunk, np.repeat(chunk[-1:], tail, axis=0)])
        windows.append(Window24(chunk, origin_index=start, padded_tail=tail))
    return windows


def unwindow(windows: Sequence[Window24]) -> np.ndarray:
    return np.vstack([w.steps[:w.n_real] for w in windows])


def mirror_pad(w: Window24) -> Padded30:
    # numpy "reflect" mirrors about the edge sample without repeating it
    return Padded30(np.pad(w.steps, ((PAD, PAD), (0, 0)), mode="reflect"))


def eye_features(samples: Sequence[EyeSample], n_frames: int, dims: FrameDims = FrameDims(),
                 cfg: FilterConfig = FilterConfig(), frame_ms: float = 70.0) -> PointSeries:
    """Raw gaze stream -> one normalized point per video frame."""
    groups = align_eye_to_frames(samples, frame_ms, n_frames)
    per_frame = [extract_frame_feature(g) for g in groups]
    display = fill_gaps(per_frame, "pixels_display")
    return normalize(heuristic_filter(rescale_coords(display, dims), cfg), dims)


def track_features(boxes: Sequence[TrackBox], dims: FrameDims = FrameDims(),
                   cfg: FilterConfig = FilterConfig()) -> PointSeries:
    """Tracker boxes -> one normalized center per frame."""
    if not boxes:
        raise EmptySeriesError("empty track stream")
    return normalize(heuristic_filter(track_centers(boxes), cfg), dims)

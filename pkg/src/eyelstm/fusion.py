"""Weighted fusion of the per-stream window predictions and the end-to-end pipeline."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from .core_data import (DataFormatError, DataValidationError, EyeSample, FrameDims, PointSeries, TrackBox, fmt)
from .models import ModelConfig, TrainedModel, build_model, make_training_set, predict_many, train, window_inputs
from .neuralnet import DimensionError
from .preprocess import WINDOW, FilterConfig, eye_features, make_windows, normalize, track_features

log = logging.getLogger(__name__)

FUSION_HEADER = "window,step,fused_x,fused_y,eye_x,eye_y,track_x,track_y,label_x,label_y"


@dataclass(frozen=True)
class FusionWeights:
    w1: float = 0.5
    w2: float = 0.5

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0 or abs(self.w1 + self.w2 - 1.0) > 1e-12:
            raise DataValidationError(f"fusion weights must be non-negative and sum to 1: {self}")


def softmax_weights(logits: Sequence[float] = (0.0, 0.0)) -> FusionWeights:
    """Eye/track weights from two trust logits; equal logits give (0.5, 0.5)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape != (2,) or not np.all(np.isfinite(z)):
        raise DataValidationError(f"need two finite logits, got {logits!r}")
    e = np.exp(z - z.max())
    w = e / e.sum()
    return FusionWeights(float(w[0]), float(w[1]))


def fuse_window(eye, track, w: FusionWeights = FusionWeights()) -> np.ndarray:
    """``w1 * eye + w2 * track`` elementwise over a 24x2 window (or a stack of them)."""
    eye = np.asarray(getattr(eye, "steps", eye), dtype=np.float64)
    track = np.asarray(getattr(track, "steps", track), dtype=np.float64)
    if eye.shape != track.shape or eye.shape[-2:] != (WINDOW, 2):
        raise DimensionError(f"cannot fuse windows of shapes {eye.shape} and {track.shape}")
    fused = w.w1 * eye + w.w2 * track
    # keep the convex combination inside its operands despite rounding
    return np.clip(fused, np.minimum(eye, track), np.maximum(eye, track))


@dataclass
class FusedSeries:
    """Fusion results for windows ``1..min(n, m)`` plus what produced them."""

    windows: np.ndarray
    n_eye_windows: int
    n_track_windows: int
    eye_pred: np.ndarray
    track_pred: np.ndarray
    padded_tail: np.ndarray
    labels: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)
    eye_model: Optional[TrainedModel] = None
    track_model: Optional[TrainedModel] = None

    def __len__(self):
        return len(self.windows)

    def real_mask(self) -> np.ndarray:
        """(t, 24) boolean mask of steps that are not tail replication."""
        steps = np.arange(WINDOW)[None, :]
        return steps < (WINDOW - self.padded_tail)[:, None]

    def flat(self, which: str = "windows") -> np.ndarray:
        """Concatenate the real steps of one stream into an (N, 2) array."""
        return getattr(self, which)[self.real_mask()]


def _resolve(model: Union[TrainedModel, ModelConfig], windows, label_windows) -> TrainedModel:
    if isinstance(model, TrainedModel):
        return model
    if label_windows is None:
        raise DataValidationError("training a model inside the pipeline needs ground-truth labels")
    data = make_training_set(windows, label_windows, model.kind)
    return train(build_model(model), data, model)


def fuse_features(eye_feat: PointSeries, track_feat: PointSeries,
                  eye_model: Union[TrainedModel, ModelConfig], track_model: Union[TrainedModel, ModelConfig],
                  weights: FusionWeights = FusionWeights(), labels: Optional[PointSeries] = None) -> FusedSeries:
    """Window, predict and fuse two preprocessed (normalized) feature series."""
    if len(eye_feat) == 0 or len(track_feat) == 0:
        raise DataValidationError("both streams must be non-empty")
    eye_w = make_windows(eye_feat)
    track_w = make_windows(track_feat)
    n, m = len(eye_w), len(track_w)
    warnings = []
    if n != m:
        msg = f"eye stream has {n} windows, track stream {m}; fusing the first {min(n, m)}"
        log.warning(msg)
        warnings.append(msg)
    label_w = make_windows(labels) if labels is not None else None
    eye_model = _resolve(eye_model, eye_w, label_w[:n] if label_w else None)
    track_model = _resolve(track_model, track_w, label_w[:m] if label_w else None)

    t = min(n, m)
    eye_pred = predict_many(eye_model, window_inputs(eye_w[:t], eye_model.config.kind))
    track_pred = predict_many(track_model, window_inputs(track_w[:t], track_model.config.kind))
    fused = fuse_window(eye_pred, track_pred, weights)
    tail = np.array([max(eye_w[i].padded_tail, track_w[i].padded_tail) for i in range(t)], dtype=int)
    label_arr = None
    if label_w is not None:
        if len(label_w) < t:
            raise DataValidationError(f"labels cover {len(label_w)} windows, need {t}")
        label_arr = np.stack([w.steps for w in label_w[:t]])
    return FusedSeries(fused, n, m, eye_pred, track_pred, tail, label_arr, warnings, eye_model, track_model)


def run_pipeline(eye_raw: Sequence[EyeSample], track_raw: Sequence[TrackBox], dims: FrameDims,
                 eye_model: Union[TrainedModel, ModelConfig], track_model: Union[TrainedModel, ModelConfig],
                 weights: FusionWeights = FusionWeights(), truth=None,
                 filter_cfg: FilterConfig = FilterConfig(), frame_ms: float = 70.0) -> FusedSeries:
    """Raw streams in, fused 24-step windows out.

    Preprocesses both streams onto the tracker's frame grid, windows them,
    runs each stream's model (mirror padding for EyeLSTM) and fuses window
    by window. Models given as :class:`ModelConfig` are trained first, on
    ``truth`` (per-frame centers in original pixels).
    """
    if not eye_raw or not track_raw:
        raise DataValidationError("both raw streams must be non-empty")
    n_frames = len(track_raw)
    eye_feat = eye_features(eye_raw, n_frames, dims, filter_cfg, frame_ms)
    track_feat = track_features(track_raw, dims, filter_cfg)
    labels = None
    if truth is not None:
        labels = normalize(PointSeries(truth, "pixels_original"), dims)
    return fuse_features(eye_feat, track_feat, eye_model, track_model, weights, labels)


def write_fusion_csv(fs: FusedSeries, sink: Optional[TextIO] = None) -> str:
    """One row per step; label cells are empty on tail-replicated steps or without labels."""
    out = sink or io.StringIO()
    out.write(FUSION_HEADER + "\n")
    real = fs.real_mask()
    for i in range(len(fs)):
        for k in range(WINDOW):
            row = [str(i), str(k), *map(fmt, fs.windows[i, k]), *map(fmt, fs.eye_pred[i, k]),
                   *map(fmt, fs.track_pred[i, k])]
            if fs.labels is not None and real[i, k]:
                row += [fmt(v) for v in fs.labels[i, k]]
            else:
                row += ["", ""]
            out.write(",".join(row) + "\n")
    return out.getvalue() if sink is None else ""


def read_fusion_csv(text: Union[str, TextIO]) -> dict:
    """Columns of a fusion.csv as float arrays (NaN where a label cell is empty)."""
    text = text if isinstance(text, str) else text.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != FUSION_HEADER:
        raise DataFormatError(f"missing fusion header {FUSION_HEADER!r}", 1)
    cols = FUSION_HEADER.split(",")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(cols):
            raise DataFormatError(f"expected {len(cols)} columns, got {len(fields)}", lineno)
        try:
            rows.append([float(f) if f.strip() else math.nan for f in fields])
        except ValueError:
            raise DataFormatError("non-numeric cell", lineno) from None
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(cols))
    return {c: arr[:, j] for j, c in enumerate(cols)}

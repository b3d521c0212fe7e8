"""EyeLSTM: fuse eye-tracking gaze with a visual object tracker via small sequence models."""

__version__ = "0.1.0"

from .core_data import DataFormatError, DataValidationError, EyeSample, FrameDims, PointSeries, TrackBox
from .fusion import FusedSeries, FusionWeights, fuse_features, run_pipeline, softmax_weights
from .metrics import MetricsReport, evaluate
from .models import ModelConfig, TrainedModel, build_model, load_model, predict, save_model, train
from .preprocess import FilterConfig, Padded30, Window24, heuristic_filter, make_windows, mirror_pad

__all__ = [
    "DataFormatError", "DataValidationError", "EyeSample", "FrameDims", "PointSeries", "TrackBox",
    "FusedSeries", "FusionWeights", "fuse_features", "run_pipeline", "softmax_weights",
    "MetricsReport", "evaluate", "ModelConfig", "TrainedModel", "build_model", "load_model",
    "predict", "save_model", "train", "FilterConfig", "Padded30", "Window24", "heuristic_filter",
    "make_windows", "mirror_pad",
]

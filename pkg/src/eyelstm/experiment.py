"""Scenario-level comparison of EyeLSTM against the MLP and deep-LSTM baselines.

For each scenario, ``train_replicas`` independently seeded recordings train
one model per (algorithm, stream) pair; a further held-out recording is
preprocessed, predicted, fused and scored against its ground truth.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional


from .core_data import PointSeries, write_eye_file, write_track_file, write_truth_file
from .fusion import fuse_features, softmax_weights, write_fusion_csv
from .metrics import compare_table, evaluate, write_metrics_csv
from .models import KINDS, ModelConfig, TrainedModel, build_model, make_training_set, train
from .preprocess import FilterConfig, eye_features, make_windows, normalize, track_features
from .simulator import SCENARIOS, Scenario, make_scenario, simulate

log = logging.getLogger(__name__)

RAW_EYE = "raw_eye"
RAW_TRACK = "raw_track"


@dataclass
class ExperimentConfig:
    scenarios: tuple = SCENARIOS
    algorithms: tuple = KINDS
    duration_s: float = 30.0
    train_replicas: int = 3
    seed: int = 0
    restarts: int = 3
    epochs: int = 200
    model_overrides: dict = field(default_factory=dict)
    logits: tuple = (0.0, 0.0)
    filter_cfg: FilterConfig = field(default_factory=FilterConfig)

    def model_config(self, kind: str) -> ModelConfig:
        base = dict(restarts=self.restarts, epochs=self.epochs, seed=self.seed)
        return ModelConfig(kind=kind, **{**base, **self.model_overrides.get(kind, {})})

    def replica(self, name: str, index: int) -> Scenario:
        """Replica ``index`` of a scenario; index ``train_replicas`` is the held-out one."""
        return make_scenario(name, self.duration_s, seed=self.seed * 1000 + index)


@dataclass
class Recording:
    eye: PointSeries
    track: PointSeries
    labels: PointSeries


def record(s: Scenario, filter_cfg: FilterConfig = FilterConfig()) -> Recording:
    """Simulate one scenario and preprocess both streams and the labels."""
    truth, eye, track = simulate(s)
    return Recording(eye_features(eye, len(truth), s.dims, filter_cfg, s.frame_ms),
                     track_features(track, s.dims, filter_cfg),
                     normalize(PointSeries(truth, "pixels_original"), s.dims))


def train_stream(recs: list[Recording], stream: str, cfg: ModelConfig) -> TrainedModel:
    feats, labels = [], []
    for r in recs:
        feats += make_windows(getattr(r, stream))
        labels += make_windows(r.labels)
    return train(build_model(cfg), make_training_set(feats, labels, cfg.kind), cfg)


@dataclass
class ScenarioResult:
    name: str
    fused: dict
    metrics: dict
    seconds: float


def run_scenario(name: str, cfg: ExperimentConfig) -> ScenarioResult:
    t0 = time.perf_counter()
    weights = softmax_weights(cfg.logits)
    train_recs = [record(cfg.replica(name, i), cfg.filter_cfg) for i in range(cfg.train_replicas)]
    test = record(cfg.replica(name, cfg.train_replicas), cfg.filter_cfg)

    metrics = {
        RAW_EYE: evaluate(test.eye.points, test.labels.points),
        RAW_TRACK: evaluate(test.track.points, test.labels.points),
    }
    fused = {}
    for kind in cfg.algorithms:
        mcfg = cfg.model_config(kind)
        eye_model = train_stream(train_recs, "eye", mcfg)
        track_model = train_stream(train_recs, "track", mcfg)
        fs = fuse_features(test.eye, test.track, eye_model, track_model, weights, test.labels)
        fused[kind] = fs
        metrics[kind] = evaluate(fs.flat(), fs.flat("labels"))
        log.info("%s/%s: fused RMSE %.4f", name, kind, metrics[kind].rmse)
    return ScenarioResult(name, fused, metrics, time.perf_counter() - t0)


@dataclass
class ExperimentResult:
    scenarios: dict

    def table(self) -> dict:
        """``{(algorithm, dataset): MetricsReport}`` over every scenario."""
        return {(alg, name): rep for name, res in self.scenarios.items() for alg, rep in res.metrics.items()}

    def report(self, include_raw: bool = False) -> tuple[str, str]:
        rows = {k: v for k, v in self.table().items() if include_raw or k[0] not in (RAW_EYE, RAW_TRACK)}
        algs = sorted({a for a, _ in rows})
        return compare_table(rows, datasets=list(self.scenarios), algorithms=algs)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> ExperimentResult:
    """Run every scenario; with ``out_dir``, write fusion.csv files, metrics.csv and report.txt."""
    results = {}
    for name in cfg.scenarios:
        results[name] = run_scenario(name, cfg)
    res = ExperimentResult(results)
    if out_dir is not None:
        write_outputs(res, out_dir)
    return res


def write_outputs(res: ExperimentResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, sres in res.scenarios.items():
        for kind, fs in sres.fused.items():
            d = os.path.join(out_dir, name, kind)
            os.makedirs(d, exist_ok=True)
            with open(os.path.join(d, "fusion.csv"), "w") as fh:
                write_fusion_csv(fs, fh)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        write_metrics_csv(res.table(), fh)
    text, csv_text = res.report()
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(text)
    with open(os.path.join(out_dir, "report.csv"), "w") as fh:
        fh.write(csv_text)


def write_recording(s: Scenario, out_dir: str) -> tuple[int, int]:
    """Write truth.csv / eye.csv / track.csv for one scenario; returns (frames, eye samples)."""
    truth, eye, track = simulate(s)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "truth.csv"), "w") as fh:
        write_truth_file(truth, fh)
    with open(os.path.join(out_dir, "eye.csv"), "w") as fh:
        write_eye_file(eye, fh)
    with open(os.path.join(out_dir, "track.csv"), "w") as fh:
        write_track_file(track, fh)
    return len(truth), len(eye)

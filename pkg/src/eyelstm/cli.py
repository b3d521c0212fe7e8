"""Command-line entry point: ``eyelstm {simulate,preprocess,train,fuse,evaluate,report,experiment}``.

Exit codes: 0 success, 1 data or validation error, 2 usage error.
A ``--config`` INI file supplies defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from dataclasses import fields
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core_data import (DataFormatError, FrameDims, PointSeries, fmt, parse_eye_file, parse_features_file,
                        parse_track_file, parse_truth_file, write_features_file)
from .experiment import ExperimentConfig, run_experiment, write_recording
from .fusion import fuse_features, read_fusion_csv, softmax_weights, write_fusion_csv
from .metrics import compare_table, evaluate, read_metrics_csv, write_metrics_csv
from .models import KINDS, ModelConfig, build_model, load_model, make_training_set, save_model, train
from .preprocess import FilterConfig, eye_features, make_windows, normalize, track_features
from .simulator import SCENARIOS, make_scenario

log = logging.getLogger("eyelstm")


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    with open(path) as fh:
        return fh.read()


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _floats(text: str, n: int, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{what}: expected {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{what}: expected {n} finite comma-separated numbers, got {text!r}")
    return vals


def _dims(args) -> FrameDims:
    w, h, dw, dh = _floats(args.dims, 4, "--dims")
    return FrameDims(int(w), int(h), int(dw), int(dh))


def _filter(args) -> FilterConfig:
    return FilterConfig(args.theta1, args.theta2)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    s = make_scenario(args.scenario, args.duration, seed=args.seed)
    replicas = max(1, args.replicas)
    for i in range(replicas):
        si = s if replicas == 1 else make_scenario(args.scenario, args.duration, seed=args.seed + i)
        out = args.out if replicas == 1 else os.path.join(args.out, f"replica_{i}")
        frames, samples = write_recording(si, out)
        print(f"{out}: {frames} frames, {samples} eye samples, {frames} track boxes")
    return 0


def cmd_preprocess(args) -> int:
    dims = _dims(args)
    boxes = parse_track_file(_read(args.track))
    samples = parse_eye_file(_read(args.eye))
    if not any(s.valid for s in samples):
        raise DataFormatError("no valid samples in eye file")
    eye = eye_features(samples, len(boxes), dims, _filter(args), args.frame_ms)
    track = track_features(boxes, dims, _filter(args))
    _write(os.path.join(args.out, "eye_features.csv"), write_features_file(eye))
    _write(os.path.join(args.out, "track_features.csv"), write_features_file(track))
    print(f"wrote {len(eye)} eye and {len(track)} track feature rows to {args.out}")
    return 0


def _labels(path: str, dims: FrameDims) -> PointSeries:
    return normalize(PointSeries(parse_truth_file(_read(path)), "pixels_original"), dims)


def _model_config(args, kind: str) -> ModelConfig:
    base = args.model_defaults.get(kind, {})
    keys = ("epochs", "restarts", "lr", "batch_size", "patience", "hidden")
    over = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return ModelConfig(kind=kind, seed=args.seed, **{**base, **over})


def cmd_train(args) -> int:
    if len(args.features) != len(args.labels):
        raise UsageError("give one --labels file per --features file")
    dims = _dims(args)
    cfg = _model_config(args, args.kind)
    feats, labels = [], []
    for fpath, lpath in zip(args.features, args.labels):
        f = parse_features_file(_read(fpath))
        lab = _labels(lpath, dims)
        if len(f) != len(lab):
            raise DataFormatError(f"{fpath} has {len(f)} frames but {lpath} has {len(lab)}")
        feats += make_windows(f)
        labels += make_windows(lab)
    model = train(build_model(cfg), make_training_set(feats, labels, cfg.kind), cfg)
    name = args.name or cfg.kind
    _write(os.path.join(args.out, f"{name}.model"), save_model(model))
    hist = "epoch,train_loss\n" + "".join(f"{i + 1},{fmt(v)}\n" for i, v in enumerate(model.train_history))
    _write(os.path.join(args.out, f"{name}_history.csv"), hist)
    print(f"{name}: best validation loss {model.val_loss:.6g} over {cfg.restarts} restarts")
    return 0


def cmd_fuse(args) -> int:
    dims = _dims(args)
    eye_model = load_model(_read(args.eye_model))
    track_model = load_model(_read(args.track_model))
    eye = parse_features_file(_read(args.eye_features))
    track = parse_features_file(_read(args.track_features))
    labels = _labels(args.truth, dims) if args.truth else None
    weights = softmax_weights(_floats(args.logits, 2, "--logits"))
    fs = fuse_features(eye, track, eye_model, track_model, weights, labels)
    for w in fs.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _write(os.path.join(args.out, "fusion.csv"), write_fusion_csv(fs))
    print(f"fused {len(fs)} windows (w_eye={weights.w1:.6g}, w_track={weights.w2:.6g})")
    return 0


def cmd_evaluate(args) -> int:
    text = _read(args.input)
    header = text.split("\n", 1)[0].strip()
    if header.startswith("window,"):
        cols = read_fusion_csv(text)
        keep = ~np.isnan(cols["label_x"])
        pred = np.column_stack([cols[f"{args.column}_x"], cols[f"{args.column}_y"]])[keep]
        truth = np.column_stack([cols["label_x"], cols["label_y"]])[keep]
        if args.truth:
            log.info("labels taken from the fusion file; --truth ignored")
    else:
        if not args.truth:
            raise UsageError("evaluating a features file needs --truth")
        feats = parse_features_file(text)
        truth = _labels(args.truth, _dims(args)).points
        if len(feats) != len(truth):
            raise DataFormatError(f"{len(feats)} feature rows vs {len(truth)} truth rows")
        pred = feats.points
    if len(pred) == 0:
        raise DataFormatError("no labelled rows to evaluate")
    rep = evaluate(pred, truth)
    out = os.path.join(args.out, "metrics.csv")
    _write(out, write_metrics_csv({(args.algorithm, args.dataset): rep}))
    print(f"{args.algorithm}/{args.dataset}: RMSE {rep.rmse:.4f} RMSPE {rep.rmspe_pct:.4f} "
          f"MAE {rep.mae:.4f} MAPE {rep.mape_pct:.4f}")
    return 0


def cmd_report(args) -> int:
    rows = {}
    for path in args.metrics:
        rows.update(read_metrics_csv(_read(path)))
    if not rows:
        raise DataFormatError("no metrics rows found")
    text, csv_text = compare_table(rows)
    print(text, end="")
    if args.out:
        _write(os.path.join(args.out, "report.txt"), text)
        _write(os.path.join(args.out, "report.csv"), csv_text)
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(
        scenarios=tuple(args.scenarios.split(",")) if args.scenarios else args.exp_defaults.get("scenarios", SCENARIOS),
        duration_s=args.duration,
        train_replicas=args.replicas,
        seed=args.seed,
        restarts=args.restarts if args.restarts is not None else 3,
        epochs=args.epochs if args.epochs is not None else 200,
        model_overrides=args.model_defaults,
        logits=tuple(_floats(args.logits, 2, "--logits")),
        filter_cfg=_filter(args),
    )
    for name in cfg.scenarios:
        if name not in SCENARIOS:
            raise UsageError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    res = run_experiment(cfg, args.out)
    text, _ = res.report(include_raw=True)
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

_DEFAULTS = {
    "seed": 0, "out": ".", "dims": "720,400,1440,900", "theta1": 30.0, "theta2": 30.0,
    "frame_ms": 70.0, "logits": "0,0", "duration": 120.0, "replicas": 1,
}


def _load_config(path: Optional[str]) -> tuple[dict, dict, dict]:
    """Flatten an INI file into parser defaults, per-kind model overrides and experiment settings."""
    if not path:
        return {}, {}, {}
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    flat, models, exp = {}, {}, {}
    for section in cp.sections():
        items = dict(cp[section])
        if section.startswith("model."):
            kind = section.split(".", 1)[1]
            unknown = set(items) - {f.name for f in fields(ModelConfig)} | ({"kind"} & set(items))
            if kind not in KINDS or unknown:
                raise UsageError(f"bad config section [{section}]: unknown kind or keys {sorted(unknown)}")
            models[kind] = {k: _coerce(v) for k, v in items.items()}
        elif section == "experiment" and "scenarios" in items:
            exp["scenarios"] = tuple(s.strip() for s in items.pop("scenarios").split(","))
            flat.update({k.replace("-", "_"): _coerce(v) for k, v in items.items()})
        else:
            flat.update({k.replace("-", "_"): _coerce(v) for k, v in items.items()})
    return flat, models, exp


def _coerce(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    if ":" in v and all(p.strip().isdigit() for p in v.split(":")):
        return tuple(int(p) for p in v.split(":"))
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration; flags override its values")
    common.add_argument("--seed", type=int, help="global seed (default 0)")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--dims", help="W,H,DISPLAY_W,DISPLAY_H in pixels (default 720,400,1440,900)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="eyelstm", description="Eye/tracker data fusion with EyeLSTM.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write truth/eye/track CSVs for a scenario")
    s.add_argument("--scenario", required=True, choices=SCENARIOS)
    s.add_argument("--duration", type=float, help="seconds (default 120)")
    s.add_argument("--replicas", type=int, help="independent recordings, seeds seed..seed+K-1")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preprocess", parents=[common], help="raw streams -> per-frame normalized features")
    s.add_argument("--eye", required=True)
    s.add_argument("--track", required=True)
    s.add_argument("--theta1", type=float)
    s.add_argument("--theta2", type=float)
    s.add_argument("--frame-ms", dest="frame_ms", type=float)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", parents=[common], help="train one model on feature/label pairs")
    s.add_argument("--kind", required=True, choices=KINDS)
    s.add_argument("--features", required=True, nargs="+")
    s.add_argument("--labels", required=True, nargs="+", help="truth.csv files matching --features")
    s.add_argument("--name", help="output file stem (default: the kind)")
    s.add_argument("--epochs", type=int)
    s.add_argument("--restarts", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--hidden", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("fuse", parents=[common], help="predict both streams and fuse them")
    s.add_argument("--eye-model", required=True)
    s.add_argument("--track-model", required=True)
    s.add_argument("--eye-features", required=True)
    s.add_argument("--track-features", required=True)
    s.add_argument("--truth", help="truth.csv for the label columns")
    s.add_argument("--logits", help="eye,track softmax logits (default 0,0)")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("evaluate", parents=[common], help="score fusion.csv or a features file")
    s.add_argument("--input", required=True)
    s.add_argument("--truth")
    s.add_argument("--column", choices=("fused", "eye", "track"), default="fused")
    s.add_argument("--algorithm", default="eyelstm")
    s.add_argument("--dataset", default="dataset")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", parents=[common], help="comparison table from metrics files")
    s.add_argument("--metrics", required=True, nargs="+")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("experiment", parents=[common], help="full simulate/train/fuse/evaluate comparison")
    s.add_argument("--scenarios", help="comma-separated subset (default: all four)")
    s.add_argument("--duration", type=float)
    s.add_argument("--replicas", type=int, help="training recordings per scenario (default 3)")
    s.add_argument("--restarts", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--logits")
    s.add_argument("--theta1", type=float)
    s.add_argument("--theta2", type=float)
    s.set_defaults(func=cmd_experiment, exp=True)
    return p


def _apply_defaults(args, file_values: dict) -> None:
    defaults = dict(_DEFAULTS)
    if getattr(args, "exp", False):
        defaults.update(duration=30.0, replicas=3)
    for key, value in {**defaults, **file_values}.items():
        if getattr(args, key, None) is None and (hasattr(args, key) or key in defaults):
            setattr(args, key, value)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help/--version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        flat, models, exp = _load_config(args.config)
        args.model_defaults = models
        args.exp_defaults = exp
        _apply_defaults(args, flat)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"eyelstm: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"eyelstm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""EyeLSTM and the MLP / deep-LSTM baselines: construction, training, persistence."""

from __future__ import annotations

import copy
import io
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, TextIO

import numpy as np

from .core_data import DataFormatError, DataValidationError, fmt
from .neuralnet import LSTM, AdamState, Conv1D, Dense, DimensionError, Flatten, Network, Reshape, adam_step, mse_loss
from .preprocess import PAD, PADDED, WINDOW, Padded30, Window24

log = logging.getLogger(__name__)

KINDS = ("eyelstm", "mlp", "dlstm")
MAGIC = "EYELSTM-MODEL"
VERSION = "v1"
MAX_RESTARTS = 100


class ConfigError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "eyelstm"
    conv_channels: tuple = (16, 32, 32)
    dense_width: int = 32
    hidden: int = 64
    mlp_widths: tuple = (64, 64)
    lr: float = 1e-3
    epochs: int = 200
    restarts: int = 5
    batch_size: int = 8
    seed: int = 0
    patience: int = 20
    val_fraction: float = 0.2
    center: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "mlp_widths", tuple(int(c) for c in self.mlp_widths))
        counts = [self.dense_width, self.hidden, self.epochs, self.restarts, self.batch_size, self.patience,
                  *self.conv_channels, *self.mlp_widths]
        if min(counts) <= 0 or len(self.conv_channels) != 3 or not self.mlp_widths:
            raise ConfigError(f"layer widths and counts must be positive: {self}")
        if self.restarts > MAX_RESTARTS:
            raise ConfigError(f"restarts capped at {MAX_RESTARTS}")
        if not self.lr > 0 or not 0 <= self.val_fraction < 1:
            raise ConfigError("lr must be positive and val_fraction in [0, 1)")

    @property
    def input_steps(self) -> int:
        return PADDED if self.kind == "eyelstm" else WINDOW


def build_eyelstm(cfg: ModelConfig) -> Network:
    """conv×3 (kernel 3, valid) → dense → LSTM → linear head; 30×2 in, 24×2 out."""
    if cfg.kind != "eyelstm":
        raise ConfigError(f"build_eyelstm needs kind 'eyelstm', got {cfg.kind!r}")
    c1, c2, c3 = cfg.conv_channels
    return Network([
        Conv1D(2, c1, 3, relu=True),
        Conv1D(c1, c2, 3, relu=True),
        Conv1D(c2, c3, 3, relu=True),
        Dense(c3, cfg.dense_width, relu=True),
        LSTM(cfg.dense_width, cfg.hidden),
        Dense(cfg.hidden, 2),
    ], input_steps=PADDED)


def build_mlp(cfg: ModelConfig) -> Network:
    if cfg.kind != "mlp":
        raise ConfigError(f"build_mlp needs kind 'mlp', got {cfg.kind!r}")
    layers = [Flatten()]
    width = 2 * WINDOW
    for w in cfg.mlp_widths:
        layers.append(Dense(width, w, relu=True))
        width = w
    layers += [Dense(width, 2 * WINDOW), Reshape(WINDOW, 2)]
    return Network(layers, input_steps=WINDOW)


def build_dlstm(cfg: ModelConfig) -> Network:
    """Three stacked LSTMs and a linear head over the unpadded window."""
    if cfg.kind != "dlstm":
        raise ConfigError(f"build_dlstm needs kind 'dlstm', got {cfg.kind!r}")
    H = cfg.hidden
    return Network([LSTM(2, H), LSTM(H, H), LSTM(H, H), Dense(H, 2)], input_steps=WINDOW)


BUILDERS = {"eyelstm": build_eyelstm, "mlp": build_mlp, "dlstm": build_dlstm}


def build_model(cfg: ModelConfig) -> Network:
    return BUILDERS[cfg.kind](cfg)


@dataclass
class TrainingSet:
    """Input windows, 24-step labels and the mask of real (non-replicated) steps."""

    inputs: np.ndarray
    labels: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if len(self.inputs) == 0:
            raise DataValidationError("training set is empty")
        if self.labels.shape != (len(self.inputs), WINDOW, 2) or self.mask.shape != (len(self.inputs), WINDOW):
            raise DimensionError(f"labels {self.labels.shape} / mask {self.mask.shape} do not match {len(self.inputs)} windows")

    def __len__(self):
        return len(self.inputs)


def window_inputs(windows: list[Window24], kind: str) -> np.ndarray:
    from .preprocess import mirror_pad

    if kind == "eyelstm":
        return np.stack([mirror_pad(w).steps for w in windows])
    return np.stack([w.steps for w in windows])


def make_training_set(feature_windows: list[Window24], label_windows: list[Window24], kind: str) -> TrainingSet:
    if len(feature_windows) != len(label_windows):
        raise DataValidationError(f"{len(feature_windows)} feature windows vs {len(label_windows)} label windows")
    mask = np.array([[1.0] * w.n_real + [0.0] * w.padded_tail for w in label_windows]).reshape(-1, WINDOW)
    return TrainingSet(window_inputs(feature_windows, kind), np.stack([w.steps for w in label_windows]), mask)


@dataclass
class TrainedModel:
    config: ModelConfig
    network: Network
    train_history: list = field(default_factory=list)
    val_loss: float = float("nan")
    restart_val_losses: list = field(default_factory=list)

    def __post_init__(self):
        if not np.isfinite(self.val_loss):
            raise DataValidationError("trained model has non-finite validation loss")


@dataclass(frozen=True, eq=False)
class WindowPrediction:
    steps: np.ndarray
    source: str = "eye"


def _split(n: int, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng((cfg.seed, 0x5917)).permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    if n_val == 0 or n_val == n:
        # too few windows to hold any out; validate on the training data
        return order, order
    return order[n_val:], order[:n_val]


def window_offsets(inputs: np.ndarray) -> np.ndarray:
    """Per-window mean of the 24 real input steps, shaped (N, 1, 2)."""
    steps = inputs[:, PAD:PAD + WINDOW] if inputs.shape[1] == PADDED else inputs
    return steps.mean(axis=1, keepdims=True)


def _centered(data: TrainingSet, cfg: ModelConfig) -> TrainingSet:
    if not cfg.center:
        return data
    off = window_offsets(data.inputs)
    return TrainingSet(data.inputs - off, data.labels - off, data.mask)


def _loss(net: Network, data: TrainingSet, idx: np.ndarray) -> float:
    return mse_loss(net.forward(data.inputs[idx]), data.labels[idx], data.mask[idx])[0]


def _train_once(net: Network, data: TrainingSet, cfg: ModelConfig, restart: int,
                train_idx: np.ndarray, val_idx: np.ndarray):
    rng = np.random.default_rng((cfg.seed, restart))
    net.init_params(rng)
    state = AdamState()
    best_val, best_params = np.inf, [p.copy() for p in net.param_list()]
    history, stale = [], 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_idx)
        total, weight = 0.0, 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, dpred = mse_loss(net.forward(data.inputs[idx]), data.labels[idx], data.mask[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch} (restart {restart})")
            net.backward(dpred)
            adam_step(net.param_list(), net.grad_list(), state, lr=cfg.lr)
            w = data.mask[idx].sum()
            total += loss * w
            weight += w
        history.append(total / weight)
        val = _loss(net, data, val_idx)
        if not np.isfinite(val):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch} (restart {restart})")
        if val < best_val:
            best_val, stale = val, 0
            best_params = [p.copy() for p in net.param_list()]
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    net.set_param_list(best_params)
    return best_val, history


def train(net: Network, data: TrainingSet, cfg: ModelConfig) -> TrainedModel:
    """Fit ``net`` by minibatch Adam from ``cfg.restarts`` seeded initialisations.

    Each restart early-stops on a fixed held-out split and keeps its best
    epoch; the restart with the lowest validation loss is returned.
    """
    if len(data) == 0:
        raise DataValidationError("training set is empty")
    if data.inputs.shape[1:] != (cfg.input_steps, 2):
        raise DimensionError(f"{cfg.kind} expects inputs of shape ({cfg.input_steps}, 2), got {data.inputs.shape[1:]}")
    train_idx, val_idx = _split(len(data), cfg)
    data = _centered(data, cfg)
    best = None
    val_losses = []
    for r in range(cfg.restarts):
        val, history = _train_once(net, data, cfg, r, train_idx, val_idx)
        val_losses.append(val)
        log.debug("%s restart %d: val %.6g after %d epochs", cfg.kind, r, val, len(history))
        if best is None or val < best[0]:
            best = (val, history, [p.copy() for p in net.param_list()])
    val, history, params = best
    final = copy.deepcopy(net)
    final.set_param_list(params)
    return TrainedModel(cfg, final, history, val, val_losses)


def predict_many(model: TrainedModel, inputs) -> np.ndarray:
    """Forward a stack (or a single window) of inputs; undoes window centering."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 2:
        return predict_many(model, x[None])[0]
    if x.ndim != 3 or x.shape[1:] != (model.config.input_steps, 2):
        raise DimensionError(f"{model.config.kind} expects ({model.config.input_steps}, 2) windows, got {x.shape}")
    if not model.config.center:
        return model.network.forward(x)
    off = window_offsets(x)
    return model.network.forward(x - off) + off


def predict(model: TrainedModel, window, source: str = "eye") -> WindowPrediction:
    if isinstance(window, (Window24, Padded30)):
        window = window.steps
    out = predict_many(model, np.asarray(window, dtype=np.float64))
    if out.shape != (WINDOW, 2):
        raise DimensionError(f"prediction must be {WINDOW}x2, got {out.shape}")
    return WindowPrediction(out, source)


# ---------------------------------------------------------------------------
# persistence

_CFG_TYPES = {f.name: f.type for f in fields(ModelConfig)}


def _cfg_line(cfg: ModelConfig) -> str:
    parts = []
    for key, value in asdict(cfg).items():
        if isinstance(value, tuple):
            value = ":".join(str(v) for v in value)
        elif isinstance(value, float):
            value = fmt(value)
        parts.append(f"{key}={value}")
    return "config " + " ".join(parts)


def _parse_cfg(line: str) -> ModelConfig:
    values = {}
    for item in line.split()[1:]:
        key, _, raw = item.partition("=")
        kind = _CFG_TYPES.get(key)
        if kind is None:
            raise DataFormatError(f"unknown config key {key!r}")
        if kind == "tuple":
            values[key] = tuple(int(v) for v in raw.split(":"))
        elif kind == "float":
            values[key] = float(raw)
        elif kind == "bool":
            values[key] = raw == "True"
        elif kind == "int":
            values[key] = int(raw)
        else:
            values[key] = raw
    try:
        return ModelConfig(**values)
    except ConfigError as exc:
        raise DataValidationError(str(exc)) from None


def save_model(model: TrainedModel, sink: Optional[TextIO] = None) -> str:
    """Write the text model format; returns the text when no sink is given."""
    out = sink or io.StringIO()
    out.write(f"{MAGIC} {VERSION}\n")
    out.write(_cfg_line(model.config) + "\n")
    out.write(f"val_loss {fmt(model.val_loss)}\n")
    out.write("restart_val_losses " + " ".join(fmt(v) for v in model.restart_val_losses) + "\n")
    out.write("history " + " ".join(fmt(v) for v in model.train_history) + "\n")
    out.write(f"layers {len(model.network.layers)}\n")
    for layer in model.network.layers:
        spec = " ".join(f"{k}={v}" for k, v in layer.spec().items())
        out.write(f"layer {layer.kind} {spec}".rstrip() + "\n")
        for name in sorted(layer.params):
            arr = layer.params[name]
            out.write(f"param {name} {','.join(str(d) for d in arr.shape)}\n")
            out.write(" ".join(fmt(v) for v in arr.reshape(-1)) + "\n")
    out.write("end\n")
    return out.getvalue() if sink is None else ""


def load_model(source) -> TrainedModel:
    text = source if isinstance(source, str) else source.read()
    lines = text.splitlines()
    if not lines:
        raise DataFormatError("empty model file", 1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise DataFormatError(f"not a model file (expected '{MAGIC} {VERSION}')", 1)
    if head[1] != VERSION:
        raise DataFormatError(f"unsupported model version {head[1]!r}", 1)
    pos = 1

    def take(prefix: str) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise DataFormatError(f"truncated model file: expected '{prefix}'", pos + 1)
        line = lines[pos]
        if not (line == prefix or line.startswith(prefix + " ")):
            raise DataFormatError(f"expected '{prefix}', got {line[:40]!r}", pos + 1)
        pos += 1
        return line[len(prefix):].strip()

    try:
        cfg = _parse_cfg("config " + take("config"))
        val_loss = float(take("val_loss"))
        restart_vals = [float(v) for v in take("restart_val_losses").split()]
        history = [float(v) for v in take("history").split()]
        n_layers = int(take("layers"))
        net = build_model(cfg)
        if n_layers != len(net.layers):
            raise DataValidationError(f"file has {n_layers} layers, {cfg.kind} config builds {len(net.layers)}")
        for layer in net.layers:
            desc = take("layer").split()
            spec = dict(item.split("=") for item in desc[1:])
            expected = {k: str(v) for k, v in layer.spec().items()}
            if desc[0] != layer.kind or spec != expected:
                raise DataValidationError(f"layer {' '.join(desc)} does not match config ({layer.kind} {expected})")
            for name in sorted(layer.params):
                pname, shape_txt = take("param").split()
                shape = tuple(int(d) for d in shape_txt.split(","))
                if pname != name or shape != layer.params[name].shape:
                    raise DataValidationError(f"{layer.kind}.{pname} shape {shape} != {layer.params[name].shape}")
                if pos >= len(lines):
                    raise DataFormatError("truncated model file: missing parameter values", pos + 1)
                values = np.array([float(v) for v in lines[pos].split()], dtype=np.float64)
                pos += 1
                if values.size != layer.params[name].size or not np.all(np.isfinite(values)):
                    raise DataValidationError(f"{layer.kind}.{name}: expected {layer.params[name].size} finite values")
                layer.params[name] = values.reshape(shape)
        take("end")
    except ValueError as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(f"malformed model file: {exc}", pos + 1) from None
    return TrainedModel(cfg, net, history, val_loss, restart_vals)


def with_kind(cfg: ModelConfig, kind: str) -> ModelConfig:
    return replace(cfg, kind=kind)

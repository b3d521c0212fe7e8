"""Small reverse-mode network: valid 1-D convolution, per-step dense, LSTM.

Every layer works on batched sequences shaped ``(batch, time, channels)``;
an unbatched ``(time, channels)`` array is accepted and returned unbatched.
All arithmetic is float64 so finite-difference checks are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np


class DimensionError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class NumericalError(ArithmeticError):
    pass


def sigmoid(z):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _batched(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise DimensionError(f"expected (time, channels) or (batch, time, channels), got shape {x.shape}")
    return x, False


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# kernels


def conv1d_forward(x, W, b, relu: bool = False) -> np.ndarray:
    """Valid cross-correlation; ``W`` is ``(kernel, in_ch, out_ch)``.

    ``out[t, o] = b[o] + sum_j sum_c x[t + j, c] * W[j, c, o]``
    """
    xb, single = _batched(x)
    k, cin, cout = W.shape
    B, L, C = xb.shape
    if C != cin:
        raise DimensionError(f"conv1d expects {cin} input channels, got {C}")
    if L < k:
        raise DimensionError(f"conv1d kernel {k} longer than input length {L}")
    Lout = L - k + 1
    out = np.broadcast_to(b, (B, Lout, cout)).copy()
    for j in range(k):
        out += xb[:, j:j + Lout] @ W[j]
    if relu:
        np.maximum(out, 0.0, out=out)
    return out[0] if single else out


def dense_forward(x, W, b, relu: bool = False) -> np.ndarray:
    """Per-timestep affine map ``x @ W + b``."""
    xb, single = _batched(x)
    if xb.shape[-1] != W.shape[0]:
        raise DimensionError(f"dense expects {W.shape[0]} input features, got {xb.shape[-1]}")
    out = xb @ W + b
    if relu:
        np.maximum(out, 0.0, out=out)
    return out[0] if single else out


def lstm_forward(x, W, b, return_cache: bool = False):
    """LSTM over the whole sequence from zero initial state.

    ``W`` is ``(in + hidden, 4 * hidden)`` with gate blocks ordered input,
    forget, candidate, output; the top ``in`` rows act on the input, the rest
    on the previous hidden state. Returns the hidden state at every step.
    """
    xb, single = _batched(x)
    B, L, cin = xb.shape
    H = W.shape[1] // 4
    if W.shape[0] != cin + H:
        raise DimensionError(f"lstm expects {W.shape[0] - H} input features, got {cin}")
    Wx, Wh = W[:cin], W[cin:]
    xproj = xb @ Wx + b
    gates = np.empty((B, L, 4 * H))
    cells = np.empty((B, L, H))
    hs = np.empty((B, L, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(L):
        z = xproj[:, t] + h @ Wh
        g = sigmoid(z)
        g[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        gates[:, t] = g
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 2 * H:3 * H]
        h = g[:, 3 * H:] * np.tanh(c)
        cells[:, t] = c
        hs[:, t] = h
    out = hs[0] if single else hs
    if return_cache:
        return out, (xb, gates, cells, hs)
    return out


def _lstm_backward(W, cache, dout):
    xb, gates, cells, hs = cache
    B, L, cin = xb.shape
    H = W.shape[1] // 4
    Wx, Wh = W[:cin], W[cin:]
    g4 = gates.reshape(B, L, 4, H)
    i, f, cand, o = g4[:, :, 0], g4[:, :, 1], g4[:, :, 2], g4[:, :, 3]
    c_prev = np.concatenate([np.zeros((B, 1, H)), cells[:, :-1]], axis=1)
    tc = np.tanh(cells)
    # everything that does not depend on the recurrence, hoisted out of the loop
    dc_from_h = o * (1.0 - tc * tc)
    gate_in = np.stack([cand * i * (1.0 - i), c_prev * f * (1.0 - f), i * (1.0 - cand * cand)], axis=2)
    out_deriv = tc * o * (1.0 - o)

    dz_all = np.empty((B, L, 4, H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    WhT = Wh.T
    for t in range(L - 1, -1, -1):
        dh = dout[:, t] + dh_next
        dc = dc_next + dh * dc_from_h[:, t]
        dz = dz_all[:, t]
        dz[:, :3] = dc[:, None, :] * gate_in[:, t]
        dz[:, 3] = dh * out_deriv[:, t]
        dc_next = dc * f[:, t]
        dh_next = dz.reshape(B, 4 * H) @ WhT
    flat_dz = dz_all.reshape(B * L, 4 * H)
    h_prev = np.concatenate([np.zeros((B, 1, H)), hs[:, :-1]], axis=1).reshape(B * L, H)
    dW = np.vstack([xb.reshape(B * L, cin).T @ flat_dz, h_prev.T @ flat_dz])
    db = flat_dz.sum(axis=0)
    dx = dz_all.reshape(B, L, 4 * H) @ Wx.T
    return dx, dW, db


# ---------------------------------------------------------------------------
# layers


class Layer:
    """Base for the fixed layer menu. ``params`` and ``grads`` share keys."""

    kind = "none"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        return {}

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _need_cache(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward called without a cached forward pass")
        return self._cache


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, relu: bool = True):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel, self.relu = in_ch, out_ch, kernel, relu
        self.params = {"W": np.zeros((kernel, in_ch, out_ch)), "b": np.zeros(out_ch)}

    def init_params(self, rng):
        k, cin, cout = self.params["W"].shape
        self.params["W"] = _glorot(rng, (k, cin, cout), k * cin, k * cout)
        self.params["b"] = np.zeros(cout)

    def forward(self, x):
        out = conv1d_forward(x, self.params["W"], self.params["b"], self.relu)
        self._cache = (x, out)
        return out

    def backward(self, dout):
        x, out = self._need_cache()
        W = self.params["W"]
        k = W.shape[0]
        if self.relu:
            dout = dout * (out > 0)
        Lout = dout.shape[-2]
        dW = np.empty_like(W)
        dx = np.zeros_like(x)
        cin, cout = W.shape[1:]
        flat_d = dout.reshape(-1, cout)
        for j in range(k):
            xs = x[..., j:j + Lout, :]
            dW[j] = xs.reshape(-1, cin).T @ flat_d
            dx[..., j:j + Lout, :] += dout @ W[j].T
        self.grads = {"W": dW, "b": flat_d.sum(axis=0)}
        return dx

    def spec(self):
        return {"in": self.in_ch, "out": self.out_ch, "kernel": self.kernel, "relu": int(self.relu)}


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, relu: bool = False):
        super().__init__()
        self.n_in, self.n_out, self.relu = n_in, n_out, relu
        self.params = {"W": np.zeros((n_in, n_out)), "b": np.zeros(n_out)}

    def init_params(self, rng):
        self.params["W"] = _glorot(rng, (self.n_in, self.n_out), self.n_in, self.n_out)
        self.params["b"] = np.zeros(self.n_out)

    def forward(self, x):
        out = dense_forward(x, self.params["W"], self.params["b"], self.relu)
        self._cache = (x, out)
        return out

    def backward(self, dout):
        x, out = self._need_cache()
        if self.relu:
            dout = dout * (out > 0)
        flat_d = dout.reshape(-1, self.n_out)
        self.grads = {"W": x.reshape(-1, self.n_in).T @ flat_d, "b": flat_d.sum(axis=0)}
        return dout @ self.params["W"].T

    def spec(self):
        return {"in": self.n_in, "out": self.n_out, "relu": int(self.relu)}


class LSTM(Layer):
    kind = "lstm"

    def __init__(self, n_in: int, hidden: int, forget_bias: float = 1.0):
        super().__init__()
        self.n_in, self.hidden, self.forget_bias = n_in, hidden, forget_bias
        self.params = {"W": np.zeros((n_in + hidden, 4 * hidden)), "b": np.zeros(4 * hidden)}

    def init_params(self, rng):
        H = self.hidden
        self.params["W"] = _glorot(rng, (self.n_in + H, 4 * H), self.n_in + H, 4 * H)
        b = np.zeros(4 * H)
        b[H:2 * H] = self.forget_bias
        self.params["b"] = b

    def forward(self, x):
        xb, single = _batched(x)
        out, cache = lstm_forward(xb, self.params["W"], self.params["b"], return_cache=True)
        self._cache = (cache, single)
        return out[0] if single else out

    def backward(self, dout):
        cache, single = self._need_cache()
        dout = dout[None] if single else dout
        dx, dW, db = _lstm_backward(self.params["W"], cache, dout)
        self.grads = {"W": dW, "b": db}
        return dx[0] if single else dx

    def spec(self):
        return {"in": self.n_in, "hidden": self.hidden}


class Flatten(Layer):
    """``(B, L, C) -> (B, 1, L*C)``: the whole window becomes one feature row."""

    kind = "flatten"

    def forward(self, x):
        xb, single = _batched(x)
        self._cache = (xb.shape, single)
        out = xb.reshape(xb.shape[0], 1, -1)
        return out[0] if single else out

    def backward(self, dout):
        shape, single = self._need_cache()
        dx = np.asarray(dout).reshape(shape)
        return dx[0] if single else dx


class Reshape(Layer):
    """``(B, 1, L*C) -> (B, L, C)``."""

    kind = "reshape"

    def __init__(self, steps: int, channels: int):
        super().__init__()
        self.steps, self.channels = steps, channels

    def forward(self, x):
        xb, single = _batched(x)
        self._cache = (xb.shape, single)
        out = xb.reshape(xb.shape[0], self.steps, self.channels)
        return out[0] if single else out

    def backward(self, dout):
        shape, single = self._need_cache()
        dx = np.asarray(dout).reshape(shape)
        return dx[0] if single else dx

    def spec(self):
        return {"steps": self.steps, "channels": self.channels}


LAYER_TYPES = {cls.kind: cls for cls in (Conv1D, Dense, LSTM, Flatten, Reshape)}


class Network:
    """An ordered stack of layers with a cached forward for backprop."""

    def __init__(self, layers: list[Layer], input_steps: Optional[int] = None):
        self.layers = layers
        self.input_steps = input_steps
        self._input = None

    def init_params(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init_params(rng)

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.input_steps is not None and (x.ndim < 2 or x.shape[-2] != self.input_steps):
            raise DimensionError(f"network expects {self.input_steps} time steps, got shape {x.shape}")
        self._input = x
        out = x
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def backward(self, dout) -> np.ndarray:
        if self._input is None:
            raise StateError("backward called before forward")
        d = np.asarray(dout, dtype=np.float64)
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def parameters(self) -> Iterator[tuple[int, str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def param_list(self) -> list[np.ndarray]:
        return [p for _, _, p in self.parameters()]

    def grad_list(self) -> list[np.ndarray]:
        return [self.layers[i].grads[name] for i, name, _ in self.parameters()]

    def set_param_list(self, arrays: list[np.ndarray]) -> None:
        for (i, name, old), new in zip(self.parameters(), arrays):
            if old.shape != new.shape:
                raise DimensionError(f"layer {i} {name}: shape {new.shape} != {old.shape}")
            self.layers[i].params[name] = np.array(new, dtype=np.float64)

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def kinds(self) -> list[str]:
        return [layer.kind for layer in self.layers]


def backward(network: Network, x, loss_grad) -> dict:
    """Gradients of a scalar loss w.r.t. every parameter and the input.

    ``loss_grad`` is dLoss/dOutput for the forward pass that was run on ``x``.
    Returns ``{"input": dx, "params": [(layer, name, grad), ...]}``.
    """
    if network._input is None or not np.array_equal(network._input, np.asarray(x, dtype=np.float64)):
        raise StateError("backward needs a cached forward pass on the same input")
    dx = network.backward(loss_grad)
    return {"input": dx, "params": [(i, n, network.layers[i].grads[n]) for i, n, _ in network.parameters()]}


def mse_loss(pred, target, mask=None) -> tuple[float, np.ndarray]:
    """Mean squared error over unmasked steps and all channels, with its gradient.

    ``mask`` has the shape of ``pred`` minus the channel axis (1 = counted).
    """
    pred = np.asarray(pred, dtype=np.float64)
    diff = pred - np.asarray(target, dtype=np.float64)
    if mask is None:
        m = np.ones(pred.shape[:-1])
    else:
        m = np.asarray(mask, dtype=np.float64)
    m = m[..., None]
    denom = m.sum() * pred.shape[-1]
    if denom == 0:
        raise DimensionError("loss mask excludes every term")
    loss = float((m * diff * diff).sum() / denom)
    return loss, 2.0 * m * diff / denom


def grad_check(network: Network, x, labels, epsilon: float = 1e-5, mask=None) -> float:
    """Largest relative error between backprop and central differences.

    Every parameter element is perturbed by ±epsilon under the MSE loss.
    Relative error is ``|a - n| / max(1e-12, |a| + |n|)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")

    def loss_at():
        value, _ = mse_loss(network.forward(x), labels, mask)
        if not np.isfinite(value):
            raise NumericalError("non-finite loss during gradient check")
        return value

    loss, dpred = mse_loss(network.forward(x), labels, mask)
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss during gradient check")
    network.backward(dpred)
    analytic = [g.copy() for g in network.grad_list()]

    worst = 0.0
    for arr, grad in zip(network.param_list(), analytic):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = loss_at()
            flat[k] = orig - epsilon
            down = loss_at()
            flat[k] = orig
            num = (up - down) / (2.0 * epsilon)
            a = gflat[k]
            worst = max(worst, abs(a - num) / max(1e-12, abs(a) + abs(num)))
    return worst


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update. ``params`` are updated in place and returned."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if len(params) != len(grads):
        raise DimensionError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise DimensionError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state

"""Shared helpers for the test suite."""

import numpy as np
import pytest

from eyelstm.models import ModelConfig, build_model
from eyelstm.neuralnet import grad_check

# Narrow widths keep full-stack finite differences inside the time budget;
# the layer code paths are the same as at default width.
SMALL = dict(conv_channels=(4, 6, 6), dense_width=6, hidden=6, mlp_widths=(8, 8))


def checkable(net, rng, steps, batch=2):
    """Randomize every parameter and return (x, labels) for a gradient check.

    Random biases keep ReLU units off their kink, and labels close to the
    prediction keep the loss small so roundoff does not swamp the
    finite differences.
    """
    net.init_params(rng)
    for _, _, arr in net.parameters():
        arr += rng.normal(0.0, 0.1, arr.shape)
    x = rng.normal(size=(batch, steps, 2))
    pred = net.forward(x)
    return x, pred + 0.01 * rng.normal(size=pred.shape)


def stack_grad_error(kind, seed=0, **widths):
    cfg = ModelConfig(kind=kind, **{**SMALL, **widths})
    net = build_model(cfg)
    rng = np.random.default_rng(seed)
    x, y = checkable(net, rng, cfg.input_steps)
    return grad_check(net, x, y, epsilon=1e-5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

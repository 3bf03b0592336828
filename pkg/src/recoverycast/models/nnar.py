"""Autoregressive feed-forward network: lags 1..12 in, one hidden tanh layer.

Twenty random restarts are trained by full-batch gradient descent with a
fixed step on the standardized series; forecasts feed the across-restart
average back into the lag window, so one shared path comes out. All weights
draw from the generator passed in, which makes runs bit-reproducible.
No prediction intervals are produced.
"""

from __future__ import annotations

import numpy as np

from ..errors import SeriesTooShort


def _init(rng: np.random.Generator, size: int, n_in: int):
    w1 = rng.normal(0.0, 1.0 / np.sqrt(n_in), (size, n_in))
    b1 = rng.normal(0.0, 0.1, size)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(size), size)
    b2 = float(rng.normal(0.0, 0.1))
    return w1, b1, w2, b2


def _train(net, X, t, step, iters):
    w1, b1, w2, b2 = net
    n = len(t)
    for _ in range(iters):
        a = X @ w1.T + b1
        h = np.tanh(a)
        out = h @ w2 + b2
        err = out - t
        # mean-squared loss gradients, averaged over the batch
        g_out = 2.0 * err / n
        g_w2 = h.T @ g_out
        g_b2 = float(np.sum(g_out))
        g_h = np.outer(g_out, w2) * (1.0 - h * h)
        g_w1 = g_h.T @ X
        g_b1 = g_h.sum(axis=0)
        w1 -= step * g_w1
        b1 -= step * g_b1
        w2 -= step * g_w2
        b2 -= step * g_b2
    return w1, b1, w2, b2


def fit_nnar(
    y: np.ndarray,
    horizon: int,
    rng: np.random.Generator,
    p: int = 12,
    P: int = 1,
    size: int = 7,
    repeats: int = 20,
    step: float = 0.05,
    iters: int = 300,
) -> np.ndarray:
    """Recursive point forecasts; the caller clamps and wraps the result."""
    lags = sorted(set(range(1, p + 1)) | {12 * i for i in range(1, P + 1)})
    maxlag = max(lags)
    y = np.asarray(y, dtype=float)
    if len(y) < maxlag + 6:
        raise SeriesTooShort(f"nnar needs >= {maxlag + 6} observations, got {len(y)}")

    mu = float(np.mean(y))
    sd = float(np.std(y))
    sd = sd if sd > 1e-12 else 1.0
    ys = (y - mu) / sd

    rows = range(maxlag, len(ys))
    X = np.array([[ys[t - lag] for lag in lags] for t in rows])
    target = ys[maxlag:]

    nets = [
        _train(_init(rng, size, len(lags)), X, target, step, iters)
        for _ in range(repeats)
    ]

    window = list(ys[-maxlag:])
    path = np.empty(horizon)
    for h in range(horizon):
        x = np.array([window[-lag] for lag in lags])
        preds = [float(np.tanh(x @ w1.T + b1) @ w2 + b2) for w1, b1, w2, b2 in nets]
        v = float(np.mean(preds))
        window.append(v)
        path[h] = v
    return path * sd + mu

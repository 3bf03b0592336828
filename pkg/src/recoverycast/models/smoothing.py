"""Exponential smoothing family: SES, Holt, additive Holt-Winters, and a
Box-Cox-transformed Holt-Winters used as the complex-seasonality substitute.

All three smoothers are written in innovations form, so the one-step
residual e_t drives every state update and the h-step forecast variance has
the closed form sigma^2 * (1 + sum_{j=1}^{h-1} c_j^2) with

    SES:          c_j = alpha
    Holt:         c_j = alpha + beta * j
    Holt-Winters: c_j = alpha + beta * j + gamma * 1{j = 0 mod 12}

which is monotone in h, matching the interval-sanity contract.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ..errors import NonConvergence, SeriesTooShort
from .base import Z80

PERIOD = 12
_BOUND = (1e-4, 0.9999)


# --- SES -------------------------------------------------------------------


def _ses_sse(alpha: float, y: np.ndarray) -> float:
    level = y[0]
    sse = 0.0
    for t in range(1, len(y)):
        e = y[t] - level
        sse += e * e
        level += alpha * e
    return sse


def fit_ses(y: np.ndarray, horizon: int):
    """Simple exponential smoothing with SSE-optimal alpha.

    Returns (mean, variance, residuals, alpha).
    """
    if len(y) < 3:
        raise SeriesTooShort("ses needs >= 3 observations")
    res = minimize_scalar(_ses_sse, bounds=_BOUND, args=(y,), method="bounded")
    alpha = float(res.x)
    level = y[0]
    residuals = np.zeros(len(y) - 1)
    for t in range(1, len(y)):
        residuals[t - 1] = y[t] - level
        level += alpha * residuals[t - 1]
    sigma2 = float(np.mean(residuals**2))
    h = np.arange(1, horizon + 1)
    variance = sigma2 * (1.0 + (h - 1) * alpha**2)
    return np.full(horizon, level), variance, residuals, alpha


def ses_halfwidth(sigma2: float, alpha: float, h: np.ndarray) -> np.ndarray:
    """Closed-form 80% half-width; exposed for oracle checks."""
    return Z80 * np.sqrt(sigma2 * (1.0 + (h - 1) * alpha**2))


# --- Holt ------------------------------------------------------------------


def _holt_pass(params, y, collect=False):
    alpha, ratio = params
    beta = alpha * ratio  # enforces 0 < beta < alpha
    level, slope = y[0], y[1] - y[0]
    sse = 0.0
    residuals = [] if collect else None
    for t in range(1, len(y)):
        pred = level + slope
        e = y[t] - pred
        sse += e * e
        if collect:
            residuals.append(e)
        level = pred + alpha * e
        slope = slope + beta * e
    if collect:
        return sse, level, slope, np.array(residuals), alpha, beta
    return sse


def fit_holt(y: np.ndarray, horizon: int):
    """Holt's linear trend in innovations form; beta constrained below alpha."""
    if len(y) < 4:
        raise SeriesTooShort("holt needs >= 4 observations")
    best = None
    for start in ((0.3, 0.3), (0.7, 0.1), (0.1, 0.5)):
        res = minimize(
            _holt_pass, np.array(start), args=(y,), method="L-BFGS-B",
            bounds=[_BOUND, _BOUND],
        )
        if best is None or res.fun < best.fun:
            best = res
    _, level, slope, residuals, alpha, beta = _holt_pass(best.x, y, collect=True)
    sigma2 = float(np.mean(residuals**2))
    h = np.arange(1, horizon + 1)
    mean = level + h * slope
    cj_sq = np.cumsum((alpha + beta * np.arange(1, horizon)) ** 2)
    variance = sigma2 * np.concatenate(([1.0], 1.0 + cj_sq))[:horizon]
    return mean, variance, residuals, (alpha, beta)


# --- additive Holt-Winters ---------------------------------------------------


def _hw_init(y: np.ndarray):
    level = float(np.mean(y[:PERIOD]))
    slope = float((np.mean(y[PERIOD : 2 * PERIOD]) - level) / PERIOD)
    seasonal = y[:PERIOD] - level
    return level, slope, seasonal - np.mean(seasonal)


def _hw_pass(params, y, collect=False):
    alpha, bratio, gratio = params
    beta = alpha * bratio
    gamma = (1.0 - alpha) * gratio
    level, slope, seasonal = _hw_init(y)
    seasonal = list(seasonal)
    sse = 0.0
    residuals = [] if collect else None
    for t in range(PERIOD, len(y)):
        s = seasonal[t - PERIOD]
        pred = level + slope + s
        e = y[t] - pred
        sse += e * e
        if collect:
            residuals.append(e)
        level = level + slope + alpha * e
        slope = slope + beta * e
        seasonal.append(s + gamma * e)
    if collect:
        return sse, level, slope, seasonal, np.array(residuals), (alpha, beta, gamma)
    return sse


def fit_holt_winters(y: np.ndarray, horizon: int):
    """Additive Holt-Winters with a 12-month season."""
    if len(y) < 2 * PERIOD:
        raise SeriesTooShort("holt_winters needs >= 24 observations")
    best = None
    for start in ((0.3, 0.3, 0.3), (0.5, 0.1, 0.1), (0.1, 0.1, 0.8)):
        res = minimize(
            _hw_pass, np.array(start), args=(y,), method="L-BFGS-B",
            bounds=[_BOUND] * 3,
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.all(np.isfinite(best.x)):
        raise NonConvergence("holt_winters", "optimizer returned non-finite parameters")
    _, level, slope, seasonal, residuals, (alpha, beta, gamma) = _hw_pass(best.x, y, collect=True)
    sigma2 = float(np.mean(residuals**2))
    hs = np.arange(1, horizon + 1)
    mean = np.array([level + h * slope + seasonal[len(y) - PERIOD + (h - 1) % PERIOD] for h in hs])
    cj = alpha + beta * np.arange(1, horizon) + gamma * (np.arange(1, horizon) % PERIOD == 0)
    variance = sigma2 * np.concatenate(([1.0], 1.0 + np.cumsum(cj**2)))[:horizon]
    return mean, variance, residuals, (alpha, beta, gamma)


# --- Box-Cox Holt-Winters (complex-seasonality substitute) -------------------


def guerrero_lambda(y: np.ndarray, grid: np.ndarray | None = None) -> float:
    """Pick the Box-Cox exponent minimising the CV of block sd/mean^(1-lambda).

    Blocks are consecutive 12-month years, the classic seasonal-block profile
    method. Falls back to 1 (no transform) when fewer than two blocks exist.
    """
    if grid is None:
        grid = np.linspace(0.0, 1.0, 11)
    blocks = len(y) // PERIOD
    if blocks < 2 or np.any(y <= 0):
        return 1.0
    means = np.empty(blocks)
    sds = np.empty(blocks)
    for b in range(blocks):
        chunk = y[b * PERIOD : (b + 1) * PERIOD]
        means[b] = np.mean(chunk)
        sds[b] = np.std(chunk, ddof=1)
    best_lam, best_cv = 1.0, np.inf
    for lam in grid:
        ratio = sds / means ** (1.0 - lam)
        m = np.mean(ratio)
        cv = np.std(ratio, ddof=1) / m if m > 0 else np.inf
        if cv < best_cv:
            best_lam, best_cv = float(lam), cv
    return best_lam


def boxcox(y: np.ndarray, lam: float) -> np.ndarray:
    if abs(lam) < 1e-12:
        return np.log(y)
    return (np.power(y, lam) - 1.0) / lam


def inv_boxcox(w: np.ndarray, lam: float) -> np.ndarray:
    if abs(lam) < 1e-12:
        return np.exp(w)
    return np.power(np.maximum(lam * w + 1.0, 1e-12), 1.0 / lam)


def fit_bchw(y: np.ndarray, horizon: int):
    """Box-Cox transform, additive Holt-Winters, median back-transform.

    The inverse transform of the transformed-scale mean is the forecast
    median, reported as the point path. Interval half-widths come from the
    original-scale in-sample residual sd scaled by sqrt(h) since the
    transformed-scale variance recursion does not survive the back-mapping.
    """
    if len(y) < 2 * PERIOD:
        raise SeriesTooShort("bchw needs >= 24 observations")
    positive = np.maximum(y, 1e-6)
    lam = guerrero_lambda(positive)
    w = boxcox(positive, lam)
    mean_w, _, residuals_w, _ = fit_holt_winters(w, horizon)
    mean = inv_boxcox(mean_w, lam)

    fitted_w = w[PERIOD:] - residuals_w
    fitted = inv_boxcox(fitted_w, lam)
    resid = y[PERIOD:] - fitted
    sigma = float(np.std(resid))
    variance = sigma**2 * np.arange(1, horizon + 1)
    return mean, variance, resid, lam

"""Seasonal ARIMA by conditional sum of squares with AICc order search.

Estimation conditions on zero pre-sample values, so the residual recursion
e = theta(B)^{-1} phi(B) z is a rational filter evaluated by
``scipy.signal.lfilter``; a full order grid then stays cheap. Differencing
orders are fixed before the grid by deterministic heuristics (variance
reduction for d, seasonal strength for D) because AICc values are not
comparable across differently differenced targets. The (p, q, P, Q) grid is
searched exhaustively with p, q <= 3 and P, Q <= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from ..errors import NonConvergence, SeriesTooShort

PERIOD = 12
_PENALTY = 1e30


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int
    P: int = 0
    D: int = 0
    Q: int = 0

    @property
    def k_arma(self) -> int:
        return self.p + self.q + self.P + self.Q

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})12"


def _polynomials(params: np.ndarray, order: ArimaOrder) -> tuple[np.ndarray, np.ndarray]:
    """Expand (phi, theta, PHI, THETA) into full lag polynomials.

    Returns (ar, ma) with ar = phi(B) * PHI(B^12) as [1, -coef...] and
    ma = theta(B) * THETA(B^12) as [1, +coef...].
    """
    p, q, P, Q = order.p, order.q, order.P, order.Q
    phi = params[:p]
    theta = params[p : p + q]
    sphi = params[p + q : p + q + P]
    stheta = params[p + q + P :]

    ar = np.r_[1.0, -phi]
    if P:
        seas = np.zeros(PERIOD * P + 1)
        seas[0] = 1.0
        for i, c in enumerate(sphi):
            seas[PERIOD * (i + 1)] = -c
        ar = np.convolve(ar, seas)
    ma = np.r_[1.0, theta]
    if Q:
        seas = np.zeros(PERIOD * Q + 1)
        seas[0] = 1.0
        for i, c in enumerate(stheta):
            seas[PERIOD * (i + 1)] = c
        ma = np.convolve(ma, seas)
    return ar, ma


def _make_css(z: np.ndarray, order: ArimaOrder):
    """Closure evaluating the CSS objective without per-call allocation.

    Since p, q <= 3 < 12 the regular and seasonal polynomial positions never
    collide, so the product polynomial is a plain scatter of the coefficient
    outer product.
    """
    p, q, P, Q = order.p, order.q, order.P, order.Q
    ar = np.zeros(p + PERIOD * P + 1)
    ma = np.zeros(q + PERIOD * Q + 1)
    ar_pos = (np.arange(p + 1)[:, None] + PERIOD * np.arange(P + 1)[None, :]).ravel()
    ma_pos = (np.arange(q + 1)[:, None] + PERIOD * np.arange(Q + 1)[None, :]).ravel()

    def objective(params: np.ndarray) -> float:
        phi = np.empty(p + 1)
        phi[0] = 1.0
        phi[1:] = -params[:p]
        theta = np.empty(q + 1)
        theta[0] = 1.0
        theta[1:] = params[p : p + q]
        sphi = np.empty(P + 1)
        sphi[0] = 1.0
        sphi[1:] = -params[p + q : p + q + P]
        stheta = np.empty(Q + 1)
        stheta[0] = 1.0
        stheta[1:] = params[p + q + P :]
        ar[ar_pos] = np.outer(phi, sphi).ravel()
        ma[ma_pos] = np.outer(theta, stheta).ravel()
        with np.errstate(all="ignore"):
            e = lfilter(ar, ma, z)
            sse = float(e @ e)
        return sse if np.isfinite(sse) else _PENALTY

    return objective


def difference(y: np.ndarray, d: int, D: int) -> np.ndarray:
    z = y.astype(float)
    for _ in range(D):
        z = z[PERIOD:] - z[:-PERIOD]
    for _ in range(d):
        z = np.diff(z)
    return z


def seasonal_strength(y: np.ndarray) -> float:
    """1 - var(residual)/var(detrended) under a crude MA-trend/month-mean fit."""
    n = len(y)
    if n < 2 * PERIOD + 1:
        return 0.0
    kernel = np.full(PERIOD + 1, 1.0 / PERIOD)
    kernel[0] = kernel[-1] = 0.5 / PERIOD
    trend = np.convolve(y, kernel, mode="valid")
    detrended = y[PERIOD // 2 : PERIOD // 2 + len(trend)] - trend
    months = np.arange(len(detrended)) % PERIOD
    seasonal = np.zeros_like(detrended)
    for m in range(PERIOD):
        sel = months == m
        if sel.any():
            seasonal[sel] = detrended[sel].mean()
    var_d = float(np.var(detrended))
    if var_d <= 0:
        return 0.0
    return max(0.0, 1.0 - float(np.var(detrended - seasonal)) / var_d)


def choose_differencing(y: np.ndarray, seasonal: bool) -> tuple[int, int]:
    """Deterministic (d, D) in {0,1}^2: D by seasonal strength, d by whether
    first differencing reduces the standard deviation."""
    D = 1 if seasonal and len(y) >= 2 * PERIOD + 1 and seasonal_strength(y) > 0.64 else 0
    w = difference(y, 0, D)
    if len(w) < 4:
        return 0, D
    sd0 = float(np.std(w))
    sd1 = float(np.std(np.diff(w)))
    d = 1 if sd1 < sd0 and len(w) >= 5 else 0
    return d, D


def _fit_order(z: np.ndarray, order: ArimaOrder) -> tuple[np.ndarray, float] | None:
    """CSS-optimal coefficients and SSE for one order, or None on failure."""
    k = order.k_arma
    if k == 0:
        return np.zeros(0), float(z @ z)
    x0 = np.full(k, 0.1)
    res = minimize(
        _make_css(z, order), x0, method="L-BFGS-B",
        bounds=[(-0.99, 0.99)] * k,
        options={"maxiter": 25, "maxfun": 80, "ftol": 1e-7, "gtol": 1e-4},
    )
    if not np.all(np.isfinite(res.x)) or res.fun >= _PENALTY:
        return None
    return res.x, float(res.fun)


def _aicc(sse: float, n: int, k: int) -> float:
    if n <= k + 2 or sse <= 0:
        return np.inf
    return n * np.log(sse / n) + 2 * (k + 1) + 2 * (k + 1) * (k + 2) / (n - k - 2)


@dataclass
class ArimaFit:
    order: ArimaOrder
    params: np.ndarray
    mean_term: float
    sigma2: float
    residuals: np.ndarray  # one-step errors, aligned to the differenced tail
    aicc: float
    y: np.ndarray


def fit_auto(y: np.ndarray, seasonal: bool = True, max_pq: int = 3) -> ArimaFit:
    """Grid-search ARIMA fit. Seasonal mode needs >= 24 observations."""
    y = np.asarray(y, dtype=float)
    min_len = 2 * PERIOD if seasonal else 10
    if len(y) < min_len:
        raise SeriesTooShort(f"arima needs >= {min_len} observations, got {len(y)}")

    d, D = choose_differencing(y, seasonal)
    z = difference(y, d, D)
    mean_term = float(np.mean(z)) if (d + D) == 0 else 0.0
    zc = z - mean_term
    n = len(zc)

    best: tuple[float, ArimaOrder, np.ndarray, float] | None = None
    smax = 1 if (seasonal and n > PERIOD + 4) else 0
    for p in range(max_pq + 1):
        for q in range(max_pq + 1):
            for P in range(smax + 1):
                for Q in range(smax + 1):
                    order = ArimaOrder(p, d, q, P, D, Q)
                    if order.k_arma + 3 >= n:
                        continue
                    fit = _fit_order(zc, order)
                    if fit is None:
                        continue
                    params, sse = fit
                    crit = _aicc(sse, n, order.k_arma + (1 if (d + D) == 0 else 0))
                    if best is None or crit < best[0]:
                        best = (crit, order, params, sse)
    if best is None:
        raise NonConvergence("arima", "no order produced a finite fit")

    crit, order, params, sse = best
    ar, ma = _polynomials(params, order)
    residuals = lfilter(ar, ma, zc)
    dof = max(n - order.k_arma, 1)
    return ArimaFit(
        order=order,
        params=params,
        mean_term=mean_term,
        sigma2=sse / dof,
        residuals=residuals,
        aicc=crit,
        y=y,
    )


def psi_weights(fit: ArimaFit, horizon: int) -> np.ndarray:
    """MA(inf) weights of the undifferenced process, psi_0..psi_{h-1}."""
    ar, ma = _polynomials(fit.params, fit.order)
    full_ar = ar.copy()
    for _ in range(fit.order.d):
        full_ar = np.convolve(full_ar, [1.0, -1.0])
    for _ in range(fit.order.D):
        seas = np.zeros(PERIOD + 1)
        seas[0], seas[-1] = 1.0, -1.0
        full_ar = np.convolve(full_ar, seas)
    psi = np.zeros(horizon)
    psi[0] = 1.0
    for j in range(1, horizon):
        acc = ma[j] if j < len(ma) else 0.0
        kmax = min(j, len(full_ar) - 1)
        for k in range(1, kmax + 1):
            acc -= full_ar[k] * psi[j - k]
        psi[j] = acc
    return psi


def forecast(fit: ArimaFit, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean path and forecast variance for 1..horizon steps ahead."""
    order = fit.order
    ar, ma = _polynomials(fit.params, order)
    z = difference(fit.y, order.d, order.D) - fit.mean_term
    n = len(z)

    zext = list(z)
    eext = list(fit.residuals) + [0.0] * horizon
    for j in range(horizon):
        t = n + j
        acc = 0.0
        for k in range(1, len(ar)):
            if t - k >= 0:
                acc -= ar[k] * zext[t - k]
        for k in range(1, len(ma)):
            if 0 <= t - k < n:
                acc += ma[k] * eext[t - k]
        zext.append(acc)
    z_fc = np.array(zext[n:]) + fit.mean_term

    # undo regular differencing, then seasonal
    w_hist = list(difference(fit.y, 0, order.D))
    w_fc = []
    for j in range(horizon):
        v = z_fc[j]
        if order.d:
            v = v + (w_fc[-1] if w_fc else w_hist[-1])
        w_fc.append(v)
    y_hist = list(fit.y)
    y_fc = []
    for j in range(horizon):
        v = w_fc[j]
        if order.D:
            prior = y_fc[j - PERIOD] if j >= PERIOD else y_hist[len(y_hist) - PERIOD + j]
            v = v + prior
        y_fc.append(v)

    psi = psi_weights(fit, horizon)
    variance = fit.sigma2 * np.cumsum(psi**2)
    return np.array(y_fc), variance


def auto_arima_forecast(
    y: np.ndarray, horizon: int, seasonal: bool = True, max_pq: int = 3
) -> tuple[np.ndarray, np.ndarray, ArimaFit]:
    fit = fit_auto(y, seasonal=seasonal, max_pq=max_pq)
    mean, variance = forecast(fit, horizon)
    return mean, variance, fit

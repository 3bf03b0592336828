"""Reference forecasts from external signals.

Two branches feed the short-horizon reference path for the window between
the last observed arrivals month and the recovery start: a composite search
index (keywords screened by lagged correlation, then a ratio strategy and
an exogenous-regressor strategy, averaged) and a flight-growth
extrapolation. The reference forecast is the elementwise mean of whichever
branches are available.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    InsufficientOverlap,
    NoFlightData,
    NoKeywordPasses,
    NoSignal,
    RecoverycastError,
    SeriesTooShort,
    ZeroIndex,
)
from .models import arima as arima_mod
from .models.smoothing import fit_bchw, fit_holt_winters, fit_ses
from .series import MonthKey, MonthlySeries

MIN_OVERLAP = 12


@dataclass(frozen=True)
class KeywordSeries:
    keyword: str
    series: MonthlySeries


@dataclass(frozen=True)
class FlightSeries:
    destination: str
    series: MonthlySeries


@dataclass(frozen=True)
class CompositeIndex:
    destination: str
    included_keywords: tuple
    series: MonthlySeries
    lag: int = 1


def _paired(arrivals: MonthlySeries, index: MonthlySeries, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs (arrivals_t, index_{t-lag}) over months where both are present."""
    a, b = [], []
    lo = max(arrivals.start.index, index.start.index + lag)
    hi = min(arrivals.end.index, index.end.index + lag)
    for i in range(lo, hi + 1):
        va = arrivals.values[i - arrivals.start.index]
        vb = index.values[i - lag - index.start.index]
        if va is not None and vb is not None:
            a.append(va)
            b.append(vb)
    return np.array(a), np.array(b)


def lagged_correlation(arrivals: MonthlySeries, index: MonthlySeries, lag: int) -> tuple[float, int]:
    """Pearson correlation of arrivals_t with index_{t-lag} and the overlap size."""
    a, b = _paired(arrivals, index, lag)
    n = len(a)
    if n < 2 or np.std(a) == 0 or np.std(b) == 0:
        return 0.0, n
    return float(np.corrcoef(a, b)[0, 1]), n


def best_lag(arrivals: MonthlySeries, index: MonthlySeries, max_lag: int) -> tuple[int, float]:
    """The lag in 0..max_lag with the highest correlation (smallest lag wins ties)."""
    best: tuple[int, float] | None = None
    for lag in range(max_lag + 1):
        corr, n = lagged_correlation(arrivals, index, lag)
        if n < MIN_OVERLAP:
            raise InsufficientOverlap(f"only {n} overlapping months at lag {lag}")
        if best is None or corr > best[1] + 1e-15:
            best = (lag, corr)
    return best


def build_composite(
    arrivals: MonthlySeries,
    keywords: Sequence[KeywordSeries],
    threshold: float = 0.6,
    lag: int = 1,
    destination: str = "",
) -> CompositeIndex:
    """Sum the keyword series whose lagged correlation clears the threshold.

    The comparison is inclusive (corr == threshold is kept). The composite
    spans the months where every included keyword is observed.
    """
    included = []
    for kw in keywords:
        corr, n = lagged_correlation(arrivals, kw.series, lag)
        if n >= MIN_OVERLAP and corr >= threshold:
            included.append(kw)
    if not included:
        raise NoKeywordPasses(f"no keyword reaches correlation {threshold} for {destination!r}")

    lo = max(kw.series.start.index for kw in included)
    hi = min(kw.series.end.index for kw in included)
    values: list[Optional[float]] = []
    for i in range(lo, hi + 1):
        parts = [kw.series.values[i - kw.series.start.index] for kw in included]
        values.append(None if any(p is None for p in parts) else float(sum(parts)))
    series = MonthlySeries(MonthKey.from_index(lo), tuple(values), name=f"{destination}:composite")
    return CompositeIndex(
        destination=destination,
        included_keywords=tuple(kw.keyword for kw in included),
        series=series,
        lag=lag,
    )


def _composite_future(composite: MonthlySeries, months: list[MonthKey]) -> np.ndarray:
    """Observed composite values over ``months``; seasonal-naive filled past the end."""
    out = np.empty(len(months))
    arr = composite.to_array()
    for i, m in enumerate(months):
        back = composite.start.months_until(m)
        while back >= 0 and (back >= len(arr) or not np.isfinite(arr[back])):
            back -= 12
        if back < 0:
            raise ZeroIndex(f"no composite value available for {m}")
        out[i] = arr[back]
    return out


def _fit_window(arrivals: MonthlySeries, composite: MonthlySeries) -> tuple[MonthKey, np.ndarray, np.ndarray]:
    """Longest complete common suffix ending at the arrivals series end."""
    lo = max(arrivals.start.index, composite.start.index)
    hi = min(arrivals.end.index, composite.end.index)
    if hi < lo:
        raise InsufficientOverlap("arrivals and composite do not overlap")
    a, c = [], []
    for i in range(hi, lo - 1, -1):
        va = arrivals.values[i - arrivals.start.index]
        vc = composite.values[i - composite.start.index]
        if va is None or vc is None:
            break
        a.append(va)
        c.append(vc)
    if len(a) < MIN_OVERLAP:
        raise InsufficientOverlap(f"complete overlap is only {len(a)} months")
    a.reverse()
    c.reverse()
    return MonthKey.from_index(hi - len(a) + 1), np.array(a), np.array(c)


def ratio_forecast(arrivals: MonthlySeries, composite: CompositeIndex, horizon: int) -> np.ndarray:
    """Forecast the arrivals/index ratio univariately, then multiply back.

    The ratio is smoothed with SES always, plus Holt-Winters and the Box-Cox
    variant when two full years of ratio history exist; available paths are
    averaged before multiplying by the (observed or seasonal-naive-extended)
    future index.
    """
    start, a, c = _fit_window(arrivals, composite.series)
    if np.any(c <= 0):
        raise ZeroIndex("composite must be positive over the fit window")
    ratio = a / c
    months = [arrivals.end.plus(1 + h) for h in range(horizon)]
    future = _composite_future(composite.series, months)

    paths = [fit_ses(ratio, horizon)[0]]
    if len(ratio) >= 24:
        paths.append(fit_holt_winters(ratio, horizon)[0])
        paths.append(fit_bchw(np.maximum(ratio, 1e-9), horizon)[0])
    ratio_fc = np.mean(paths, axis=0)
    return np.maximum(ratio_fc * future, 0.0)


def _month_dummies(month_numbers: np.ndarray) -> np.ndarray:
    """11 dummy columns for calendar months 2..12."""
    return np.column_stack([(month_numbers == m).astype(float) for m in range(2, 13)])


def exog_forecast(arrivals: MonthlySeries, composite: CompositeIndex, horizon: int) -> np.ndarray:
    """Average of two index-regressor strategies.

    (a) linear regression on the lagged index with auto-ARIMA errors, and
    (b) a trend + monthly-dummy + lagged-index least-squares model. A
    zero-variance index drops the regressor and both branches fall back to
    their index-free forms.
    """
    lag = composite.lag
    a, x = _paired(arrivals, composite.series, lag)
    if len(a) < MIN_OVERLAP:
        raise InsufficientOverlap(f"only {len(a)} paired months for the exogenous fit")
    months = [arrivals.end.plus(1 + h) for h in range(horizon)]
    x_future = _composite_future(composite.series, [m.plus(-lag) for m in months])
    use_x = float(np.std(x)) > 1e-12

    # (a) regression with ARIMA errors
    if use_x:
        X = np.column_stack([np.ones(len(a)), x])
        beta, *_ = np.linalg.lstsq(X, a, rcond=None)
        resid = a - X @ beta
        det_future = beta[0] + beta[1] * x_future
    else:
        resid = a - np.mean(a)
        det_future = np.full(horizon, np.mean(a))
    try:
        resid_fc, _, _ = arima_mod.auto_arima_forecast(resid, horizon, seasonal=False, max_pq=2)
    except (SeriesTooShort, RecoverycastError):
        resid_fc = np.zeros(horizon)
    path_a = np.maximum(det_future + resid_fc, 0.0)

    # (b) trend + seasonal-dummy regression
    t = np.arange(len(a), dtype=float)
    fit_months = np.array([m.month for m in _paired_months(arrivals, composite.series, lag)])
    cols = [np.ones(len(a)), t]
    if len(a) >= 26:
        cols.append(_month_dummies(fit_months))
    if use_x:
        cols.append(x[:, None] if x.ndim == 1 else x)
    X2 = np.column_stack(cols)
    beta2, *_ = np.linalg.lstsq(X2, a, rcond=None)
    t_future = t[-1] + 1 + np.arange(horizon)
    cols_f = [np.ones(horizon), t_future]
    if len(a) >= 26:
        cols_f.append(_month_dummies(np.array([m.month for m in months])))
    if use_x:
        cols_f.append(x_future[:, None])
    path_b = np.maximum(np.column_stack(cols_f) @ beta2, 0.0)

    return (path_a + path_b) / 2.0


def _paired_months(arrivals: MonthlySeries, index: MonthlySeries, lag: int) -> list[MonthKey]:
    out = []
    lo = max(arrivals.start.index, index.start.index + lag)
    hi = min(arrivals.end.index, index.end.index + lag)
    for i in range(lo, hi + 1):
        va = arrivals.values[i - arrivals.start.index]
        vb = index.values[i - lag - index.start.index]
        if va is not None and vb is not None:
            out.append(MonthKey.from_index(i))
    return out


def flight_forecast(arrivals: MonthlySeries, flights: FlightSeries, horizon: int) -> np.ndarray:
    """Scale the latest observed arrivals by the growth of flight counts.

    path_t = arrivals[baseline] * flights_t / flights[baseline], where the
    baseline is the most recent month with observed arrivals. Requires a
    positive baseline flight count and flight data over the whole horizon.
    """
    baseline = None
    for i in range(len(arrivals) - 1, -1, -1):
        if arrivals.values[i] is not None:
            baseline = arrivals.start.plus(i)
            break
    if baseline is None:
        raise NoFlightData("no observed arrivals to use as a baseline")
    f = flights.series
    try:
        f_base = f.at(baseline)
    except RecoverycastError:
        raise NoFlightData(f"no flight count for baseline month {baseline}") from None
    if f_base is None or f_base <= 0:
        raise NoFlightData(f"flight count at baseline {baseline} is zero or missing")
    months = [arrivals.end.plus(1 + h) for h in range(horizon)]
    path = np.empty(horizon)
    y_base = arrivals.at(baseline)
    for i, m in enumerate(months):
        try:
            fv = f.at(m)
        except RecoverycastError:
            raise NoFlightData(f"no flight count for {m}") from None
        if fv is None:
            raise NoFlightData(f"flight count missing for {m}")
        path[i] = y_base * fv / f_base
    return path


@dataclass
class ReferenceForecast:
    destination: str
    months: list
    path: np.ndarray
    index_path: Optional[np.ndarray] = None
    flight_path: Optional[np.ndarray] = None
    composite: Optional[CompositeIndex] = None
    warnings: list = field(default_factory=list)


def reference_forecast(
    arrivals: MonthlySeries,
    horizon: int,
    keywords: Sequence[KeywordSeries] | None = None,
    flights: FlightSeries | None = None,
    threshold: float = 0.6,
    lag: int = 1,
    destination: str = "",
) -> ReferenceForecast:
    """Mean of the available index and flight branches over the horizon.

    The index branch itself averages the ratio and exogenous strategies.
    Branch failures degrade to warnings; if nothing is available NoSignal
    is raised and the caller decides the fallback.
    """
    months = [arrivals.end.plus(1 + h) for h in range(horizon)]
    warnings: list[str] = []
    index_path = None
    composite = None
    if keywords:
        try:
            composite = build_composite(arrivals, keywords, threshold, lag, destination)
            parts = []
            for label, fn in (("ratio", ratio_forecast), ("exog", exog_forecast)):
                try:
                    parts.append(fn(arrivals, composite, horizon))
                except RecoverycastError as exc:
                    warnings.append(f"{destination}: index {label} strategy unavailable: {exc}")
            if parts:
                index_path = np.mean(parts, axis=0)
            else:
                warnings.append(f"{destination}: index branch produced no path")
        except RecoverycastError as exc:
            warnings.append(f"{destination}: index branch unavailable: {exc}")
    flight_path = None
    if flights is not None:
        try:
            flight_path = flight_forecast(arrivals, flights, horizon)
        except RecoverycastError as exc:
            warnings.append(f"{destination}: flight branch unavailable: {exc}")

    branches = [p for p in (index_path, flight_path) if p is not None]
    if not branches:
        raise NoSignal(f"no reference branch available for {destination!r}")
    return ReferenceForecast(
        destination=destination,
        months=months,
        path=np.mean(branches, axis=0),
        index_path=index_path,
        flight_path=flight_path,
        composite=composite,
        warnings=warnings,
    )

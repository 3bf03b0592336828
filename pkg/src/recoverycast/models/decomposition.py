"""Classical seasonal decomposition with a strictly periodic seasonal.

Trend is a centred 2x12 moving average (linearly extended at the edges so
the reconstruction identity holds at every index), the seasonal component is
the per-calendar-month median of the detrended series, and the remainder
absorbs the rest exactly:

    multiplicative:  y = trend * seasonal * remainder
    additive:        y = trend + seasonal + remainder

Year-by-year seasonal factors (``seasonal * remainder``, i.e. ``y / trend``)
stay recoverable so the forward seasonal-path variants can average, repeat,
or extrapolate them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientHistory, NonPositiveValue, SeriesTooShort
from ..series import MonthKey, MonthlySeries

PERIOD = 12


def _centered_trend(y: np.ndarray) -> np.ndarray:
    """2x12 centred moving average, linearly extrapolated into the edges."""
    n = len(y)
    kernel = np.full(PERIOD + 1, 1.0 / PERIOD)
    kernel[0] = kernel[-1] = 0.5 / PERIOD
    core = np.convolve(y, kernel, mode="valid")  # defined for i in 6..n-7
    trend = np.full(n, np.nan)
    trend[PERIOD // 2 : PERIOD // 2 + len(core)] = core

    defined = np.flatnonzero(np.isfinite(trend))
    lo, hi = defined[0], defined[-1]
    k = min(PERIOD, hi - lo + 1)
    # slope from the first/last k defined points keeps the extension local
    head = np.polyfit(np.arange(lo, lo + k), trend[lo : lo + k], 1)
    tail = np.polyfit(np.arange(hi - k + 1, hi + 1), trend[hi - k + 1 : hi + 1], 1)
    for i in range(lo):
        trend[i] = head[0] * i + head[1]
    for i in range(hi + 1, n):
        trend[i] = tail[0] * i + tail[1]
    return trend


@dataclass(frozen=True)
class Decomposition:
    """Aligned trend/seasonal/remainder components for a monthly series."""

    start: MonthKey
    trend: tuple
    seasonal: tuple
    remainder: tuple
    mode: str  # "multiplicative" | "additive"

    def __len__(self) -> int:
        return len(self.trend)

    @property
    def end(self) -> MonthKey:
        return self.start.plus(len(self) - 1)

    def seasonal_index(self, month: int) -> float:
        """The strict periodic factor (or offset) for calendar month 1..12."""
        offset = (month - self.start.month) % PERIOD
        return self.seasonal[offset]

    def yearly_factors(self, month: int) -> list[tuple[int, float]]:
        """Raw per-year detrended factors for one calendar month.

        Multiplicative mode yields ``y/trend`` per occurrence, additive mode
        ``y - trend``, each tagged with its year, oldest first.
        """
        out = []
        for i in range(len(self)):
            key = self.start.plus(i)
            if key.month == month:
                out.append((key.year, self._raw_factor(i)))
        return out

    def _raw_factor(self, i: int) -> float:
        s = self.seasonal_index(self.start.plus(i).month)
        if self.mode == "multiplicative":
            return s * self.remainder[i]
        return s + self.remainder[i]


def decompose(series: MonthlySeries, mode: str = "multiplicative") -> Decomposition:
    """Split a complete monthly series into trend, seasonal, and remainder.

    Requires at least 25 months. Multiplicative mode requires strictly
    positive values and normalises the 12 seasonal indices to arithmetic
    mean 1, so every aligned 12-month window of the seasonal averages to 1.
    """
    if mode not in ("multiplicative", "additive"):
        raise ValueError(f"unknown mode {mode!r}")
    if not series.is_complete():
        raise ValueError("decompose requires a complete (imputed) series")
    y = series.to_array()
    if len(y) < 2 * PERIOD + 1:
        raise SeriesTooShort(f"decompose needs >= {2 * PERIOD + 1} months, got {len(y)}")
    if mode == "multiplicative" and np.any(y <= 0):
        raise NonPositiveValue("multiplicative decomposition needs values > 0")

    trend = _centered_trend(y)
    if mode == "multiplicative":
        trend = np.maximum(trend, 1e-12 * max(1.0, float(np.max(y))))
        detrended = y / trend
    else:
        detrended = y - trend

    month_of = (series.start.month - 1 + np.arange(len(y))) % PERIOD
    indices = np.empty(PERIOD)
    for m in range(PERIOD):
        group = detrended[month_of == m]
        indices[m] = np.median(group)
    if mode == "multiplicative":
        indices = indices / np.mean(indices)
    else:
        indices = indices - np.mean(indices)

    seasonal = indices[month_of]
    if mode == "multiplicative":
        remainder = y / (trend * seasonal)
    else:
        remainder = y - trend - seasonal
    return Decomposition(
        start=series.start,
        trend=tuple(trend),
        seasonal=tuple(seasonal),
        remainder=tuple(remainder),
        mode=mode,
    )


def _factor_history(dec: Decomposition) -> dict[int, list[float]]:
    """Per calendar month, the detrended factor of each year, oldest first."""
    out: dict[int, list[float]] = {m: [] for m in range(1, PERIOD + 1)}
    for i in range(len(dec)):
        out[dec.start.plus(i).month].append(dec._raw_factor(i))
    return out


def seasonal_variant(dec: Decomposition, variant: str, horizon: int) -> np.ndarray:
    """Forward seasonal-factor path for the ``horizon`` months after the data.

    Variant A averages each calendar month's factors over the last three
    years, B repeats last year's factors, and C extrapolates each month's
    factor series with an intercept AR(1). Multiplicative factors are floored
    at a small positive value.
    """
    if variant not in ("A", "B", "C"):
        raise ValueError(f"unknown variant {variant!r}")
    n = len(dec)
    if variant == "A" and n < 3 * PERIOD:
        raise InsufficientHistory("variant A needs >= 36 months of decomposition")
    if n < PERIOD:
        raise InsufficientHistory("need at least one full year of factors")

    history = _factor_history(dec)
    path = np.empty(horizon)
    for h in range(horizon):
        key = dec.end.plus(1 + h)
        factors = history[key.month]
        if not factors:
            raise InsufficientHistory(f"no factor history for month {key.month}")
        if variant == "A":
            path[h] = float(np.mean(factors[-3:]))
        elif variant == "B":
            path[h] = factors[-1]
        else:
            steps = _years_ahead(dec, key)
            path[h] = _ar1_extrapolate(factors, steps)
    if dec.mode == "multiplicative":
        path = np.maximum(path, 1e-6)
    return path


def _years_ahead(dec: Decomposition, key: MonthKey) -> int:
    """How many yearly steps ``key`` lies beyond its month's last factor."""
    last_year = None
    for i in range(len(dec) - 1, -1, -1):
        k = dec.start.plus(i)
        if k.month == key.month:
            last_year = k.year
            break
    return max(1, key.year - last_year)


def _ar1_extrapolate(factors: list[float], steps: int) -> float:
    """Iterate f_{j+1} = a + b f_j fitted by least squares on the history."""
    f = np.asarray(factors, dtype=float)
    if len(f) < 2 or np.allclose(f, f[0]):
        return float(f[-1])
    x, y = f[:-1], f[1:]
    denom = float(np.sum((x - x.mean()) ** 2))
    if denom < 1e-15:
        return float(f[-1])
    b = float(np.sum((x - x.mean()) * (y - y.mean())) / denom)
    b = float(np.clip(b, -1.5, 1.5))
    a = float(y.mean() - b * x.mean())
    value = float(f[-1])
    for _ in range(steps):
        value = a + b * value
    return value

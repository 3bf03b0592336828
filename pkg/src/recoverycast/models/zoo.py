"""Model-zoo entry points: fit any univariate family and score a zoo on a
validation window.

``fit_forecast`` is pure given (series, spec, horizon, rng); nothing touches
global random state, so (destination, spec) pairs can be fitted in parallel.
Point paths are clamped at zero on the way out; internal states are not.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Optional

import numpy as np

from .. import evaluation
from ..errors import RecoverycastError, SeriesTooShort
from ..series import MonthlySeries
from . import arima as arima_mod
from .base import ForecastResult, ModelSpec, SEASONAL_FAMILIES, gaussian_bounds
from .decomposition import decompose, seasonal_variant
from .nnar import fit_nnar
from .smoothing import fit_bchw, fit_holt, fit_holt_winters, fit_ses

PERIOD = 12


def _clamped(mean: np.ndarray) -> np.ndarray:
    return np.maximum(mean, 0.0)


def _seasonal_naive(y: np.ndarray, horizon: int):
    if len(y) < PERIOD:
        raise SeriesTooShort("seasonal_naive needs >= 12 observations")
    h = np.arange(1, horizon + 1)
    mean = y[len(y) - PERIOD + (h - 1) % PERIOD]
    if len(y) > PERIOD:
        resid = y[PERIOD:] - y[:-PERIOD]
        sigma2 = float(np.mean(resid**2))
    else:
        sigma2 = float(np.var(y))
    k = (h - 1) // PERIOD + 1
    return mean, sigma2 * k


def _drift(y: np.ndarray, horizon: int):
    if len(y) < 3:
        raise SeriesTooShort("drift needs >= 3 observations")
    n = len(y)
    slope = (y[-1] - y[0]) / (n - 1)
    h = np.arange(1, horizon + 1)
    mean = y[-1] + h * slope
    resid = np.diff(y) - slope
    sigma2 = float(np.mean(resid**2))
    variance = sigma2 * h * (1.0 + h / (n - 1))
    return mean, variance


@lru_cache(maxsize=16)
def _stl_base(series: MonthlySeries, horizon: int):
    """Decomposition and deseasonalized trend forecast, shared by A/B/C."""
    dec = decompose(series, "multiplicative")
    strict = np.array([dec.seasonal_index(m.month) for m in series.months()])
    deseason = series.to_array() / strict
    mean_t, _, fit = arima_mod.auto_arima_forecast(deseason, horizon, seasonal=False)
    # one-step deseasonalized errors mapped back through the seasonal factor
    tail = strict[len(strict) - len(fit.residuals) :]
    sigma = float(np.std(fit.residuals * tail))
    return dec, tuple(mean_t), sigma


def _stl(series: MonthlySeries, variant: str, horizon: int):
    dec, mean_t, sigma = _stl_base(series, horizon)
    seas_path = seasonal_variant(dec, variant, horizon)
    mean = np.asarray(mean_t) * seas_path
    variance = sigma**2 * np.arange(1, horizon + 1)
    return mean, variance


def fit_forecast(
    series: MonthlySeries,
    spec: ModelSpec,
    horizon: int,
    rng: Optional[np.random.Generator] = None,
) -> ForecastResult:
    """Fit one model family and forecast ``horizon`` months past the series.

    The series must be complete (run impute first). Seasonal families need
    at least 24 months, others at least 3. Every family except ``nnar``
    returns 80% bounds.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not series.is_complete():
        raise ValueError("fit_forecast requires a complete series; impute first")
    y = series.to_array()
    fam = spec.family
    if fam in SEASONAL_FAMILIES and len(y) < 2 * PERIOD:
        raise SeriesTooShort(f"{fam} needs >= 24 months, got {len(y)}")
    if len(y) < 3:
        raise SeriesTooShort(f"{fam} needs >= 3 months, got {len(y)}")

    variance: Optional[np.ndarray]
    if fam == "seasonal_naive":
        mean, variance = _seasonal_naive(y, horizon)
    elif fam == "drift":
        mean, variance = _drift(y, horizon)
    elif fam == "ses":
        mean, variance, _, _ = fit_ses(y, horizon)
    elif fam == "holt":
        mean, variance, _, _ = fit_holt(y, horizon)
    elif fam == "holt_winters":
        mean, variance, _, _ = fit_holt_winters(y, horizon)
    elif fam == "bchw":
        mean, variance, _, _ = fit_bchw(y, horizon)
    elif fam == "arima":
        mean, variance, _ = arima_mod.auto_arima_forecast(
            y, horizon, seasonal=spec.get("seasonal", True), max_pq=spec.get("max_pq", 3)
        )
    elif fam in ("stl_a", "stl_b", "stl_c"):
        mean, variance = _stl(series, fam[-1].upper(), horizon)
    elif fam == "nnar":
        if rng is None:
            raise ValueError("nnar requires an explicit rng")
        mean = fit_nnar(
            y,
            horizon,
            rng,
            p=spec.get("p", 12),
            P=spec.get("P", 1),
            size=spec.get("size", 7),
            repeats=spec.get("repeats", 20),
        )
        variance = None
    else:
        raise ValueError(f"unknown family {fam!r}")

    mean = _clamped(np.asarray(mean, dtype=float))
    lower = upper = None
    if variance is not None:
        lower, upper = gaussian_bounds(mean, np.asarray(variance, dtype=float))
    return ForecastResult(
        origin=series.end,
        horizon=horizon,
        mean=tuple(mean),
        lower80=lower,
        upper80=upper,
        model_id=spec.model_id,
    )


@dataclass
class ValidationRow:
    model_id: str
    rmse: float
    mape: float
    mase: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error and np.isfinite(self.mase)


def validate_models(
    train: MonthlySeries,
    validation: MonthlySeries,
    specs: list[ModelSpec],
    extra_forecasts: Mapping[str, ForecastResult] | None = None,
    rng_for: Callable[[str], np.random.Generator] | None = None,
    season: int = 12,
) -> list[ValidationRow]:
    """Score each model on the validation window; one row per model.

    Fit failures become rows with NaN metrics and the error message instead
    of aborting the table. ``extra_forecasts`` lets callers append rows for
    forecasts produced outside this function (reconciled hierarchy paths);
    they are scored with the same metrics.
    """
    if len(validation) < 1:
        raise ValueError("validation window is empty")
    actual = validation.to_array()
    insample = train.to_array()
    horizon = len(validation)
    rows: list[ValidationRow] = []

    def _score(model_id: str, mean: np.ndarray) -> ValidationRow:
        mape_v, _ = evaluation.mape(mean, actual)
        return ValidationRow(
            model_id=model_id,
            rmse=evaluation.rmse(mean, actual),
            mape=mape_v,
            mase=evaluation.mase(mean, actual, insample, season=season),
        )

    for spec in specs:
        try:
            rng = rng_for(spec.model_id) if rng_for is not None else None
            fc = fit_forecast(train, spec, horizon, rng=rng)
            rows.append(_score(spec.model_id, np.asarray(fc.mean)))
        except RecoverycastError as exc:
            rows.append(ValidationRow(spec.model_id, np.nan, np.nan, np.nan, error=str(exc)))

    for model_id in sorted(extra_forecasts or {}):
        fc = extra_forecasts[model_id]
        mean = np.array([fc.at(m) for m in validation.months()])
        rows.append(_score(model_id, mean))
    return rows

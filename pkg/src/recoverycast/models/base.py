"""Shared model-zoo types: forecast containers and model specifications."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..series import MonthKey

#: two-sided 80% Gaussian quantile, Phi^{-1}(0.9)
Z80 = 1.2815515655446004


@dataclass(frozen=True)
class ForecastResult:
    """Point path plus optional 80% bounds over a monthly horizon.

    ``mean[h]`` is the forecast for month ``origin + 1 + h``. When bounds are
    present they bracket the mean elementwise.
    """

    origin: MonthKey
    horizon: int
    mean: tuple
    lower80: Optional[tuple] = None
    upper80: Optional[tuple] = None
    model_id: str = ""

    def __post_init__(self):
        mean = tuple(float(v) for v in self.mean)
        object.__setattr__(self, "mean", mean)
        if self.horizon != len(mean) or self.horizon < 1:
            raise ValueError("horizon must equal len(mean) and be >= 1")
        if not all(np.isfinite(mean)):
            raise ValueError("mean path must be finite")
        for attr in ("lower80", "upper80"):
            b = getattr(self, attr)
            if b is not None:
                b = tuple(float(v) for v in b)
                object.__setattr__(self, attr, b)
                if len(b) != self.horizon:
                    raise ValueError(f"{attr} length != horizon")
        if self.lower80 is not None and self.upper80 is not None:
            lo, up = np.array(self.lower80), np.array(self.upper80)
            mid = np.array(mean)
            if np.any(lo > mid + 1e-9) or np.any(mid > up + 1e-9):
                raise ValueError("bounds must satisfy lower80 <= mean <= upper80")

    @property
    def has_bounds(self) -> bool:
        return self.lower80 is not None and self.upper80 is not None

    def months(self) -> list[MonthKey]:
        return [self.origin.plus(1 + h) for h in range(self.horizon)]

    def index_of(self, key: MonthKey) -> int:
        h = self.origin.months_until(key) - 1
        if not 0 <= h < self.horizon:
            raise KeyError(f"{key} outside forecast span")
        return h

    def at(self, key: MonthKey) -> float:
        return self.mean[self.index_of(key)]

    def shifted(self, months: int) -> "ForecastResult":
        """Relabel the path onto a calendar shifted by ``months``.

        Used to project a no-break trajectory estimated on pre-break data
        onto the post-break calendar (the horizon itself is unchanged).
        """
        return ForecastResult(
            origin=self.origin.plus(months),
            horizon=self.horizon,
            mean=self.mean,
            lower80=self.lower80,
            upper80=self.upper80,
            model_id=self.model_id,
        )


def gaussian_bounds(mean: np.ndarray, variance: np.ndarray) -> tuple[tuple, tuple]:
    """80% normal bounds, lower clamped at zero (arrivals are counts)."""
    half = Z80 * np.sqrt(np.maximum(variance, 0.0))
    lower = np.maximum(0.0, mean - half)
    lower = np.minimum(lower, mean)  # keep ordering if mean itself is 0
    return tuple(lower), tuple(mean + half)


UNIVARIATE_FAMILIES = (
    "seasonal_naive",
    "drift",
    "arima",
    "ses",
    "holt",
    "holt_winters",
    "stl_a",
    "stl_b",
    "stl_c",
    "bchw",
    "nnar",
)

#: families that require two full seasonal cycles of history
SEASONAL_FAMILIES = frozenset(
    {"seasonal_naive", "arima", "holt_winters", "stl_a", "stl_b", "stl_c", "bchw", "nnar"}
)


@dataclass(frozen=True)
class ModelSpec:
    """A model family plus hyperparameters; ``model_id`` names table rows."""

    family: str
    params: dict = field(default_factory=dict)
    model_id: str = ""

    def __post_init__(self):
        if not self.model_id:
            object.__setattr__(self, "model_id", self.family)

    def get(self, key: str, default=None):
        return self.params.get(key, default)


def default_zoo() -> list[ModelSpec]:
    """The eleven univariate families with their documented settings."""
    return [
        ModelSpec("seasonal_naive"),
        ModelSpec("drift"),
        ModelSpec("arima"),
        ModelSpec("ses"),
        ModelSpec("holt"),
        ModelSpec("holt_winters"),
        ModelSpec("stl_a"),
        ModelSpec("stl_b"),
        ModelSpec("stl_c"),
        ModelSpec("bchw"),
        ModelSpec("nnar", {"p": 12, "P": 1, "size": 7, "repeats": 20}),
    ]

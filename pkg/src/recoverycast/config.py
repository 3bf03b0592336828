"""Pipeline configuration: a JSON file with nested sections.

The dialect is plain JSON with a ``config_version`` field; months are
``YYYY-MM`` strings. ``generate`` writes a ready-to-run config next to the
synthetic data, so ``run --config <dir>/config.json`` works out of the box.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .series import MonthKey

CONFIG_VERSION = 1

DEFAULT_MODELS = [
    {"id": "seasonal_naive", "family": "seasonal_naive"},
    {"id": "drift", "family": "drift"},
    {"id": "arima", "family": "arima"},
    {"id": "ses", "family": "ses"},
    {"id": "holt", "family": "holt"},
    {"id": "holt_winters", "family": "holt_winters"},
    {"id": "stl_a", "family": "stl_a"},
    {"id": "stl_b", "family": "stl_b"},
    {"id": "stl_c", "family": "stl_c"},
    {"id": "bchw", "family": "bchw"},
    {"id": "nnar", "family": "nnar", "params": {"p": 12, "P": 1, "size": 7, "repeats": 20}},
]

DEFAULT_HIERARCHICAL = [
    {"id": "td_a_arima", "method": "td_forecast_prop", "base_family": "arima"},
    {"id": "td_a_ets", "method": "td_forecast_prop", "base_family": "ses"},
    {"id": "td_b_arima", "method": "td_hist_prop", "base_family": "arima"},
    {"id": "td_b_ets", "method": "td_hist_prop", "base_family": "ses"},
    {"id": "mint", "method": "mint", "base_family": "ses"},
    {"id": "wls", "method": "wls", "base_family": "ses"},
]


def _month(value, where: str) -> MonthKey:
    try:
        return MonthKey.parse(str(value))
    except Exception as exc:
        raise ConfigError(f"{where}: bad month {value!r} ({exc})") from None


@dataclass(frozen=True)
class CalendarConfig:
    train_end: MonthKey
    validation_end: MonthKey
    calendar_shift_months: int
    reference_start: MonthKey
    reference_end: MonthKey
    recovery_end: MonthKey
    logistic_mid: MonthKey
    logistic_post: MonthKey
    evaluation_start: MonthKey

    def __post_init__(self):
        if not self.train_end < self.validation_end:
            raise ConfigError("calendar: train_end must precede validation_end")
        if not self.reference_start <= self.reference_end:
            raise ConfigError("calendar: reference window is empty")
        if not self.reference_end < self.recovery_end:
            raise ConfigError("calendar: recovery window is empty")

    @property
    def recovery_start(self) -> MonthKey:
        """The recovery grid starts at the last reference month (t = 0)."""
        return self.reference_end

    @property
    def recovery_grid(self) -> int:
        return self.reference_end.months_until(self.recovery_end) + 1

    @property
    def reference_horizon(self) -> int:
        return self.reference_start.plus(-1).months_until(self.reference_end)

    @property
    def base_horizon(self) -> int:
        """Months from the refit origin to the last needed base-forecast month."""
        return self.validation_end.months_until(self.logistic_post) - self.calendar_shift_months

    @property
    def history_window(self) -> tuple[MonthKey, MonthKey]:
        """13 detrended actual months feeding the quadratic fit."""
        return self.reference_start.plus(-13), self.reference_start.plus(-1)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    data: dict  # arrivals/keywords/flights/scores/actuals paths (some optional)
    hierarchy: dict  # region -> [destinations]
    calendar: CalendarConfig
    models: list  # univariate spec dicts
    hierarchical: list  # hierarchical method dicts
    combination: dict
    signals: dict
    recovery: dict
    workers: int
    mase_season: int = 12
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def destinations(self) -> list[str]:
        out = []
        for leaves in self.hierarchy.values():
            out.extend(leaves)
        return sorted(out)

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def default_calendar() -> dict:
    return {
        "train_end": "2017-12",
        "validation_end": "2019-12",
        "calendar_shift_months": 36,
        "reference_start": "2023-02",
        "reference_end": "2023-06",
        "recovery_end": "2024-07",
        "logistic_mid": "2023-12",
        "logistic_post": "2024-12",
        "evaluation_start": "2023-08",
    }


def build_config(raw: dict, base_dir: Optional[Path] = None) -> PipelineConfig:
    if raw.get("config_version") != CONFIG_VERSION:
        raise ConfigError(
            f"config_version must be {CONFIG_VERSION}, got {raw.get('config_version')!r}"
        )
    data = dict(raw.get("data") or {})
    if "arrivals" not in data:
        raise ConfigError("data.arrivals is required")
    if base_dir is not None:
        for key, value in list(data.items()):
            if value and not os.path.isabs(str(value)):
                data[key] = str((base_dir / str(value)).resolve())

    hierarchy = raw.get("hierarchy")
    if not hierarchy or not isinstance(hierarchy, dict):
        raise ConfigError("hierarchy must map regions to destination lists")

    cal_raw = {**default_calendar(), **(raw.get("calendar") or {})}
    calendar = CalendarConfig(
        train_end=_month(cal_raw["train_end"], "calendar.train_end"),
        validation_end=_month(cal_raw["validation_end"], "calendar.validation_end"),
        calendar_shift_months=int(cal_raw["calendar_shift_months"]),
        reference_start=_month(cal_raw["reference_start"], "calendar.reference_start"),
        reference_end=_month(cal_raw["reference_end"], "calendar.reference_end"),
        recovery_end=_month(cal_raw["recovery_end"], "calendar.recovery_end"),
        logistic_mid=_month(cal_raw["logistic_mid"], "calendar.logistic_mid"),
        logistic_post=_month(cal_raw["logistic_post"], "calendar.logistic_post"),
        evaluation_start=_month(cal_raw["evaluation_start"], "calendar.evaluation_start"),
    )
    if calendar.base_horizon < calendar.validation_end.months_until(calendar.recovery_end) - calendar.calendar_shift_months:
        raise ConfigError("calendar: logistic_post must not precede recovery_end")

    combination = {
        "method": "stack_lasso",
        "lambda": 1.0,
        "keep_fraction": 0.8,
        "pooled": False,
        **(raw.get("combination") or {}),
    }
    signals = {"threshold": 0.6, "lag": 1, "max_lag": 6, **(raw.get("signals") or {})}
    recovery = {
        "coefficient_mode": "table",
        "coefficient_override": None,
        **(raw.get("recovery") or {}),
    }
    if recovery["coefficient_mode"] not in ("table", "formula"):
        raise ConfigError("recovery.coefficient_mode must be 'table' or 'formula'")

    workers = raw.get("workers")
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    models = raw.get("models") or DEFAULT_MODELS
    hierarchical = raw.get("hierarchical")
    if hierarchical is None:
        hierarchical = DEFAULT_HIERARCHICAL
    seen = set()
    for entry in [*models, *hierarchical]:
        mid = entry.get("id")
        if not mid or mid in seen:
            raise ConfigError(f"duplicate or missing model id {mid!r}")
        seen.add(mid)

    return PipelineConfig(
        seed=int(raw.get("seed", 0)),
        data=data,
        hierarchy={r: list(v) for r, v in hierarchy.items()},
        calendar=calendar,
        models=list(models),
        hierarchical=list(hierarchical),
        combination=combination,
        signals=signals,
        recovery=recovery,
        workers=int(workers),
        mase_season=int(raw.get("mase_season", 12)),
        raw=raw,
    )


def load_config(path: str | Path) -> PipelineConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return build_config(raw, base_dir=p.parent)


def synthetic_config(
    paths: dict,
    regions: dict,
    seed: int,
    overrides: Optional[dict] = None,
) -> dict:
    """Raw config dict wired to a generated dataset."""
    raw = {
        "config_version": CONFIG_VERSION,
        "seed": seed,
        "data": {
            "arrivals": paths["arrivals"],
            "keywords": paths.get("keywords"),
            "flights": paths.get("flights"),
            "scores": paths.get("scores"),
            "actuals": paths.get("actuals"),
        },
        "hierarchy": regions,
        "calendar": default_calendar(),
        "combination": {"method": "stack_lasso", "lambda": 1.0, "keep_fraction": 0.8},
        "signals": {"threshold": 0.6, "lag": 1, "max_lag": 6},
        "recovery": {"coefficient_mode": "table", "coefficient_override": None},
    }
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(raw.get(key), dict):
            raw[key] = {**raw[key], **value}
        else:
            raw[key] = value
    return raw

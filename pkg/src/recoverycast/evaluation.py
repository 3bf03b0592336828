"""Point and interval forecast scoring: RMSE, MAPE, MASE, percentage error,
Winkler score, standardized Winkler, coverage, and aggregate report tables.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    BadInterval,
    LengthMismatch,
    NoOverlap,
    ZeroMeanActual,
    ZeroScale,
)
from .series import MonthlySeries, format_number


def rmse(forecast: Sequence[float], actual: Sequence[float]) -> float:
    f, a = _aligned(forecast, actual)
    return float(np.sqrt(np.mean((f - a) ** 2)))


def mape(forecast: Sequence[float], actual: Sequence[float]) -> tuple[float, int]:
    """Mean absolute percentage error, skipping months with actual == 0.

    Returns (mape, skipped_count) rather than emitting infinities.
    """
    f, a = _aligned(forecast, actual)
    ok = a != 0
    skipped = int((~ok).sum())
    if not ok.any():
        raise ZeroMeanActual("every actual is zero; MAPE undefined")
    return float(np.mean(np.abs((f[ok] - a[ok]) / a[ok]))), skipped


def percentage_error(forecast: Sequence[float], actual: Sequence[float]) -> list[Optional[float]]:
    """(prediction - actual) / actual per month; None where actual == 0."""
    f, a = _aligned(forecast, actual)
    return [None if a[i] == 0 else float((f[i] - a[i]) / a[i]) for i in range(len(a))]


def mase(
    forecast: Sequence[float],
    actual: Sequence[float],
    insample: Sequence[float],
    season: int = 12,
) -> float:
    """Mean absolute error scaled by the in-sample seasonal-naive MAE.

    The scaling denominator is the one-step MAE of the lag-``season`` naive
    forecast over the in-sample history (pass season=1 for the non-seasonal
    convention).
    """
    f, a = _aligned(forecast, actual)
    ins = np.asarray(insample, dtype=float)
    if len(ins) <= season:
        raise ZeroScale(f"insample must be longer than season={season}")
    scale = float(np.mean(np.abs(ins[season:] - ins[:-season])))
    if scale <= 0:
        raise ZeroScale("in-sample seasonal-naive MAE is zero")
    return float(np.mean(np.abs(f - a)) / scale)


def winkler(
    lower: Sequence[float],
    upper: Sequence[float],
    actual: Sequence[float],
    alpha: float = 0.2,
) -> float:
    """Mean interval score: width plus 2/alpha times any exceedance."""
    lo, up = _aligned(lower, upper)
    _, a = _aligned(lower, actual)
    if np.any(lo > up):
        raise BadInterval("lower bound exceeds upper bound")
    width = up - lo
    below = np.maximum(lo - a, 0.0)
    above = np.maximum(a - up, 0.0)
    return float(np.mean(width + (2.0 / alpha) * (below + above)))


def standard_winkler(winkler_value: float, actuals: Sequence[float]) -> float:
    a = np.asarray(actuals, dtype=float)
    m = float(np.mean(a))
    if m <= 0:
        raise ZeroMeanActual("mean actual must be positive")
    return winkler_value / m


def coverage(lower: Sequence[float], upper: Sequence[float], actual: Sequence[float]) -> float:
    """Fraction of months with lower <= actual <= upper (boundary covered)."""
    lo, up = _aligned(lower, upper)
    _, a = _aligned(lower, actual)
    return float(np.mean((lo <= a) & (a <= up)))


def _aligned(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape:
        raise LengthMismatch(f"lengths differ: {xa.shape} vs {ya.shape}")
    return xa, ya


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


@dataclass
class MetricRow:
    destination: str
    rmse: float
    mape: float
    mase: float
    percentage_error: list = field(default_factory=list)
    mape_skipped: int = 0


@dataclass
class IntervalMetricRow:
    destination: str
    winkler: float
    standard_winkler: float
    coverage: float


@dataclass
class EvaluationReport:
    point_rows: list
    interval_rows: list
    point_average: MetricRow
    point_weighted: MetricRow
    interval_average: Optional[IntervalMetricRow]
    interval_weighted: Optional[IntervalMetricRow]
    months: list


def report(
    point_paths: Mapping[str, "object"],
    interval_paths: Mapping[str, tuple] | None,
    actuals: Mapping[str, MonthlySeries],
    season: int = 12,
) -> EvaluationReport:
    """Score per-destination forecasts against actual series.

    ``point_paths`` maps destination to a ForecastResult-like object with
    ``months()``/``mean``; ``interval_paths`` optionally maps destination to
    (lower, upper) sequences aligned with the same months. Metrics run over
    the months shared by forecast and actuals; the actual history before the
    window provides the MASE scaling. Footer rows give the simple average
    and the average weighted by each destination's mean actual arrivals over
    the window.
    """
    point_rows: list[MetricRow] = []
    interval_rows: list[IntervalMetricRow] = []
    weights: list[float] = []
    months_used: list = []

    for dest in sorted(point_paths):
        fc = point_paths[dest]
        series = actuals.get(dest)
        if series is None:
            continue
        months = [m for m in fc.months() if series.start <= m <= series.end and series.at(m) is not None]
        if not months:
            raise NoOverlap(f"no overlap between forecast and actuals for {dest}")
        months_used = months
        a = np.array([series.at(m) for m in months])
        f = np.array([fc.mean[fc.index_of(m)] for m in months])
        insample = [v for v in series.window(series.start, months[0].plus(-1)).values if v is not None]

        mape_v, skipped = mape(f, a)
        row = MetricRow(
            destination=dest,
            rmse=rmse(f, a),
            mape=mape_v,
            mase=mase(f, a, insample, season=season),
            percentage_error=percentage_error(f, a),
            mape_skipped=skipped,
        )
        point_rows.append(row)
        weights.append(float(np.mean(a)))

        if interval_paths and dest in interval_paths:
            lo, up = interval_paths[dest]
            idx = [fc.index_of(m) for m in months]
            lo_a = np.asarray(lo, dtype=float)[idx]
            up_a = np.asarray(up, dtype=float)[idx]
            w = winkler(lo_a, up_a, a)
            interval_rows.append(
                IntervalMetricRow(
                    destination=dest,
                    winkler=w,
                    standard_winkler=standard_winkler(w, a),
                    coverage=coverage(lo_a, up_a, a),
                )
            )

    if not point_rows:
        raise NoOverlap("no destination produced an overlapping window")

    w = np.asarray(weights)
    w = w / w.sum() if w.sum() > 0 else np.full(len(w), 1.0 / len(w))

    def _avg(rows, attr, wts=None):
        vals = np.array([getattr(r, attr) for r in rows])
        return float(np.mean(vals)) if wts is None else float(np.sum(wts * vals))

    point_average = MetricRow(
        "Average", _avg(point_rows, "rmse"), _avg(point_rows, "mape"), _avg(point_rows, "mase")
    )
    point_weighted = MetricRow(
        "Weighted Average",
        _avg(point_rows, "rmse", w),
        _avg(point_rows, "mape", w),
        _avg(point_rows, "mase", w),
    )
    interval_average = interval_weighted = None
    if interval_rows:
        wi = w[: len(interval_rows)] if len(interval_rows) == len(point_rows) else None
        interval_average = IntervalMetricRow(
            "Average",
            _avg(interval_rows, "winkler"),
            _avg(interval_rows, "standard_winkler"),
            _avg(interval_rows, "coverage"),
        )
        interval_weighted = IntervalMetricRow(
            "Weighted Average",
            _avg(interval_rows, "winkler", wi),
            _avg(interval_rows, "standard_winkler", wi),
            _avg(interval_rows, "coverage", wi),
        )
    return EvaluationReport(
        point_rows=point_rows,
        interval_rows=interval_rows,
        point_average=point_average,
        point_weighted=point_weighted,
        interval_average=interval_average,
        interval_weighted=interval_weighted,
        months=months_used,
    )


def write_point_metrics(rep: EvaluationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["destination", "rmse", "mape", "mase"])
        for row in [*rep.point_rows, rep.point_average, rep.point_weighted]:
            writer.writerow(
                [row.destination, format_number(row.rmse), format_number(row.mape), format_number(row.mase)]
            )


def write_interval_metrics(rep: EvaluationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["destination", "winkler", "standard_winkler", "coverage"])
        rows = list(rep.interval_rows)
        if rep.interval_average is not None:
            rows += [rep.interval_average, rep.interval_weighted]
        for row in rows:
            writer.writerow(
                [
                    row.destination,
                    format_number(row.winkler),
                    format_number(row.standard_winkler),
                    format_number(row.coverage),
                ]
            )


def markdown_summary(rep: EvaluationReport) -> str:
    """Small human-readable table of the point and interval metrics."""
    lines = ["| destination | rmse | mape | mase |", "| --- | --- | --- | --- |"]
    for row in [*rep.point_rows, rep.point_average, rep.point_weighted]:
        lines.append(f"| {row.destination} | {row.rmse:.4f} | {row.mape:.4f} | {row.mase:.4f} |")
    if rep.interval_rows:
        lines += [
            "",
            "| destination | winkler | standard winkler | coverage |",
            "| --- | --- | --- | --- |",
        ]
        rows = [*rep.interval_rows, rep.interval_average, rep.interval_weighted]
        for row in rows:
            lines.append(
                f"| {row.destination} | {row.winkler:.2f} | {row.standard_winkler:.4f} | {row.coverage:.2f} |"
            )
    return "\n".join(lines) + "\n"

"""Recovery curves: connect an initial and a terminal forecast three ways.

Uses judgment scores for the recovery coefficient, detrends anchors with
seasonal factors, fits the linear/quadratic/logistic trends, and prints the
synthesized point path with its 80% band.
"""

import numpy as np

from recoverycast.models.base import ForecastResult
from recoverycast.recovery import (
    CurveInputs,
    DestinationScores,
    SeasonalFactors,
    anchors,
    build_curve,
    coefficient_from_scores,
    interval_path,
)
from recoverycast.series import MonthKey

scores = DestinationScores("demo", policy=3, distance=2, recovery=4)
coef = coefficient_from_scores(scores)
print(f"scores (policy, distance, recovery) = (3, 2, 4); average {scores.average:.2f} -> r = {coef.r:.2f}")

factors = SeasonalFactors(tuple(1 + 0.15 * np.sin(2 * np.pi * np.arange(12) / 12)))

# a no-break base-forecast path for Jan 2023 .. Dec 2024 with 80% bounds
months = 24
base_mean = np.linspace(52_000, 60_000, months)
base = ForecastResult(
    MonthKey(2022, 12), months, tuple(base_mean),
    lower80=tuple(base_mean * 0.85), upper80=tuple(base_mean * 1.15), model_id="combined",
)
# a reference path for Feb .. Jun 2023 climbing out of the collapse
ref = ForecastResult(MonthKey(2023, 1), 5, (9_000, 12_000, 15_500, 19_000, 22_500), model_id="rf")

a = anchors(base, ref, coef.r, factors, MonthKey(2023, 6), MonthKey(2024, 7))
print(f"initial {a.initial:.0f} (reference, Jun 2023); terminal {a.terminal:.0f} (base * r, Jul 2024)")

history = 1200 + 180 * np.arange(1, 14.0)  # detrended collapse-era actuals
reference_detr = [ref.mean[i] / factors.at(MonthKey(2023, 2 + i).month) for i in range(5)]
inputs = CurveInputs(
    destination="demo",
    start=MonthKey(2023, 6),
    n=14,
    seasonal=factors,
    initial=a.initial,
    terminal=a.terminal,
    history_detrended=tuple(history),
    reference_detrended=tuple(reference_detr),
    logistic_mid=(24.0, base.at(MonthKey(2023, 12)) / factors.at(12)),
    logistic_post=(36.0, base.at(MonthKey(2024, 12)) / factors.at(12)),
    logistic_terminal=base.at(MonthKey(2024, 7)) / factors.at(7),
)
result = build_curve(inputs)
curve = result.curve
lower, upper, _ = interval_path(
    inputs, curve, [base], coef.r, MonthKey(2024, 7), MonthKey(2023, 12), MonthKey(2024, 12)
)

print(f"\n{'month':8s} {'linear':>8s} {'quad':>8s} {'logistic':>8s} {'point':>8s} {'80% band':>17s}")
for i, month in enumerate(curve.months()):
    print(
        f"{month}  {curve.trend_linear[i]:8.0f} {curve.trend_quadratic[i]:8.0f} "
        f"{curve.trend_logistic[i]:8.0f} {curve.point_path[i]:8.0f} "
        f"[{lower[i]:7.0f}, {upper[i]:7.0f}]"
    )

"""The univariate model zoo on one seasonal series.

Fits all eleven families to a trending multiplicative-seasonal series, shows
the 12-month-ahead forecasts with 80% interval widths, and scores everything
on a held-out year.
"""

import numpy as np

from recoverycast.models import default_zoo, fit_forecast, validate_models
from recoverycast.rng import substream
from recoverycast.series import MonthKey, MonthlySeries, SplitSpec, split

rng = np.random.default_rng(1)
n = 84
t = np.arange(n)
y = (5000 + 40 * t) * (1 + 0.25 * np.sin(2 * np.pi * t / 12)) * np.exp(rng.normal(0, 0.03, n))
series = MonthlySeries(MonthKey(2013, 1), tuple(y), name="demo")

train, validation = split(series, SplitSpec(MonthKey(2018, 12), MonthKey(2019, 12)))

print(f"{'model':16s} {'h=1':>9s} {'h=12':>9s} {'width@12':>9s}")
for spec in default_zoo():
    fc = fit_forecast(train, spec, 12, rng=substream(0, "demo", spec.model_id))
    width = fc.upper80[-1] - fc.lower80[-1] if fc.has_bounds else float("nan")
    print(f"{spec.model_id:16s} {fc.mean[0]:9.0f} {fc.mean[-1]:9.0f} {width:9.0f}")

print("\nvalidation scores (12 held-out months):")
rows = validate_models(
    train, validation, default_zoo(), rng_for=lambda mid: substream(0, "demo", mid)
)
for row in sorted(rows, key=lambda r: r.mase):
    print(f"{row.model_id:16s} rmse={row.rmse:8.0f}  mape={row.mape:.3f}  mase={row.mase:.3f}")

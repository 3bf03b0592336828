"""Reference forecasts from search-index and flight signals.

Generates a post-break world where search keywords lead arrivals by one
month, screens keywords by lagged correlation, and builds the short-horizon
reference path from the index and flight branches.
"""

import numpy as np

from recoverycast.series import MonthKey, MonthlySeries
from recoverycast.signals import (
    FlightSeries,
    KeywordSeries,
    best_lag,
    build_composite,
    reference_forecast,
)

rng = np.random.default_rng(4)
start = MonthKey(2016, 1)
n = 85  # through Jan 2023
future = 6

t = np.arange(n + future)
truth = (3e4 + 250 * t) * (1 + 0.2 * np.sin(2 * np.pi * t / 12)) * np.exp(rng.normal(0, 0.03, n + future))
arrivals = MonthlySeries(start, tuple(truth[:n]), name="demo")

keywords = [
    KeywordSeries("visa", MonthlySeries(start, tuple(truth[1 : n + 1] * 0.004 + 5), "visa")),
    KeywordSeries("hotels", MonthlySeries(start, tuple(truth[1 : n + 1] * 0.009 + 9), "hotels")),
    KeywordSeries("memes", MonthlySeries(start, tuple(rng.uniform(20, 90, n)), "memes")),
]
flights = FlightSeries("demo", MonthlySeries(start, tuple(np.round(truth[: n + future] / 150)), "fl"))

composite = build_composite(arrivals, keywords, threshold=0.6, lag=1, destination="demo")
print(f"keywords kept: {composite.included_keywords} (noise keyword screened out)")

lag, corr = best_lag(arrivals, composite.series, max_lag=6)
print(f"best lag: {lag} month(s), correlation {corr:.3f}")

ref = reference_forecast(
    arrivals, future, keywords=keywords, flights=flights, destination="demo"
)
print(f"\n{'month':8s} {'truth':>9s} {'reference':>10s} {'index':>9s} {'flights':>9s}")
for i, month in enumerate(ref.months):
    print(
        f"{month}  {truth[n + i]:9.0f} {ref.path[i]:10.0f} "
        f"{ref.index_path[i]:9.0f} {ref.flight_path[i]:9.0f}"
    )

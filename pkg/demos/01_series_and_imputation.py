"""Monthly series handling: calendar keys, gaps, and Kalman imputation.

Builds a noisy trending series, punches holes into it, fills them with the
local-linear-trend smoother, and prints the filled values next to the truth.
"""

import numpy as np

from recoverycast.series import MonthKey, MonthlySeries, SplitSpec, impute, split

rng = np.random.default_rng(0)

n = 48
truth = 1000 + 12 * np.arange(n) + rng.normal(0, 25, n)
holes = sorted(rng.choice(np.arange(2, n - 2), size=5, replace=False))

values = [None if i in holes else float(v) for i, v in enumerate(truth)]
series = MonthlySeries(MonthKey(2015, 1), tuple(values), name="demo")

print(f"series spans {series.start}..{series.end}, {len(holes)} months missing")

filled = impute(series)
print("\nmonth      truth    imputed   error")
for i in holes:
    month = series.start.plus(i)
    print(f"{month}   {truth[i]:8.1f}  {filled.values[i]:8.1f}  {filled.values[i] - truth[i]:+7.1f}")

train, validation = split(filled, SplitSpec(MonthKey(2017, 12), MonthKey(2018, 12)))
print(f"\nsplit: train {train.start}..{train.end} ({len(train)} months), "
      f"validation {validation.start}..{validation.end} ({len(validation)} months)")

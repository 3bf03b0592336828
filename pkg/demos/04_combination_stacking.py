"""Forecast combination: screening, inverse-error weights, and stacking.

Builds a validation window where one model is nearly exact, a few are noisy,
and one is junk; screens the junk out and compares the four combiners.
"""

import numpy as np

from recoverycast.combine import CombinationSpec, combine, fit_weights, screen_models
from recoverycast.models.zoo import ValidationRow

rng = np.random.default_rng(3)
T = 24
actual = (4e4 + 600 * np.arange(T)) * (1 + 0.2 * np.sin(2 * np.pi * np.arange(T) / 12))

forecasts = {
    "sharp": actual * np.exp(rng.normal(0, 0.01, T)),
    "decent_a": actual * np.exp(rng.normal(0, 0.06, T)),
    "decent_b": actual * np.exp(rng.normal(0, 0.08, T)),
    "biased": actual * 1.25 * np.exp(rng.normal(0, 0.05, T)),
    "junk": np.full(T, actual.mean() * 3),
}

rows = [
    ValidationRow(name, 0.0, 0.0, float(np.mean(np.abs(f - actual)) / np.mean(np.abs(np.diff(actual, 12)))))
    for name, f in forecasts.items()
]
kept = screen_models(rows, keep_fraction=0.8)
print(f"screened {len(forecasts)} -> kept {kept}")

F = np.vstack([forecasts[name] for name in kept])
for method in ("simple", "error_weighted", "stack_lasso", "stack_ridge"):
    w = fit_weights(F, actual, kept, CombinationSpec(method, lam=1.0))
    path = combine(F, kept, w)
    mape = float(np.mean(np.abs(path - actual) / actual))
    pretty = ", ".join(f"{m}={w.weights[m]:.3f}" for m in kept)
    print(f"{method:16s} mape={mape:.4f}   weights: {pretty}")

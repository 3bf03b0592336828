"""recoverycast: forecasting monthly series through a structural break.

The package chains three stages: an ensemble of univariate models with
hierarchical reconciliation and stacking produces no-break base forecasts; a
composite search index and flight counts produce short-horizon reference
forecasts; and recovery curves connect the two, with the terminal level
shrunk by a per-destination recovery coefficient. An evaluation harness and
a pipeline CLI sit on top.
"""

__version__ = "0.1.0"

from .series import MonthKey, MonthlySeries, SplitSpec, impute, load_csv, split

__all__ = [
    "MonthKey",
    "MonthlySeries",
    "SplitSpec",
    "impute",
    "load_csv",
    "split",
    "__version__",
]

from .base import ForecastResult, ModelSpec, Z80, default_zoo
from .decomposition import Decomposition, decompose, seasonal_variant
from .zoo import ValidationRow, fit_forecast, validate_models

__all__ = [
    "Decomposition",
    "ForecastResult",
    "ModelSpec",
    "ValidationRow",
    "Z80",
    "decompose",
    "default_zoo",
    "fit_forecast",
    "seasonal_variant",
    "validate_models",
]

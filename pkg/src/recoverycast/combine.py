"""Forecast combination: accuracy screening, simple and inverse-error
weighting, and constrained stacking.

Stacking regresses validation actuals on the retained models' validation
forecasts with non-negative coefficients and no intercept, solved by cyclic
coordinate descent. The lasso update is a non-negative soft threshold, so a
large enough penalty drives every weight to exactly zero; design columns are
deliberately left unstandardized because the penalty applies on the raw
scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesign, EmptyTable, ModelSetMismatch

MAX_SWEEPS = 10_000
TOL = 1e-10


@dataclass(frozen=True)
class CombinationSpec:
    method: str = "stack_lasso"  # simple | error_weighted | stack_lasso | stack_ridge
    lam: float = 1.0
    keep_fraction: float = 0.8

    def __post_init__(self):
        if self.method not in ("simple", "error_weighted", "stack_lasso", "stack_ridge"):
            raise ValueError(f"unknown combination method {self.method!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0 < self.keep_fraction <= 1:
            raise ValueError("keep_fraction must be in (0, 1]")


@dataclass(frozen=True)
class CombinationWeights:
    weights: dict = field(default_factory=dict)
    method: str = ""

    def __post_init__(self):
        for model_id, w in self.weights.items():
            if w < 0:
                raise ValueError(f"negative weight for {model_id}")

    def vector(self, model_ids: list[str]) -> np.ndarray:
        missing = [m for m in model_ids if m not in self.weights]
        if missing:
            raise ModelSetMismatch(f"no weight for models {missing}")
        return np.array([self.weights[m] for m in model_ids])


def screen_models(rows, keep_fraction: float = 0.8) -> list[str]:
    """Retain the most accurate fraction of models by validation MASE.

    Rows with non-finite MASE are dropped first. The retained count is
    max(1, floor(keep_fraction * k)) over the k finite rows, which keeps
    13 of 17 at the default fraction; ties break by model_id so the choice
    is deterministic.
    """
    finite = [r for r in rows if np.isfinite(r.mase)]
    if not finite:
        raise EmptyTable("no model produced a finite validation MASE")
    keep = max(1, math.floor(keep_fraction * len(finite)))
    ranked = sorted(finite, key=lambda r: (r.mase, r.model_id))
    return sorted(r.model_id for r in ranked[:keep])


def _coordinate_descent(F: np.ndarray, y: np.ndarray, lam: float, ridge: bool) -> np.ndarray:
    """argmin_w>=0 ||y - F'w||^2 + lam * penalty, cyclic updates.

    F has shape (models, T). Each sweep is monotone in the objective;
    convergence is declared when the largest coefficient change drops
    below 1e-10.
    """
    k, _ = F.shape
    gram = F @ F.T
    fy = F @ y
    diag = np.diag(gram).copy()
    if np.any(diag <= 0):
        bad = int(np.argmin(diag))
        raise DegenerateDesign(f"forecast column {bad} is identically zero")
    w = np.zeros(k)

    def sweep(indices) -> float:
        delta = 0.0
        for j in indices:
            r = fy[j] - gram[j] @ w + diag[j] * w[j]
            if ridge:
                new = max(0.0, r / (diag[j] + lam))
            else:
                new = max(0.0, (r - lam / 2.0) / diag[j])
            delta = max(delta, abs(new - w[j]))
            w[j] = new
        return delta

    def objective() -> float:
        return w @ gram @ w - 2.0 * (fy @ w) + lam * (w @ w if ridge else np.abs(w).sum())

    # full sweeps alternate with bounded passes over the active (nonzero)
    # set; near-duplicate columns trade mass in a creeping tail where the
    # objective is flat to ~1e-9 relative, so a relative-stagnation stop
    # keeps the sweep cap from being the effective criterion
    all_idx = range(k)
    prev_obj = np.inf
    stagnant = 0
    sweeps = 0
    while sweeps < MAX_SWEEPS:
        delta = sweep(all_idx)
        sweeps += 1
        if delta < TOL:
            break
        active = np.flatnonzero(w)
        budget = 50
        while 0 < len(active) < k and budget > 0 and sweeps < MAX_SWEEPS:
            inner = sweep(active)
            sweeps += 1
            budget -= 1
            if inner < TOL:
                break
        obj = objective()
        stagnant = stagnant + 1 if obj >= prev_obj - 1e-9 * max(1.0, abs(prev_obj)) else 0
        if obj < prev_obj:
            prev_obj = obj
        if stagnant >= 2:
            break
    return w


def fit_weights(
    forecasts: np.ndarray,
    actuals: np.ndarray,
    model_ids: list[str],
    spec: CombinationSpec,
) -> CombinationWeights:
    """Fit combination weights on a validation window.

    ``forecasts`` is (models, T) aligned with ``actuals`` (length T). The
    simple method returns uniform weights; error weighting is proportional
    to inverse validation MAPE; stacking solves the penalized non-negative
    regression. Simple and error weights sum to one; stacked weights are
    whatever the regression says (still non-negative, no intercept).
    """
    F = np.asarray(forecasts, dtype=float)
    y = np.asarray(actuals, dtype=float)
    if F.ndim != 2 or F.shape[0] != len(model_ids):
        raise ModelSetMismatch("forecast matrix rows must match model_ids")
    if F.shape[1] != len(y):
        raise ModelSetMismatch("forecast columns must match actuals length")

    k = len(model_ids)
    if spec.method == "simple":
        w = np.full(k, 1.0 / k)
    elif spec.method == "error_weighted":
        if np.any(y <= 0):
            raise DegenerateDesign("error weighting needs strictly positive actuals")
        mapes = np.mean(np.abs(F - y) / y, axis=1)
        mapes = np.maximum(mapes, 1e-12)
        w = (1.0 / mapes) / np.sum(1.0 / mapes)
    else:
        if F.shape[1] < k:
            raise DegenerateDesign(
                f"stacking needs at least as many observations ({F.shape[1]}) as models ({k})"
            )
        w = _coordinate_descent(F, y, spec.lam, ridge=spec.method == "stack_ridge")
    return CombinationWeights(dict(zip(model_ids, w)), method=spec.method)


def combine(forecasts: np.ndarray, model_ids: list[str], weights: CombinationWeights) -> np.ndarray:
    """weights' @ forecasts for a (models, h) matrix; >= 0 when inputs are."""
    F = np.asarray(forecasts, dtype=float)
    if F.shape[0] != len(model_ids):
        raise ModelSetMismatch("forecast matrix rows must match model_ids")
    return weights.vector(model_ids) @ F


def stacking_objective(w: np.ndarray, F: np.ndarray, y: np.ndarray, lam: float, ridge: bool) -> float:
    """The penalized objective, exposed for oracle tests."""
    resid = y - w @ F
    penalty = float(np.sum(w**2)) if ridge else float(np.sum(np.abs(w)))
    return float(resid @ resid) + lam * penalty

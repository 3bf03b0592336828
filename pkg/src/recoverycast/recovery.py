"""Recovery coefficients and recovery-curve synthesis.

A destination's published path over the recovery window multiplies a trend
curve by pre-break seasonal factors. The trend is the average of three fits
between the detrended initial forecast (the last reference-forecast month)
and the detrended terminal forecast (the horizon-end base forecast scaled by
the recovery coefficient):

  linear     straight line from the initial toward the terminal anchor,
             evaluated on t = 0..n-1 with denominator n, so the terminal is
             approached but not interpolated;
  quadratic  least squares through 13 detrended history months and the
             detrended reference months, with the terminal point entering
             the objective at weight 18;
  logistic   L / (1 + exp(-k (arg - t0))) through five anchor points,
             fitted by Levenberg-Marquardt from a 16-point multistart.

Interval paths rerun the same synthesis with the across-model mean 80%
bounds substituted for the base-forecast-derived anchors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    DegenerateX,
    IllConditioned,
    MissingMonth,
    NoBounds,
    NonConvergence,
    NonPositiveTrend,
)
from .models.base import ForecastResult
from .series import MonthKey

COEF_INTERCEPT = 0.45
COEF_SLOPE = 0.10
TERMINAL_WEIGHT = 18.0


# ---------------------------------------------------------------------------
# Recovery coefficient
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DestinationScores:
    """1..5 judgment scores for policy openness, distance, and recovery pace."""

    destination: str
    policy: int
    distance: int
    recovery: int

    def __post_init__(self):
        for name in ("policy", "distance", "recovery"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise ValueError(f"{name} score must be an integer in 1..5, got {v!r}")

    @property
    def average(self) -> float:
        return (self.policy + self.distance + self.recovery) / 3.0


@dataclass(frozen=True)
class RecoveryCoefficient:
    destination: str
    r: float
    source: str  # "table" | "formula"

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise ValueError(f"recovery coefficient must be in (0, 1], got {self.r}")


def coefficient_from_scores(scores: DestinationScores) -> RecoveryCoefficient:
    """r = 0.45 + 0.10 * average, clamped into (0, 1]."""
    r = COEF_INTERCEPT + COEF_SLOPE * scores.average
    r = min(1.0, max(r, 1e-9))
    return RecoveryCoefficient(scores.destination, r, source="formula")


def fit_anchor_regression(anchors: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """OLS of the coefficient on the average score over anchor destinations."""
    if len(anchors) < 2:
        raise DegenerateX("need at least two anchor points")
    x = np.array([a for a, _ in anchors], dtype=float)
    y = np.array([r for _, r in anchors], dtype=float)
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx < 1e-12:
        raise DegenerateX("anchor averages are collinear")
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    return slope, intercept


# ---------------------------------------------------------------------------
# Seasonal factors and anchors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeasonalFactors:
    """Strictly periodic multiplicative factors, indexed by calendar month."""

    factors: tuple  # length 12, factors[m-1] for month m

    def __post_init__(self):
        if len(self.factors) != 12 or any(f <= 0 for f in self.factors):
            raise ValueError("need 12 positive factors")

    @classmethod
    def flat(cls) -> "SeasonalFactors":
        return cls(tuple([1.0] * 12))

    @classmethod
    def from_decomposition(cls, dec) -> "SeasonalFactors":
        return cls(tuple(dec.seasonal_index(m) for m in range(1, 13)))

    def at(self, month: int) -> float:
        return self.factors[month - 1]

    def path(self, months: Sequence[MonthKey]) -> np.ndarray:
        return np.array([self.at(m.month) for m in months])


@dataclass(frozen=True)
class Anchors:
    initial: float
    terminal: float
    initial_detrended: float
    terminal_detrended: float

    def __post_init__(self):
        if self.initial <= 0 or self.terminal <= 0:
            raise ValueError("anchors must be positive")


def anchors(
    base_path: ForecastResult,
    reference_path: ForecastResult,
    r: float,
    seasonal: SeasonalFactors,
    initial_month: MonthKey,
    terminal_month: MonthKey,
) -> Anchors:
    """Initial = reference at the window start; terminal = base * r at its end."""
    try:
        initial = reference_path.at(initial_month)
        terminal = base_path.at(terminal_month) * r
    except KeyError as exc:
        raise MissingMonth(str(exc)) from None
    return Anchors(
        initial=initial,
        terminal=terminal,
        initial_detrended=initial / seasonal.at(initial_month.month),
        terminal_detrended=terminal / seasonal.at(terminal_month.month),
    )


# ---------------------------------------------------------------------------
# Trend fits
# ---------------------------------------------------------------------------


def trend_linear(t0: float, t_end: float, n: int = 14) -> np.ndarray:
    """T0 + (t/n) * (Tend - T0) for t = 0..n-1; the endpoint is approached,
    not hit, because the denominator is the grid length."""
    t = np.arange(n, dtype=float)
    return t0 + (t / n) * (t_end - t0)


def quadratic_coefficients(
    fit_values: Sequence[float],
    terminal_detrended: float,
    n: int = 14,
    weight: float = TERMINAL_WEIGHT,
    terminal_arg: Optional[int] = None,
) -> np.ndarray:
    """(a, b, c) minimising the weighted quadratic objective."""
    y = np.asarray(fit_values, dtype=float)
    offset = len(y)
    if terminal_arg is None:
        terminal_arg = offset + n - 1
    args = np.concatenate([np.arange(1, offset + 1, dtype=float), [float(terminal_arg)]])
    targets = np.concatenate([y, [terminal_detrended]])
    wts = np.concatenate([np.ones(offset), [weight]])
    return _weighted_parabola(args, targets, wts)


def trend_quadratic(
    fit_values: Sequence[float],
    terminal_detrended: float,
    n: int = 14,
    weight: float = TERMINAL_WEIGHT,
    terminal_arg: Optional[int] = None,
) -> np.ndarray:
    """Weighted least-squares parabola through the detrended fit window.

    ``fit_values`` sit at arguments 1..len(fit_values) (13 history months
    then the reference months); the terminal target enters at
    ``terminal_arg`` (default: argument of the last output month) with the
    given weight. The output evaluates the parabola at the recovery-grid
    arguments len(fit_values)..len(fit_values)+n-1.
    """
    coeffs = quadratic_coefficients(fit_values, terminal_detrended, n, weight, terminal_arg)
    offset = len(fit_values)
    t_out = offset + np.arange(n, dtype=float)
    return coeffs[0] * t_out**2 + coeffs[1] * t_out + coeffs[2]


def _weighted_parabola(args, targets, wts) -> np.ndarray:
    sw = np.sqrt(wts)
    X = np.column_stack([args**2, args, np.ones_like(args)])
    sv = np.linalg.svd(X * sw[:, None], compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > 1e12:
        # recentre the argument axis and map the coefficients back
        mu = float(np.mean(args))
        Xc = np.column_stack([(args - mu) ** 2, args - mu, np.ones_like(args)])
        svc = np.linalg.svd(Xc * sw[:, None], compute_uv=False)
        if svc[-1] <= 0 or svc[0] / svc[-1] > 1e12:
            raise IllConditioned("quadratic design is singular even after centering")
        a, b, c = np.linalg.lstsq(Xc * sw[:, None], targets * sw, rcond=None)[0]
        coeffs = np.array([a, b - 2 * a * mu, a * mu**2 - b * mu + c])
    else:
        coeffs = np.linalg.lstsq(X * sw[:, None], targets * sw, rcond=None)[0]
    # the objective is quadratic, so one Newton step lands on the exact
    # stationary point regardless of lstsq rounding
    Xw = X * wts[:, None]
    grad = 2.0 * (X.T @ ((X @ coeffs - targets) * wts))
    hess = 2.0 * (X.T @ Xw)
    try:
        coeffs = coeffs - np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        pass
    return coeffs


def quadratic_objective(coeffs, fit_values, terminal_detrended, terminal_arg, weight=TERMINAL_WEIGHT) -> float:
    """The exact weighted objective, exposed for stationarity checks."""
    a, b, c = coeffs
    y = np.asarray(fit_values, dtype=float)
    s = np.arange(1, len(y) + 1, dtype=float)
    q = a * s**2 + b * s + c
    qt = a * terminal_arg**2 + b * terminal_arg + c
    return float(np.sum((y - q) ** 2) + weight * (terminal_detrended - qt) ** 2)


_LOGISTIC_K_STARTS = (0.1, 0.3, 0.6, 1.0)
_LOGISTIC_T0_STARTS = (15.0, 25.0)


def _logistic(params: np.ndarray, arg: np.ndarray) -> np.ndarray:
    L, k, t0 = params
    return L / (1.0 + np.exp(-k * (arg - t0)))


def trend_logistic(
    points: Sequence[tuple[float, float]],
    n: int = 14,
    offset: int = 18,
) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Fit L/(1+exp(-k(arg-t0))) to (argument, value) anchor points.

    Sixteen Levenberg-Marquardt starts cover L in {max y, 2 max y}, k in
    {0.1, 0.3, 0.6, 1.0}, t0 in {15, 25}; the best residual wins. The output
    path evaluates the curve at arguments offset..offset+n-1. Raises
    NonConvergence if every start fails.
    """
    pts = [(float(a), float(v)) for a, v in points]
    if len(pts) < 3:
        raise NonConvergence("logistic", "need at least three anchor points")
    arg = np.array([a for a, _ in pts])
    val = np.array([v for _, v in pts])
    if np.any(val <= 0):
        raise NonConvergence("logistic", "anchor values must be positive")

    def residual(p):
        with np.errstate(over="ignore"):
            return _logistic(p, arg) - val

    best = None
    top = float(np.max(val))
    for L0 in (top, 2.0 * top):
        for k0 in _LOGISTIC_K_STARTS:
            for t00 in _LOGISTIC_T0_STARTS:
                try:
                    res = least_squares(residual, x0=[L0, k0, t00], method="lm", max_nfev=2000)
                except Exception:
                    continue
                if not np.all(np.isfinite(res.x)):
                    continue
                sse = float(res.fun @ res.fun)
                if best is None or sse < best[0] - 1e-15:
                    best = (sse, res.x)
    if best is None:
        raise NonConvergence("logistic", "no start converged")
    params = tuple(float(v) for v in best[1])
    t_out = offset + np.arange(n, dtype=float)
    with np.errstate(over="ignore"):
        path = _logistic(np.array(params), t_out)
    if not np.all(np.isfinite(path)):
        raise NonConvergence("logistic", "fitted curve is not finite on the grid")
    return path, params


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RecoveryCurve:
    destination: str
    start: MonthKey  # month of t = 0
    trend_linear: tuple
    trend_quadratic: tuple
    trend_logistic: tuple
    trend_mean: tuple
    seasonal: tuple
    point_path: tuple

    def __len__(self) -> int:
        return len(self.point_path)

    def months(self) -> list[MonthKey]:
        return [self.start.plus(i) for i in range(len(self))]


def synthesize(
    trends: tuple[np.ndarray, np.ndarray, np.ndarray],
    seasonal_path: np.ndarray,
    destination: str,
    start: MonthKey,
) -> RecoveryCurve:
    """Average the three trend paths and reapply the seasonal factors."""
    lin, quad, logi = (np.asarray(t, dtype=float) for t in trends)
    if not (len(lin) == len(quad) == len(logi) == len(seasonal_path)):
        raise ValueError("trend and seasonal paths must share one grid")
    for name, t in (("linear", lin), ("quadratic", quad), ("logistic", logi)):
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise NonPositiveTrend(f"{name} trend must be finite and positive")
    mean = (lin + quad + logi) / 3.0
    point = mean * np.asarray(seasonal_path, dtype=float)
    return RecoveryCurve(
        destination=destination,
        start=start,
        trend_linear=tuple(lin),
        trend_quadratic=tuple(quad),
        trend_logistic=tuple(logi),
        trend_mean=tuple(mean),
        seasonal=tuple(seasonal_path),
        point_path=tuple(point),
    )


@dataclass(frozen=True)
class CurveInputs:
    """Everything one recovery-curve synthesis needs, already detrended.

    ``history_detrended`` holds the 13 months before the reference window,
    ``reference_detrended`` the reference window itself; together they form
    the quadratic fit values at arguments 1..len. ``mid``/``post`` are the
    detrended base-forecast values at the two extra logistic anchor months.
    """

    destination: str
    start: MonthKey
    n: int
    seasonal: SeasonalFactors
    initial: float
    terminal: float  # base forecast at the final month, already scaled by r
    history_detrended: tuple
    reference_detrended: tuple
    logistic_mid: tuple  # (argument, detrended value)
    logistic_post: tuple
    logistic_terminal: Optional[float] = None  # unscaled detrended final-month anchor

    @property
    def offset(self) -> int:
        return len(self.history_detrended) + len(self.reference_detrended)

    def grid_months(self) -> list[MonthKey]:
        return [self.start.plus(i) for i in range(self.n)]


@dataclass
class CurveResult:
    curve: RecoveryCurve
    warnings: list = field(default_factory=list)


def build_curve(inputs: CurveInputs) -> CurveResult:
    """Run the three trend fits and synthesize the point path.

    A logistic fit that fails to converge falls back to the linear trend;
    non-positive trend values are floored at a small positive level. Both
    degradations are reported as warnings, never silently.
    """
    warnings: list[str] = []
    seas = inputs.seasonal
    t0 = inputs.initial / seas.at(inputs.start.month)
    last_month = inputs.start.plus(inputs.n - 1)
    t_end = inputs.terminal / seas.at(last_month.month)

    lin = trend_linear(t0, t_end, inputs.n)
    fit_values = [*inputs.history_detrended, *inputs.reference_detrended]
    quad = trend_quadratic(fit_values, t_end, n=inputs.n)
    # the logistic anchors use the raw (unshrunk) base-forecast level at the
    # final month; the recovery coefficient enters only via linear/quadratic
    log_term = inputs.logistic_terminal if inputs.logistic_terminal is not None else t_end
    points = [
        (1.0, inputs.history_detrended[0]),
        (float(inputs.offset), t0),
        (float(inputs.logistic_mid[0]), inputs.logistic_mid[1]),
        (float(inputs.offset + inputs.n - 1), log_term),
        (float(inputs.logistic_post[0]), inputs.logistic_post[1]),
    ]
    try:
        logi, _ = trend_logistic(points, n=inputs.n, offset=inputs.offset)
    except NonConvergence as exc:
        warnings.append(f"{inputs.destination}: logistic fit failed ({exc}); using linear trend")
        logi = lin.copy()

    floor = 1e-6 * max(t0, t_end)
    trends = []
    for name, path in (("linear", lin), ("quadratic", quad), ("logistic", logi)):
        if np.any(path < floor):
            warnings.append(f"{inputs.destination}: {name} trend floored at {floor:.3g}")
            path = np.maximum(path, floor)
        trends.append(path)

    seasonal_path = seas.path(inputs.grid_months())
    curve = synthesize(tuple(trends), seasonal_path, inputs.destination, inputs.start)
    return CurveResult(curve=curve, warnings=warnings)


# ---------------------------------------------------------------------------
# Interval paths
# ---------------------------------------------------------------------------


def interval_path(
    inputs: CurveInputs,
    point_curve: RecoveryCurve,
    bound_models: Sequence[ForecastResult],
    r: float,
    terminal_month: MonthKey,
    mid_month: MonthKey,
    post_month: MonthKey,
) -> tuple[np.ndarray, np.ndarray, list]:
    """Lower/upper recovery paths from the across-model mean 80% bounds.

    Each side reruns the full synthesis with the mean bound path substituted
    wherever the base forecast fed the point curve: the terminal anchor (still
    scaled by r) and the two extra logistic anchors. If a fitted side crosses
    the point path, the three paths are sorted elementwise and the crossing is
    reported as a warning.
    """
    with_bounds = [fc for fc in bound_models if fc.has_bounds]
    if not with_bounds:
        raise NoBounds("no contributing model produces prediction intervals")

    def _mean_bound(month: MonthKey, side: str) -> float:
        vals = []
        for fc in with_bounds:
            idx = fc.index_of(month)
            vals.append((fc.lower80 if side == "lower" else fc.upper80)[idx])
        return float(np.mean(vals))

    seas = inputs.seasonal
    warnings: list[str] = []
    sides = {}
    for side in ("lower", "upper"):
        raw_terminal = max(_mean_bound(terminal_month, side), 1e-9)
        mid_val = max(_mean_bound(mid_month, side), 1e-9) / seas.at(mid_month.month)
        post_val = max(_mean_bound(post_month, side), 1e-9) / seas.at(post_month.month)
        side_inputs = replace(
            inputs,
            terminal=raw_terminal * r,
            logistic_mid=(inputs.logistic_mid[0], mid_val),
            logistic_post=(inputs.logistic_post[0], post_val),
            logistic_terminal=raw_terminal / seas.at(terminal_month.month),
        )
        result = build_curve(side_inputs)
        warnings.extend(result.warnings)
        sides[side] = np.asarray(result.curve.point_path)

    point = np.asarray(point_curve.point_path)
    stack = np.vstack([sides["lower"], point, sides["upper"]])
    ordered = np.sort(stack, axis=0)
    if not np.array_equal(ordered, stack):
        warnings.append(f"{inputs.destination}: interval paths crossed the point path; reordered")
    return ordered[0], ordered[2], warnings

import numpy as np
import pytest

from recoverycast.errors import DegenerateX, NoBounds, NonPositiveTrend
from recoverycast.models.base import ForecastResult
from recoverycast.recovery import (
    Anchors,
    CurveInputs,
    DestinationScores,
    RecoveryCoefficient,
    SeasonalFactors,
    anchors,
    build_curve,
    coefficient_from_scores,
    fit_anchor_regression,
    interval_path,
    quadratic_coefficients,
    quadratic_objective,
    synthesize,
    trend_linear,
    trend_logistic,
    trend_quadratic,
)
from recoverycast.series import MonthKey

J23 = MonthKey(2023, 6)  # recovery grid start (t = 0)


class TestCoefficient:
    def test_reference_destination_exact(self):
        # policy 3, distance 1, recovery 2 -> average 2.0 -> 0.65
        coef = coefficient_from_scores(DestinationScores("canada_like", 3, 1, 2))
        assert abs(coef.r - 0.65) <= 1e-12
        assert coef.source == "formula"

    def test_high_average(self):
        coef = coefficient_from_scores(DestinationScores("d", 5, 5, 5))
        assert coef.r == pytest.approx(0.95, abs=1e-12)

    def test_clamped_at_one(self):
        # hypothetical average above the formula's natural range
        r = 0.45 + 0.10 * 5.5
        assert min(1.0, r) == 1.0
        coef = RecoveryCoefficient("d", min(1.0, r), "formula")
        assert coef.r == 1.0

    def test_score_range_enforced(self):
        with pytest.raises(ValueError):
            DestinationScores("d", 0, 3, 3)
        with pytest.raises(ValueError):
            DestinationScores("d", 3, 6, 3)

    def test_average_field(self):
        assert DestinationScores("d", 3, 1, 2).average == pytest.approx(2.0)


class TestAnchorRegression:
    def test_reference_triple(self):
        # the three calibration destinations: (2.0, 0.65), (3.7, 1.0), (4.3, 0.85)
        slope, intercept = fit_anchor_regression([(2.0, 0.65), (3.7, 1.0), (4.3, 0.85)])
        assert 0.10 <= slope <= 0.13
        assert 0.44 <= intercept <= 0.47

    def test_two_points_exact(self):
        slope, intercept = fit_anchor_regression([(0.0, 0.0), (1.0, 1.0)])
        assert slope == pytest.approx(1.0) and intercept == pytest.approx(0.0, abs=1e-15)

    def test_collinear_rejected(self):
        with pytest.raises(DegenerateX):
            fit_anchor_regression([(2.0, 0.5), (2.0, 0.7)])


class TestAnchors:
    def _paths(self):
        base = ForecastResult(MonthKey(2022, 12), 24, tuple(np.linspace(900, 1100, 24)), model_id="bf")
        ref = ForecastResult(MonthKey(2023, 1), 5, (500.0, 520.0, 540.0, 560.0, 580.0), model_id="rf")
        return base, ref

    def test_r_one_keeps_base(self):
        base, ref = self._paths()
        a = anchors(base, ref, 1.0, SeasonalFactors.flat(), J23, MonthKey(2024, 7))
        assert a.terminal == base.at(MonthKey(2024, 7))
        assert a.initial == 580.0

    def test_scaling(self):
        base, ref = self._paths()
        a = anchors(base, ref, 0.65, SeasonalFactors.flat(), J23, MonthKey(2024, 7))
        assert a.terminal == pytest.approx(0.65 * base.at(MonthKey(2024, 7)))

    def test_flat_seasonal_detrended_equal_raw(self):
        base, ref = self._paths()
        a = anchors(base, ref, 0.8, SeasonalFactors.flat(), J23, MonthKey(2024, 7))
        assert a.initial_detrended == a.initial
        assert a.terminal_detrended == a.terminal

    def test_seasonal_divides(self):
        base, ref = self._paths()
        factors = SeasonalFactors(tuple([1.0] * 5 + [2.0] + [1.0] * 6))  # June factor 2
        a = anchors(base, ref, 1.0, factors, J23, MonthKey(2024, 7))
        assert a.initial_detrended == pytest.approx(a.initial / 2.0)


class TestTrendLinear:
    def test_constant(self):
        assert np.allclose(trend_linear(5.0, 5.0, 14), 5.0)

    def test_arithmetic(self):
        assert np.allclose(trend_linear(0.0, 14.0, 14), np.arange(14.0))

    def test_endpoint_approaches_not_hits(self):
        t0, t13 = 3.0, 17.0
        path = trend_linear(t0, t13, 14)
        assert path[13] == pytest.approx(t0 + (13 / 14) * (t13 - t0))
        assert path[13] != t13

    def test_monotone_in_r(self):
        # raising the terminal raises every point after t=0
        lo = trend_linear(10.0, 12.0, 14)
        hi = trend_linear(10.0, 15.0, 14)
        assert hi[0] == lo[0]
        assert np.all(hi[1:] > lo[1:])


class TestTrendQuadratic:
    def test_interpolates_own_model_class(self):
        a, b, c = 0.02, -0.3, 8.0
        args = np.arange(1, 19, dtype=float)
        values = a * args**2 + b * args + c
        terminal = a * 31.0**2 + b * 31.0 + c
        path = trend_quadratic(values, terminal, n=14)
        t_out = 18 + np.arange(14.0)
        assert np.allclose(path, a * t_out**2 + b * t_out + c, atol=1e-8)

    def test_huge_weight_pins_terminal(self):
        rng = np.random.default_rng(0)
        values = 50 + np.cumsum(rng.normal(1, 2, 18))
        terminal = 260.0
        path = trend_quadratic(values, terminal, n=14, weight=1e8)
        assert abs(path[13] - terminal) < 1e-4 * terminal

    def test_stationarity_of_weighted_objective(self):
        rng = np.random.default_rng(1)
        values = 5 + np.cumsum(rng.normal(0.2, 0.4, 18))
        terminal = 18.0
        coeffs = quadratic_coefficients(values, terminal, n=14, weight=18.0)

        def grad(coeffs):
            a, b, c = coeffs
            s = np.arange(1, 19, dtype=float)
            resid = values - (a * s**2 + b * s + c)
            resid_t = terminal - (a * 31.0**2 + b * 31.0 + c)
            g_a = -2 * np.sum(resid * s**2) - 2 * 18.0 * resid_t * 31.0**2
            g_b = -2 * np.sum(resid * s) - 2 * 18.0 * resid_t * 31.0
            g_c = -2 * np.sum(resid) - 2 * 18.0 * resid_t
            return np.array([g_a, g_b, g_c])

        g = grad(coeffs)
        scale = max(1.0, quadratic_objective(coeffs, values, terminal, 31.0))
        assert np.all(np.abs(g) / scale < 1e-8)

    def test_weight_increases_pull(self):
        rng = np.random.default_rng(2)
        values = 50 + np.cumsum(rng.normal(1, 2, 18))
        terminal = 500.0
        gap_small = abs(trend_quadratic(values, terminal, n=14, weight=1.0)[13] - terminal)
        gap_big = abs(trend_quadratic(values, terminal, n=14, weight=200.0)[13] - terminal)
        assert gap_big < gap_small


class TestTrendLogistic:
    ARGS = (1.0, 18.0, 24.0, 31.0, 36.0)

    def test_exact_recovery(self):
        L, k, t0 = 100.0, 0.5, 20.0
        pts = [(a, L / (1 + np.exp(-k * (a - t0)))) for a in self.ARGS]
        path, params = trend_logistic(pts, n=14, offset=18)
        assert params[0] == pytest.approx(L, rel=1e-3)
        assert params[1] == pytest.approx(k, rel=1e-3)
        assert params[2] == pytest.approx(t0, rel=1e-3)

    def test_flat_points_give_flat_path(self):
        pts = [(a, 42.0) for a in self.ARGS]
        path, _ = trend_logistic(pts, n=14, offset=18)
        assert np.allclose(path, 42.0, rtol=1e-4)

    def test_monotone_output_for_increasing_points(self):
        pts = list(zip(self.ARGS, [5.0, 40.0, 70.0, 90.0, 95.0]))
        path, params = trend_logistic(pts, n=14, offset=18)
        assert params[1] > 0
        assert np.all(np.diff(path) >= -1e-9)

    def test_scale_equivariance(self):
        L, k, t0 = 80.0, 0.4, 22.0
        pts = [(a, L / (1 + np.exp(-k * (a - t0)))) for a in self.ARGS]
        base, _ = trend_logistic(pts, n=14, offset=18)
        scaled, _ = trend_logistic([(a, 3.0 * v) for a, v in pts], n=14, offset=18)
        assert np.allclose(scaled, 3.0 * base, rtol=1e-6)


class TestSynthesize:
    def test_identical_trends(self):
        t = np.linspace(10, 20, 14)
        seas = np.ones(14)
        curve = synthesize((t, t, t), seas, "d", J23)
        assert np.allclose(curve.trend_mean, t)
        assert np.allclose(curve.point_path, t)

    def test_seasonal_neutrality(self):
        a = np.linspace(10, 20, 14)
        b = np.linspace(12, 18, 14)
        c = np.linspace(8, 22, 14)
        curve = synthesize((a, b, c), np.ones(14), "d", J23)
        assert np.allclose(curve.point_path, curve.trend_mean)

    def test_seasonal_multiplies(self):
        t = np.full(14, 9.0)
        seas = 1 + 0.1 * np.sin(np.arange(14))
        curve = synthesize((t, t, t), seas, "d", J23)
        assert np.allclose(curve.point_path, 9.0 * seas)

    def test_nonpositive_trend_rejected(self):
        t = np.linspace(10, 20, 14)
        bad = t.copy()
        bad[3] = 0.0
        with pytest.raises(NonPositiveTrend):
            synthesize((t, bad, t), np.ones(14), "d", J23)


def _smooth(s):
    """Convex rising ground truth so every trend family tracks the window."""
    s = np.asarray(s, dtype=float)
    return 0.9 * s * s + 4.0 * s + 20.0


def curve_inputs(scale=1.0, r=0.9, seasonal=None, n=14):
    seasonal = seasonal or SeasonalFactors.flat()
    history = tuple(scale * _smooth(np.arange(1.0, 14.0)))
    reference = tuple(scale * _smooth(np.arange(14.0, 19.0)))
    return CurveInputs(
        destination="d",
        start=J23,
        n=n,
        seasonal=seasonal,
        initial=scale * _smooth(18.0) * seasonal.at(J23.month),
        terminal=scale * _smooth(31.0) * r * seasonal.at(J23.plus(n - 1).month),
        history_detrended=history,
        reference_detrended=reference,
        logistic_mid=(24.0, scale * _smooth(24.0)),
        logistic_post=(36.0, scale * _smooth(36.0)),
        logistic_terminal=scale * _smooth(31.0),
    )


class TestBuildCurve:
    def test_initial_anchor_honored(self):
        # anchors consistent with the fit window (r = 1): both nonlinear
        # fits then pass close to the initial point
        inputs = curve_inputs(r=1.0)
        curve = build_curve(inputs).curve
        # linear trend starts exactly at the detrended initial anchor
        assert curve.trend_linear[0] == pytest.approx(inputs.initial, rel=1e-12)
        # synthesized path starts within 2% of the initial forecast
        assert curve.point_path[0] == pytest.approx(inputs.initial, rel=0.02)

    def test_r_monotonicity_in_linear_and_quadratic(self):
        lo = build_curve(curve_inputs(r=0.7)).curve
        hi = build_curve(curve_inputs(r=1.0)).curve
        assert np.all(np.asarray(hi.trend_linear[1:]) > np.asarray(lo.trend_linear[1:]))
        assert hi.trend_quadratic[13] > lo.trend_quadratic[13]

    def test_scale_equivariance(self):
        lam = 3.0
        base = build_curve(curve_inputs(scale=1.0)).curve
        scaled = build_curve(curve_inputs(scale=lam)).curve
        assert np.allclose(scaled.trend_linear, lam * np.asarray(base.trend_linear), rtol=1e-12)
        assert np.allclose(scaled.trend_quadratic, lam * np.asarray(base.trend_quadratic), rtol=1e-9)
        assert np.allclose(scaled.trend_logistic, lam * np.asarray(base.trend_logistic), rtol=1e-6)
        assert np.allclose(scaled.point_path, lam * np.asarray(base.point_path), rtol=1e-6)


class TestIntervalPath:
    def _bound_models(self, width, count=3, origin=MonthKey(2022, 12), horizon=24):
        out = []
        base = np.linspace(900, 1100, horizon)
        for i in range(count):
            out.append(
                ForecastResult(
                    origin,
                    horizon,
                    tuple(base),
                    lower80=tuple(base - width),
                    upper80=tuple(base + width),
                    model_id=f"m{i}",
                )
            )
        return out

    def test_zero_width_bounds_reproduce_point(self):
        models = self._bound_models(width=0.0)
        # align the point inputs with the models' base values
        t_month, m_month, p_month = MonthKey(2024, 7), MonthKey(2023, 12), MonthKey(2024, 12)
        r = 0.8
        template = curve_inputs()
        inputs = CurveInputs(
            destination="d",
            start=J23,
            n=14,
            seasonal=SeasonalFactors.flat(),
            initial=template.initial,
            terminal=models[0].at(t_month) * r,
            history_detrended=template.history_detrended,
            reference_detrended=template.reference_detrended,
            logistic_mid=(24.0, models[0].at(m_month)),
            logistic_post=(36.0, models[0].at(p_month)),
            logistic_terminal=models[0].at(t_month),
        )
        point = build_curve(inputs).curve
        lower, upper, _ = interval_path(inputs, point, models, r, t_month, m_month, p_month)
        assert np.allclose(lower, point.point_path, rtol=1e-9)
        assert np.allclose(upper, point.point_path, rtol=1e-9)

    def test_ordering_enforced(self):
        inputs = curve_inputs()
        point = build_curve(inputs).curve
        models = self._bound_models(width=120.0)
        lower, upper, _ = interval_path(
            inputs, point, models, 0.8, MonthKey(2024, 7), MonthKey(2023, 12), MonthKey(2024, 12)
        )
        pt = np.asarray(point.point_path)
        assert np.all(lower <= pt + 1e-9) and np.all(pt <= upper + 1e-9)

    def test_no_bounds_raises(self):
        inputs = curve_inputs()
        point = build_curve(inputs).curve
        boundless = [
            ForecastResult(MonthKey(2022, 12), 24, tuple(np.linspace(900, 1100, 24)), model_id="nn")
        ]
        with pytest.raises(NoBounds):
            interval_path(
                inputs, point, boundless, 0.8, MonthKey(2024, 7), MonthKey(2023, 12), MonthKey(2024, 12)
            )

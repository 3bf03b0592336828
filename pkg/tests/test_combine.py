import numpy as np
import pytest

from recoverycast.combine import (
    CombinationSpec,
    CombinationWeights,
    combine,
    fit_weights,
    screen_models,
    stacking_objective,
)
from recoverycast.errors import DegenerateDesign, EmptyTable, ModelSetMismatch
from recoverycast.models.zoo import ValidationRow


def rows_with_mase(mases):
    return [ValidationRow(f"m{i:02d}", 1.0, 0.1, m) for i, m in enumerate(mases)]


class TestScreening:
    def test_seventeen_keeps_thirteen(self):
        mases = [0.5] * 13 + [9.0] * 4
        kept = screen_models(rows_with_mase(mases))
        assert len(kept) == 13
        assert all(m in kept for m in [f"m{i:02d}" for i in range(13)])

    def test_ties_break_by_id(self):
        kept = screen_models(rows_with_mase([1.0] * 5))
        assert kept == ["m00", "m01", "m02", "m03"]

    def test_single_model_kept(self):
        assert screen_models(rows_with_mase([2.0])) == ["m00"]

    def test_nonfinite_rows_dropped_first(self):
        rows = rows_with_mase([0.5, 0.7, np.nan, 0.9, np.inf])
        kept = screen_models(rows)
        assert len(kept) == 2  # floor(0.8 * 3)
        assert "m02" not in kept and "m04" not in kept

    def test_empty_after_drop(self):
        with pytest.raises(EmptyTable):
            screen_models(rows_with_mase([np.nan, np.inf]))


class TestWeights:
    def test_simple_uniform(self):
        F = np.ones((4, 10))
        w = fit_weights(F, np.ones(10), list("abcd"), CombinationSpec("simple"))
        assert all(v == pytest.approx(0.25) for v in w.weights.values())

    def test_error_weighted_pair(self):
        # MAPEs 0.1 and 0.3 -> inverse-proportional weights 0.75 / 0.25
        y = np.full(10, 100.0)
        F = np.vstack([y * 1.1, y * 1.3])
        w = fit_weights(F, y, ["a", "b"], CombinationSpec("error_weighted"))
        assert w.weights["a"] == pytest.approx(0.75, rel=1e-12)
        assert w.weights["b"] == pytest.approx(0.25, rel=1e-12)

    def test_identical_models_split_evenly(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(10, 20, 12)
        F = np.vstack([y, y])
        w = fit_weights(F, y, ["a", "b"], CombinationSpec("simple"))
        assert w.weights["a"] == w.weights["b"] == pytest.approx(0.5)

    def test_lasso_exact_model_vs_grid_oracle(self):
        # two models, lambda=0: exhaustive grid over the weight square at
        # 1e-3 resolution is the oracle for the coordinate-descent solution
        rng = np.random.default_rng(1)
        y = rng.normal(50, 5, 24)
        F = np.vstack([y, rng.normal(50, 5, 24)])
        w = fit_weights(F, y, ["exact", "noise"], CombinationSpec("stack_lasso", lam=0.0))

        grid = np.arange(0.0, 1.5001, 1e-3)
        best = (np.inf, None)
        for w0 in grid:
            resid = y - w0 * F[0]
            # optimal w1 given w0, clamped to the grid's resolution
            w1 = max(0.0, float(resid @ F[1] / (F[1] @ F[1])))
            sse = float(np.sum((resid - w1 * F[1]) ** 2))
            if sse < best[0]:
                best = (sse, (w0, w1))
        assert w.weights["exact"] == pytest.approx(best[1][0], abs=2e-3)
        assert w.weights["exact"] >= 0.99
        assert w.weights["noise"] == pytest.approx(best[1][1], abs=2e-3)

    def test_lasso_large_lambda_kills_all(self):
        rng = np.random.default_rng(2)
        y = rng.normal(1, 0.1, 20)
        F = np.vstack([y, y * 1.05, rng.normal(1, 0.1, 20)])
        w = fit_weights(F, y, ["a", "b", "c"], CombinationSpec("stack_lasso", lam=1e6))
        assert all(v == 0.0 for v in w.weights.values())

    def test_nonnegative_in_fuzzed_fits(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            k = int(rng.integers(2, 6))
            T = int(rng.integers(k, 16))
            y = rng.normal(0, 1, T)
            F = rng.normal(0, 1, (k, T)) + 0.5
            lam = float(rng.uniform(0, 5))
            method = "stack_lasso" if rng.integers(2) else "stack_ridge"
            w = fit_weights(F, y, [f"m{i}" for i in range(k)], CombinationSpec(method, lam=lam))
            assert all(v >= 0 for v in w.weights.values())

    def test_objective_monotone_per_sweep(self):
        # replay cyclic updates and check the penalized objective never rises
        rng = np.random.default_rng(4)
        y = rng.normal(10, 2, 30)
        F = np.vstack([y * rng.uniform(0.8, 1.2) for _ in range(5)])
        lam = 1.0
        gram = F @ F.T
        fy = F @ y
        diag = np.diag(gram)
        w = np.zeros(5)
        prev = stacking_objective(w, F, y, lam, ridge=False)
        for _ in range(50):
            for j in range(5):
                r = fy[j] - gram[j] @ w + diag[j] * w[j]
                w[j] = max(0.0, (r - lam / 2.0) / diag[j])
            obj = stacking_objective(w, F, y, lam, ridge=False)
            assert obj <= prev + 1e-9 * max(1.0, abs(prev))
            prev = obj

    def test_stacking_needs_enough_observations(self):
        with pytest.raises(DegenerateDesign):
            fit_weights(np.ones((5, 3)), np.ones(3), list("abcde"), CombinationSpec("stack_ridge"))

    def test_zero_column_rejected(self):
        F = np.vstack([np.zeros(10), np.ones(10)])
        with pytest.raises(DegenerateDesign):
            fit_weights(F, np.ones(10), ["z", "o"], CombinationSpec("stack_lasso"))


class TestCombine:
    def test_uniform_over_constant(self):
        F = np.full((3, 6), 7.0)
        w = CombinationWeights({"a": 1 / 3, "b": 1 / 3, "c": 1 / 3})
        assert np.allclose(combine(F, ["a", "b", "c"], w), 7.0)

    def test_unit_weight_passthrough(self):
        F = np.array([[1.0, 2.0, 3.0], [9.0, 9.0, 9.0]])
        w = CombinationWeights({"a": 1.0, "b": 0.0})
        assert np.allclose(combine(F, ["a", "b"], w), [1.0, 2.0, 3.0])

    def test_model_set_mismatch(self):
        w = CombinationWeights({"a": 1.0})
        with pytest.raises(ModelSetMismatch):
            combine(np.ones((2, 3)), ["a", "b"], w)

    def test_identical_forecasts_fixed_point_every_method(self):
        rng = np.random.default_rng(5)
        y = rng.uniform(50, 80, 24)
        path = rng.uniform(40, 90, 24)
        F = np.vstack([path] * 3)
        for method in ("simple", "error_weighted"):
            w = fit_weights(F, y, list("abc"), CombinationSpec(method))
            assert np.allclose(combine(F, list("abc"), w), path, rtol=1e-9)
        # stacking reproduces a shared forecast when it matches the target
        F2 = np.vstack([y, y, y])
        for method in ("stack_lasso", "stack_ridge"):
            w = fit_weights(F2, y, list("abc"), CombinationSpec(method, lam=0.0))
            assert np.allclose(combine(F2, list("abc"), w), y, rtol=1e-9)

    def test_nonnegative_weights_give_nonnegative_output(self):
        rng = np.random.default_rng(6)
        F = rng.uniform(0, 100, (4, 12))
        w = CombinationWeights({m: float(v) for m, v in zip("abcd", rng.uniform(0, 2, 4))})
        assert np.all(combine(F, list("abcd"), w) >= 0)

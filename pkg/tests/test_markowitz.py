import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import line_slice_min_risk, plane_slice_min_risk, random_psd, triple_loop_covariance

from rmtfolio import (
    NO_SHORT,
    SHORT_SELLING,
    CorrelationMatrix,
    InfeasibleTargetError,
    MethodConfig,
    NotPositiveSemidefiniteError,
    ReturnPanel,
    WeightBounds,
    assemble_covariance,
    frontier_grid,
    frontier_pair,
    gmv_portfolio,
    min_risk_weights,
    trace_frontier,
)
from rmtfolio.markowitz import feasible_return_interval
from rmtfolio.synthetic import business_days, factor_returns

UNBOUNDED_ABOVE = WeightBounds(0.0, np.inf)


def _corr(values, tickers=None):
    values = np.asarray(values, dtype=float)
    return CorrelationMatrix(tickers or tuple(f"T{i}" for i in range(len(values))), values)


def check_frontier_shape(frontier, mean, bounds, *, tol=1e-9):
    """Budget, return and box constraints at every feasible point; risk non-decreasing along the grid."""
    for t, p in zip(frontier.grid, frontier.points):
        if p is None:
            continue
        w = p.weights
        assert abs(w.sum() - 1.0) <= tol
        assert abs(w @ mean - t) <= tol * max(1.0, abs(t))
        assert np.all(w >= bounds.lower - 1e-12)
        assert np.all(w <= bounds.upper + 1e-12)
    risks = frontier.risks[frontier.feasible]
    assert np.all(np.diff(risks) >= -tol)


class TestAssemble:
    def test_identity(self):
        cov = assemble_covariance(_corr(np.eye(2)), [2.0, 3.0])
        np.testing.assert_array_equal(cov.values, np.diag([4.0, 9.0]))

    def test_perfect_correlation(self):
        cov = assemble_covariance(_corr(np.ones((2, 2))), [1.0, 1.0])
        np.testing.assert_array_equal(cov.values, np.ones((2, 2)))

    def test_triple_loop_oracle(self):
        c = np.array([[1.0, 0.3, -0.2], [0.3, 1.0, 0.5], [-0.2, 0.5, 1.0]])
        s = [0.011, 0.023, 0.017]
        np.testing.assert_allclose(assemble_covariance(_corr(c), s).values, triple_loop_covariance(c, s), atol=1e-15)

    def test_flags_and_source(self):
        cov = assemble_covariance(_corr(np.eye(2)), [1.0, 1.0], cleaned=True, residual=True)
        assert cov.source == "cleaned/residual"

    @pytest.mark.parametrize("sigma", [[1.0, 0.0], [1.0, -1.0], [1.0, np.nan]])
    def test_rejects_non_positive_sigma(self, sigma):
        with pytest.raises(ValueError):
            assemble_covariance(_corr(np.eye(2)), sigma)


class TestMinRisk:
    def test_symmetric_two_asset(self):
        p = min_risk_weights(np.eye(2), [0.0, 0.02], 0.01, UNBOUNDED_ABOVE)
        np.testing.assert_allclose(p.weights, [0.5, 0.5], atol=1e-12)
        assert p.risk == pytest.approx(0.5, abs=1e-12)

    def test_inverse_variance_gmv(self):
        sigma = np.diag([1.0, 4.0])
        mean = np.array([0.01, 0.02])
        gmv = gmv_portfolio(sigma, mean, NO_SHORT)
        np.testing.assert_allclose(gmv.weights, [0.8, 0.2], atol=1e-6)
        p = min_risk_weights(sigma, mean, gmv.target_return, NO_SHORT)
        np.testing.assert_allclose(p.weights, [0.8, 0.2], atol=1e-6)
        assert p.risk == pytest.approx(0.8, abs=1e-6)

    @pytest.mark.parametrize("bounds", [NO_SHORT, SHORT_SELLING], ids=["no-short", "short"])
    @pytest.mark.parametrize("seed", range(25))
    def test_three_assets_match_grid_oracle(self, seed, bounds):
        rng = np.random.default_rng(seed)
        sigma = random_psd(rng, 3)
        mean = rng.normal(0.01, 0.01, size=3)
        lo, hi = feasible_return_interval(mean, bounds)
        for target in rng.uniform(lo, hi, size=2):
            best = line_slice_min_risk(sigma, mean, target, bounds.lower, bounds.upper)
            p = min_risk_weights(sigma, mean, target, bounds)
            assert p.risk == pytest.approx(best[0], abs=1e-4)
            assert p.risk <= best[0] + 1e-12

    def test_infeasible_target_reports_interval(self):
        with pytest.raises(InfeasibleTargetError) as info:
            min_risk_weights(np.eye(2), [0.01, 0.03], 0.05, NO_SHORT)
        assert info.value.interval == pytest.approx((0.01, 0.03))

    def test_equal_means_ignore_return_row(self):
        p = min_risk_weights(np.diag([1.0, 1.0, 2.0]), [0.01] * 3, 0.01, NO_SHORT)
        np.testing.assert_allclose(p.weights, [0.4, 0.4, 0.2], atol=1e-10)

    def test_budget_infeasible_bounds(self):
        with pytest.raises(ValueError):
            min_risk_weights(np.eye(3), [0.1, 0.2, 0.3], 0.2, WeightBounds(0.0, 0.3))

    def test_slightly_indefinite_is_repaired(self):
        w, v = np.linalg.eigh(random_psd(np.random.default_rng(0), 4))
        w[0] = -1e-10
        sigma = (v * w) @ v.T
        p = min_risk_weights(sigma, [0.01, 0.02, 0.03, 0.04], 0.025, NO_SHORT)
        assert p.risk >= -1e-12

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveSemidefiniteError):
            min_risk_weights(np.diag([1.0, -0.1]), [0.01, 0.02], 0.015, NO_SHORT)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.05, 0.95))
    def test_kkt_optimality_no_short(self, seed, frac):
        # Perturbing the optimum along any feasible direction must not lower the risk.
        rng = np.random.default_rng(seed)
        n = 5
        sigma = random_psd(rng, n)
        mean = rng.normal(0.01, 0.01, size=n)
        lo, hi = feasible_return_interval(mean, NO_SHORT)
        target = lo + frac * (hi - lo)
        p = min_risk_weights(sigma, mean, target, NO_SHORT)
        a = np.vstack([np.ones(n), mean])
        null = np.linalg.svd(a)[2][2:].T
        for d in null.T:
            for eps in (1e-4, -1e-4):
                w = p.weights + eps * d
                if np.all(w >= 0) and np.all(w <= 1):
                    assert w @ sigma @ w >= p.risk - 1e-12


class TestFrontier:
    def test_upper_end_is_single_asset(self):
        mean = np.array([0.01, 0.03])
        f = trace_frontier(np.diag([1.0, 2.0]), mean, UNBOUNDED_ABOVE, 20)
        assert f.grid[-1] == 0.03
        np.testing.assert_allclose(f.points[-1].weights, [0.0, 1.0], atol=1e-12)

    def test_equal_means_single_point(self):
        f = trace_frontier(random_psd(np.random.default_rng(1), 3), [0.02] * 3, NO_SHORT, 100)
        assert len(f) == 1

    def test_four_asset_oracle_and_monotone(self):
        rng = np.random.default_rng(42)
        sigma = random_psd(rng, 4)
        # Wide return spread between the two solved-for assets keeps the grid oracle well conditioned.
        mean = np.array([0.2, 0.9, 0.3, 1.3])
        f = trace_frontier(sigma, mean, NO_SHORT, 12)
        check_frontier_shape(f, mean, NO_SHORT)
        for t, p in zip(f.grid, f.points):
            best = plane_slice_min_risk(sigma, mean, t, 0.0, 1.0)
            assert p.risk == pytest.approx(best[0], abs=1e-4)
            assert p.risk <= best[0] + 1e-12

    def test_grid_starts_at_gmv_and_is_increasing(self):
        rng = np.random.default_rng(3)
        sigma = random_psd(rng, 6)
        mean = rng.uniform(0.001, 0.02, 6)
        grid = frontier_grid([sigma], mean, NO_SHORT, 50)
        assert grid[0] == pytest.approx(gmv_portfolio(sigma, mean, NO_SHORT).target_return)
        assert grid[-1] == mean.max()
        assert np.all(np.diff(grid) > 0)

    def test_no_positive_mean(self):
        with pytest.raises(ValueError):
            frontier_grid([np.eye(2)], [-0.01, -0.02], NO_SHORT)

    def test_explicit_grid_flags_infeasible(self):
        f = trace_frontier(np.eye(2), [0.01, 0.02], NO_SHORT, grid=[0.005, 0.015, 0.03])
        assert f.feasible.tolist() == [False, True, False]
        assert np.isnan(f.risks[0])

    @pytest.mark.parametrize("bounds", [NO_SHORT, SHORT_SELLING], ids=["no-short", "short"])
    def test_warm_started_frontier_matches_cold_solves(self, bounds):
        rng = np.random.default_rng(8)
        sigma = random_psd(rng, 15, rank=5)
        mean = rng.uniform(0.0, 0.02, 15)
        f = trace_frontier(sigma, mean, bounds, 30)
        check_frontier_shape(f, mean, bounds)
        for t, p in zip(f.grid, f.points):
            cold = min_risk_weights(sigma, mean, t, bounds)
            assert p.risk == pytest.approx(cold.risk, rel=1e-9, abs=1e-15)


def _panel(x, offset=0):
    return ReturnPanel(business_days(x.shape[0] + offset)[offset:], tuple(f"S{i}" for i in range(x.shape[1])), x)


class TestFrontierPair:
    @pytest.mark.parametrize("cleaning", [False, True])
    @pytest.mark.parametrize("regression", [False, True])
    def test_identical_windows(self, cleaning, regression):
        x = factor_returns(150, 8, seed=5)
        method = MethodConfig(cleaning, regression, NO_SHORT, grid_size=25)
        pred, real = frontier_pair(_panel(x), _panel(x), method)
        np.testing.assert_allclose(pred.risks, real.risks, atol=1e-10, equal_nan=True)

    def test_plug_in_risk_oracle(self):
        # Two blocks; the second block's correlation flips sign between windows.
        rng = np.random.default_rng(12)
        common = rng.normal(size=(300, 2))
        noise = rng.normal(size=(300, 4))
        prev = np.column_stack([common[:, 0], common[:, 0], common[:, 1], common[:, 1]]) * 0.7 + noise * 0.5
        later = np.column_stack([common[:, 0], common[:, 0], common[:, 1], -common[:, 1]]) * 0.7 + noise * 0.5
        prev = prev * 0.01 + 0.001 * np.arange(1, 5)
        later = later * 0.01 + 0.001 * np.arange(1, 5)
        method = MethodConfig(False, False, NO_SHORT, grid_size=15)
        p_panel, t_panel = _panel(prev), _panel(later, 300)
        pred, real = frontier_pair(p_panel, t_panel, method)
        sigma = t_panel.std()
        c_prev = np.corrcoef(prev.T)
        c_real = np.corrcoef(later.T)
        s_prev = triple_loop_covariance(c_prev, sigma)
        s_real = triple_loop_covariance(c_real, sigma)
        for pp, rp in zip(pred.points, real.points):
            assert pp.risk == pytest.approx(pp.weights @ s_prev @ pp.weights, rel=1e-10)
            assert rp.risk == pytest.approx(rp.weights @ s_real @ rp.weights, rel=1e-10)
        # The planted change sits in the (2, 3) entry; only portfolios holding both assets see it.
        changed = (c_prev - c_real)[2, 3]
        assert abs(changed) > 0.5
        both = [p.weights[2] * p.weights[3] > 1e-6 for p in real.points]
        diffs = np.abs(pred.risks - real.risks)
        assert np.all(diffs[np.array(both)] > 0)

    def test_all_noise_cleaning_gives_diagonal_frontier(self):
        rng = np.random.default_rng(0)
        prev = rng.normal(size=(400, 4)) * 0.01
        later = rng.normal(size=(400, 4)) * 0.02 + 0.001 * np.arange(1, 5)
        method = MethodConfig(True, False, NO_SHORT, grid_size=20)
        p_panel, t_panel = _panel(prev), _panel(later, 400)
        pred, real = frontier_pair(p_panel, t_panel, method)
        diag = assemble_covariance(_corr(np.eye(4), p_panel.tickers), t_panel.std())
        expected = trace_frontier(diag, t_panel.mean(), NO_SHORT, grid=pred.grid)
        np.testing.assert_allclose(pred.risks, expected.risks, atol=1e-6, equal_nan=True)

    def test_mismatched_tickers(self):
        x = factor_returns(50, 3, seed=1)
        other = ReturnPanel(business_days(50), ("A", "B", "C"), x)
        with pytest.raises(ValueError):
            frontier_pair(_panel(x), other, MethodConfig())

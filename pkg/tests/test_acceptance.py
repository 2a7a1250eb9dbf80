"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are printed as they happen and repeated in the terminal summary, so
they are visible even when pytest captures output.
"""

import math
import time

import numpy as np
from oracles import line_slice_min_risk, loop_distance, random_psd
from scipy import integrate

from rmtfolio import (
    NO_SHORT,
    SHORT_SELLING,
    CorrelationMatrix,
    MethodConfig,
    MPParams,
    ReturnPanel,
    WindowSpec,
    clean,
    compare,
    decompose,
    eigen_market_index,
    fit_single_index,
    four_methods,
    log_returns,
    ks_one_sample,
    matrix_distance,
    min_risk_weights,
    mp_bounds,
    mp_cdf,
    mp_density,
    mp_quantile,
    pearson_correlation,
    run_rolling,
    run_year_pair,
    shuffle_eigenvalue_sample,
    trace_frontier,
)
from rmtfolio.markowitz import Frontier, FrontierPoint, assemble_covariance, feasible_return_interval, gmv_portfolio
from rmtfolio.rmt import eigenvalue_bounds_fraction
from rmtfolio.synthetic import business_days, factor_returns, synthetic_market

RESULTS: list[str] = []


def record(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _panel(x):
    return ReturnPanel(business_days(x.shape[0]), tuple(f"S{i}" for i in range(x.shape[1])), x)


def test_criterion_1_bounds():
    exact = mp_bounds(MPParams(4.0))
    published = mp_bounds(MPParams(248 / 61))
    elapsed = min(_timed(lambda: mp_bounds(MPParams(4.0))) for _ in range(5))
    ok = (
        abs(exact[0] - 0.25) <= 1e-12
        and abs(exact[1] - 2.25) <= 1e-12
        and round(published[0], 3) == 0.254
        and round(published[1], 3) == 2.238
        and elapsed < 1e-3
    )
    record(1, ok, f"Q=4 -> {exact}, Q=248/61 -> ({published[0]:.4f}, {published[1]:.4f}), {elapsed * 1e6:.1f} us")


def _timed(fn) -> float:
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


def test_criterion_2_normalization():
    start = time.perf_counter()
    worst_mass, worst_trip = 0.0, 0.0
    for q in (1.1, 2.0, 4.0, 10.0):
        params = MPParams(q)
        lo, hi = mp_bounds(params)
        mass = integrate.quad(lambda x: mp_density(x, params), lo, hi, limit=200, epsabs=1e-12)[0]
        worst_mass = max(worst_mass, abs(mass - 1.0))
        x = lo + (hi - lo) * np.arange(1, 100) / 100
        back = mp_quantile(mp_cdf(x, params), params)
        worst_trip = max(worst_trip, float(np.max(np.abs(back - x))))
    elapsed = time.perf_counter() - start
    ok = worst_mass < 1e-6 and worst_trip < 1e-6 and elapsed < 1.0
    record(2, ok, f"|mass-1| <= {worst_mass:.1e}, round trip <= {worst_trip:.1e}, {elapsed:.2f} s")


def test_criterion_3_cleaning():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(200):
        # Half the panels carry a market factor so the signal bands are populated.
        if k % 2:
            x = factor_returns(100, 20, seed=int(rng.integers(1 << 31)))
        else:
            x = rng.normal(size=(100, 20))
        corr = pearson_correlation(_panel(x))
        params = MPParams(100 / 20)
        dec = decompose(corr, params)
        cleaned = clean(dec)
        trace_gap = abs(np.trace(cleaned.values) - np.trace(corr.values))
        again = clean(decompose(cleaned, params))
        idem_gap = float(np.max(np.abs(again.values - cleaned.values)))
        kept = dec.eigenvalues[~dec.noise_mask]
        spectrum = np.linalg.eigvalsh(cleaned.values)
        kept_gap = max((float(np.min(np.abs(spectrum - v))) for v in kept), default=0.0)
        worst = max(worst, trace_gap, idem_gap, kept_gap)
    elapsed = time.perf_counter() - start
    record(3, worst <= 1e-8 and elapsed < 10.0, f"200 matrices, worst deviation {worst:.1e}, {elapsed:.2f} s")


def test_criterion_4_shuffle_baseline():
    start = time.perf_counter()
    _, returns = synthetic_market(200, 20, seed=0)
    params = MPParams.for_panel(returns)
    pooled = shuffle_eigenvalue_sample(returns, 1000, seed=0)
    inside = eigenvalue_bounds_fraction(pooled, params)
    # A run mirrors the single-matrix test: KS on the spectrum of one shuffled panel.
    kept = sum(
        ks_one_sample(shuffle_eigenvalue_sample(returns, 1, seed=1000 + run)[0], params).p_value > 0.01
        for run in range(100)
    )
    elapsed = time.perf_counter() - start
    ok = inside >= 0.98 and kept >= 97 and elapsed < 60.0
    record(4, ok, f"inside fraction {inside:.4f}, KS not rejected in {kept}/100 runs, {elapsed:.2f} s")


def test_criterion_5_qp():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    count = 0
    for bounds in (NO_SHORT, SHORT_SELLING):
        for k in range(100):
            n = 2 + k % 2
            sigma = random_psd(rng, n)
            mean = rng.normal(0.01, 0.01, size=n)
            lo, hi = feasible_return_interval(mean, bounds)
            target = float(rng.uniform(lo, hi))
            best = line_slice_min_risk(sigma, mean, target, bounds.lower, bounds.upper)
            point = min_risk_weights(sigma, mean, target, bounds)
            worst = max(worst, abs(point.risk - best[0]))
            count += 1
    closed = min_risk_weights(np.diag([1.0, 4.0]), [0.01, 0.01], 0.01, NO_SHORT).weights
    closed_gap = float(np.max(np.abs(closed - [0.8, 0.2])))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and closed_gap <= 1e-6 and elapsed < 30.0
    record(5, ok, f"{count} instances, worst risk gap {worst:.1e}, closed form gap {closed_gap:.1e}, {elapsed:.2f} s")


def _shape_violation(frontier, cov, mean, bounds) -> float:
    """Largest breach of the budget, return and box constraints, or of monotone risk above the GMV return."""
    worst = 0.0
    for t, p in zip(frontier.grid, frontier.points):
        if p is None:
            continue
        w = p.weights
        worst = max(
            worst,
            abs(w.sum() - 1.0),
            abs(w @ mean - t) / max(1.0, abs(t)),
            float(np.max(bounds.lower - w, initial=0.0)),
            float(np.max(w - bounds.upper, initial=0.0)),
        )
    # A predicted frontier shares the realised grid, which can start below its own GMV return.
    gmv = gmv_portfolio(cov, mean, bounds).target_return
    risks = frontier.risks[frontier.feasible & (frontier.grid >= gmv)]
    if risks.size > 1:
        worst = max(worst, float(np.max(-np.diff(risks), initial=0.0)))
    return worst


def test_criterion_6_frontier_shape():
    worst = 0.0
    count = 0
    rng = np.random.default_rng(6)
    for bounds in (NO_SHORT, SHORT_SELLING):
        for _ in range(20):
            n = int(rng.integers(2, 9))
            mean = rng.normal(0.001, 0.001, size=n)
            if mean.max() <= 0:
                continue
            sigma = random_psd(rng, n) * 1e-4
            worst = max(worst, _shape_violation(trace_frontier(sigma, mean, bounds, 60), sigma, mean, bounds))
            count += 1
    prices, _ = synthetic_market(520, 12, seed=3)
    # Both sides of a pair use the target range's mean returns and deviations.
    target = log_returns(prices.select_dates("2005-01-01", "2005-12-31"))
    for bounds in (NO_SHORT, SHORT_SELLING):
        methods = four_methods(bounds, grid_size=60)
        result = run_year_pair(prices, ("2004-01-01", "2004-12-31"), ("2005-01-01", "2005-12-31"), methods)
        for method, frontiers, corrs in zip(methods, result.frontiers, result.correlations):
            for frontier, corr in zip(frontiers, corrs):
                cov = assemble_covariance(corr, target.std(), cleaned=method.cleaning, residual=method.regression)
                worst = max(worst, _shape_violation(frontier, cov, target.mean(), bounds))
                count += 1
    record(6, worst <= 1e-9, f"{count} frontiers, worst violation {worst:.1e}")


def test_criterion_7_regression():
    worst_corr = worst_recon = worst_scale = 0.0
    for seed in range(50):
        panel = _panel(factor_returns(120, 8, seed=seed))
        index = eigen_market_index(panel, decompose(pearson_correlation(panel), MPParams.for_panel(panel)))
        fit = fit_single_index(panel, index)
        for j in range(8):
            worst_corr = max(worst_corr, abs(np.corrcoef(fit.residuals[:, j], index.values)[0, 1]))
        recon = fit.intercept + np.outer(index.values, fit.slope) + fit.residuals
        worst_recon = max(worst_recon, float(np.max(np.abs(recon - panel.returns))))
        c = 0.5 + seed
        scaled = fit_single_index(panel, index.scaled(c))
        worst_scale = max(
            worst_scale,
            float(np.max(np.abs(scaled.slope - fit.slope / c) / np.abs(fit.slope / c))),
            float(np.max(np.abs(scaled.residuals - fit.residuals))),
        )
    ok = worst_corr < 1e-8 and worst_recon <= 1e-12 and worst_scale <= 1e-10
    record(7, ok, f"corr {worst_corr:.1e}, reconstruction {worst_recon:.1e}, rescaling {worst_scale:.1e}")


def _risk_frontier(risks):
    grid = np.linspace(0.01, 0.02, len(risks))
    return Frontier(("A",), grid, tuple(FrontierPoint(float(t), float(r), np.array([1.0])) for t, r in zip(grid, risks)))


def test_criterion_8_metrics():
    rng = np.random.default_rng(8)
    corr = CorrelationMatrix(tuple("ABCD"), np.corrcoef(rng.normal(size=(4, 30))))
    f = _risk_frontier([1e-4, 2e-4, 4e-4])
    zeros = compare(f, f, corr, corr, MethodConfig()).metrics()
    p = np.array([1e-4, 2e-4, 3e-4, 4e-4])
    g = 5e-5
    rep = compare(_risk_frontier(p), _risk_frontier(p + g), corr, corr, MethodConfig())
    cos = (p @ (p + g)) / (np.linalg.norm(p) * np.linalg.norm(p + g))
    gap = max(
        abs(rep.ag - np.mean(g / p)),
        abs(rep.mse - g * g),
        abs(rep.angle_deg - math.degrees(math.acos(cos))),
    )
    loop = 0.0
    for _ in range(50):
        a = np.corrcoef(rng.normal(size=(6, 20)))
        b = np.corrcoef(rng.normal(size=(6, 20)))
        loop = max(loop, abs(matrix_distance(a, b) - loop_distance(a, b)))
    ok = zeros == (0.0,) * 5 and gap <= 1e-10 and loop <= 1e-14
    record(8, ok, f"identical -> {zeros}, constant gap error {gap:.1e}, loop oracle error {loop:.1e}")


def test_criterion_9_volatility_burst():
    start = time.perf_counter()
    n_days, w, step = 1000, 100, 5
    burst = (450, 600)
    multiplier = np.ones(n_days)
    multiplier[burst[0] : burst[1]] = 2.0  # x4 variance
    x = factor_returns(n_days, 10, seed=0, vol_multiplier=multiplier)
    result = run_rolling(_panel(x), WindowSpec(w, step), [MethodConfig(grid_size=100)])
    mse = result.series("mse")
    peak = int(np.nanargmax(mse))
    centre = peak * step + w + w // 2
    elapsed = time.perf_counter() - start
    ok = burst[0] <= centre < burst[1] and elapsed < 120.0
    record(9, ok, f"MSE peak at window {peak}, evaluation centre day {centre}, burst {burst}, {elapsed:.1f} s")


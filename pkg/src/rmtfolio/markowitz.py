"""Covariance assembly and minimum-variance frontiers under box constraints.

Frontier points solve

    minimise    w^T S w
    subject to  sum(w) = 1,  w^T r = target,  lower <= w <= upper

with a primal active-set method on the bound constraints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatchError, EmptyFrontierError, InfeasibleTargetError, NotPositiveSemidefiniteError
from .marketdata import ReturnPanel
from .methods import MethodConfig, WeightBounds
from .rmt import CorrelationMatrix, MPParams, clean, decompose, pearson_correlation
from .singleindex import eigen_market_index, fit_single_index, residual_panel

__all__ = [
    "CovarianceAssembly",
    "FrontierPoint",
    "Frontier",
    "assemble_covariance",
    "method_correlation",
    "min_risk_weights",
    "gmv_portfolio",
    "feasible_return_interval",
    "frontier_grid",
    "trace_frontier",
    "frontier_pair",
    "WeightBounds",
]

log = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8
RETURN_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class CovarianceAssembly:
    tickers: tuple[str, ...]
    values: NDArray[np.float64]
    sigma: NDArray[np.float64]
    cleaned: bool = False
    residual: bool = False

    @property
    def n(self) -> int:
        return len(self.tickers)

    @property
    def source(self) -> str:
        return f"{'cleaned' if self.cleaned else 'raw'}/{'residual' if self.residual else 'original'}"

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])

    @property
    def diagonal_deviation(self) -> float:
        """Largest ``|S_ii - sigma_i^2|``; nonzero only for cleaned correlations."""
        return float(np.max(np.abs(np.diag(self.values) - self.sigma**2)))

    def scaled(self, factor: float) -> "CovarianceAssembly":
        return CovarianceAssembly(self.tickers, self.values * factor, self.sigma * math.sqrt(factor), self.cleaned, self.residual)


@dataclass(frozen=True, eq=False)
class FrontierPoint:
    target_return: float
    risk: float
    weights: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class Frontier:
    """Minimum risk over a strictly increasing grid of target returns.

    ``points[i]`` is ``None`` where the target was infeasible under the bounds.
    """

    tickers: tuple[str, ...]
    grid: NDArray[np.float64]
    points: tuple[FrontierPoint | None, ...]

    def __len__(self) -> int:
        return self.grid.size

    @property
    def feasible(self) -> NDArray[np.bool_]:
        return np.array([p is not None for p in self.points], dtype=bool)

    @property
    def risks(self) -> NDArray[np.float64]:
        return np.array([np.nan if p is None else p.risk for p in self.points])

    @property
    def weights(self) -> NDArray[np.float64]:
        n = len(self.tickers)
        return np.array([np.full(n, np.nan) if p is None else p.weights for p in self.points]).reshape(len(self), n)

    def risk_range(self) -> tuple[float, float]:
        r = self.risks[self.feasible]
        if r.size == 0:
            return math.nan, math.nan
        return float(r.min()), float(r.max())


def assemble_covariance(
    corr: CorrelationMatrix,
    sigma: ArrayLike,
    *,
    cleaned: bool = False,
    residual: bool = False,
) -> CovarianceAssembly:
    """``S_ij = sigma_i C_ij sigma_j``."""
    s = np.asarray(sigma, dtype=np.float64).ravel()
    if s.size != corr.n:
        raise DimensionMismatchError(f"sigma has {s.size} entries for {corr.n} tickers")
    bad = np.flatnonzero(~(s > 0) | ~np.isfinite(s))
    if bad.size:
        raise ValueError(f"standard deviation of {corr.tickers[bad[0]]!r} must be positive, got {s[bad[0]]!r}")
    values = s[:, None] * corr.values * s[None, :]
    values = 0.5 * (values + values.T)
    values.setflags(write=False)
    s = s.copy()
    s.setflags(write=False)
    return CovarianceAssembly(corr.tickers, values, s, cleaned, residual)


def _repair_psd(values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Clamp eigenvalues in ``[-1e-8, 0)`` to zero; anything lower is an error."""
    w, v = np.linalg.eigh(values)
    if w[0] >= 0.0:
        return values
    if w[0] < -PSD_TOLERANCE:
        raise NotPositiveSemidefiniteError(float(w[0]))
    log.info("clamping %d slightly negative covariance eigenvalue(s), min %.3e", int(np.sum(w < 0)), w[0])
    fixed = (v * np.maximum(w, 0.0)) @ v.T
    return 0.5 * (fixed + fixed.T)


def _extreme_portfolio(mean: NDArray[np.float64], bounds: WeightBounds, highest: bool) -> NDArray[np.float64]:
    """Greedy vertex maximising (or minimising) ``w^T r`` over the budget-constrained box."""
    n = mean.size
    w = np.full(n, bounds.lower, dtype=np.float64)
    budget = 1.0 - n * bounds.lower
    order = np.argsort(-mean if highest else mean, kind="stable")
    room = bounds.upper - bounds.lower
    for i in order:
        if budget <= 0.0:
            break
        take = min(budget, room)
        w[i] += take
        budget -= take
    return w


def feasible_return_interval(mean: ArrayLike, bounds: WeightBounds) -> tuple[float, float]:
    """Smallest and largest ``w^T r`` attainable with ``sum(w) == 1`` inside the bounds."""
    r = np.asarray(mean, dtype=np.float64)
    bounds.check_feasible(r.size)
    return float(_extreme_portfolio(r, bounds, False) @ r), float(_extreme_portfolio(r, bounds, True) @ r)


def _solve_kkt(kkt: NDArray[np.float64], rhs: NDArray[np.float64]) -> NDArray[np.float64]:
    try:
        sol = np.linalg.solve(kkt, rhs)
        resid = np.max(np.abs(kkt @ sol - rhs), initial=0.0)
        if np.isfinite(resid) and resid <= 1e-11 + 1e-9 * np.max(np.abs(rhs), initial=0.0):
            return sol
    except np.linalg.LinAlgError:
        pass
    # Singular reduced Hessian: the objective is flat along some feasible direction.
    return np.linalg.lstsq(kkt, rhs, rcond=None)[0]


def _active_set_qp(
    hess: NDArray[np.float64],
    a_eq: NDArray[np.float64],
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
    x0: NDArray[np.float64],
    *,
    working: tuple[NDArray[np.bool_], NDArray[np.bool_]] | None = None,
    max_iter: int | None = None,
) -> tuple[NDArray[np.float64], tuple[NDArray[np.bool_], NDArray[np.bool_]]]:
    """Minimise ``x^T H x / 2`` from the feasible point ``x0`` keeping ``A x`` fixed and ``x`` in the box.

    ``working`` optionally seeds the (lower, upper) bound working set; those
    bounds must be active at ``x0`` and leave ``A`` restricted to the free
    variables with full row rank. ``H`` should be scaled to order one;
    tolerances below are absolute. Returns the minimiser and its working set.
    """
    n = x0.size
    m = a_eq.shape[0]
    x = x0.astype(np.float64, copy=True)
    if working is None:
        at_lower = np.zeros(n, dtype=bool)
        at_upper = np.zeros(n, dtype=bool)
    else:
        at_lower, at_upper = working[0].copy(), working[1].copy()
    max_iter = max_iter or 50 * (n + m) + 100
    # Rounding through a badly scaled return row leaves steps of order 1e-12
    # that are really zero; larger tolerances would stop short of the optimum.
    step_tol = 1e-11
    mult_tol = 1e-11
    for _ in range(max_iter):
        free = ~(at_lower | at_upper)
        f_idx = np.flatnonzero(free)
        g = hess @ x
        k = f_idx.size
        kkt = np.zeros((k + m, k + m))
        kkt[:k, :k] = hess[np.ix_(f_idx, f_idx)]
        kkt[:k, k:] = a_eq[:, f_idx].T
        kkt[k:, :k] = a_eq[:, f_idx]
        rhs = np.concatenate([-g[f_idx], np.zeros(m)])
        sol = _solve_kkt(kkt, rhs)
        p = sol[:k]
        if k <= m:
            # No free direction survives the equality constraints.
            p = np.zeros(k)
        if np.max(np.abs(p), initial=0.0) <= step_tol * (1.0 + np.max(np.abs(x))):
            nu = sol[k:]
            reduced = g + a_eq.T @ nu
            mult = np.full(n, np.inf)
            mult[at_lower] = reduced[at_lower]
            mult[at_upper] = -reduced[at_upper]
            worst = int(np.argmin(mult))
            if mult[worst] >= -mult_tol:
                return x, (at_lower, at_upper)
            at_lower[worst] = False
            at_upper[worst] = False
            continue
        xf = x[f_idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(
                p < 0.0,
                (lower[f_idx] - xf) / p,
                np.where(p > 0.0, (upper[f_idx] - xf) / p, np.inf),
            )
        j = int(np.argmin(ratio))
        alpha = 1.0
        block = -1
        if ratio[j] < 1.0:
            alpha = max(float(ratio[j]), 0.0)
            block = int(f_idx[j])
            block_upper = bool(p[j] > 0.0)
        x[f_idx] = xf + alpha * p
        if block >= 0:
            if block_upper:
                at_upper[block] = True
                x[block] = upper[block]
            else:
                at_lower[block] = True
                x[block] = lower[block]
    raise RuntimeError("active-set QP did not converge")


def _equality_rows(mean: NDArray[np.float64], target: float | None) -> tuple[NDArray, NDArray]:
    ones = np.ones_like(mean)
    if target is None:
        return ones[None, :], np.array([1.0])
    spread = float(np.max(mean) - np.min(mean))
    if spread <= 1e-15 * max(1.0, float(np.max(np.abs(mean)))):
        # Every asset has the same mean: the return row duplicates the budget row.
        return ones[None, :], np.array([1.0])
    return np.vstack([ones, mean]), np.array([1.0, target])


def _prepare(cov: CovarianceAssembly | NDArray, mean: ArrayLike, bounds: WeightBounds):
    sigma = cov.values if isinstance(cov, CovarianceAssembly) else np.asarray(cov, dtype=np.float64)
    r = np.asarray(mean, dtype=np.float64).ravel()
    if sigma.shape != (r.size, r.size):
        raise DimensionMismatchError(f"covariance {sigma.shape} vs {r.size} mean returns")
    bounds.check_feasible(r.size)
    sigma = _repair_psd(np.asarray(sigma, dtype=np.float64))
    scale = float(np.max(np.abs(np.diag(sigma))))
    if not scale > 0.0:
        scale = float(np.max(np.abs(sigma))) or 1.0
    return sigma, sigma / scale, r


def _warm_start(prev: "_Solved", a_eq: NDArray, b_eq: NDArray, bounds: WeightBounds):
    """Shift the previous optimum inside its own face to the new equality right-hand side."""
    at_lower, at_upper = prev.working
    free = ~(at_lower | at_upper)
    a_f = a_eq[:, free]
    if a_eq.shape[0] != prev.n_eq or np.linalg.matrix_rank(a_f) < a_eq.shape[0]:
        return None
    gap = b_eq - a_eq @ prev.weights
    x0 = prev.weights.copy()
    x0[free] += a_f.T @ np.linalg.solve(a_f @ a_f.T, gap)
    slack = 1e-12
    if np.any(x0[free] < bounds.lower - slack) or np.any(x0[free] > bounds.upper + slack):
        return None
    x0[free] = np.clip(x0[free], bounds.lower, bounds.upper)
    return x0, prev.working


@dataclass
class _Solved:
    weights: NDArray[np.float64]
    working: tuple[NDArray[np.bool_], NDArray[np.bool_]]
    n_eq: int


def _solve_point(sigma, hess, r, target, bounds, interval, prev: _Solved | None = None):
    lo, hi = interval
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if not (lo - tol <= target <= hi + tol):
        raise InfeasibleTargetError(target, interval)
    a_eq, b_eq = _equality_rows(r, target)
    n = r.size
    start = _warm_start(prev, a_eq, b_eq, bounds) if prev is not None else None
    if start is None:
        w_lo = _extreme_portfolio(r, bounds, False)
        w_hi = _extreme_portfolio(r, bounds, True)
        theta = 0.0 if hi - lo <= tol else min(1.0, max(0.0, (target - lo) / (hi - lo)))
        start = ((1.0 - theta) * w_lo + theta * w_hi, None)
    w, working = _active_set_qp(
        hess, a_eq, np.full(n, bounds.lower), np.full(n, bounds.upper), start[0], working=start[1]
    )
    return FrontierPoint(float(target), float(w @ sigma @ w), w), _Solved(w, working, a_eq.shape[0])


def min_risk_weights(
    cov: CovarianceAssembly | NDArray,
    mean_returns: ArrayLike,
    target_return: float,
    bounds: WeightBounds,
) -> FrontierPoint:
    """Minimum-variance portfolio with ``w^T r == target_return`` and ``sum(w) == 1``.

    Raises :class:`InfeasibleTargetError` (carrying the attainable interval)
    when no weight vector inside the bounds reaches the target.
    """
    sigma, hess, r = _prepare(cov, mean_returns, bounds)
    interval = feasible_return_interval(r, bounds)
    return _solve_point(sigma, hess, r, float(target_return), bounds, interval)[0]


def gmv_portfolio(cov: CovarianceAssembly | NDArray, mean_returns: ArrayLike, bounds: WeightBounds) -> FrontierPoint:
    """Global minimum-variance portfolio (no return constraint)."""
    sigma, hess, r = _prepare(cov, mean_returns, bounds)
    x0 = _extreme_portfolio(r, bounds, True)
    a_eq, _ = _equality_rows(r, None)
    n = r.size
    w, _ = _active_set_qp(hess, a_eq, np.full(n, bounds.lower), np.full(n, bounds.upper), x0)
    return FrontierPoint(float(w @ r), float(w @ sigma @ w), w)


def frontier_grid(
    covs: Sequence[CovarianceAssembly | NDArray],
    mean_returns: ArrayLike,
    bounds: WeightBounds,
    n_points: int = 100,
) -> NDArray[np.float64]:
    """Equally spaced targets from the lowest positive efficient return to the best single asset.

    The lower end is ``max(1e-8, GMV return)``, taking the largest GMV return
    over ``covs``.
    """
    r = np.asarray(mean_returns, dtype=np.float64).ravel()
    hi = float(np.max(r))
    if not hi > 0.0:
        raise EmptyFrontierError("no asset has a positive mean return; the frontier is empty")
    lo = RETURN_FLOOR
    for cov in covs:
        lo = max(lo, gmv_portfolio(cov, r, bounds).target_return)
    if n_points == 1 or hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.array([hi])
    return np.linspace(lo, hi, n_points)


def trace_frontier(
    cov: CovarianceAssembly | NDArray,
    mean_returns: ArrayLike,
    bounds: WeightBounds,
    n_points: int = 100,
    *,
    grid: ArrayLike | None = None,
) -> Frontier:
    """Solve :func:`min_risk_weights` along a return grid; infeasible targets are flagged, not dropped."""
    sigma, hess, r = _prepare(cov, mean_returns, bounds)
    targets = frontier_grid([sigma], r, bounds, n_points) if grid is None else np.asarray(grid, dtype=np.float64)
    if targets.size > 1 and not np.all(np.diff(targets) > 0):
        raise ValueError("frontier grid must be strictly increasing")
    interval = feasible_return_interval(r, bounds)
    points: list[FrontierPoint | None] = []
    prev = None
    for t in targets:
        try:
            point, prev = _solve_point(sigma, hess, r, float(t), bounds, interval, prev)
        except InfeasibleTargetError:
            point = None
        points.append(point)
    tickers = cov.tickers if isinstance(cov, CovarianceAssembly) else tuple(str(i) for i in range(r.size))
    grid_arr = targets.copy()
    grid_arr.setflags(write=False)
    return Frontier(tickers, grid_arr, tuple(points))


def method_correlation(returns: ReturnPanel, method: MethodConfig) -> CorrelationMatrix:
    """Correlation matrix of one window under a method's regression/cleaning switches.

    With regression, the window's own top-eigenvector portfolio is the
    market index and the correlation is taken over the regression residuals.
    Cleaning then uses the MP band for ``Q = L / N`` of that window.
    """
    params = MPParams.for_panel(returns)
    corr = pearson_correlation(returns)
    if method.regression:
        index = eigen_market_index(returns, decompose(corr, params))
        corr = pearson_correlation(residual_panel(fit_single_index(returns, index)))
    if method.cleaning:
        corr = clean(decompose(corr, params))
    return corr


def frontier_pair(
    previous: ReturnPanel,
    target: ReturnPanel,
    method: MethodConfig,
    *,
    correlations: tuple[CorrelationMatrix, CorrelationMatrix] | None = None,
) -> tuple[Frontier, Frontier]:
    """Predicted and realised frontiers for one (previous, target) window pair.

    Both sides use the target window's mean returns and standard deviations;
    only the correlation matrix differs (previous window for the prediction,
    target window for the realisation). Both frontiers share one grid, anchored
    at the realised frontier's GMV return.
    """
    if previous.tickers != target.tickers:
        raise DimensionMismatchError("previous and target panels must share the same tickers in the same order")
    if correlations is None:
        correlations = (method_correlation(previous, method), method_correlation(target, method))
    pred_corr, real_corr = correlations
    sigma = target.std()
    mean = target.mean()
    pred_cov = assemble_covariance(pred_corr, sigma, cleaned=method.cleaning, residual=method.regression)
    real_cov = assemble_covariance(real_corr, sigma, cleaned=method.cleaning, residual=method.regression)
    grid = frontier_grid([real_cov], mean, method.bounds, method.grid_size)
    return (
        trace_frontier(pred_cov, mean, method.bounds, grid=grid),
        trace_frontier(real_cov, mean, method.bounds, grid=grid),
    )

"""Year-pair and rolling-window experiments over the four method configurations."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyFrontierError, EmptyNoiseBandError, EmptyUniverseError, InsufficientDataError
from .marketdata import PricePanel, ReturnPanel, filter_fully_liquid, log_returns
from .markowitz import Frontier, frontier_pair, method_correlation
from .methods import MethodConfig
from .metrics import ComparisonReport, compare
from .rmt import Band, CorrelationMatrix, MPParams, decompose, ks_one_sample, mp_bounds, pearson_correlation
from .singleindex import IndexSeries

__all__ = [
    "WindowSpec",
    "RiskEnvelope",
    "SpectrumSummary",
    "PairResult",
    "RollingWindow",
    "RollingResult",
    "evaluate_pair",
    "run_year_pair",
    "run_rolling",
    "ibovespa_style_volatility",
    "spectrum_summary",
    "ROLLING_ASSUMPTION",
]

ROLLING_ASSUMPTION = (
    "evaluation window = the window_length trading days immediately after each estimation window"
)


@dataclass(frozen=True)
class WindowSpec:
    window_length: int = 100
    step: int = 5
    mode: Literal["year_pair", "rolling"] = "rolling"

    def __post_init__(self) -> None:
        if self.window_length < 2:
            raise ValueError("window_length must be at least 2")
        if self.step < 1:
            raise ValueError("step must be at least 1")

    def n_pairs(self, n_obs: int) -> int:
        """Number of (estimation, evaluation) window pairs fitting in ``n_obs`` rows."""
        span = 2 * self.window_length
        return 0 if n_obs < span else (n_obs - span) // self.step + 1


@dataclass(frozen=True)
class RiskEnvelope:
    min_predicted: float
    max_predicted: float
    min_realized: float
    max_realized: float

    @classmethod
    def from_frontiers(cls, pred: Frontier, real: Frontier) -> "RiskEnvelope":
        lo_p, hi_p = pred.risk_range()
        lo_r, hi_r = real.risk_range()
        return cls(lo_p, hi_p, lo_r, hi_r)


@dataclass(frozen=True)
class SpectrumSummary:
    """Headline spectral numbers for one window (largest eigenvalues, band counts, KS)."""

    n_assets: int
    n_obs: int
    q: float
    lambda_minus: float
    lambda_plus: float
    lambda_1: float
    lambda_2: float
    mean_noise: float
    n_above: int
    n_below: int
    ks_statistic: float
    ks_p_value: float


def spectrum_summary(returns: ReturnPanel, corr: CorrelationMatrix | None = None) -> SpectrumSummary:
    params = MPParams.for_panel(returns)
    corr = corr or pearson_correlation(returns)
    dec = decompose(corr, params)
    lo, hi = mp_bounds(params)
    ks = ks_one_sample(dec.eigenvalues, params)
    try:
        mean_noise = dec.mean_noise
    except EmptyNoiseBandError:
        mean_noise = math.nan
    return SpectrumSummary(
        n_assets=returns.n_assets,
        n_obs=returns.n_obs,
        q=returns.q,
        lambda_minus=lo,
        lambda_plus=hi,
        lambda_1=float(dec.eigenvalues[0]),
        lambda_2=float(dec.eigenvalues[1]) if dec.n > 1 else math.nan,
        mean_noise=mean_noise,
        n_above=dec.count(Band.ABOVE_NOISE),
        n_below=dec.count(Band.BELOW_NOISE),
        ks_statistic=ks.statistic,
        ks_p_value=ks.p_value,
    )


@dataclass
class PairResult:
    label: str
    tickers: tuple[str, ...]
    reports: list[ComparisonReport]
    frontiers: list[tuple[Frontier, Frontier]]
    correlations: list[tuple[CorrelationMatrix, CorrelationMatrix]]
    envelopes: list[RiskEnvelope] = field(default_factory=list)


def evaluate_pair(
    previous: ReturnPanel,
    target: ReturnPanel,
    methods: Sequence[MethodConfig],
    *,
    label: str = "",
) -> PairResult:
    """Frontier pair and comparison report for every method on one window pair."""
    reports, frontiers, corrs, envelopes = [], [], [], []
    cache: dict[tuple[bool, bool], tuple[CorrelationMatrix, CorrelationMatrix]] = {}
    for method in methods:
        key = (method.cleaning, method.regression)
        if key not in cache:
            cache[key] = (method_correlation(previous, method), method_correlation(target, method))
        pred_corr, real_corr = cache[key]
        try:
            pred, real = frontier_pair(previous, target, method, correlations=(pred_corr, real_corr))
            empty = None
        except EmptyFrontierError as exc:
            # A window where every mean return is non-positive has no frontier;
            # report it with NaN frontier metrics instead of aborting the run.
            pred = real = Frontier(previous.tickers, np.empty(0), ())
            empty = str(exc)
        report = compare(pred, real, pred_corr, real_corr, method, label=label)
        if empty is not None:
            report.diagnostics["empty_frontier"] = empty
        reports.append(report)
        frontiers.append((pred, real))
        corrs.append((pred_corr, real_corr))
        envelopes.append(RiskEnvelope.from_frontiers(pred, real))
    return PairResult(label, previous.tickers, reports, frontiers, corrs, envelopes)


def _pair_panels(
    prices: PricePanel,
    previous_range: tuple[date | str, date | str],
    target_range: tuple[date | str, date | str],
) -> tuple[ReturnPanel, ReturnPanel]:
    prev = prices.select_dates(*previous_range)
    targ = prices.select_dates(*target_range)
    if prev.dates.size < 3 or targ.dates.size < 3:
        raise InsufficientDataError("each range needs at least three trading days")
    # Universe: tickers traded on every day of both ranges.
    liquid = ~np.any(np.isnan(prev.prices), axis=0) & ~np.any(np.isnan(targ.prices), axis=0)
    if not np.any(liquid):
        raise EmptyUniverseError("no ticker is fully liquid over both ranges")
    tickers = tuple(t for t, k in zip(prices.tickers, liquid) if k)
    return log_returns(prev.select_tickers(tickers)), log_returns(targ.select_tickers(tickers))


def run_year_pair(
    prices: PricePanel,
    previous_range: tuple[date | str, date | str],
    target_range: tuple[date | str, date | str],
    methods: Sequence[MethodConfig],
    *,
    label: str = "",
) -> PairResult:
    """Forecast the target range's frontier from the previous range, once per method.

    Returns are computed within each range separately; the report list has
    one entry per method, in order.
    """
    prev, targ = _pair_panels(prices, previous_range, target_range)
    return evaluate_pair(prev, targ, methods, label=label)


@dataclass
class RollingWindow:
    index: int
    estimation: tuple[np.datetime64, np.datetime64]
    evaluation: tuple[np.datetime64, np.datetime64]
    reports: list[ComparisonReport]
    envelopes: list[RiskEnvelope]


@dataclass
class RollingResult:
    spec: WindowSpec
    tickers: tuple[str, ...]
    methods: list[MethodConfig]
    windows: list[RollingWindow]
    assumption: str = ROLLING_ASSUMPTION

    def series(self, metric: str, method_index: int = 0) -> NDArray[np.float64]:
        return np.array([getattr(w.reports[method_index], metric) for w in self.windows])

    def envelope_series(self, method_index: int = 0) -> NDArray[np.float64]:
        """``(n_windows, 4)``: min/max predicted, min/max realised."""
        return np.array(
            [
                [e.min_predicted, e.max_predicted, e.min_realized, e.max_realized]
                for e in (w.envelopes[method_index] for w in self.windows)
            ]
        ).reshape(len(self.windows), 4)


def _rolling_task(args) -> RollingWindow:
    returns, spec, methods, i = args
    start = i * spec.step
    w = spec.window_length
    est = returns.rows(start, start + w)
    ev = returns.rows(start + w, start + 2 * w)
    result = evaluate_pair(est, ev, methods, label=f"window-{i}")
    return RollingWindow(
        index=i,
        estimation=(est.dates[0], est.dates[-1]),
        evaluation=(ev.dates[0], ev.dates[-1]),
        reports=result.reports,
        envelopes=result.envelopes,
    )


def run_rolling(
    data: PricePanel | ReturnPanel,
    spec: WindowSpec,
    methods: Sequence[MethodConfig],
    *,
    workers: int = 1,
) -> RollingResult:
    """Slide an estimation window by ``spec.step`` days; evaluate on the next ``window_length`` days.

    Prices are reduced to the fully liquid universe over the whole span before
    returns are taken. Window pairs are independent; with ``workers > 1`` they
    run in a process pool and are collected in window order.
    """
    returns = log_returns(filter_fully_liquid(data)) if isinstance(data, PricePanel) else data
    n = spec.n_pairs(returns.n_obs)
    if n == 0:
        raise InsufficientDataError(
            f"{returns.n_obs} return rows cannot hold two windows of {spec.window_length} days"
        )
    tasks = [(returns, spec, list(methods), i) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            windows = list(pool.map(_rolling_task, tasks))
    else:
        windows = [_rolling_task(t) for t in tasks]
    return RollingResult(spec, returns.tickers, list(methods), windows)


def ibovespa_style_volatility(index: IndexSeries | NDArray, spec: WindowSpec) -> NDArray[np.float64]:
    """Sample standard deviation of the index over each window ``[i * step, i * step + W)``."""
    values = index.values if isinstance(index, IndexSeries) else np.asarray(index, dtype=np.float64)
    w = spec.window_length
    if values.size < w:
        raise InsufficientDataError(f"index has {values.size} values, window needs {w}")
    starts = np.arange(0, values.size - w + 1, spec.step)
    return np.array([values[s : s + w].std(ddof=1) for s in starts])

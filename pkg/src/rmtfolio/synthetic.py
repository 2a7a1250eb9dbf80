"""Seeded synthetic markets for experiments and tests."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .marketdata import PricePanel, ReturnPanel

__all__ = ["business_days", "factor_returns", "returns_to_prices", "synthetic_market"]


def business_days(n: int, start: str = "2004-01-02") -> NDArray[np.datetime64]:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward")


def factor_returns(
    n_days: int,
    n_assets: int,
    *,
    seed: int = 0,
    market_vol: float = 0.01,
    idio_vol: float = 0.015,
    drift: float = 0.0005,
    vol_multiplier: NDArray[np.float64] | None = None,
    beta_range: tuple[float, float] = (0.5, 1.5),
) -> NDArray[np.float64]:
    """One-factor log-returns ``mu_i + beta_i m_t + e_it``.

    ``vol_multiplier`` (length ``n_days``) scales both factor and idiosyncratic
    shocks day by day, e.g. to plant a volatility burst.
    """
    rng = np.random.default_rng(seed)
    beta = rng.uniform(*beta_range, size=n_assets)
    mu = drift * rng.uniform(0.2, 2.0, size=n_assets)
    market = rng.normal(scale=market_vol, size=n_days)
    idio = rng.normal(scale=idio_vol, size=(n_days, n_assets))
    shocks = np.outer(market, beta) + idio
    if vol_multiplier is not None:
        shocks = shocks * np.asarray(vol_multiplier, dtype=np.float64)[:, None]
    return mu + shocks


def returns_to_prices(returns: NDArray[np.float64], start_price: float = 100.0) -> NDArray[np.float64]:
    logs = np.vstack([np.zeros(returns.shape[1]), np.cumsum(returns, axis=0)])
    return start_price * np.exp(logs)


def synthetic_market(n_days: int, n_assets: int, *, seed: int = 0, **kwargs) -> tuple[PricePanel, ReturnPanel]:
    """Price panel of ``n_days + 1`` dates and its ``n_days``-row return panel."""
    rets = factor_returns(n_days, n_assets, seed=seed, **kwargs)
    dates = business_days(n_days + 1)
    tickers = tuple(f"S{i:03d}" for i in range(n_assets))
    prices = PricePanel(dates, tickers, returns_to_prices(rets))
    return prices, ReturnPanel(dates[1:], tickers, rets)

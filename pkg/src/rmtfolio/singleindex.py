"""Single-index regression ``R_t = a + b I_t + E_t`` to strip the market mode.

The market index is either the portfolio of the top eigenvector of the
correlation matrix (:func:`eigen_market_index`) or an external series read
from a ``date,return`` CSV (:func:`read_index`).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatchError, PriceParseError
from .marketdata import ReturnPanel
from .rmt import SpectralDecomposition

__all__ = [
    "IndexSeries",
    "RegressionFit",
    "eigen_market_index",
    "fit_single_index",
    "residual_panel",
    "read_index",
]

IndexSource = Literal["eigenportfolio", "external"]


@dataclass(frozen=True, eq=False)
class IndexSeries:
    dates: NDArray[np.datetime64]
    values: NDArray[np.float64]
    source: IndexSource = "external"

    def __post_init__(self) -> None:
        dates = np.array(self.dates, dtype="datetime64[D]", copy=True)
        values = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if dates.size != values.size:
            raise DimensionMismatchError(f"{dates.size} dates but {values.size} index values")
        if not np.all(np.isfinite(values)):
            raise ValueError("index values must be finite")
        dates.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def scaled(self, factor: float) -> "IndexSeries":
        return IndexSeries(self.dates, self.values * factor, self.source)

    def select(self, dates: NDArray[np.datetime64]) -> "IndexSeries":
        """Restrict to ``dates``; every requested date must be present."""
        pos = np.searchsorted(self.dates, dates)
        if np.any(pos >= self.dates.size) or not np.array_equal(self.dates[np.minimum(pos, self.dates.size - 1)], dates):
            raise DimensionMismatchError("index series does not cover every requested date")
        return IndexSeries(dates, self.values[pos], self.source)


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """Per-ticker OLS intercepts, slopes and the residual matrix."""

    dates: NDArray[np.datetime64]
    tickers: tuple[str, ...]
    intercept: NDArray[np.float64]
    slope: NDArray[np.float64]
    residuals: NDArray[np.float64]
    index: IndexSeries


def eigen_market_index(returns: ReturnPanel, decomp: SpectralDecomposition) -> IndexSeries:
    """Daily return of the portfolio weighted by the unit-norm top eigenvector."""
    if decomp.tickers != returns.tickers:
        raise DimensionMismatchError("decomposition tickers do not match the return panel")
    e1 = decomp.eigenvectors[:, 0]
    return IndexSeries(returns.dates, returns.returns @ e1, "eigenportfolio")


def fit_single_index(returns: ReturnPanel, index: IndexSeries) -> RegressionFit:
    """Ordinary least squares of every ticker's returns on the index."""
    if len(index) != returns.n_obs:
        raise DimensionMismatchError(f"index has {len(index)} values, panel has {returns.n_obs} rows")
    if index.dates.size and not np.array_equal(index.dates, returns.dates):
        raise DimensionMismatchError("index dates do not match the return panel")
    x = index.values
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= (1e-12 * max(float(np.max(np.abs(x))), math.ulp(0.0))) ** 2 * x.size:
        raise ValueError("index series is constant; the slope is not identified")
    r = returns.returns
    rbar = r.mean(axis=0)
    slope = (xc @ (r - rbar)) / sxx
    intercept = rbar - slope * x.mean()
    resid = r - intercept - np.outer(x, slope)
    return RegressionFit(returns.dates, returns.tickers, intercept, slope, resid, index)


def residual_panel(fit: RegressionFit) -> ReturnPanel:
    return ReturnPanel(fit.dates, fit.tickers, fit.residuals)


def parse_index(source: bytes | str) -> IndexSeries:
    """Read a ``date,return`` CSV of index log-returns."""
    text = source.decode("utf-8-sig") if isinstance(source, bytes) else source
    reader = csv.reader(io.StringIO(text))
    header = [h.strip().lower() for h in next(reader, [])]
    if header != ["date", "return"]:
        raise PriceParseError("index file expects header 'date,return'", row=1)
    dates, values = [], []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise PriceParseError(f"expected 2 fields, got {len(row)}", row=row_no)
        try:
            dates.append(np.datetime64(row[0].strip(), "D"))
        except ValueError:
            raise PriceParseError(f"invalid date {row[0]!r}", row=row_no, column="date") from None
        try:
            values.append(float(row[1]))
        except ValueError:
            raise PriceParseError(f"invalid return {row[1]!r}", row=row_no, column="return") from None
    order = np.argsort(np.array(dates, dtype="datetime64[D]"), kind="stable")
    dates_arr = np.array(dates, dtype="datetime64[D]")[order]
    if dates_arr.size > 1 and np.any(dates_arr[1:] == dates_arr[:-1]):
        raise PriceParseError("duplicate date in index file")
    return IndexSeries(dates_arr, np.array(values)[order], "external")


def read_index(path) -> IndexSeries:
    with open(path, "rb") as handle:
        return parse_index(handle.read())

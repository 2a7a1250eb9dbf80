"""Price ingestion, liquidity filtering and log-returns.

Two CSV layouts are understood:

* ``long``: header ``date,ticker,close``, one observation per row;
* ``wide``: header ``date,<ticker1>,<ticker2>,...``, one trading day per row.

Dates are ISO-8601 (``YYYY-MM-DD``). Days on which the market was closed are
simply absent; nothing is ever imputed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date
from typing import BinaryIO, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyUniverseError, MissingDataError, PriceParseError

__all__ = [
    "Layout",
    "PricePanel",
    "ReturnPanel",
    "parse_prices",
    "read_prices",
    "serialize_prices",
    "filter_fully_liquid",
    "log_returns",
]

Layout = Literal["long", "wide"]

LONG_HEADER = ("date", "ticker", "close")


def _frozen(array: NDArray) -> NDArray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def _as_dates(dates: Sequence) -> NDArray[np.datetime64]:
    return np.asarray(dates, dtype="datetime64[D]")


@dataclass(frozen=True, eq=False)
class PricePanel:
    """Closing prices, rows = trading days, columns = tickers. ``NaN`` marks a missing cell."""

    dates: NDArray[np.datetime64]
    tickers: tuple[str, ...]
    prices: NDArray[np.float64]

    def __post_init__(self) -> None:
        dates = _as_dates(self.dates)
        prices = np.asarray(self.prices, dtype=np.float64)
        tickers = tuple(str(t) for t in self.tickers)
        if prices.ndim != 2 or prices.shape != (dates.size, len(tickers)):
            raise ValueError(
                f"prices shape {prices.shape} does not match {dates.size} dates x {len(tickers)} tickers"
            )
        if len(set(tickers)) != len(tickers):
            raise ValueError("ticker labels must be unique")
        if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValueError("dates must be strictly increasing")
        present = prices[~np.isnan(prices)]
        if np.any(present <= 0) or np.any(~np.isfinite(present)):
            raise ValueError("prices must be finite and strictly positive where present")
        object.__setattr__(self, "dates", _frozen(dates))
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "prices", _frozen(prices))

    @property
    def shape(self) -> tuple[int, int]:
        return self.prices.shape

    @property
    def missing(self) -> NDArray[np.bool_]:
        return np.isnan(self.prices)

    def select_dates(self, start: date | str | None = None, end: date | str | None = None) -> "PricePanel":
        """Rows with ``start <= date <= end`` (either end open when ``None``)."""
        mask = np.ones(self.dates.size, dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(start, "D")
        if end is not None:
            mask &= self.dates <= np.datetime64(end, "D")
        return PricePanel(self.dates[mask], self.tickers, self.prices[mask])

    def select_tickers(self, tickers: Sequence[str]) -> "PricePanel":
        index = {t: i for i, t in enumerate(self.tickers)}
        cols = [index[t] for t in tickers]
        return PricePanel(self.dates, tuple(tickers), self.prices[:, cols])

    def equals(self, other: "PricePanel") -> bool:
        """Bit-level equality, treating missing marks as equal."""
        return (
            self.tickers == other.tickers
            and np.array_equal(self.dates, other.dates)
            and self.prices.shape == other.prices.shape
            and np.array_equal(self.prices, other.prices, equal_nan=True)
        )


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """Daily log-returns, ``L`` rows by ``N`` tickers, no missing entries."""

    dates: NDArray[np.datetime64]
    tickers: tuple[str, ...]
    returns: NDArray[np.float64]

    def __post_init__(self) -> None:
        dates = _as_dates(self.dates)
        returns = np.asarray(self.returns, dtype=np.float64)
        tickers = tuple(str(t) for t in self.tickers)
        if returns.ndim != 2 or returns.shape != (dates.size, len(tickers)):
            raise ValueError(
                f"returns shape {returns.shape} does not match {dates.size} dates x {len(tickers)} tickers"
            )
        if not np.all(np.isfinite(returns)):
            raise MissingDataError("return panel contains missing or non-finite entries")
        object.__setattr__(self, "dates", _frozen(dates))
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "returns", _frozen(returns))

    @property
    def n_obs(self) -> int:
        """L, the number of return observations."""
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        """N, the number of tickers."""
        return self.returns.shape[1]

    @property
    def q(self) -> float:
        """Aspect ratio L/N."""
        return self.n_obs / self.n_assets

    def mean(self) -> NDArray[np.float64]:
        return self.returns.mean(axis=0)

    def std(self) -> NDArray[np.float64]:
        """Per-ticker sample standard deviation (L - 1 normalisation)."""
        return self.returns.std(axis=0, ddof=1)

    def rows(self, start: int, stop: int) -> "ReturnPanel":
        return ReturnPanel(self.dates[start:stop], self.tickers, self.returns[start:stop])

    def select_dates(self, start: date | str | None = None, end: date | str | None = None) -> "ReturnPanel":
        mask = np.ones(self.dates.size, dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(start, "D")
        if end is not None:
            mask &= self.dates <= np.datetime64(end, "D")
        return ReturnPanel(self.dates[mask], self.tickers, self.returns[mask])


def _parse_date(text: str, row: int) -> np.datetime64:
    try:
        return np.datetime64(date.fromisoformat(text.strip()), "D")
    except ValueError:
        raise PriceParseError(f"invalid ISO-8601 date {text!r}", row=row, column="date") from None


def _parse_price(text: str, row: int, column: str, missing_token: str) -> float:
    text = text.strip()
    if text == missing_token or text == "":
        return math.nan
    # U+2212 shows up in spreadsheet exports; treat it as an ASCII minus sign.
    text = text.replace("−", "-")
    try:
        value = float(text)
    except ValueError:
        return math.nan
    if math.isnan(value):
        return math.nan
    if not math.isfinite(value) or value <= 0.0:
        raise PriceParseError(f"non-positive or non-finite price {text!r}", row=row, column=column)
    return value


def _read_text(source: BinaryIO | bytes | str) -> str:
    if isinstance(source, bytes):
        raw = source
    elif isinstance(source, str):
        return source
    else:
        raw = source.read()
        if isinstance(raw, str):
            return raw
    try:
        return raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise PriceParseError(f"input is not valid UTF-8: {exc}") from None


def parse_prices(
    source: BinaryIO | bytes | str,
    layout: Layout = "long",
    *,
    missing_token: str = "",
) -> PricePanel:
    """Parse a price file into a :class:`PricePanel`.

    Empty cells and ``missing_token`` become missing marks, as do cells that are
    not numbers at all. Non-positive prices, malformed headers and duplicated
    ``(date, ticker)`` pairs raise :class:`PriceParseError` with the row (1-based,
    header is row 1) and column of the problem.
    """
    reader = csv.reader(io.StringIO(_read_text(source)))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise PriceParseError("empty input", row=1) from None

    if layout == "long":
        return _parse_long(header, reader, missing_token)
    if layout == "wide":
        return _parse_wide(header, reader, missing_token)
    raise ValueError(f"unknown layout {layout!r}")


def _parse_long(header: list[str], reader, missing_token: str) -> PricePanel:
    if tuple(h.lower() for h in header) != LONG_HEADER:
        raise PriceParseError(f"long layout expects header 'date,ticker,close', got {','.join(header)!r}", row=1)
    cells: dict[tuple[np.datetime64, str], float] = {}
    tickers: dict[str, None] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise PriceParseError(f"expected 3 fields, got {len(row)}", row=row_no)
        day = _parse_date(row[0], row_no)
        ticker = row[1].strip()
        if not ticker:
            raise PriceParseError("empty ticker", row=row_no, column="ticker")
        key = (day, ticker)
        if key in cells:
            raise PriceParseError(f"duplicate observation for {ticker} on {day}", row=row_no, column="close")
        cells[key] = _parse_price(row[2], row_no, "close", missing_token)
        tickers.setdefault(ticker)

    dates = np.array(sorted({d for d, _ in cells}), dtype="datetime64[D]")
    names = tuple(tickers)
    date_pos = {d: i for i, d in enumerate(dates)}
    tick_pos = {t: j for j, t in enumerate(names)}
    prices = np.full((dates.size, len(names)), np.nan)
    for (day, ticker), value in cells.items():
        prices[date_pos[day], tick_pos[ticker]] = value
    return PricePanel(dates, names, prices)


def _parse_wide(header: list[str], reader, missing_token: str) -> PricePanel:
    if len(header) < 2 or header[0].lower() != "date":
        raise PriceParseError("wide layout expects header 'date,<ticker1>,...'", row=1)
    names = tuple(header[1:])
    if any(not n for n in names):
        raise PriceParseError("empty ticker name in header", row=1)
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise PriceParseError(f"duplicate ticker {dup!r} in header", row=1, column=dup)

    rows: dict[np.datetime64, list[float]] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise PriceParseError(f"expected {len(header)} fields, got {len(row)}", row=row_no)
        day = _parse_date(row[0], row_no)
        if day in rows:
            raise PriceParseError(f"duplicate date {day}", row=row_no, column="date")
        rows[day] = [_parse_price(cell, row_no, name, missing_token) for cell, name in zip(row[1:], names)]

    dates = np.array(sorted(rows), dtype="datetime64[D]")
    prices = np.array([rows[d] for d in dates], dtype=np.float64).reshape(dates.size, len(names))
    return PricePanel(dates, names, prices)


def read_prices(path, layout: Layout = "long", *, missing_token: str = "") -> PricePanel:
    with open(path, "rb") as handle:
        return parse_prices(handle, layout, missing_token=missing_token)


def serialize_prices(panel: PricePanel, layout: Layout = "long", *, missing_token: str = "") -> str:
    """Inverse of :func:`parse_prices`. Floats are written with ``repr`` so they round-trip exactly."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    if layout == "long":
        writer.writerow(LONG_HEADER)
        for i, day in enumerate(panel.dates):
            for j, ticker in enumerate(panel.tickers):
                value = panel.prices[i, j]
                if not math.isnan(value):
                    writer.writerow((str(day), ticker, repr(float(value))))
    elif layout == "wide":
        writer.writerow(("date",) + panel.tickers)
        for i, day in enumerate(panel.dates):
            cells = [missing_token if math.isnan(v) else repr(float(v)) for v in panel.prices[i]]
            writer.writerow([str(day)] + cells)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return out.getvalue()


def filter_fully_liquid(panel: PricePanel) -> PricePanel:
    """Keep only tickers that traded on every date of the panel."""
    keep = ~np.any(np.isnan(panel.prices), axis=0)
    if not np.any(keep):
        raise EmptyUniverseError("no ticker has a price on every date")
    tickers = tuple(t for t, k in zip(panel.tickers, keep) if k)
    return PricePanel(panel.dates, tickers, panel.prices[:, keep])


def log_returns(panel: PricePanel) -> ReturnPanel:
    """``R_t = ln P_t - ln P_{t-1}`` per ticker."""
    if np.any(np.isnan(panel.prices)):
        raise MissingDataError("log_returns needs a fully liquid panel; run filter_fully_liquid first")
    logs = np.log(panel.prices)
    return ReturnPanel(panel.dates[1:], panel.tickers, logs[1:] - logs[:-1])

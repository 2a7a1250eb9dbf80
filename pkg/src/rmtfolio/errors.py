"""Exception hierarchy shared by every module."""

from __future__ import annotations


class RmtFolioError(Exception):
    """Base class for all errors raised by the toolkit."""


class PriceParseError(RmtFolioError, ValueError):
    """A price file could not be read. Carries the offending location."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EmptyUniverseError(RmtFolioError):
    """No ticker survived the liquidity filter."""


class MissingDataError(RmtFolioError, ValueError):
    """An operation that needs a complete panel received missing entries."""


class ZeroVarianceError(RmtFolioError, ValueError):
    def __init__(self, ticker: str):
        self.ticker = ticker
        super().__init__(f"ticker {ticker!r} has zero sample variance")


class DimensionMismatchError(RmtFolioError, ValueError):
    pass


class EmptyNoiseBandError(RmtFolioError):
    """No eigenvalue lies inside the Marchenko-Pastur band."""


class EigenSolverError(RmtFolioError):
    pass


class NotPositiveSemidefiniteError(RmtFolioError, ValueError):
    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(f"covariance has eigenvalue {min_eigenvalue:.3e} below the -1e-8 repair tolerance")


class InfeasibleTargetError(RmtFolioError):
    """Target return outside what the budget and weight bounds allow."""

    def __init__(self, target: float, interval: tuple[float, float]):
        self.target = target
        self.interval = interval
        lo, hi = interval
        super().__init__(f"target return {target!r} is infeasible; attainable interval is [{lo!r}, {hi!r}]")


class EmptyFrontierError(RmtFolioError, ValueError):
    """No asset has a positive mean return, so the frontier grid is empty."""


class InsufficientDataError(RmtFolioError):
    pass

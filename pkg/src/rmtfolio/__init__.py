"""Portfolio risk forecasts with random-matrix cleaning and single-index regression.

The library reads daily closing prices, builds correlation matrices, compares
their spectra with the Marchenko-Pastur law, optionally replaces the noise
eigenvalues by their mean and/or regresses out the market mode, and measures
how well a frontier built from one window predicts the frontier of the next.
"""

from .errors import (
    DimensionMismatchError,
    EigenSolverError,
    EmptyFrontierError,
    EmptyNoiseBandError,
    EmptyUniverseError,
    InfeasibleTargetError,
    InsufficientDataError,
    MissingDataError,
    NotPositiveSemidefiniteError,
    PriceParseError,
    RmtFolioError,
    ZeroVarianceError,
)
from .marketdata import PricePanel, ReturnPanel, filter_fully_liquid, log_returns, parse_prices, read_prices, serialize_prices
from .markowitz import (
    CovarianceAssembly,
    Frontier,
    FrontierPoint,
    assemble_covariance,
    frontier_grid,
    frontier_pair,
    gmv_portfolio,
    method_correlation,
    min_risk_weights,
    trace_frontier,
)
from .methods import NO_SHORT, SHORT_SELLING, MethodConfig, WeightBounds, four_methods
from .metrics import (
    ComparisonReport,
    agreement,
    compare,
    kl_distance,
    matrix_distance,
    mean_squared_error,
    risk_angle,
)
from .pipeline import (
    PairResult,
    RiskEnvelope,
    RollingResult,
    WindowSpec,
    ibovespa_style_volatility,
    run_rolling,
    run_year_pair,
    spectrum_summary,
)
from .rmt import (
    Band,
    CorrelationMatrix,
    KSResult,
    MPParams,
    SpectralDecomposition,
    classify,
    clean,
    decompose,
    ks_one_sample,
    ks_two_sample,
    mp_bounds,
    mp_cdf,
    mp_density,
    mp_quantile,
    pearson_correlation,
    qq_points,
    shuffle_eigenvalue_sample,
)
from .singleindex import IndexSeries, RegressionFit, eigen_market_index, fit_single_index, residual_panel

__version__ = "0.1.0"

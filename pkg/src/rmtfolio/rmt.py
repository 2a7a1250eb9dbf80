"""Marchenko-Pastur reference spectrum, correlation spectra and noise cleaning.

The Marchenko-Pastur (MP) law describes the eigenvalues of a correlation
matrix built from ``L`` observations of ``N`` independent series when both
grow with ``Q = L / N`` fixed. Eigenvalues of an empirical correlation
matrix that fall inside the MP support ``[lambda_minus, lambda_plus]`` are
treated as noise; :func:`clean` replaces them by their average.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, optimize, stats

from .errors import DimensionMismatchError, EigenSolverError, EmptyNoiseBandError, ZeroVarianceError
from .marketdata import ReturnPanel

__all__ = [
    "MPParams",
    "Band",
    "CorrelationMatrix",
    "SpectralDecomposition",
    "KSResult",
    "pearson_correlation",
    "mp_bounds",
    "mp_density",
    "mp_cdf",
    "mp_quantile",
    "decompose",
    "clean",
    "shuffle_eigenvalue_sample",
    "ks_one_sample",
    "ks_two_sample",
    "qq_points",
    "classify",
    "mp_reference_sample",
    "eigenvalue_bounds_fraction",
]

CDF_ABS_TOL = 1e-10
QUANTILE_TOL = 1e-10


@dataclass(frozen=True)
class MPParams:
    q: float
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        if not (self.q > 0 and math.isfinite(self.q)):
            raise ValueError(f"q must be positive, got {self.q!r}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2!r}")

    @classmethod
    def for_panel(cls, returns: ReturnPanel, sigma2: float = 1.0) -> "MPParams":
        return cls(q=returns.q, sigma2=sigma2)


class Band(enum.IntEnum):
    BELOW_NOISE = -1
    NOISE = 0
    ABOVE_NOISE = 1


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric matrix of pairwise correlations.

    Pearson estimates have an exactly unit diagonal. Cleaned matrices keep the
    trace but not necessarily the diagonal; see :attr:`diagonal_deviation`.
    """

    tickers: tuple[str, ...]
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        tickers = tuple(self.tickers)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] != len(tickers):
            raise DimensionMismatchError(f"correlation matrix shape {values.shape} vs {len(tickers)} tickers")
        scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
        if not np.allclose(values, values.T, rtol=0.0, atol=1e-12 * scale):
            raise ValueError("correlation matrix is not symmetric")
        values.setflags(write=False)
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.tickers)

    @property
    def diagonal_deviation(self) -> float:
        """Largest ``|C_ii - 1|``; zero for a Pearson estimate."""
        return float(np.max(np.abs(np.diag(self.values) - 1.0))) if self.n else 0.0


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigen-decomposition of a correlation matrix, sorted by decreasing eigenvalue.

    Column ``k`` of ``eigenvectors`` pairs with ``eigenvalues[k]``; each column
    has its largest-magnitude entry non-negative.
    """

    tickers: tuple[str, ...]
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]
    band: NDArray[np.int8]
    params: MPParams

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def bounds(self) -> tuple[float, float]:
        return mp_bounds(self.params)

    @property
    def noise_mask(self) -> NDArray[np.bool_]:
        return self.band == Band.NOISE

    def count(self, band: Band) -> int:
        return int(np.count_nonzero(self.band == band))

    @property
    def mean_noise(self) -> float:
        """Average of the eigenvalues inside the noise band."""
        mask = self.noise_mask
        if not np.any(mask):
            lo, hi = self.bounds
            raise EmptyNoiseBandError(f"no eigenvalue lies in the noise band [{lo:.6g}, {hi:.6g}]")
        return float(np.mean(self.eigenvalues[mask]))

    def reconstruct(self) -> NDArray[np.float64]:
        v = self.eigenvectors
        out = (v * self.eigenvalues) @ v.T
        return 0.5 * (out + out.T)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n_effective: float

    def to_dict(self) -> dict[str, float]:
        return {"statistic": self.statistic, "p_value": self.p_value, "n_effective": self.n_effective}


def pearson_correlation(returns: ReturnPanel) -> CorrelationMatrix:
    """Pearson correlation of the panel's columns with a unit diagonal."""
    x = returns.returns
    if x.shape[0] < 2:
        raise ValueError("need at least two observations for a correlation")
    centered = x - x.mean(axis=0)
    ss = np.einsum("ij,ij->j", centered, centered)
    # Relative threshold: a constant column leaves rounding residue after centring.
    floor = (1e-12 * np.max(np.abs(x), axis=0)) ** 2 * x.shape[0]
    for j in np.flatnonzero(ss <= floor):
        raise ZeroVarianceError(returns.tickers[j])
    normed = centered / np.sqrt(ss)
    corr = normed.T @ normed
    corr = 0.5 * (corr + corr.T)
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(returns.tickers, corr)


def mp_bounds(params: MPParams) -> tuple[float, float]:
    """Edges of the MP support, ``sigma2 * (1 + 1/q -/+ 2 sqrt(1/q))``."""
    # Written as squares so the lower edge cannot round below zero near q == 1.
    root = math.sqrt(1.0 / params.q)
    return params.sigma2 * (1.0 - root) ** 2, params.sigma2 * (1.0 + root) ** 2


def _continuous_mass(params: MPParams) -> float:
    # For q < 1 a point mass 1 - q sits at zero and the density carries the rest.
    return min(1.0, params.q)


def mp_density(x: ArrayLike, params: MPParams) -> NDArray[np.float64] | float:
    """MP probability density; exactly zero outside (and on the edges of) the support."""
    lo, hi = mp_bounds(params)
    arr = np.asarray(x, dtype=np.float64)
    inside = (arr > lo) & (arr < hi) & (arr > 0)
    safe = np.where(inside, arr, 1.0)
    val = params.q / (2.0 * math.pi * params.sigma2) * np.sqrt(np.clip((hi - safe) * (safe - lo), 0.0, None)) / safe
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def _cdf_scalar(x: float, params: MPParams) -> float:
    lo, hi = mp_bounds(params)
    atom = 1.0 - _continuous_mass(params)
    if x < 0.0:
        return 0.0
    if x <= lo:
        return atom
    if x >= hi:
        return 1.0
    # lambda = a + b cos(theta) turns the square-root edges into a smooth integrand.
    a = 0.5 * (hi + lo)
    b = 0.5 * (hi - lo)
    c = params.q * b * b / (2.0 * math.pi * params.sigma2)

    def integrand(theta: float) -> float:
        s = math.sin(theta)
        return c * s * s / (a + b * math.cos(theta))

    theta_x = math.acos(min(1.0, max(-1.0, (x - a) / b)))
    value, _ = integrate.quad(integrand, theta_x, math.pi, epsabs=CDF_ABS_TOL, epsrel=1e-12, limit=200)
    return min(1.0, max(atom, atom + value))


def mp_cdf(x: ArrayLike, params: MPParams) -> NDArray[np.float64] | float:
    """MP cumulative distribution by adaptive quadrature of the density."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return _cdf_scalar(float(arr), params)
    return np.array([_cdf_scalar(float(v), params) for v in arr.ravel()]).reshape(arr.shape)


def _quantile_scalar(u: float, params: MPParams) -> float:
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {u!r}")
    lo, hi = mp_bounds(params)
    atom = 1.0 - _continuous_mass(params)
    if u <= atom:
        return 0.0
    return optimize.brentq(lambda v: _cdf_scalar(v, params) - u, lo, hi, xtol=QUANTILE_TOL, rtol=4 * np.finfo(float).eps)


def mp_quantile(u: ArrayLike, params: MPParams) -> NDArray[np.float64] | float:
    """Inverse of :func:`mp_cdf`, bracketed on the support to ``1e-10`` in lambda."""
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim == 0:
        return _quantile_scalar(float(arr), params)
    return np.array([_quantile_scalar(float(v), params) for v in arr.ravel()]).reshape(arr.shape)


def classify(eigenvalues: NDArray[np.float64], params: MPParams) -> NDArray[np.int8]:
    lo, hi = mp_bounds(params)
    band = np.full(eigenvalues.shape, Band.NOISE, dtype=np.int8)
    band[eigenvalues > hi] = Band.ABOVE_NOISE
    band[eigenvalues < lo] = Band.BELOW_NOISE
    return band


def _fix_signs(vectors: NDArray[np.float64]) -> NDArray[np.float64]:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def decompose(corr: CorrelationMatrix, params: MPParams) -> SpectralDecomposition:
    """Symmetric eigen-decomposition with eigenvalues sorted largest first.

    Each eigenvalue is labelled as below, inside or above the MP band of
    ``params``.
    """
    try:
        w, v = np.linalg.eigh(corr.values)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc
    order = np.argsort(w, kind="stable")[::-1]
    w = w[order]
    v = _fix_signs(v[:, order])
    w.setflags(write=False)
    v.setflags(write=False)
    band = classify(w, params)
    band.setflags(write=False)
    return SpectralDecomposition(corr.tickers, w, v, band, params)


def clean(decomp: SpectralDecomposition) -> CorrelationMatrix:
    """Replace every noise-band eigenvalue by the noise-band average and rebuild ``V D V^T``.

    Eigenvalues above and below the band are untouched, so the trace is
    conserved. The diagonal is not reset to one.
    """
    cleaned = decomp.eigenvalues.copy()
    cleaned[decomp.noise_mask] = decomp.mean_noise
    v = decomp.eigenvectors
    values = (v * cleaned) @ v.T
    return CorrelationMatrix(decomp.tickers, 0.5 * (values + values.T))


def shuffle_eigenvalue_sample(returns: ReturnPanel, n_sims: int, seed: int) -> NDArray[np.float64]:
    """Eigenvalues of correlation matrices of column-wise shuffled returns.

    Each simulation permutes every column independently, destroying
    cross-sectional dependence while keeping each marginal distribution.
    Simulation ``k`` draws from its own generator spawned from ``seed``, so the
    result does not depend on evaluation order. Returns an ``(n_sims, N)``
    array, each row sorted in decreasing order.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be at least 1")
    children = np.random.SeedSequence(seed).spawn(n_sims)
    x = returns.returns
    out = np.empty((n_sims, x.shape[1]))
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        shuffled = rng.permuted(x, axis=0)
        centered = shuffled - shuffled.mean(axis=0)
        normed = centered / np.sqrt(np.einsum("ij,ij->j", centered, centered))
        corr = normed.T @ normed
        np.fill_diagonal(corr, 1.0)
        out[k] = np.linalg.eigvalsh(0.5 * (corr + corr.T))[::-1]
    return out


def _kolmogorov_pvalue(sqrt_n_d: float) -> float:
    return float(min(1.0, max(0.0, stats.kstwobign.sf(sqrt_n_d))))


def ks_one_sample(sample: ArrayLike, params: MPParams) -> KSResult:
    """One-sample Kolmogorov-Smirnov test of ``sample`` against the MP law.

    The p-value uses the asymptotic Kolmogorov distribution of ``sqrt(n) D``.
    """
    x = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise ValueError("KS test needs a non-empty sample")
    f = mp_cdf(x, params)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n), 0.0))
    d = min(d, 1.0)
    return KSResult(d, _kolmogorov_pvalue(math.sqrt(n) * d), float(n))


def ks_two_sample(a: ArrayLike, b: ArrayLike) -> KSResult:
    """Two-sample Kolmogorov-Smirnov test with effective size ``n m / (n + m)``."""
    x = np.sort(np.asarray(a, dtype=np.float64).ravel())
    y = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if x.size == 0 or y.size == 0:
        raise ValueError("KS test needs two non-empty samples")
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    d = float(np.max(np.abs(fx - fy)))
    n_eff = x.size * y.size / (x.size + y.size)
    return KSResult(d, _kolmogorov_pvalue(math.sqrt(n_eff) * d), float(n_eff))


def qq_points(sample: ArrayLike, params: MPParams) -> NDArray[np.float64]:
    """``(n, 2)`` array pairing MP quantiles at ``(i - 0.5) / n`` with the sorted sample."""
    x = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise ValueError("qq_points needs a non-empty sample")
    levels = (np.arange(1, n + 1) - 0.5) / n
    return np.column_stack([mp_quantile(levels, params), x])


def mp_reference_sample(params: MPParams, size: int) -> NDArray[np.float64]:
    """Deterministic MP sample at the plotting positions ``(i - 0.5) / size``."""
    return np.asarray(mp_quantile((np.arange(1, size + 1) - 0.5) / size, params))


def eigenvalue_bounds_fraction(eigenvalues: Sequence[float] | NDArray, params: MPParams) -> float:
    """Fraction of eigenvalues within ``[lambda_minus, lambda_plus]``."""
    lo, hi = mp_bounds(params)
    arr = np.asarray(eigenvalues, dtype=np.float64).ravel()
    return float(np.mean((arr >= lo) & (arr <= hi)))

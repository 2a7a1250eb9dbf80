"""Agreement measures between predicted and realised frontiers and correlation matrices."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatchError
from .markowitz import Frontier
from .methods import MethodConfig
from .rmt import CorrelationMatrix

__all__ = [
    "ComparisonReport",
    "MethodConfig",
    "paired_risks",
    "agreement",
    "mean_squared_error",
    "risk_angle",
    "matrix_distance",
    "kl_distance",
    "kl_histograms",
    "compare",
]


def _risk_vectors(pred, real) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    if isinstance(pred, Frontier) and isinstance(real, Frontier):
        return paired_risks(pred, real)
    a = np.asarray(pred, dtype=np.float64).ravel()
    b = np.asarray(real, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"risk vectors of length {a.size} and {b.size}")
    keep = np.isfinite(a) & np.isfinite(b)
    return a[keep], b[keep]


def paired_risks(pred: Frontier, real: Frontier) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Risks at grid entries feasible on both frontiers."""
    if pred.grid.shape != real.grid.shape or not np.array_equal(pred.grid, real.grid):
        raise DimensionMismatchError("frontiers do not share a return grid")
    keep = pred.feasible & real.feasible
    return pred.risks[keep], real.risks[keep]


def agreement(pred, real) -> float:
    """Mean relative gap ``(real - pred) / pred``; positive when risk was underestimated."""
    p, r = _risk_vectors(pred, real)
    if p.size == 0:
        raise ValueError("no grid point is feasible on both frontiers")
    if np.any(p == 0.0):
        raise ZeroDivisionError("a predicted risk is exactly zero; agreement is undefined")
    return float(np.mean((r - p) / p))


def mean_squared_error(pred, real) -> float:
    p, r = _risk_vectors(pred, real)
    if p.size == 0:
        raise ValueError("no grid point is feasible on both frontiers")
    return float(np.mean((r - p) ** 2))


def risk_angle(pred, real) -> float:
    """Angle in degrees between the predicted and realised risk vectors."""
    p, r = _risk_vectors(pred, real)
    norm_p = float(np.linalg.norm(p))
    norm_r = float(np.linalg.norm(r))
    if norm_p == 0.0 or norm_r == 0.0:
        raise ValueError("angle is undefined for a zero risk vector")
    # 2 atan2(|u - v|, |u + v|) on the unit vectors; unlike acos it is exact near 0 degrees.
    u, v = p / norm_p, r / norm_r
    return math.degrees(2.0 * math.atan2(float(np.linalg.norm(u - v)), float(np.linalg.norm(u + v))))


def _values(m) -> NDArray[np.float64]:
    return m.values if isinstance(m, CorrelationMatrix) else np.asarray(m, dtype=np.float64)


def matrix_distance(a, b) -> float:
    """``Tr((A - B)^T (A - B))``, the squared Frobenius norm of the difference."""
    x, y = _values(a), _values(b)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"matrices of shape {x.shape} and {y.shape}")
    d = x - y
    return float(np.sum(d * d))


def kl_histograms(a, b, bin_count: int = 50) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Normalised histograms of the strictly upper-triangular entries over ``[-1, 1]``."""
    x, y = _values(a), _values(b)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"matrices of shape {x.shape} and {y.shape}")
    if bin_count < 2:
        raise ValueError("bin_count must be at least 2")
    iu = np.triu_indices(x.shape[0], k=1)
    if iu[0].size == 0:
        raise ValueError("need at least two assets for an off-diagonal histogram")
    edges = np.linspace(-1.0, 1.0, bin_count + 1)
    # Cleaned matrices can overshoot [-1, 1] by rounding; clip into the end bins.
    p, _ = np.histogram(np.clip(x[iu], -1.0, 1.0), bins=edges)
    q, _ = np.histogram(np.clip(y[iu], -1.0, 1.0), bins=edges)
    return p / p.sum(), q / q.sum()


def kl_distance(a, b, bin_count: int = 50) -> float:
    """Binned Kullback-Leibler divergence ``sum P ln(P/Q)``; terms with ``P == 0`` or ``Q == 0`` count as zero."""
    p, q = kl_histograms(a, b, bin_count)
    both = (p > 0) & (q > 0)
    return float(np.sum(p[both] * np.log(p[both] / q[both])))


@dataclass(frozen=True)
class ComparisonReport:
    ag: float
    mse: float
    angle_deg: float
    dist: float
    d_kl: float
    n_points: int
    grid_size: int
    bin_count: int
    method: MethodConfig
    tickers: tuple[str, ...] = ()
    label: str = ""
    diagnostics: dict = field(default_factory=dict)

    def metrics(self) -> tuple[float, float, float, float, float]:
        return self.ag, self.mse, self.angle_deg, self.dist, self.d_kl

    def to_dict(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.to_dict()
        out["tickers"] = list(self.tickers)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonReport":
        data = dict(data)
        data["method"] = MethodConfig.from_dict(data["method"])
        data["tickers"] = tuple(data.get("tickers", ()))
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        return cls.from_dict(json.loads(text))


def compare(
    pred_frontier: Frontier,
    real_frontier: Frontier,
    pred_corr: CorrelationMatrix,
    real_corr: CorrelationMatrix,
    config: MethodConfig,
    *,
    label: str = "",
) -> ComparisonReport:
    """All five metrics for one predicted/realised pair.

    A metric that is undefined for the inputs (zero predicted risk, no jointly
    feasible point) is reported as NaN with the reason in ``diagnostics``.
    """
    diagnostics: dict = {}
    p, r = paired_risks(pred_frontier, real_frontier)
    n_points = int(p.size)
    if n_points < len(pred_frontier):
        diagnostics["infeasible_points"] = len(pred_frontier) - n_points

    def guarded(name, fn, *args):
        try:
            return fn(*args)
        except (ZeroDivisionError, ValueError) as exc:
            diagnostics[f"{name}_error"] = str(exc)
            return math.nan

    ag = guarded("ag", agreement, p, r)
    mse = guarded("mse", mean_squared_error, p, r)
    angle = guarded("angle", risk_angle, p, r)
    dist = matrix_distance(pred_corr, real_corr)
    d_kl = kl_distance(pred_corr, real_corr, config.bin_count)
    if d_kl < 0:
        diagnostics["d_kl_negative"] = True
    hp, hq = kl_histograms(pred_corr, real_corr, config.bin_count)
    if not np.any((hp > 0) & (hq > 0)):
        diagnostics["d_kl_disjoint_support"] = True
    for side, corr in (("pred", pred_corr), ("real", real_corr)):
        dev = corr.diagonal_deviation
        if dev > 0:
            diagnostics[f"{side}_diagonal_deviation"] = dev
    return ComparisonReport(
        ag=ag,
        mse=mse,
        angle_deg=angle,
        dist=dist,
        d_kl=d_kl,
        n_points=n_points,
        grid_size=len(pred_frontier),
        bin_count=config.bin_count,
        method=config,
        tickers=tuple(pred_frontier.tickers),
        label=label,
        diagnostics=diagnostics,
    )

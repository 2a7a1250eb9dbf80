"""Plot-ready CSV and JSON emitters, plus the run manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .markowitz import Frontier, FrontierPoint
from .metrics import ComparisonReport
from .rmt import CorrelationMatrix, KSResult, SpectralDecomposition

__all__ = [
    "fmt",
    "rows_csv",
    "two_column_csv",
    "read_two_column_csv",
    "ks_json",
    "frontier_csv",
    "frontier_json",
    "frontier_from_json",
    "correlation_csv",
    "spectrum_csv",
    "reports_csv",
    "table_csv",
    "sha256_file",
    "write_text",
    "write_manifest",
]

REPORT_COLUMNS = ("label", "method", "cleaning", "regression", "lower", "upper", "ag", "mse", "angle_deg", "dist", "d_kl", "n_points", "grid_size", "bin_count")


def fmt(value) -> str:
    """Shortest round-trip text for floats; ``nan``/``inf`` spelled out."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def rows_csv(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return out.getvalue()


def two_column_csv(data, header: tuple[str, str]) -> str:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        raise ValueError("two_column_csv expects an (n, 2) array")
    return rows_csv(arr.tolist(), header)


def read_two_column_csv(text: str) -> tuple[tuple[str, str], np.ndarray]:
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    rows = [[float(c) for c in row] for row in reader if row]
    return header, np.array(rows, dtype=np.float64).reshape(-1, 2)


def ks_json(result: KSResult) -> str:
    return json.dumps(result.to_dict(), sort_keys=True)


def frontier_csv(frontier: Frontier) -> str:
    n = len(frontier.tickers)
    header = ["target_return", "risk", "feasible"] + [f"w_{i}" for i in range(1, n + 1)]
    rows = []
    for t, p in zip(frontier.grid, frontier.points):
        if p is None:
            rows.append([t, math.nan, False] + [math.nan] * n)
        else:
            rows.append([t, p.risk, True] + list(p.weights))
    return rows_csv(rows, header)


def frontier_json(frontier: Frontier) -> str:
    points = []
    for t, p in zip(frontier.grid, frontier.points):
        points.append(
            {
                "target_return": float(t),
                "risk": None if p is None else p.risk,
                "feasible": p is not None,
                "weights": None if p is None else [float(w) for w in p.weights],
            }
        )
    return json.dumps({"tickers": list(frontier.tickers), "points": points}, indent=1)


def frontier_from_json(text: str) -> Frontier:
    data = json.loads(text)
    grid = np.array([p["target_return"] for p in data["points"]])
    points = tuple(
        FrontierPoint(p["target_return"], p["risk"], np.array(p["weights"])) if p["feasible"] else None
        for p in data["points"]
    )
    return Frontier(tuple(data["tickers"]), grid, points)


def correlation_csv(corr: CorrelationMatrix) -> str:
    rows = [[t] + [fmt(v) for v in row] for t, row in zip(corr.tickers, corr.values)]
    return rows_csv(rows, [""] + list(corr.tickers))


def spectrum_csv(decomp: SpectralDecomposition) -> str:
    names = {-1: "below", 0: "noise", 1: "above"}
    rows = [[k + 1, lam, names[int(b)]] for k, (lam, b) in enumerate(zip(decomp.eigenvalues, decomp.band))]
    return rows_csv(rows, ["rank", "eigenvalue", "band"])


def _report_row(rep: ComparisonReport) -> list:
    b = rep.method.bounds
    return [rep.label, rep.method.label, rep.method.cleaning, rep.method.regression, b.lower, b.upper,
            rep.ag, rep.mse, rep.angle_deg, rep.dist, rep.d_kl, rep.n_points, rep.grid_size, rep.bin_count]


def reports_csv(reports: Iterable[ComparisonReport]) -> str:
    """One row per (window, method), as used for batch runs."""
    return rows_csv((_report_row(r) for r in reports), REPORT_COLUMNS)


TABLE_METRICS = (("AG", "ag"), ("MSE", "mse"), ("Angle", "angle_deg"), ("Dist", "dist"), ("D_KL", "d_kl"))


def table_csv(pairs: Sequence[tuple[str, Sequence[ComparisonReport]]]) -> str:
    """Metric blocks with one row per year pair and one column per method.

    Columns follow the four-way layout (without/with cleaning x no
    regression/regression) in the order the reports were produced.
    """
    if not pairs:
        return ""
    labels = [r.method.label for r in pairs[0][1]]
    rows = []
    for name, attr in TABLE_METRICS:
        for pair_label, reports in pairs:
            rows.append([name, pair_label] + [getattr(r, attr) for r in reports])
    return rows_csv(rows, ["metric", "pair"] + labels)


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    return path


def write_manifest(out_dir: Path, inputs: Sequence[Path], config: dict) -> Path:
    """``manifest.json`` with input hashes, the config echo and hashes of every other file in ``out_dir``."""
    outputs = {}
    for path in sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json"):
        outputs[path.relative_to(out_dir).as_posix()] = sha256_file(path)
    manifest = {
        "inputs": {str(p): sha256_file(Path(p)) for p in inputs},
        "config": config,
        "outputs": outputs,
    }
    return write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")

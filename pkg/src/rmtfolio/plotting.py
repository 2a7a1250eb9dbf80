"""Matplotlib figures written next to the CSV outputs.

Everything renders through the Agg backend to PNG with the software tag
stripped, so identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .markowitz import Frontier  # noqa: E402
from .rmt import MPParams, SpectralDecomposition, mp_bounds, mp_density  # noqa: E402

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
PREDICTED_COLOR = "0.55"
REALIZED_COLOR = "black"
BAND_COLOR = "0.88"

plt.rcParams.update(
    {
        "font.family": "serif",
        "font.size": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "savefig.dpi": 150,
    }
)


def new(width: float = 5.0, nrows: int = 1, ncols: int = 1):
    fig, ax = plt.subplots(nrows=nrows, ncols=ncols, figsize=(width, width * GOLDEN * nrows / ncols + 0.4))
    return fig, ax


def save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def spectrum(decomp: SpectralDecomposition, path: Path, shuffled: np.ndarray | None = None) -> Path:
    """Eigenvalue histogram with the MP density (left) and ranked eigenvalues over the noise band (right)."""
    params: MPParams = decomp.params
    lo, hi = mp_bounds(params)
    fig, (left, right) = new(8.0, ncols=2)
    lam = decomp.eigenvalues
    top = max(float(lam.max()), hi) * 1.05
    left.hist(lam, bins=min(60, max(10, lam.size // 2)), range=(0, top), density=True,
              histtype="step", color=REALIZED_COLOR, label="empirical")
    if shuffled is not None:
        left.hist(np.ravel(shuffled), bins=120, range=(0, top), density=True,
                  histtype="step", color="tab:blue", lw=0.8, label="shuffled")
    xs = np.linspace(lo, hi, 400)
    left.plot(xs, mp_density(xs, params), color=PREDICTED_COLOR, lw=1.5, label=f"MP, Q={params.q:.2f}")
    left.set_xlabel(r"$\lambda$")
    left.set_ylabel(r"$\rho(\lambda)$")
    left.legend(frameon=False)

    right.axvspan(lo, hi, color=BAND_COLOR, lw=0)
    right.vlines(lam, 0, 1, color=REALIZED_COLOR, lw=0.8)
    right.set_xlabel(r"$\lambda$")
    right.set_yticks([])
    right.set_title(f"{decomp.count(1)} above, {decomp.count(-1)} below the band", fontsize=8)
    return save(fig, path)


def qq(points: np.ndarray, path: Path) -> Path:
    fig, ax = new(4.0)
    ax.scatter(points[:, 0], points[:, 1], s=8, color=REALIZED_COLOR)
    lim = [0.0, float(np.nanmax(points)) * 1.05]
    ax.plot(lim, lim, color=PREDICTED_COLOR, lw=0.8)
    ax.set_xlabel("Marchenko-Pastur quantile")
    ax.set_ylabel("eigenvalue quantile")
    return save(fig, path)


def frontier_pair(pred: Frontier, real: Frontier, path: Path, title: str = "") -> Path:
    fig, ax = new(4.5)
    for frontier, color, label in ((pred, PREDICTED_COLOR, "predicted"), (real, REALIZED_COLOR, "realised")):
        ok = frontier.feasible
        ax.plot(frontier.risks[ok], frontier.grid[ok], color=color, label=label)
    ax.set_xlabel("risk (variance)")
    ax.set_ylabel("return")
    ax.ticklabel_format(style="sci", scilimits=(-3, 3))
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(frameon=False)
    return save(fig, path)


def series(values: dict[str, np.ndarray], path: Path, ylabel: str, logy: bool = False) -> Path:
    fig, ax = new(6.0)
    for label, ys in values.items():
        ax.plot(np.arange(len(ys)), ys, lw=0.9, label=label)
    ax.set_xlabel("window")
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    if len(values) > 1:
        ax.legend(frameon=False)
    return save(fig, path)


def envelope(env: np.ndarray, path: Path) -> Path:
    """Min/max predicted (grey) and realised (black) risk per window."""
    fig, ax = new(6.0)
    x = np.arange(env.shape[0])
    ax.plot(x, env[:, 0], color=PREDICTED_COLOR, lw=0.9, label="predicted")
    ax.plot(x, env[:, 1], color=PREDICTED_COLOR, lw=0.9)
    ax.plot(x, env[:, 2], color=REALIZED_COLOR, lw=0.9, label="realised")
    ax.plot(x, env[:, 3], color=REALIZED_COLOR, lw=0.9)
    ax.set_xlabel("window")
    ax.set_ylabel("risk (variance)")
    ax.legend(frameon=False)
    return save(fig, path)

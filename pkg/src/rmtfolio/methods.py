"""Weight bounds and the four-way method switch (cleaning x regression)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

__all__ = ["WeightBounds", "MethodConfig", "NO_SHORT", "SHORT_SELLING", "four_methods"]


@dataclass(frozen=True)
class WeightBounds:
    """Uniform box ``lower <= w_i <= upper`` applied to every asset."""

    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.lower):
            raise ValueError("lower weight bound must be finite")
        if not self.lower <= self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    def check_feasible(self, n_assets: int) -> None:
        """The budget ``sum(w) == 1`` needs ``N * lower <= 1 <= N * upper``."""
        if n_assets * self.lower > 1.0 or n_assets * self.upper < 1.0:
            raise ValueError(
                f"bounds [{self.lower}, {self.upper}] cannot satisfy the budget constraint with {n_assets} assets"
            )

    def label(self) -> str:
        return f"[{self.lower:g},{self.upper:g}]"


NO_SHORT = WeightBounds(0.0, 1.0)
SHORT_SELLING = WeightBounds(-1.0, 2.0)


@dataclass(frozen=True)
class MethodConfig:
    cleaning: bool = False
    regression: bool = False
    bounds: WeightBounds = field(default_factory=lambda: NO_SHORT)
    grid_size: int = 100
    bin_count: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.bin_count < 2:
            raise ValueError("bin_count must be at least 2")
        if self.grid_size < 1:
            raise ValueError("grid_size must be at least 1")

    @property
    def label(self) -> str:
        clean = "clean" if self.cleaning else "raw"
        regress = "regress" if self.regression else "noregress"
        return f"{clean}-{regress}"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["label"] = self.label
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MethodConfig":
        data = {k: v for k, v in data.items() if k != "label"}
        bounds = data.pop("bounds", None)
        if isinstance(bounds, dict):
            bounds = WeightBounds(float(bounds["lower"]), float(bounds["upper"]))
        return cls(bounds=bounds or NO_SHORT, **data)


def four_methods(
    bounds: WeightBounds = NO_SHORT, *, grid_size: int = 100, bin_count: int = 50, seed: int = 0
) -> list[MethodConfig]:
    """The four table columns, in order: raw, raw+regression, cleaned, cleaned+regression."""
    return [
        MethodConfig(cleaning, regression, bounds, grid_size, bin_count, seed)
        for cleaning in (False, True)
        for regression in (False, True)
    ]

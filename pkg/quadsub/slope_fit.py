"""
Log-log power-law fits shared by the flow, weight and Galerkin reports.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateFit

logger = logging.getLogger(__name__)


@dataclass
class SlopeFitReport:
    t_grid: List[float]
    values: List[float]
    slope: float
    r_squared: float
    # Best constant C on the grid for value >= t^p / C (lower) or value <= C t^p (upper).
    prefactor: Optional[float] = None
    extra: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        out = {
            "slope": self.slope,
            "r_squared": self.r_squared,
            "t_grid": list(self.t_grid),
            "values": list(self.values),
        }
        if self.prefactor is not None:
            out["prefactor"] = self.prefactor
        out.update(self.extra)
        return out


def log_grid(t_min: float, t_max: float, points: int) -> np.ndarray:
    if not 0 < t_min < t_max:
        raise ValueError(f"need 0 < t_min < t_max, got {t_min}, {t_max}")
    if points < 2:
        raise ValueError(f"need at least 2 grid points, got {points}")
    return np.geomspace(t_min, t_max, points)


def fit_power_law(
    t_grid: Sequence[float],
    values: Sequence[float],
    exponent: Optional[float] = None,
    bound: str = "lower",
) -> SlopeFitReport:
    """
    Least-squares slope of log(values) against log(t).

    Args:
        t_grid: strictly increasing positive abscissae
        values: positive ordinates
        exponent: when given, also report the best constant C for the
            power t^exponent on this grid
        bound: "lower" for value >= t^p / C, "upper" for value <= C t^p

    Returns:
        SlopeFitReport with slope and r^2 clipped into [0, 1]

    Raises:
        DegenerateFit: some value is zero, negative or not finite
    """
    t = np.asarray(t_grid, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.size < 2:
        raise ValueError(f"grid/value mismatch: {t.shape} vs {v.shape}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t grid must be strictly increasing")
    if np.any(t <= 0):
        raise ValueError("power-law fit needs positive t")
    bad_mask = ~((v > 0) & np.isfinite(v))
    if np.any(bad_mask):
        bad = t[bad_mask].tolist()
        logger.warning(f"power-law fit: non-positive or non-finite values at t={bad}")
        raise DegenerateFit(
            f"power-law fit needs positive values; {len(bad)} of {t.size} are not",
            report={"t_grid": t.tolist(), "values": v.tolist()},
        )

    fit = stats.linregress(np.log(t), np.log(v))
    r_squared = float(np.clip(fit.rvalue ** 2, 0.0, 1.0))

    prefactor = None
    if exponent is not None:
        ratio = t ** exponent / v
        prefactor = float(ratio.max()) if bound == "lower" else float((1.0 / ratio).max())

    logger.debug(f"power-law fit: slope={fit.slope:.4f}, r^2={r_squared:.6f}, points={t.size}")
    return SlopeFitReport(
        t_grid=t.tolist(),
        values=v.tolist(),
        slope=float(fit.slope),
        r_squared=r_squared,
        prefactor=prefactor,
    )

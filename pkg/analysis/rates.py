"""Log-log rate fitting."""
import math
from typing import Sequence

import numpy as np
from scipy import stats

from models.experiment import SlopeFit
from utils.errors import DimensionError, DomainError

MIN_POINTS = 3


def fit_loglog_slope(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> SlopeFit:
    """Ordinary least squares of log y on log x.

    Args:
        x: Positive abscissae (e.g. sample sizes)
        y: Positive errors
        confidence: Level of the two-sided slope interval

    Returns:
        SlopeFit with slope, intercept (of log y), slope stderr and interval

    Raises:
        DomainError: nonpositive values or fewer than three points
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise DimensionError(f"{x.size} abscissae but {y.size} ordinates")
    if x.size < MIN_POINTS:
        raise DomainError(f"Slope fit needs at least {MIN_POINTS} points, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)) or np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("Log-log fit needs finite positive values")

    lx, ly = np.log(x), np.log(y)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    if sxx == 0.0:
        raise DomainError("Log-log fit needs at least two distinct x values")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    dof = x.size - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    half = float(stats.t.ppf(0.5 + confidence / 2.0, dof)) * stderr
    return SlopeFit(
        slope=float(slope),
        intercept=float(intercept),
        stderr=stderr,
        n_points=int(x.size),
        ci_low=float(slope) - half,
        ci_high=float(slope) + half,
    )

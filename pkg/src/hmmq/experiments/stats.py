"""Least-squares line fits for Fisher-information curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r: float
    n: int
    degenerate: bool = False


def linregress(points: Sequence[tuple[float, float]]) -> RegressionResult:
    """Ordinary least squares with the Pearson correlation coefficient.

    A constant response has no defined correlation; it is reported as r = 0 with
    ``degenerate`` set.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    x, y = pts[:, 0], pts[:, 1]
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct x values")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx, sxy, syy = float(dx @ dx), float(dx @ dy), float(dy @ dy)
    slope = sxy / sxx
    intercept = ym - slope * xm
    if syy <= 1e-30 * max(1.0, float(y @ y)):
        return RegressionResult(slope=0.0 if syy == 0 else slope, intercept=intercept, r=0.0,
                                n=len(x), degenerate=True)
    r = sxy / math.sqrt(sxx * syy)
    return RegressionResult(slope=slope, intercept=intercept, r=max(-1.0, min(1.0, r)), n=len(x))

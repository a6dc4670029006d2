"""Log-log scaling fits."""

from typing import NamedTuple, Sequence, Tuple

import numpy as np

from errors import NonPositiveValue

MIN_FIT_POINTS = 4


class ScalingFit(NamedTuple):
    """``y ~ coefficient * x^exponent`` with the log-log coefficient of determination.

    ``intercept`` is ``log(coefficient)``; ``max_residual`` is the largest
    absolute log-space residual; ``pairs`` holds the fitted ``(x, y)`` data.
    """

    exponent: float
    coefficient: float
    r_squared: float
    points: int
    intercept: float = 0.0
    max_residual: float = 0.0
    pairs: Tuple[Tuple[float, float], ...] = ()

    def predict(self, x) -> np.ndarray:
        return self.coefficient * np.asarray(x, dtype=float) ** self.exponent


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> ScalingFit:
    """Least-squares line through ``(log x, log y)``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if x.size < MIN_FIT_POINTS:
        raise ValueError(f"need at least {MIN_FIT_POINTS} points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise NonPositiveValue("power-law fit needs strictly positive data")

    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    spread = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual**2)) / spread if spread > 0 else 1.0
    return ScalingFit(
        exponent=float(slope),
        coefficient=float(np.exp(intercept)),
        r_squared=r_squared,
        points=int(x.size),
        intercept=float(intercept),
        max_residual=float(np.max(np.abs(residual))),
        pairs=tuple((float(a), float(b)) for a, b in zip(x, y)),
    )

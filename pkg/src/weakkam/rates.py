"""Log-log least-squares rate fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPoints


@dataclass(frozen=True)
class RateFit:
    pairs: tuple  # (log scale, log error)
    slope: float
    intercept: float
    r2: float
    n_points: int
    saturated: tuple = ()  # scales whose error was zero and got dropped

    def predict(self, scale):
        return float(np.exp(self.intercept) * scale**self.slope)


def fit_rate(pairs, min_points=3) -> RateFit:
    """Ordinary least squares of log(error) on log(scale).

    Non-positive errors carry no rate information; they are dropped and
    listed in ``saturated``.
    """
    pairs = [(float(s), float(e)) for s, e in pairs]
    kept = [(s, e) for s, e in pairs if e > 0 and np.isfinite(e)]
    saturated = tuple(s for s, e in pairs if not (e > 0 and np.isfinite(e)))
    if len(kept) < min_points:
        raise InsufficientPoints(
            f"need {min_points} positive errors for a rate fit, got {len(kept)} (saturated scales: {list(saturated)})")
    x = np.log([s for s, _ in kept])
    y = np.log([e for _, e in kept])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    return RateFit(tuple(zip(x.tolist(), y.tolist())), float(slope), float(intercept), r2, len(kept), saturated)

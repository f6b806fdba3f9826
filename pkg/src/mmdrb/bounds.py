"""Closed-form tail bounds for a standardized random variable, used as baselines."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass


def _check_threshold(c: float) -> float:
    c = float(c)
    if not (math.isfinite(c) and c > 0):
        raise ValueError(f"threshold must be a positive finite number, got {c}")
    return c


def cantelli(c: float) -> float:
    """One-sided Chebyshev bound P(X > c) <= 1 / (1 + c^2) for zero mean, unit variance."""
    c = _check_threshold(c)
    return 1.0 / (1.0 + c * c)


def chernoff_gaussian(c: float) -> float:
    """Chernoff bound P(X >= c) <= exp(-c^2 / 2) for a standard normal X."""
    c = _check_threshold(c)
    return math.exp(-0.5 * c * c)


@dataclass(frozen=True)
class TailBoundReport:
    threshold: float
    cantelli: float
    chernoff: float

    @classmethod
    def at(cls, c: float) -> "TailBoundReport":
        return cls(float(c), cantelli(c), chernoff_gaussian(c))

    def as_dict(self) -> dict:
        return asdict(self)

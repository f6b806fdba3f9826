"""Positive-definite kernels, Gram matrices and bandwidth selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist

# Pairwise distances are computed from explicit coordinate differences (never
# the ||x||^2 + ||y||^2 - 2<x, y> expansion) so that k(x, y) == k(y, x) holds
# bit-for-bit and gram(k, A, A) is exactly symmetric.

_ROW_BLOCK = 256


@dataclass(frozen=True)
class Gaussian:
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValueError(f"Gaussian bandwidth must be positive, got {self.sigma}")

    @property
    def characteristic(self) -> bool:
        return True


@dataclass(frozen=True)
class Polynomial:
    """(x.y + 1)^degree; the offset is fixed at 1."""

    degree: int = 2

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"polynomial degree must be a positive integer, got {self.degree}")

    @property
    def characteristic(self) -> bool:
        return False


@dataclass(frozen=True)
class SumOfGaussians:
    """Convex combination of Gaussians with bandwidths ``sigma * scales[i]``."""

    sigma: float
    scales: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValueError(f"base bandwidth must be positive, got {self.sigma}")
        if not self.scales:
            raise ValueError("scale list must be nonempty")
        if len(self.weights) != len(self.scales):
            raise ValueError("need one component weight per scale")
        if any(not np.isfinite(s) or s <= 0 for s in self.scales):
            raise ValueError(f"scales must be positive, got {self.scales}")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("component weights must be nonnegative and sum to 1")

    @property
    def bandwidths(self) -> tuple:
        return tuple(self.sigma * s for s in self.scales)

    @property
    def characteristic(self) -> bool:
        return True


KernelSpec = Union[Gaussian, Polynomial, SumOfGaussians]


def as_points(X, name: str = "points") -> np.ndarray:
    """Coerce to a float array of shape (count, dim); 1-D input is a list of scalars."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of shape (count, dim)")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def _from_sqdist(kernel: KernelSpec, sq: np.ndarray) -> np.ndarray:
    if isinstance(kernel, Gaussian):
        return np.exp(-sq / (2.0 * kernel.sigma**2))
    out = np.zeros_like(sq)
    for w, s in zip(kernel.weights, kernel.bandwidths):
        out += w * np.exp(-sq / (2.0 * s**2))
    return out


def evaluate(kernel: KernelSpec, x, y) -> float:
    """k(x, y) for two points of equal dimension."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if isinstance(kernel, Polynomial):
        return float((np.sum(x * y) + 1.0) ** kernel.degree)
    return float(_from_sqdist(kernel, np.sum((x - y) ** 2)))


def gram(kernel: KernelSpec, A, B=None) -> np.ndarray:
    """Dense matrix with entry (i, j) = k(A[i], B[j]); ``B`` defaults to ``A``."""
    A = as_points(A, "A")
    B = A if B is None else as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    out = np.empty((A.shape[0], B.shape[0]))
    for start in range(0, A.shape[0], _ROW_BLOCK):
        a = A[start:start + _ROW_BLOCK, None, :]
        if isinstance(kernel, Polynomial):
            out[start:start + _ROW_BLOCK] = (np.sum(a * B[None], axis=-1) + 1.0) ** kernel.degree
        else:
            sq = np.sum((a - B[None]) ** 2, axis=-1)
            out[start:start + _ROW_BLOCK] = _from_sqdist(kernel, sq)
    return out


def median_heuristic(X) -> float:
    """Median of ||x_i - x_j|| / sqrt(2) over unordered pairs i < j.

    Self-pairs are excluded; including the N zero distances would drag the
    median towards zero for small samples.
    """
    X = as_points(X, "X")
    if X.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    sigma = float(np.median(pdist(X)) / np.sqrt(2.0))
    if sigma <= 0:
        raise ValueError("median pairwise distance is zero; bandwidth undefined")
    return sigma


def sum_of_gaussians_from_scales(sigma: float, scales: Sequence[float]) -> SumOfGaussians:
    scales = tuple(float(s) for s in scales)
    if not scales:
        raise ValueError("scale list must be nonempty")
    if any(s <= 0 for s in scales):
        raise ValueError(f"scales must be positive, got {scales}")
    n = len(scales)
    # 1/n summed n times is not always exactly 1; absorb the residue in the last weight
    weights = [1.0 / n] * n
    weights[-1] = 1.0 - sum(weights[:-1])
    return SumOfGaussians(sigma, scales, tuple(weights))


DEFAULT_SCALES = (0.01, 0.1, 1.0, 10.0, 100.0)

"""Empirical kernel mean embeddings and the MMD quadratic form.

The ambiguity constraint ``||sum_i alpha_i phi(z_i) - mu_hat||_H^2 <= eps^2`` is
carried around as :class:`QuadConstraintCoeffs`, i.e. the coefficients of

    q(alpha) = alpha^T Kz alpha - 2 b^T alpha + c0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import cKDTree

from .kernel import KernelSpec, Polynomial, as_points, gram

DEDUP_TOL = 1e-10


def merge_duplicates(points, weights=None, tol: float = DEDUP_TOL):
    """Collapse points closer than ``tol`` (Euclidean), summing their weights.

    Each group is represented by its first member and groups keep the order of
    first appearance. Returns ``(points, weights, index)`` where ``index[i]`` is
    the row of the merged array that input row ``i`` ended up in.
    """
    points = as_points(points)
    n = points.shape[0]
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError("need one weight per point")
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return points.copy(), weights.copy(), np.arange(n)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, label = connected_components(adj, directed=False)
    first = {}
    index = np.empty(n, dtype=int)
    for i, lab in enumerate(label):
        if lab not in first:
            first[lab] = len(first)
        index[i] = first[lab]
    reps = np.zeros(len(first), dtype=int)
    for i in range(n - 1, -1, -1):
        reps[index[i]] = i
    merged = np.zeros(len(first))
    np.add.at(merged, index, weights)
    return points[reps].copy(), merged, index


@dataclass(frozen=True, eq=False)
class EmpiricalEmbedding:
    """sum_i weights[i] * phi(points[i]) for a fixed kernel."""

    points: np.ndarray
    weights: np.ndarray
    kernel: KernelSpec

    def __post_init__(self):
        pts, w, _ = merge_duplicates(self.points, self.weights)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_probability(self) -> bool:
        return abs(self.weights.sum() - 1.0) <= 1e-9 and bool(np.all(self.weights >= -1e-12))

    def __call__(self, x) -> np.ndarray:
        """Evaluate the embedding as a function: sum_i w_i k(z_i, x) at each row of ``x``."""
        return gram(self.kernel, x, self.points) @ self.weights


def embed_uniform(data, kernel: KernelSpec) -> EmpiricalEmbedding:
    data = as_points(data, "data")
    return EmpiricalEmbedding(data, np.full(data.shape[0], 1.0 / data.shape[0]), kernel)


def mmd_sq(P: EmpiricalEmbedding, Q: EmpiricalEmbedding) -> float:
    """||mu_P - mu_Q||_H^2 via the kernel trick."""
    if P.kernel != Q.kernel:
        raise ValueError("embeddings use different kernels")
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    a, b = P.weights, Q.weights
    val = a @ gram(P.kernel, P.points) @ a - 2.0 * (a @ gram(P.kernel, P.points, Q.points) @ b) \
        + b @ gram(Q.kernel, Q.points) @ b
    if val < -1e-9:
        raise ArithmeticError(f"squared MMD is negative ({val:.3e}); Gram matrix is not PSD")
    return max(float(val), 0.0)


@dataclass(frozen=True, eq=False)
class QuadConstraintCoeffs:
    Kz: np.ndarray
    b: np.ndarray
    c0: float
    radius_sq: float

    def __post_init__(self):
        Kz = np.asarray(self.Kz, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if Kz.ndim != 2 or Kz.shape[0] != Kz.shape[1] or b.shape != (Kz.shape[0],):
            raise ValueError("Kz must be N x N and b of length N")
        if self.radius_sq < 0:
            raise ValueError("radius_sq must be nonnegative")
        object.__setattr__(self, "Kz", Kz)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c0", float(self.c0))
        object.__setattr__(self, "radius_sq", float(self.radius_sq))

    @property
    def size(self) -> int:
        return self.b.shape[0]

    def value(self, alpha) -> float:
        alpha = np.asarray(alpha, dtype=float)
        return float(alpha @ self.Kz @ alpha - 2.0 * self.b @ alpha + self.c0)

    def with_radius_sq(self, radius_sq: float) -> "QuadConstraintCoeffs":
        return QuadConstraintCoeffs(self.Kz, self.b, self.c0, radius_sq)


def quad_coeffs(z, data, kernel: KernelSpec, eps: float) -> QuadConstraintCoeffs:
    """Coefficients of ||sum_i alpha_i phi(z_i) - (1/M) sum_j phi(x_j)||^2 <= eps^2."""
    z = as_points(z, "z")
    data = as_points(data, "data")
    if z.shape[1] != data.shape[1]:
        raise ValueError(f"dimension mismatch: {z.shape[1]} vs {data.shape[1]}")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return QuadConstraintCoeffs(
        Kz=gram(kernel, z),
        b=gram(kernel, z, data).mean(axis=1),
        c0=gram(kernel, data).mean(),
        radius_sq=eps**2,
    )


@dataclass(frozen=True, eq=False)
class MomentData:
    """First two moments E[x] and E[x x^T] of a distribution on R^n."""

    mean: np.ndarray
    second_moment: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        S = np.atleast_2d(np.asarray(self.second_moment, dtype=float))
        if m.ndim != 1 or S.shape != (m.size, m.size):
            raise ValueError("second moment must be n x n for a mean of length n")
        if np.max(np.abs(S - S.T)) > 1e-12:
            raise ValueError("second moment matrix is not symmetric")
        if np.linalg.eigvalsh(S - np.outer(m, m))[0] < -1e-8:
            raise ValueError("second moment minus mean outer product is not PSD")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "second_moment", S)

    @classmethod
    def from_samples(cls, data, weights=None) -> "MomentData":
        X = as_points(data, "data")
        w = np.full(X.shape[0], 1.0 / X.shape[0]) if weights is None else np.asarray(weights, float)
        S = (X * w[:, None]).T @ X
        return cls(w @ X, 0.5 * (S + S.T))


def poly_moment_quad(z, moments: MomentData, radius_sq: float = 0.0) -> QuadConstraintCoeffs:
    """Moment-matching constraint under the degree-2 polynomial kernel.

    Uses mu(.) = (.)^T E[xx^T] (.) + 2 E[x]^T (.) + 1 for the target embedding, so
    b_i = z_i^T S z_i + 2 m^T z_i + 1 and c0 = tr(S S) + 2 m^T m + 1.
    """
    z = as_points(z, "z")
    m, S = moments.mean, moments.second_moment
    if z.shape[1] != m.size:
        raise ValueError(f"dimension mismatch: {z.shape[1]} vs {m.size}")
    b = np.einsum("ij,jk,ik->i", z, S, z) + 2.0 * z @ m + 1.0
    c0 = np.trace(S @ S) + 2.0 * m @ m + 1.0
    return QuadConstraintCoeffs(gram(Polynomial(2), z), b, c0, radius_sq)

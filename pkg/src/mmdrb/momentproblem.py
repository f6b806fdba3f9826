"""Worst-case expected cost over an MMD ball around the empirical distribution.

The unknown distribution is restricted to Dirac mixtures on a finite set of
expansion points z, which turns the problem into a :class:`~mmdrb.solver.SimplexQcqp`.
Restricting the support can only shrink the feasible set, so every value
returned here is a lower bound on the worst case over all distributions, and
it increases as the expansion set grows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .embedding import DEDUP_TOL, MomentData, merge_duplicates, poly_moment_quad, quad_coeffs
from .kernel import KernelSpec, as_points, gram
from .solver import SimplexQcqp, Solution, SolverConfig, Status, solve

log = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    """No distribution on the expansion points satisfies the constraint."""

    def __init__(self, message: str, solution: Solution):
        super().__init__(message)
        self.solution = solution


# ---------------------------------------------------------------------------
# expansion points

@dataclass(frozen=True, eq=False)
class ExpansionPlan:
    """Axis-aligned uniform grid, plus the data and any explicit extra points.

    The grid may be omitted (all three grid fields ``None``) to use only data
    and ``extra_points``.
    """

    grid_lower: Optional[tuple] = None
    grid_upper: Optional[tuple] = None
    grid_counts: Optional[tuple] = None
    include_data: bool = True
    extra_points: Optional[np.ndarray] = None

    def __post_init__(self):
        given = [f is not None for f in (self.grid_lower, self.grid_upper, self.grid_counts)]
        if any(given) and not all(given):
            raise ValueError("grid_lower, grid_upper and grid_counts must be given together")
        if all(given):
            lo = tuple(float(v) for v in np.atleast_1d(self.grid_lower))
            hi = tuple(float(v) for v in np.atleast_1d(self.grid_upper))
            counts = tuple(int(v) for v in np.atleast_1d(self.grid_counts))
            if not len(lo) == len(hi) == len(counts):
                raise ValueError("grid bounds and counts must have one entry per dimension")
            if any(not (math.isfinite(a) and math.isfinite(b) and a < b) for a, b in zip(lo, hi)):
                raise ValueError(f"need finite grid_lower < grid_upper, got {lo} and {hi}")
            if any(k < 1 for k in counts):
                raise ValueError(f"grid counts must be >= 1, got {counts}")
            object.__setattr__(self, "grid_lower", lo)
            object.__setattr__(self, "grid_upper", hi)
            object.__setattr__(self, "grid_counts", counts)
        if self.extra_points is not None:
            object.__setattr__(self, "extra_points", as_points(self.extra_points, "extra_points"))
        if self.dim is not None and self.extra_points is not None and self.extra_points.shape[1] != self.dim:
            raise ValueError("extra_points dimension does not match the grid")
        if not all(given) and self.extra_points is None and not self.include_data:
            raise ValueError("plan produces no expansion points")

    @classmethod
    def grid(cls, lower, upper, counts, **kwargs) -> "ExpansionPlan":
        return cls(lower, upper, counts, **kwargs)

    @property
    def dim(self) -> Optional[int]:
        if self.grid_lower is not None:
            return len(self.grid_lower)
        if self.extra_points is not None:
            return self.extra_points.shape[1]
        return None

    def grid_points(self) -> Optional[np.ndarray]:
        if self.grid_lower is None:
            return None
        axes = [np.linspace(a, b, k) for a, b, k in zip(self.grid_lower, self.grid_upper, self.grid_counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _expansion(data: np.ndarray, plan: ExpansionPlan):
    """Deduplicated expansion points and, per data point, its row in them (or None)."""
    if plan.dim is not None and plan.dim != data.shape[1]:
        raise ValueError(f"dimension mismatch: plan is {plan.dim}-D, data is {data.shape[1]}-D")
    blocks, data_rows = [], None
    grid = plan.grid_points()
    if grid is not None:
        blocks.append(grid)
    if plan.include_data:
        start = sum(len(b) for b in blocks)
        data_rows = np.arange(start, start + len(data))
        blocks.append(data)
    if plan.extra_points is not None:
        blocks.append(plan.extra_points)
    points, _, index = merge_duplicates(np.vstack(blocks), tol=DEDUP_TOL)
    return points, (None if data_rows is None else index[data_rows])


def build_expansion_points(data, plan: ExpansionPlan) -> np.ndarray:
    """Grid points, then data (if included), then extra points, with near-duplicates merged."""
    return _expansion(as_points(data, "data"), plan)[0]


def farthest_point_order(points, start: int = 0) -> np.ndarray:
    """Greedy farthest-point ordering; every prefix is spread out over the set."""
    points = as_points(points)
    n = len(points)
    order = [start]
    dist = np.linalg.norm(points - points[start], axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(dist))
        order.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return np.asarray(order)


# ---------------------------------------------------------------------------
# costs

@dataclass(frozen=True)
class UpperBound:
    """Violation predicate for the half-space x[coord] <= bound (points on the boundary are fine)."""

    bound: float
    coord: int = 0

    def __call__(self, points) -> np.ndarray:
        return as_points(points)[:, self.coord] > self.bound


@dataclass(frozen=True)
class OutsideBall:
    """Violation predicate for the closed ball ||x - center|| <= radius."""

    radius: float
    center: Optional[tuple] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    def __call__(self, points) -> np.ndarray:
        points = as_points(points)
        center = np.zeros(points.shape[1]) if self.center is None else np.asarray(self.center, float)
        return np.linalg.norm(points - center, axis=1) > self.radius


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Cost values given directly, one per expansion point in order."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("tabulated costs must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class IndicatorViolation:
    """l(x) = 1 if ``predicate`` flags x as violating, else 0."""

    predicate: Callable


@dataclass(frozen=True, eq=False)
class PointwiseCost:
    """A bounded cost l(x) evaluated row by row; ``fn`` maps an (n, d) array to n values."""

    fn: Callable


CostFunction = Union[Tabulated, IndicatorViolation, PointwiseCost]


def cost_values(cost: CostFunction, points) -> np.ndarray:
    points = as_points(points)
    if isinstance(cost, Tabulated):
        if cost.values.size != len(points):
            raise ValueError(f"{cost.values.size} tabulated costs for {len(points)} points")
        return cost.values.copy()
    if isinstance(cost, IndicatorViolation):
        flags = np.asarray(cost.predicate(points))
        if flags.shape != (len(points),):
            raise ValueError("violation predicate must return one flag per point")
        return flags.astype(bool).astype(float)
    if isinstance(cost, PointwiseCost):
        vals = np.asarray(cost.fn(points), dtype=float).ravel()
        if vals.shape != (len(points),) or not np.all(np.isfinite(vals)):
            raise ValueError("cost function must return one finite value per point")
        return vals
    raise TypeError(f"unsupported cost {type(cost).__name__}")


# ---------------------------------------------------------------------------
# results

@dataclass(eq=False)
class WorstCaseResult:
    value: float
    weights: np.ndarray
    expansion_points: np.ndarray
    epsilon: float
    solution: Solution
    costs: np.ndarray
    empirical_value: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    @property
    def transport_table(self) -> list:
        """(point, weight) pairs, heaviest first; ties keep expansion order."""
        order = np.argsort(-self.weights, kind="stable")
        return [(self.expansion_points[i].copy(), float(self.weights[i])) for i in order]

    def transport_header(self) -> list:
        d = self.expansion_points.shape[1]
        return ["point", "weight"] if d == 1 else [f"x{i + 1}" for i in range(d)] + ["weight"]

    def transport_rows(self) -> list:
        return [[*map(float, p), w] for p, w in self.transport_table]

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "epsilon": self.epsilon,
            "empirical_value": self.empirical_value,
            "weights": self.weights.tolist(),
            "points": self.expansion_points.tolist(),
            "solution": self.solution.as_dict(),
            "diagnostics": self.diagnostics,
        }


def _result(sol: Solution, z, c, eps, empirical, **diag) -> WorstCaseResult:
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError(
            f"no distribution on the {len(z)} expansion points satisfies the constraint "
            f"(smallest discrepancy found {sol.diagnostics.get('q_min', math.nan):.3e})", sol)
    if sol.status is not Status.OPTIMAL:
        log.warning("solver stopped with status %s (certified gap %.3e)", sol.status.value, sol.gap)
    return WorstCaseResult(
        value=float(c @ sol.alpha),
        weights=sol.alpha,
        expansion_points=z,
        epsilon=float(eps),
        solution=sol,
        costs=c,
        empirical_value=float(empirical),
        diagnostics=diag,
    )


def worst_case_risk(data, kernel: KernelSpec, eps: float, cost: CostFunction, plan: ExpansionPlan,
                    solver_config: SolverConfig | None = None) -> WorstCaseResult:
    """max sum_i alpha_i l(z_i) over simplex weights within MMD distance ``eps`` of the data."""
    data = as_points(data, "data")
    if not eps >= 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    z, data_rows = _expansion(data, plan)
    c = cost_values(cost, z)
    quad = quad_coeffs(z, data, kernel, eps)
    empirical = math.nan
    alpha_emp = None
    if data_rows is not None:
        alpha_emp = np.bincount(data_rows, minlength=len(z)) / len(data)
        empirical = float(c @ alpha_emp)
        if eps == 0 and kernel.characteristic:
            # distinct points under a characteristic kernel: the empirical weights are the only
            # zero of the quadratic, so the feasible set is that single point
            value = float(c @ alpha_emp)
            sol = Solution(alpha_emp, value, 0.0, quad.value(alpha_emp) - quad.radius_sq,
                           Status.OPTIMAL, 0, value, {"empirical_weights": True})
            return _result(sol, z, c, eps, empirical)
    sol = solve(SimplexQcqp(c, quad), solver_config, start=alpha_emp)
    return _result(sol, z, c, eps, empirical)


def worst_case_violation_probability(data, kernel: KernelSpec, eps: float, violation_predicate: Callable,
                                     plan: ExpansionPlan,
                                     solver_config: SolverConfig | None = None) -> WorstCaseResult:
    """Worst-case probability of the event flagged by ``violation_predicate``."""
    return worst_case_risk(data, kernel, eps, IndicatorViolation(violation_predicate), plan, solver_config)


def worst_case_risk_known_moments(moments: MomentData, cost: CostFunction, z,
                                  solver_config: SolverConfig | None = None,
                                  radius_sq: float = 0.0) -> WorstCaseResult:
    """Worst-case cost over distributions on ``z`` whose first two moments are ``moments``.

    Matching under the degree-2 polynomial kernel is equivalent to matching the
    mean and second moment. With ``radius_sq = 0`` the match is enforced up to
    the solver's zero tolerance on the squared discrepancy.
    """
    z_in = as_points(z, "z")
    c_in = cost_values(cost, z_in)
    z_pts, _, index = merge_duplicates(z_in)
    c = np.empty(len(z_pts))
    c[index] = c_in
    if np.any(np.abs(c[index] - c_in) > 0):
        raise ValueError("duplicate expansion points carry different costs")
    quad = poly_moment_quad(z_pts, moments, radius_sq)
    sol = solve(SimplexQcqp(c, quad), solver_config)
    return _result(sol, z_pts, c, math.sqrt(radius_sq), math.nan)


# ---------------------------------------------------------------------------
# dual certificates

@dataclass(frozen=True, eq=False)
class DualCertificate:
    """RKHS function y = sum_i beta_i k(points_i, .)."""

    beta: np.ndarray
    points: np.ndarray
    kernel: KernelSpec

    def __post_init__(self):
        pts = as_points(self.points, "certificate points")
        beta = np.asarray(self.beta, dtype=float).ravel()
        if beta.shape != (len(pts),):
            raise ValueError("need one coefficient per certificate point")
        if not np.all(np.isfinite(beta)):
            raise ValueError("certificate coefficients must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "beta", beta)

    def __call__(self, x) -> np.ndarray:
        return gram(self.kernel, x, self.points) @ self.beta


def dual_value(cert: DualCertificate, data, eps: float) -> float:
    """<y, mu_hat> - eps ||y||, the dual objective of the worst-case problem."""
    data = as_points(data, "data")
    if data.shape[1] != cert.points.shape[1]:
        raise ValueError("certificate and data dimensions differ")
    inner = float(cert.beta @ gram(cert.kernel, cert.points, data).mean(axis=1))
    norm_sq = float(cert.beta @ gram(cert.kernel, cert.points) @ cert.beta)
    return inner - eps * math.sqrt(max(norm_sq, 0.0))


def dual_feasible(cert: DualCertificate, cost: CostFunction, test_points):
    """Check l - y >= 0 on finitely many test points.

    Returns ``(ok, margin)`` with margin = min_t l(t) - y(t) and ok when
    margin >= -1e-9. Passing is necessary for dual feasibility, not sufficient.
    """
    test_points = as_points(test_points, "test points")
    margin = float(np.min(cost_values(cost, test_points) - cert(test_points)))
    return margin >= -1e-9, margin

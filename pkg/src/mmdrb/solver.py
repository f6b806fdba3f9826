"""Linear maximization over the probability simplex under one convex quadratic constraint.

    maximize    c^T alpha
    subject to  alpha^T Q alpha - 2 b^T alpha + c0 <= r^2
                alpha >= 0, sum(alpha) = 1

:func:`solve` runs three stages: a feasibility test (projected gradient on the
quadratic), the vertex check (the unconstrained maximizer over the simplex is
the vertex at argmax c), and otherwise a primal-dual interior-point method with
a Mehrotra predictor-corrector, backed by a log-barrier Newton method when the
former fails to certify convergence. The returned point is always feasible. A
Lagrangian upper bound is certified along the way and reported as ``dual_value``.

:func:`oracle_solve` is a brute-force grid search used to check :func:`solve`
on small instances; apart from :func:`project_simplex` it shares no code with it.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize_scalar

from .embedding import QuadConstraintCoeffs

log = logging.getLogger(__name__)

_T_GROWTH = 150.0  # barrier parameter growth per centering stage
_STALL_ITERATIONS = 8  # interior-point iterations without gap progress before giving up


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class SolverConfig:
    tol_primal: float = 1e-8          # slack allowed on the quadratic by the infeasibility test
    tol_zero: float = 1e-9            # quadratic tolerance when the radius is (numerically) zero
    tol_gap: float = 1e-9             # target for the certified duality gap
    tol_accept: float = 1e-6          # largest certified gap still reported as optimal
    max_iterations: int = 100         # primal-dual interior-point iterations
    max_newton_steps: int = 1000      # Newton steps of the fallback barrier method
    max_inner_iterations: int = 10000  # projected-gradient iterations in the feasibility test
    jitter: float = 1e-10

    def __post_init__(self):
        for name, val in vars(self).items():
            if not val > 0:
                raise ValueError(f"SolverConfig.{name} must be positive, got {val}")


@dataclass(frozen=True, eq=False)
class SimplexQcqp:
    c: np.ndarray
    quad: QuadConstraintCoeffs

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        if c.size < 1:
            raise ValueError("need at least one expansion point")
        if c.shape != (self.quad.size,):
            raise ValueError(f"cost has length {c.size}, quadratic has size {self.quad.size}")
        if not np.all(np.isfinite(c)):
            raise ValueError("cost vector must be finite")
        object.__setattr__(self, "c", c)

    @property
    def size(self) -> int:
        return self.c.size


@dataclass(eq=False)
class Solution:
    alpha: np.ndarray
    value: float
    multiplier: float
    constraint_residual: float
    status: Status
    iterations: int
    dual_value: float = math.inf
    diagnostics: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.dual_value - self.value

    def as_dict(self) -> dict:
        return {
            "status": self.status.value,
            "value": self.value,
            "multiplier": self.multiplier,
            "constraint_residual": self.constraint_residual,
            "iterations": self.iterations,
            "dual_value": self.dual_value,
            "diagnostics": self.diagnostics,
        }


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {a >= 0, sum(a) = 1} by sorting and thresholding."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("projection needs a nonempty finite vector")
    v = v - v.max()  # shift invariance; keeps the cumulative sums small
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    a = np.maximum(v - css[rho] / (rho + 1), 0.0)
    return a / a.sum()


def _lipschitz(Q: np.ndarray, steps: int = 50) -> float:
    # power iteration from a fixed start; capped by the max-row-sum bound on the spectral radius
    x = np.ones(Q.shape[0]) / math.sqrt(Q.shape[0])
    est = 0.0
    for _ in range(steps):
        y = Q @ x
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            break
        est = float(x @ y)
        x = y / nrm
    bound = float(np.abs(Q).sum(axis=1).max())
    return 2.0 * max(min(1.1 * est, bound), 1e-300)


def min_quadratic_over_simplex(quad: QuadConstraintCoeffs, config: SolverConfig | None = None,
                               start=None, target: float | None = None,
                               gap_tol: float = 1e-12, stop_above: float | None = None):
    """Minimize q over the simplex by accelerated projected gradient.

    Starts from the uniform vector (or ``start``) and never returns a point
    worse than the start. Stops once q <= ``target``, once the Frank-Wolfe gap
    is at most ``gap_tol``, or once the certified lower bound exceeds
    ``stop_above``; when the bound shows ``target`` is out of reach it stops
    as soon as the gap is below a tenth of the slack to ``stop_above``. Returns
    ``(alpha, q_min, lower_bound, iterations)``; ``lower_bound`` is the
    Frank-Wolfe bound on the true minimum at the returned point.
    """
    config = config or SolverConfig()
    Q, b = quad.Kz, quad.b
    n = quad.size
    alpha = np.full(n, 1.0 / n) if start is None else project_simplex(start)
    q = quad.value(alpha)

    def fw_lower(a, qa):
        g = 2.0 * (Q @ a - b)
        return qa - (g @ a - g.min())

    if n == 1 or (target is not None and q <= target):
        return alpha, q, fw_lower(alpha, q), 0
    L = _lipschitz(Q)
    best, q_best = alpha.copy(), q
    y, t = alpha.copy(), 1.0
    it = 0
    for it in range(1, config.max_inner_iterations + 1):
        if it % 10 == 1:
            g = 2.0 * (Q @ best - b)
            fw_gap = g @ best - g.min()
            lower = q_best - fw_gap
            if fw_gap <= gap_tol or (stop_above is not None and lower > stop_above):
                break
            # target out of reach: stop once the remaining improvement is small next to the slack
            if (target is not None and stop_above is not None and lower > target
                    and fw_gap <= 0.1 * (stop_above - q_best)):
                break
        grad = 2.0 * (Q @ y - b)
        nxt = project_simplex(y - grad / L)
        q_nxt = quad.value(nxt)
        if q_nxt > q:
            # function-value restart
            y, t = alpha.copy(), 1.0
            continue
        t_nxt = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = nxt + ((t - 1.0) / t_nxt) * (nxt - alpha)
        alpha, q, t = nxt, q_nxt, t_nxt
        if q < q_best:
            best, q_best = alpha.copy(), q
        if target is not None and q_best <= target:
            break
    return best, q_best, fw_lower(best, q_best), it


def _repair_psd(Q: np.ndarray, config: SolverConfig):
    """Return (Q used for the constraint, PSD matrix used in Newton systems)."""
    Q = 0.5 * (Q + Q.T)
    w, U = np.linalg.eigh(Q)
    if w[0] < -1e-4:
        raise ValueError(f"quadratic is far from PSD (min eigenvalue {w[0]:.3e}); check the kernel")
    if w[0] < -1e-8:
        shift = -w[0] + config.jitter
        log.warning("Gram matrix min eigenvalue %.3e; adding %.3e to the diagonal", w[0], shift)
        Q = Q + shift * np.eye(Q.shape[0])
        w = w + shift
    return Q, (U * np.clip(w, 0.0, None)) @ U.T


def _interior_start(quad, alpha_f, q_f, r2):
    """Blend a feasible point with the uniform vector so every weight is positive."""
    n = quad.size
    u = np.full(n, 1.0 / n)
    d = u - alpha_f
    A2 = float(d @ quad.Kz @ d)
    B1 = float(2.0 * (quad.Kz @ alpha_f - quad.b) @ d)
    slack = 0.5 * (r2 - q_f)
    if A2 > 0:
        theta = (-B1 + math.sqrt(B1 * B1 + 4.0 * A2 * slack)) / (2.0 * A2)
    else:
        theta = math.inf if B1 <= 0 else slack / B1
    theta = min(0.5, theta)
    for _ in range(60):
        a0 = alpha_f + theta * d
        if quad.value(a0) < r2 and np.all(a0 > 0):
            return a0
        theta *= 0.5
    raise ArithmeticError("could not construct a strictly feasible interior start")


def _upper_bound(c, lam, g, alpha, w):
    """Lagrangian bound max_a [c^T a - l (q(a) - r^2)] over the simplex, linearized at alpha.

    By concavity of the Lagrangian in a, the value at any multiplier l >= 0 is at most
    B(l) = max_i [c_i + l (w + g^T alpha - g_i)]; B is convex and piecewise linear in l,
    so it is minimized over a bracket around the current multiplier.
    """
    slope = w + g @ alpha - g
    B = lambda l: float(np.max(c + l * slope))
    res = minimize_scalar(B, bounds=(0.0, 4.0 * lam + 1e-12), method="bounded",
                          options={"xatol": 1e-14 * (1.0 + lam)})
    return min(B(lam), B(0.0), float(res.fun))


def _retract(quad_args, anchor, q_anchor, x):
    """Point of the segment [anchor, x] closest to x with q <= r^2; anchor must be strictly feasible."""
    Q, b, c0, r2 = quad_args
    if float(x @ Q @ x - 2.0 * b @ x + c0) <= r2:
        return x
    d = x - anchor
    a2 = float(d @ Q @ d)
    b1 = float(2.0 * (Q @ anchor - b) @ d)
    slack = r2 - q_anchor
    if a2 > 0:
        tau = (-b1 + math.sqrt(b1 * b1 + 4.0 * a2 * slack)) / (2.0 * a2)
    else:
        tau = slack / b1
    return anchor + min(1.0, max(tau, 0.0)) * d


def _primal_dual(c, Q, Qn, b, c0, r2, alpha, config):
    """Infeasible primal-dual interior point with Mehrotra predictor-corrector.

    The constraint is written q(a) + s = r^2 with an explicit slack s > 0, so
    steps are limited only by the positivity of a, z, s and the multiplier.
    Iterates may leave the feasible set; each is pulled back towards the start
    point before it is compared against the best value found.
    """
    n = c.size
    q = lambda a: float(a @ Q @ a - 2.0 * b @ a + c0)
    anchor, q_anchor = alpha.copy(), q(alpha)
    z = np.ones(n)
    lam = 1.0
    s = r2 - q_anchor
    g = 2.0 * (Q @ alpha - b)
    nu = float(np.mean(c - lam * g + z))
    best_alpha, best_val = alpha.copy(), float(c @ alpha)
    best_bound, best_lam = math.inf, lam
    best_gap, stalled = math.inf, 0
    it = 0
    for it in range(1, config.max_iterations + 1):
        qa = q(alpha)
        feas = _retract((Q, b, c0, r2), anchor, q_anchor, alpha)
        val = float(c @ feas)
        if val > best_val:
            best_alpha, best_val = feas, val
        bound = _upper_bound(c, lam, g, alpha, r2 - qa)
        if bound < best_bound:
            best_bound, best_lam = bound, lam
        log.debug("pd it=%d value=%.12g bound=%.12g lam=%.3e s=%.3e", it, best_val, best_bound, lam, s)
        if best_bound - best_val <= config.tol_gap:
            break
        # round-off floor: the iterates keep moving but the certified gap no longer shrinks
        if best_bound - best_val < best_gap:
            best_gap, stalled = best_bound - best_val, 0
        else:
            stalled += 1
            if stalled >= _STALL_ITERATIONS:
                break

        rd = -c + lam * g - z + nu
        rp = qa + s - r2
        mu = (z @ alpha + lam * s) / (n + 1)
        d = np.sqrt(alpha / z)
        H = 2.0 * lam * Qn * np.outer(d, d)
        H[np.diag_indices(n)] += 1.0
        cf = cho_factor(H, check_finite=False)
        v = math.sqrt(lam / s) * d * g
        Hv = cho_solve(cf, v)
        Hd = cho_solve(cf, d)
        denom = 1.0 + v @ Hv

        def solve_scaled(r):
            x = cho_solve(cf, r)
            return x - Hv * (v @ x) / denom

        Md = Hd - Hv * (v @ Hd) / denom

        def direction(target_z, target_s):
            rhs = -rd - g * (lam * rp + target_s - lam * s) / s - z + target_z / alpha
            u = solve_scaled(d * rhs)
            dnu = (d @ u) / (d @ Md)
            da = d * (u - dnu * Md)
            da -= da.sum() / n  # keep sum(alpha) fixed against round-off
            dz = -z + target_z / alpha - (z / alpha) * da
            dl = (lam / s) * (g @ da + rp) + (target_s - lam * s) / s
            ds = (target_s - lam * s - s * dl) / lam
            return da, dz, dl, ds, dnu

        def max_step(da, dz, dl, ds):
            t = 1.0
            for x, dx in ((alpha, da), (z, dz)):
                neg = dx < 0
                if neg.any():
                    t = min(t, float(np.min(-x[neg] / dx[neg])))
            for x, dx in ((lam, dl), (s, ds)):
                if dx < 0:
                    t = min(t, -x / dx)
            return t

        da, dz, dl, ds, _ = direction(0.0, 0.0)
        t_aff = max_step(da, dz, dl, ds)
        mu_aff = ((z + t_aff * dz) @ (alpha + t_aff * da) + (lam + t_aff * dl) * (s + t_aff * ds)) / (n + 1)
        sigma = min(1.0, (mu_aff / mu) ** 3)
        da, dz, dl, ds, dnu = direction(sigma * mu - dz * da, sigma * mu - dl * ds)
        t = 0.99 * max_step(da, dz, dl, ds)
        alpha = alpha + t * da
        alpha /= alpha.sum()
        z = z + t * dz
        lam += t * dl
        s += t * ds
        nu += t * dnu
        g = 2.0 * (Q @ alpha - b)
        if not (np.all(np.isfinite(alpha)) and np.isfinite(lam) and np.isfinite(s)):
            break
    return best_alpha, best_lam, best_bound, it


def _barrier(c, Q, Qn, b, c0, r2, alpha, config, t0=None):
    """Log-barrier path following for min -t c^T a - log(r^2 - q(a)) - sum log a_i on sum(a) = 1.

    Newton systems are solved in the variables a / alpha, where the Hessian reads
    I + (2 / w) Qn o (alpha alpha^T) + rank one, which stays well conditioned as
    weights approach zero.
    """
    n = c.size
    q = lambda a: float(a @ Q @ a - 2.0 * b @ a + c0)

    best_alpha, best_val = alpha.copy(), float(c @ alpha)
    best_bound, best_lam = math.inf, 0.0
    t = float(n) if t0 is None else t0
    newton = 0
    while newton < config.max_newton_steps:
        for _ in range(config.max_newton_steps - newton):
            newton += 1
            w = r2 - q(alpha)
            g = 2.0 * (Q @ alpha - b)
            grad = -t * c - 1.0 / alpha + g / w
            H = (2.0 / w) * Qn * np.outer(alpha, alpha)
            H[np.diag_indices(n)] += 1.0
            try:
                cf = cho_factor(H, check_finite=False)
            except LinAlgError:
                H[np.diag_indices(n)] += 1e-10 * np.abs(H).max()
                cf = cho_factor(H, check_finite=False)
            v = alpha * g / w
            Hv = cho_solve(cf, v)
            denom = 1.0 + v @ Hv

            def hinv(r):
                x = cho_solve(cf, r)
                return x - Hv * (v @ x) / denom

            u1 = hinv(alpha * grad)
            u2 = hinv(alpha)
            step = -alpha * (u1 - ((alpha @ u1) / (alpha @ u2)) * u2)
            step -= step.sum() / n  # keep sum(a) fixed against round-off
            decrement = -(grad @ step)
            if decrement <= 2e-10:
                break
            # barrier decrease evaluated in differenced form; F itself loses all digits at large t
            cs, gs, sqs = float(c @ step), float(g @ step), float(step @ Q @ step)
            ratio = step / alpha
            s = 1.0
            for _ in range(60):
                dw = -(s * gs + s * s * sqs) / w
                if dw > -1.0 and np.all(s * ratio > -1.0):
                    dF = -t * s * cs - math.log1p(dw) - np.log1p(s * ratio).sum()
                    if dF <= -0.25 * s * decrement and q(alpha + s * step) < r2:
                        break
                s *= 0.5
            else:
                break
            cand = alpha + s * step
            alpha = cand
            val = float(c @ alpha)
            if val > best_val and q(alpha) < r2:
                best_alpha, best_val = alpha.copy(), val
        w = r2 - q(alpha)
        lam = 1.0 / (t * w)
        bound = _upper_bound(c, lam, 2.0 * (Q @ alpha - b), alpha, w)
        log.debug("barrier t=%.3e newton=%d value=%.12g bound=%.12g", t, newton, best_val, bound)
        if bound < best_bound:
            best_bound, best_lam = bound, lam
        if best_bound - best_val <= config.tol_gap or (n + 1) / t < 1e-3 * config.tol_gap:
            break
        t *= _T_GROWTH
    return best_alpha, best_lam, best_bound, newton


def _pack(problem, Q, alpha, r2, lam, status, iterations, dual_value, **diag):
    alpha = np.clip(alpha, 0.0, None)
    alpha = alpha / alpha.sum()
    quad = problem.quad
    qa = float(alpha @ Q @ alpha - 2.0 * quad.b @ alpha + quad.c0)
    return Solution(
        alpha=alpha,
        value=float(problem.c @ alpha),
        multiplier=float(lam),
        constraint_residual=qa - quad.radius_sq,
        status=status,
        iterations=int(iterations),
        dual_value=float(dual_value),
        diagnostics=diag,
    )


def solve(problem: SimplexQcqp, config: SolverConfig | None = None, start=None) -> Solution:
    """Maximize c^T alpha over the simplex subject to the quadratic constraint.

    ``start`` is an optional point of the simplex known to be (nearly) feasible;
    it only speeds up the feasibility stage.
    """
    config = config or SolverConfig()
    quad = problem.quad
    n = problem.size
    c = problem.c
    r2 = quad.radius_sq
    Q, Qn = _repair_psd(quad.Kz, config)
    work = QuadConstraintCoeffs(Q, quad.b, quad.c0, r2)

    # (i) feasibility
    candidates = [np.full(n, 1.0 / n)]
    if start is not None:
        candidates.append(project_simplex(start))
    alpha_f = min(candidates, key=work.value)
    q_f = work.value(alpha_f)
    pg_iters = 0
    target = 0.5 * r2 if r2 > 0 else None
    if target is None or q_f > target:
        alpha_f, q_f, _, pg_iters = min_quadratic_over_simplex(
            work, config, alpha_f, target, gap_tol=0.1 * config.tol_zero,
            stop_above=r2 + config.tol_primal)
    if q_f > r2 + config.tol_primal:
        return _pack(problem, Q, alpha_f, r2, 0.0, Status.INFEASIBLE, pg_iters, math.nan,
                     q_min=q_f, note="min of the quadratic over the simplex exceeds radius^2")

    zero_path = r2 - q_f <= config.tol_zero
    r2_eff = q_f + config.tol_zero if zero_path else r2
    diag = {"q_min_found": q_f, "zero_radius_path": zero_path, "effective_radius_sq": r2_eff}

    # (ii) the LP maximizer over the simplex is a vertex; ties go to the lowest index
    cmax = c.max()
    for i in np.flatnonzero(c == cmax):
        if Q[i, i] - 2.0 * quad.b[i] + quad.c0 <= r2_eff:
            e = np.zeros(n)
            e[i] = 1.0
            return _pack(problem, Q, e, r2, 0.0, Status.OPTIMAL, pg_iters, cmax,
                         saturated=True, **diag)
    if n == 1 or cmax == c.min():
        # every feasible point attains the same value
        return _pack(problem, Q, alpha_f, r2, 0.0, Status.OPTIMAL, pg_iters, cmax, **diag)

    # (iii) interior point on the rescaled cost; the argmax is invariant under c -> (c - cmin) / span
    span = cmax - c.min()
    c_s = (c - c.min()) / span
    a0 = _interior_start(QuadConstraintCoeffs(Q, quad.b, quad.c0, r2_eff), alpha_f, q_f, r2_eff)
    args = (c_s, Q, Qn, quad.b, quad.c0, r2_eff)
    try:
        alpha, lam, bound, it = _primal_dual(*args, a0, config)
    except (LinAlgError, ValueError, ZeroDivisionError) as exc:
        log.debug("primal-dual stage failed: %s", exc)
        alpha, lam, bound, it = a0, 0.0, math.inf, config.max_iterations
    diag["interior_iterations"] = it
    value = float(c_s @ alpha)
    if bound - value > 100.0 * config.tol_gap:
        # barrier path following from the best point so far; slower but always converges
        q_a = float(alpha @ Q @ alpha - 2.0 * quad.b @ alpha + quad.c0)
        start = alpha if np.all(alpha > 0) and q_a < r2_eff else a0
        t0 = (n + 1) / max(bound - value, 1e-6) if math.isfinite(bound) else None
        b_alpha, b_lam, b_bound, newton = _barrier(*args, start, config, t0)
        diag["newton_iterations"] = newton
        if c_s @ b_alpha >= value:
            alpha, lam = b_alpha, b_lam
        bound = min(bound, b_bound)
    sol = _pack(problem, Q, alpha, r2, lam * span, Status.OPTIMAL,
                pg_iters + it + diag.get("newton_iterations", 0), c.min() + span * bound, **diag)
    if not sol.gap <= config.tol_accept:
        sol.status = Status.MAX_ITERATIONS
    return sol


# ---------------------------------------------------------------------------
# brute-force oracle

def _simplex_grid(n: int, steps: int) -> np.ndarray:
    rows = []
    for bars in itertools.combinations(range(steps + n - 1), n - 1):
        edges = (-1,) + bars + (steps + n - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(n)])
    return np.asarray(rows, dtype=float) / steps


def _lagrangian_argmax(c, Q, b, lam, faces):
    """argmax over the simplex of c^T a - lam a^T Q a + 2 lam b^T a, by enumerating faces.

    Every face contributes its stationary point when that point has nonnegative
    weights; the best candidate is the global maximizer of the concave objective.
    """
    n = c.size
    best, best_f = None, -math.inf
    for face in faces:
        k = len(face)
        A = np.zeros((k + 1, k + 1))
        A[:k, :k] = 2.0 * lam * Q[np.ix_(face, face)]
        A[:k, k] = A[k, :k] = 1.0
        rhs = np.append(c[face] + 2.0 * lam * b[face], 1.0)
        try:
            sol = np.linalg.solve(A, rhs)[:k]
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(A, rhs, rcond=None)[0][:k]
        if np.any(sol < -1e-12) or abs(sol.sum() - 1.0) > 1e-9:
            continue
        a = np.zeros(n)
        a[face] = np.clip(sol, 0.0, None)
        a /= a.sum()
        f = float(c @ a - lam * (a @ Q @ a - 2.0 * b @ a))
        if f > best_f:
            best, best_f = a, f
    return best


def oracle_solve(problem: SimplexQcqp, grid_resolution: float | None = None,
                 polish_steps: int = 200) -> Solution:
    """Enumerate a simplex grid and keep the best feasible point, then polish it.

    The polish bisects on the constraint multiplier, maximizing the Lagrangian
    exactly over every face of the simplex. Infeasibility is declared when the
    least-q grid point, refined by ``polish_steps`` projected-gradient steps,
    still violates the constraint.
    """
    n = problem.size
    if n > 5:
        raise ValueError("oracle_solve enumerates the simplex grid and supports N <= 5")
    if grid_resolution is None:
        grid_resolution = 0.01 if n <= 3 else 0.05
    quad = problem.quad
    Q, b, c0, r2, c = quad.Kz, quad.b, quad.c0, quad.radius_sq, problem.c
    qf = lambda a: float(a @ Q @ a - 2.0 * b @ a + c0)

    grid = _simplex_grid(n, int(round(1.0 / grid_resolution)))
    qs = np.einsum("ij,jk,ik->i", grid, Q, grid) - 2.0 * grid @ b + c0

    least = grid[np.argmin(qs)]
    step = 1.0 / (2.0 * np.linalg.norm(Q) + 1e-300)
    for _ in range(polish_steps):
        trial = project_simplex(least - step * 2.0 * (Q @ least - b))
        if qf(trial) <= qf(least):
            least = trial
    if qf(least) > r2 + 1e-8:
        return Solution(least, float(c @ least), 0.0, qf(least) - r2, Status.INFEASIBLE,
                        len(grid) + polish_steps)

    feasible = np.flatnonzero(qs <= r2)
    best = grid[feasible[np.argmax(grid[feasible] @ c)]] if feasible.size else least
    if c @ least > c @ best:
        best = least

    faces = [list(f) for k in range(1, n + 1) for f in itertools.combinations(range(n), k)]
    lam_hi = 1.0
    for _ in range(200):
        a_hi = _lagrangian_argmax(c, Q, b, lam_hi, faces)
        if a_hi is not None and qf(a_hi) <= r2:
            break
        lam_hi *= 2.0
    else:
        a_hi = None
    if a_hi is not None:
        lam_lo = 0.0
        for _ in range(polish_steps):
            mid = 0.5 * (lam_lo + lam_hi)
            if not lam_lo < mid < lam_hi or lam_hi - lam_lo <= 1e-13 * lam_hi:
                break
            a_mid = _lagrangian_argmax(c, Q, b, mid, faces)
            if a_mid is not None and qf(a_mid) <= r2:
                lam_hi, a_hi = mid, a_mid
            else:
                lam_lo = mid
        if c @ a_hi > c @ best:
            best = a_hi
    return Solution(best, float(c @ best), 0.0, qf(best) - r2, Status.OPTIMAL, len(grid) + polish_steps)

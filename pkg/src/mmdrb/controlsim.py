"""Van der Pol scenario ensembles and their per-step worst-case violation probability.

    x1' = x2
    x2' = -d (1 - x1^2) x2 - x1 + u,    |u| <= 40

Controls are piecewise constant over equal control steps; each step is
integrated with a fixed number of classical Runge-Kutta substeps.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .kernel import KernelSpec
from .momentproblem import ExpansionPlan, WorstCaseResult, worst_case_violation_probability
from .solver import SolverConfig

U_MAX = 40.0


@dataclass(frozen=True)
class VdpParams:
    damping: float = 0.1

    def __post_init__(self):
        if not math.isfinite(self.damping):
            raise ValueError("damping must be finite")


@dataclass(frozen=True)
class ScenarioConfig:
    mean: tuple = (0.5, 0.0)
    covariance_diag: tuple = (0.01**2, 0.1**2)
    scenarios: int = 50
    horizon: float = 1.0
    steps: int = 10
    substeps: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "covariance_diag", tuple(float(v) for v in self.covariance_diag))
        if len(self.mean) != 2 or len(self.covariance_diag) != 2:
            raise ValueError("mean and covariance diagonal must have two entries")
        if any(v < 0 or not math.isfinite(v) for v in self.covariance_diag):
            raise ValueError("covariance entries must be finite and nonnegative")
        if self.scenarios < 1 or self.steps < 1 or self.substeps < 1:
            raise ValueError("scenarios, steps and substeps must be >= 1")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True, eq=False)
class ScenarioEnsemble:
    times: np.ndarray
    states: np.ndarray   # (steps + 1, scenarios, 2)
    control: np.ndarray  # (steps,)

    def __post_init__(self):
        if self.states.ndim != 3 or self.states.shape[2] != 2:
            raise ValueError("states must have shape (steps + 1, scenarios, 2)")
        if len(self.times) != self.states.shape[0] or len(self.control) != self.states.shape[0] - 1:
            raise ValueError("times, states and control lengths disagree")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("ensemble contains non-finite states")

    @property
    def scenarios(self) -> int:
        return self.states.shape[1]


def vdp_derivative(state, u: float, params: VdpParams = VdpParams()) -> np.ndarray:
    """Time derivative for one state (2,) or a batch (..., 2)."""
    state = np.asarray(state, dtype=float)
    x1, x2 = state[..., 0], state[..., 1]
    return np.stack([x2, -params.damping * (1.0 - x1 * x1) * x2 - x1 + u], axis=-1)


def check_control(control, steps: int) -> np.ndarray:
    u = np.asarray(control, dtype=float).ravel()
    if u.size != steps:
        raise ValueError(f"control has {u.size} entries, expected {steps}")
    if not np.all(np.isfinite(u)):
        raise ValueError("control contains non-finite values")
    bad = np.flatnonzero(np.abs(u) > U_MAX)
    if bad.size:
        raise ValueError(f"control step {bad[0]} is {u[bad[0]]}, outside [-{U_MAX}, {U_MAX}]")
    return u


def rk4_propagate(initial, control, config: ScenarioConfig,
                  params: VdpParams = VdpParams()) -> np.ndarray:
    """Integrate from ``initial`` (shape (2,) or (M, 2)); returns states at every control step."""
    u = check_control(control, config.steps)
    x = np.array(initial, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("states must have two coordinates")
    h = config.dt / config.substeps
    out = np.empty((config.steps + 1,) + x.shape)
    out[0] = x
    f = lambda s, uk: vdp_derivative(s, uk, params)
    for k in range(config.steps):
        # overflow is reported below with the step index
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(config.substeps):
                k1 = f(x, u[k])
                k2 = f(x + 0.5 * h * k1, u[k])
                k3 = f(x + 0.5 * h * k2, u[k])
                k4 = f(x + h * k3, u[k])
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise ArithmeticError(f"non-finite state after control step {k}")
        out[k + 1] = x
    return out


def sample_initial_states(config: ScenarioConfig) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    noise = rng.standard_normal((config.scenarios, 2))
    return np.asarray(config.mean) + noise * np.sqrt(config.covariance_diag)


def simulate_ensemble(config: ScenarioConfig, control, params: VdpParams = VdpParams()) -> ScenarioEnsemble:
    """Sample initial states with the configured seed and propagate them under a shared control."""
    u = check_control(control, config.steps)
    states = rk4_propagate(sample_initial_states(config), u, config, params)
    return ScenarioEnsemble(config.times, states, u)


def heuristic_control(config: ScenarioConfig, params: VdpParams = VdpParams(),
                      gain: float = 3.0, target: float = 1.4) -> np.ndarray:
    """Open-loop saturated proportional law u_k = clip(gain (target - x1_k), -40, 40) on the nominal path."""
    x = np.asarray(config.mean, dtype=float)
    step_cfg = ScenarioConfig(config.mean, config.covariance_diag, 1, config.dt, 1, config.substeps)
    u = np.empty(config.steps)
    for k in range(config.steps):
        u[k] = np.clip(gain * (target - x[0]), -U_MAX, U_MAX)
        x = rk4_propagate(x, u[k:k + 1], step_cfg, params)[-1]
    return u


def rk4_convergence_order(initial, control, config: ScenarioConfig, params: VdpParams = VdpParams(),
                          refine: int = 100) -> float:
    """Observed order log2(e(h) / e(h/2)) of the final-state error against a ``refine``-times finer run."""
    final = lambda s: rk4_propagate(
        initial, control, ScenarioConfig(config.mean, config.covariance_diag, 1, config.horizon,
                                         config.steps, s), params)[-1]
    ref = final(config.substeps * refine)
    e1 = np.linalg.norm(final(config.substeps) - ref)
    e2 = np.linalg.norm(final(2 * config.substeps) - ref)
    return math.log2(e1 / e2)


DEFAULT_PLAN = ExpansionPlan((-0.5, -0.5), (2.0, 2.0), (20, 20))


def local_plan(states, margin: float = 0.5, counts: Sequence[int] = (20, 20),
               include_data: bool = True) -> ExpansionPlan:
    """Grid over the bounding box of ``states`` widened by ``margin`` on every side."""
    states = np.asarray(states, dtype=float)
    lo = states.min(axis=0) - margin
    hi = states.max(axis=0) + margin
    return ExpansionPlan(tuple(lo), tuple(hi), tuple(counts), include_data=include_data)


PlanLike = Union[ExpansionPlan, Callable[[np.ndarray], ExpansionPlan]]
KernelLike = Union[KernelSpec, Callable[[np.ndarray], KernelSpec]]


def per_step_worst_case(ensemble: ScenarioEnsemble, kernel: KernelLike, eps: float,
                        constraint: Callable, plan: PlanLike = DEFAULT_PLAN,
                        solver_config: SolverConfig | None = None,
                        max_workers: int | None = None) -> list:
    """One worst-case violation result per time step, treating that step's states as data.

    ``kernel`` and ``plan`` may be callables receiving the step's states, e.g.
    a per-step median-heuristic bandwidth or :func:`local_plan`.
    """

    def one(k: int) -> WorstCaseResult:
        states = ensemble.states[k]
        kern = kernel(states) if callable(kernel) else kernel
        pl = plan(states) if callable(plan) else plan
        return worst_case_violation_probability(states, kern, eps, constraint, pl, solver_config)

    steps = range(ensemble.states.shape[0])
    if max_workers == 1:
        return [one(k) for k in steps]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, steps))


# ---------------------------------------------------------------------------
# CSV row formats

ENSEMBLE_HEADER = ["time", "scenario_id", "x1", "x2"]
CONTROL_HEADER = ["step", "u"]
SERIES_HEADER = ["time", "value", "empirical_freq"]


def ensemble_rows(ensemble: ScenarioEnsemble) -> list:
    return [[float(t), j, float(x[0]), float(x[1])]
            for t, step in zip(ensemble.times, ensemble.states) for j, x in enumerate(step)]


def ensemble_from_rows(rows, control) -> ScenarioEnsemble:
    """Inverse of :func:`ensemble_rows`; rows are (time, scenario_id, x1, x2)."""
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError("ensemble rows need four columns: time, scenario_id, x1, x2")
    times = np.unique(arr[:, 0])
    ids = np.unique(arr[:, 1]).astype(int)
    if len(arr) != len(times) * len(ids):
        raise ValueError("ensemble must list every scenario at every time")
    states = np.empty((len(times), len(ids), 2))
    ti = np.searchsorted(times, arr[:, 0])
    si = np.searchsorted(ids, arr[:, 1].astype(int))
    states[ti, si] = arr[:, 2:]
    return ScenarioEnsemble(times, states, np.asarray(control, dtype=float))


def control_rows(control) -> list:
    return [[k, float(u)] for k, u in enumerate(control)]


def control_from_rows(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("control rows need two columns: step, u")
    order = np.argsort(arr[:, 0], kind="stable")
    if not np.array_equal(arr[order, 0], np.arange(len(arr))):
        raise ValueError("control steps must be 0, 1, ..., steps - 1")
    return arr[order, 1]


def series_rows(ensemble: ScenarioEnsemble, results, constraint: Callable) -> list:
    return [[float(t), r.value, float(np.mean(constraint(s)))]
            for t, s, r in zip(ensemble.times, ensemble.states, results)]

import numpy as np
import pytest

from mmdrb.embedding import MomentData
from mmdrb.kernel import Gaussian, Polynomial, median_heuristic
from mmdrb.momentproblem import (DualCertificate, ExpansionPlan, IndicatorViolation, InfeasibleError,
                                 OutsideBall, PointwiseCost, Tabulated, UpperBound, build_expansion_points,
                                 cost_values, dual_feasible, dual_value, farthest_point_order,
                                 worst_case_risk, worst_case_risk_known_moments,
                                 worst_case_violation_probability)
from mmdrb.solver import Status


@pytest.fixture
def normal_data():
    return np.random.default_rng(3).normal(size=(30, 1))


# --- expansion points ---------------------------------------------------------

def test_expansion_point_counts():
    plan = ExpansionPlan((0.0,), (5.0,), (100,))
    assert len(build_expansion_points([[1.01], [2.02]], plan)) == 102
    no_data = ExpansionPlan((0.0,), (5.0,), (100,), include_data=False)
    np.testing.assert_array_equal(build_expansion_points([[1.01]], no_data), no_data.grid_points())
    # 0.0 is a grid node
    assert len(build_expansion_points([[0.0], [2.02]], plan)) == 101


def test_expansion_order_and_extras():
    plan = ExpansionPlan((0.0,), (1.0,), (2,), extra_points=[[7.0], [0.5]])
    z = build_expansion_points([[0.5], [3.0]], plan)
    assert z[:, 0].tolist() == [0.0, 1.0, 0.5, 3.0, 7.0]
    only_extra = ExpansionPlan(extra_points=[[1.0], [2.0]], include_data=False)
    assert build_expansion_points([[9.0]], only_extra)[:, 0].tolist() == [1.0, 2.0]


def test_plan_grid_is_cartesian():
    g = ExpansionPlan((0.0, 10.0), (1.0, 12.0), (2, 3)).grid_points()
    assert g.shape == (6, 2)
    assert g.tolist()[:3] == [[0.0, 10.0], [0.0, 11.0], [0.0, 12.0]]


def test_plan_validation():
    with pytest.raises(ValueError):
        ExpansionPlan((1.0,), (0.0,), (5,))
    with pytest.raises(ValueError):
        ExpansionPlan((0.0,), (1.0,), (0,))
    with pytest.raises(ValueError):
        ExpansionPlan((0.0,), (1.0,), None)
    with pytest.raises(ValueError):
        ExpansionPlan(include_data=False)
    with pytest.raises(ValueError):
        build_expansion_points([[0.0, 0.0]], ExpansionPlan((0.0,), (1.0,), (3,)))


def test_farthest_point_order_is_a_permutation():
    pts = np.linspace(0, 1, 11)[:, None]
    order = farthest_point_order(pts)
    assert sorted(order.tolist()) == list(range(11))
    assert order[:3].tolist() == [0, 10, 5]


# --- costs --------------------------------------------------------------------

def test_predicates_treat_boundary_as_satisfying():
    assert UpperBound(1.5)([[1.5], [1.6]]).tolist() == [False, True]
    assert UpperBound(0.0, coord=1)([[5.0, -1.0], [5.0, 1.0]]).tolist() == [False, True]
    assert OutsideBall(1.0)([[1.0, 0.0], [0.8, 0.7]]).tolist() == [False, True]
    assert OutsideBall(1.0, center=(2.0, 0.0))([[2.5, 0.0]]).tolist() == [False]


def test_cost_values():
    pts = [[0.0], [2.0]]
    assert cost_values(Tabulated([3.0, 4.0]), pts).tolist() == [3.0, 4.0]
    assert cost_values(IndicatorViolation(UpperBound(1.0)), pts).tolist() == [0.0, 1.0]
    assert cost_values(PointwiseCost(lambda x: x[:, 0] ** 2), pts).tolist() == [0.0, 4.0]
    with pytest.raises(ValueError):
        cost_values(Tabulated([1.0]), pts)
    with pytest.raises(ValueError):
        Tabulated([np.inf])


# --- worst-case risk ------------------------------------------------------------

def test_zero_radius_gives_empirical_mean(normal_data):
    plan = ExpansionPlan((-3.0,), (3.0,), (40,))
    cost = PointwiseCost(lambda x: np.sin(x[:, 0]))
    res = worst_case_risk(normal_data, Gaussian(0.7), 0.0, cost, plan)
    assert res.value == pytest.approx(np.sin(normal_data[:, 0]).mean(), abs=1e-4)
    assert res.empirical_value == pytest.approx(res.value, abs=1e-12)


def test_saturation_reaches_max_cost(normal_data):
    plan = ExpansionPlan((-3.0,), (3.0,), (40,))
    cost = PointwiseCost(lambda x: np.cos(x[:, 0]))
    res = worst_case_risk(normal_data, Gaussian(0.7), 2.0, cost, plan)
    z = res.expansion_points
    assert res.value == pytest.approx(np.cos(z[:, 0]).max(), abs=1e-9)


def test_result_invariants(normal_data):
    plan = ExpansionPlan((-3.0,), (4.0,), (50,))
    res = worst_case_violation_probability(normal_data, Gaussian(0.5), 0.1, UpperBound(1.0), plan)
    assert res.value == pytest.approx(float(res.weights @ res.costs), abs=1e-10)
    assert np.all(res.weights >= 0) and abs(res.weights.sum() - 1) <= 1e-9
    table = res.transport_table
    assert abs(sum(w for _, w in table) - 1) <= 1e-9
    assert all(a[1] >= b[1] for a, b in zip(table, table[1:]))
    assert res.transport_header() == ["point", "weight"]
    assert 0.0 <= res.value <= 1.0
    d = res.as_dict()
    assert d["solution"]["status"] == "optimal" and len(d["weights"]) == len(d["points"])


def test_monotone_in_eps_and_above_empirical(normal_data):
    plan = ExpansionPlan((-3.0,), (5.0,), (60,))
    kernel = Gaussian(median_heuristic(normal_data))
    pred = UpperBound(1.0)
    emp = float(np.mean(pred(normal_data)))
    vals = [worst_case_violation_probability(normal_data, kernel, e, pred, plan).value
            for e in np.linspace(0, 0.5, 20)]
    assert vals[0] == pytest.approx(emp, abs=1e-4)
    assert all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))
    assert all(v >= emp - 1e-7 for v in vals)


def test_zero_count_resolution():
    data = np.linspace(-1.5, 1.5, 10)[:, None]
    plan = ExpansionPlan((2.5,), (3.5,), (10,))
    k = Gaussian(median_heuristic(data))
    at = lambda e: worst_case_violation_probability(data, k, e, UpperBound(2.5), plan).value
    assert at(0.0) == 0.0
    assert 0.0 < at(0.01) < at(0.1)


def test_constraint_covering_domain_gives_zero(normal_data):
    plan = ExpansionPlan((-3.0,), (3.0,), (20,))
    res = worst_case_violation_probability(normal_data, Gaussian(1.0), 0.3, UpperBound(100.0), plan)
    assert res.value == 0.0


def test_infeasible_raises():
    plan = ExpansionPlan((5.0,), (6.0,), (3,), include_data=False)
    with pytest.raises(InfeasibleError) as info:
        worst_case_violation_probability([[0.0]], Gaussian(0.5), 0.0, UpperBound(1.0), plan)
    assert info.value.solution.status is Status.INFEASIBLE


def test_nested_plans_are_monotone(normal_data):
    pool = np.linspace(-3, 5, 120)[:, None]
    order = farthest_point_order(pool)
    k = Gaussian(0.6)
    vals = [worst_case_violation_probability(normal_data, k, 0.2, UpperBound(1.0),
                                             ExpansionPlan(extra_points=pool[order[:m]])).value
            for m in (5, 15, 40, 120)]
    assert all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))


def test_two_dimensional_header():
    data = np.random.default_rng(1).normal(size=(8, 2)) * 0.2
    plan = ExpansionPlan((-1.0, -1.0), (2.0, 2.0), (5, 5))
    res = worst_case_violation_probability(data, Gaussian(0.5), 0.05, OutsideBall(1.0), plan)
    assert res.transport_header() == ["x1", "x2", "weight"]
    assert len(res.transport_rows()[0]) == 3


# --- known moments ---------------------------------------------------------------

def test_known_moments_empirical_support():
    data = np.array([[-1.0], [0.5], [2.0]])
    z = np.vstack([data, [[3.0], [-2.0]]])
    cost = PointwiseCost(lambda x: x[:, 0] ** 2)
    res = worst_case_risk_known_moments(MomentData.from_samples(data), cost, z)
    assert res.value == pytest.approx(float(np.mean(data[:, 0] ** 2)), abs=1e-4)


def test_known_moments_single_point():
    z = [[1.5, -0.5]]
    delta = MomentData.from_samples(z)
    res = worst_case_risk_known_moments(delta, Tabulated([7.0]), z)
    assert res.value == 7.0
    with pytest.raises(InfeasibleError):
        worst_case_risk_known_moments(MomentData([0.0, 0.0], np.eye(2)), Tabulated([7.0]), z)


def test_known_moments_rejects_conflicting_duplicate_costs():
    with pytest.raises(ValueError):
        worst_case_risk_known_moments(MomentData([0.0], [[1.0]]), Tabulated([1.0, 2.0]), [[1.0], [1.0]])


# --- duality ----------------------------------------------------------------------

def test_dual_value_examples():
    k = Gaussian(1.0)
    assert dual_value(DualCertificate([0.0, 0.0], [[0.0], [1.0]], k), [[0.3]], 0.4) == 0.0
    assert dual_value(DualCertificate([1.0], [[0.7]], k), [[0.7]], 0.0) == pytest.approx(1.0)
    cert = DualCertificate([0.3, -0.2], [[0.0], [1.0]], k)
    data = [[0.2], [0.9], [1.4]]
    assert dual_value(DualCertificate(2.5 * cert.beta, cert.points, k), data, 0.0) == pytest.approx(
        2.5 * dual_value(cert, data, 0.0))


def test_dual_feasibility_examples():
    k = Gaussian(0.5)
    tests = np.linspace(-2, 2, 41)[:, None]
    cost = IndicatorViolation(UpperBound(1.0))
    ok, margin = dual_feasible(DualCertificate([0.0], [[0.0]], k), cost, tests)
    assert ok and margin == 0.0
    cluster = np.linspace(-2, 2, 41)[:, None]
    big = DualCertificate(np.full(41, 2.0), cluster, k)
    ok, margin = dual_feasible(big, cost, tests)
    assert not ok and margin < 0


def test_weak_duality_on_feasible_certificates():
    rng = np.random.default_rng(11)
    data = rng.normal(size=(12, 1))
    plan = ExpansionPlan((-3.0,), (4.0,), (30,))
    k = Gaussian(0.8)
    cost = IndicatorViolation(UpperBound(1.0))
    res = worst_case_risk(data, k, 0.15, cost, plan)
    z = res.expansion_points
    checked = 0
    for _ in range(200):
        centers = rng.uniform(-3, 4, size=(4, 1))
        cert = DualCertificate(rng.normal(scale=0.3, size=4) - 0.2, centers, k)
        if dual_feasible(cert, cost, z)[0]:
            checked += 1
            assert dual_value(cert, data, 0.15) <= res.value + 1e-6
    assert checked > 0

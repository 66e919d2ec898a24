import math

import numpy as np
import pytest
from scipy.optimize import LinearConstraint, minimize

from confdim.cantor import GapSequence, IntervalLevel, build_system
from confdim.dimension import natural_measure
from confdim.modulus import (
    DiscreteModulusProblem,
    InfeasibleError,
    MeasureSystem,
    _solve_power_program,
    dmod_vanishing_witness,
    holder_lower_bound,
    modulus_comparison,
    product_system,
    solve_discrete,
    solve_fuglede,
    subadditivity_check,
    vitali_disjointify,
)


def brute_force(w, A, p, rng, starts=4):
    obj = lambda x: float(np.sum(w * np.abs(x) ** p))
    con = LinearConstraint(A, lb=1.0)
    best = math.inf
    n = A.shape[1]
    for _ in range(starts):
        x0 = rng.uniform(0.5, 1.5, n)
        res = minimize(obj, x0, constraints=[con], bounds=[(0, None)] * n,
                       method="SLSQP", options={"maxiter": 500, "ftol": 1e-14})
        if res.success:
            best = min(best, float(res.fun))
    return best


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("k", [1, 2, 5, 13])
def test_one_set_k_balls_closed_form(p, k):
    res = _solve_power_program(np.ones(k), np.ones((1, k)), p)
    assert abs(res.value - k ** (1 - p)) <= 1e-9
    assert res.kkt_residual <= 1e-7


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_separable_groups_closed_form(p):
    n, m = 5, 4
    A = np.kron(np.eye(n), np.ones((1, m)))
    res = _solve_power_program(np.ones(n * m), A, p)
    assert abs(res.value - n * m ** (1 - p)) <= 1e-8


def test_solver_matches_scipy_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(15):
        p = float(rng.choice([1.5, 2.0, 3.0]))
        n, m = int(rng.integers(3, 12)), int(rng.integers(2, 8))
        A = (rng.random((m, n)) < 0.5).astype(float)
        for i in np.where(A.sum(axis=1) == 0)[0]:
            A[i, rng.integers(0, n)] = 1.0
        w = rng.uniform(0.1, 2.0, n)
        res = _solve_power_program(w, A, p)
        assert abs(res.value - brute_force(w, A, p, rng)) <= 1e-6
        assert res.kkt_residual <= 1e-7
        assert res.duality_gap_bound <= 1e-6


def test_solve_fuglede_zero_measure_cells_are_free():
    system = MeasureSystem(
        mu=[0.0, 1.0, 1.0],
        members=[[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]],
        p=2.0,
    )
    res = solve_fuglede(system)
    # the first member rides the free cell; only the second one costs
    assert res.value == pytest.approx(0.5, abs=1e-9)
    for lam in system.members:
        assert float(np.asarray(lam) @ res.optimizer) >= 1.0 - 1e-9


def test_solve_fuglede_rejects_zero_members():
    with pytest.raises(ValueError):
        MeasureSystem(mu=[1.0, 1.0], members=[[0.0, 0.0]], p=2.0)


def test_measure_system_validation():
    with pytest.raises(ValueError):
        MeasureSystem(mu=[1.0], members=[[1.0]], p=1.0)
    with pytest.raises(ValueError):
        MeasureSystem(mu=[-1.0], members=[[1.0]], p=2.0)
    with pytest.raises(ValueError):
        MeasureSystem(mu=[1.0, 1.0], members=[[1.0]], p=2.0)


def test_discrete_problem_incidence_from_intervals():
    balls = np.array([[0.0, 0.5], [2.0, 0.5], [4.0, 0.5]])
    sets = [np.array([0.05]), np.array([[1.95, 4.05]])]
    prob = DiscreteModulusProblem.from_intervals_1d(balls, sets, p=2.0)
    assert prob.incidence.tolist() == [[True, False, False], [False, True, True]]
    res = solve_discrete(prob)
    # set 1 needs weight 1 on its only ball, set 2 splits across two
    assert res.value == pytest.approx(1.0 + 2 * 0.25, abs=1e-9)


def test_discrete_problem_rejects_overlapping_fifth_balls():
    balls = np.array([[0.0, 1.0], [0.3, 1.0]])
    with pytest.raises(ValueError):
        DiscreteModulusProblem.from_intervals_1d(balls, [np.array([0.0])], p=2.0)


def test_solve_discrete_infeasible_set_reported():
    balls = np.array([[0.0, 0.5]])
    prob = DiscreteModulusProblem.from_intervals_1d(
        balls, [np.array([0.0]), np.array([9.0])], p=2.0)
    with pytest.raises(InfeasibleError) as err:
        solve_discrete(prob)
    assert err.value.member_indices == [1]


def test_vitali_selected_disjoint_and_covering():
    rng = np.random.default_rng(6)
    balls = np.column_stack([rng.uniform(0, 10, 30), rng.uniform(0.05, 1.0, 30)])
    idx = vitali_disjointify(balls)
    sel = balls[idx]
    for i in range(len(sel)):
        for j in range(i + 1, len(sel)):
            assert abs(sel[i, 0] - sel[j, 0]) > sel[i, 1] + sel[j, 1]
    for c, r in balls:
        assert any(abs(c - cc) + r <= 5 * rr + 1e-12 or
                   np.all(np.abs(np.linspace(c - r, c + r, 64) - cc) <= 5 * rr)
                   for cc, rr in sel)


def test_vitali_tie_break_prefers_leftmost():
    balls = np.array([[5.0, 1.0], [0.0, 1.0], [0.5, 1.0]])
    idx = vitali_disjointify(balls)
    assert 1 in idx and 2 not in idx


def test_product_system_rejects_aliasing_grid():
    system = build_system(GapSequence.harmonic(7), max_depth=7)
    leaves = system.level(7)
    with pytest.raises(ValueError):
        product_system(leaves, natural_measure(leaves),
                       [(0.0, 1.0)], cell_width=3.0 ** -7, p=1.5)


def test_holder_lower_bound_and_validation():
    system = build_system(GapSequence.harmonic(6), max_depth=6)
    leaves = system.level(6)
    meas = natural_measure(leaves)
    Y = [(k / 4, 0.25) for k in range(4)]
    d = 0.6
    prod = product_system(leaves, meas, Y, cell_width=3.0 ** -7, p=1 + d)
    assert holder_lower_bound(prod, d) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        holder_lower_bound(prod, 0.5)  # exponent mismatch
    res = solve_fuglede(prod)
    assert res.value >= 1.0 - 1e-3


def _dyadic_level(k):
    n = 2 ** k
    return IntervalLevel(depth=k, lefts=np.arange(n) / n,
                         log_lengths=np.full(n, -k * math.log(2)),
                         parent_index=np.arange(n) // 2)


def test_vanishing_witness_dyadic_values():
    for k in (6, 10, 14):
        w = dmod_vanishing_witness(_dyadic_level(k), None, t=1.0, q=2.0,
                                   eps_target=1e-4)
        assert w.value == pytest.approx(2.0 ** -k, rel=1e-12)
        assert w.admissible_ok
    assert w.achieved  # k = 14 is below the target


def test_vanishing_witness_refuses_low_qt():
    with pytest.raises(ValueError):
        dmod_vanishing_witness(_dyadic_level(5), None, t=1.0, q=0.5, eps_target=1.0)


def test_vanishing_witness_decreases_with_depth():
    system = build_system(GapSequence.constant(1 / 3, 10), max_depth=10)
    vals = [dmod_vanishing_witness(system.level(n), None, t=0.64, q=1.1,
                                   eps_target=1.0).value
            for n in (4, 6, 8, 10)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_modulus_comparison_reports_finite_ratio():
    system = build_system(GapSequence.harmonic(6), max_depth=6)
    leaves = system.level(6)
    prod = product_system(leaves, natural_measure(leaves),
                          [(k / 4, 0.25) for k in range(4)],
                          cell_width=3.0 ** -7, p=1.5)
    centers = (leaves.lefts + leaves.rights) / 2.0
    balls = np.column_stack([centers, leaves.lengths / 2.0])
    image = DiscreteModulusProblem.from_intervals_1d(
        balls, [np.column_stack([leaves.lefts, leaves.rights])], p=1.5,
        check_disjoint=False)
    rep = modulus_comparison(prod, image, s=0.9, C1=1e-3, C2=2.0)
    assert math.isfinite(rep.ratio) and rep.ratio > 0
    assert rep.hypothesis_ok
    assert rep.ambient_growth_C > 0


def test_modulus_comparison_degenerate_empty():
    empty = MeasureSystem(mu=[1.0], members=[], p=1.5)
    out = modulus_comparison(empty, None, s=0.5, C1=1.0, C2=1.0)
    assert out.degenerate


def test_subadditivity_disjoint_supports_add_up():
    mu = np.ones(6)
    s1 = MeasureSystem(mu=mu, members=[[1, 1, 1, 0, 0, 0]], p=2.0)
    s2 = MeasureSystem(mu=mu, members=[[0, 0, 0, 1, 1, 1]], p=2.0)
    rep = subadditivity_check([s1, s2])
    assert rep.subadditive_ok and rep.monotone_ok
    assert rep.union_value == pytest.approx(float(np.sum(rep.member_values)), abs=1e-9)


def test_subadditivity_duplicate_member_inactive():
    mu = np.ones(4)
    s = MeasureSystem(mu=mu, members=[[1, 1, 0, 0]], p=2.0)
    rep = subadditivity_check([s, s])
    assert rep.union_value == pytest.approx(rep.member_values[0], abs=1e-9)

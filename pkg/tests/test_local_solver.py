import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaxdual.errors import DimensionMismatch, NonConvergence
from relaxdual.local_solver import (
    SolverSettings,
    inner_min,
    kkt_residual,
    min_max_violation,
    nonrelaxed_feasibility_diagnostic,
    solve_relaxed_local,
)
from relaxdual.problem import FunctionLocal, QuadBoxLinearLocal

from conftest import quad


def as_function_local(loc):
    """Same problem, but hidden behind the generic interface."""
    return FunctionLocal(loc.cost, loc.cost_grad, loc.coupling, loc.coupling_jac, loc.lower, loc.upper)


def penalty_scan(loc, d, big_m, points=100_001):
    """Exact-penalty objective f(x) + M * sum_s max(0, g_s(x) + d_s) on a fine grid."""
    xs = np.linspace(loc.lower[0], loc.upper[0], points)
    vals = loc.w * xs * xs + loc.r * xs
    g = loc.a[None, :] * xs[:, None] - loc.b[None, :] + np.asarray(d)[None, :]
    vals = vals + big_m * np.maximum(g, 0.0).sum(axis=1)
    k = int(np.argmin(vals))
    return xs[k], vals[k], xs[1] - xs[0]


def lagrangian(loc, x, rho, mu, d, big_m):
    return loc.cost(x) + big_m * rho.sum() + mu @ (loc.coupling(x) + d - rho)


# ---------------------------------------------------------------------------
# inner minimization


def test_inner_min_examples():
    loc = quad()
    x, v = inner_min(loc, [0.6])
    assert x[0] == pytest.approx(-0.3, abs=1e-15)
    assert v == pytest.approx(-0.09, abs=1e-15)
    x, v = inner_min(loc, [0.0])
    assert x[0] == 0.0 and v == 0.0
    x, _ = inner_min(loc, [10.0])
    assert x[0] == -1.0


def test_inner_min_shape_check():
    with pytest.raises(DimensionMismatch):
        inner_min(quad(), [0.1, 0.2])


@settings(max_examples=100, deadline=None)
@given(
    w=st.floats(0.1, 20), r=st.floats(-50, 50), a=st.floats(-10, 10),
    mu=st.floats(0, 100),
)
def test_generic_inner_min_matches_closed_form(w, r, a, mu):
    loc = QuadBoxLinearLocal(w, r, -3.0, 2.0, a, 0.5)
    x_closed, v_closed = inner_min(loc, [mu])
    x_gen, v_gen = inner_min(as_function_local(loc), [mu])
    assert v_gen == pytest.approx(v_closed, abs=1e-9 * max(1.0, abs(v_closed)))
    assert abs(x_gen[0] - x_closed[0]) <= 1e-5


# ---------------------------------------------------------------------------
# relaxed local problem, hand-solved cases


@pytest.mark.parametrize(
    "d, x, rho, mu",
    [(0.3, -0.3, 0.0, 0.6), (2.5, -1.0, 1.5, 2.0), (-10.0, 0.0, 0.0, 0.0)],
)
@pytest.mark.parametrize("generic", [False, True])
def test_solve_relaxed_local_examples(d, x, rho, mu, generic):
    loc = quad()
    if generic:
        loc = as_function_local(loc)
    sol = solve_relaxed_local(loc, [d], 2.0)
    tol = 1e-9 if generic else 1e-14
    assert sol.x[0] == pytest.approx(x, abs=tol)
    assert sol.rho[0] == pytest.approx(rho, abs=tol)
    assert sol.mu[0] == pytest.approx(mu, abs=1e-8 if generic else 1e-14)
    assert sol.kkt_residual <= 1e-8


def test_nonrelaxed_diagnostic_examples():
    loc = quad()
    assert nonrelaxed_feasibility_diagnostic(loc, [0.3])
    assert not nonrelaxed_feasibility_diagnostic(loc, [2.5])
    assert nonrelaxed_feasibility_diagnostic(loc, [-10.0])
    assert min_max_violation(loc, [2.5]) == pytest.approx(1.5)
    gen = as_function_local(loc)
    assert nonrelaxed_feasibility_diagnostic(gen, [0.3])
    assert not nonrelaxed_feasibility_diagnostic(gen, [2.5])


def test_min_max_violation_multicomponent():
    # g1 = x + d1, g2 = -x + d2 on [-1, 1]: minimum of the max sits at the crossing
    loc = QuadBoxLinearLocal(1.0, 0.0, -1.0, 1.0, [1.0, -1.0], [0.0, 0.0])
    assert min_max_violation(loc, [0.2, 0.4]) == pytest.approx(0.3)
    assert min_max_violation(as_function_local(loc), [0.2, 0.4]) == pytest.approx(0.3, abs=1e-3)


def test_input_validation():
    loc = quad()
    with pytest.raises(ValueError):
        solve_relaxed_local(loc, [0.0], 0.0)
    with pytest.raises(DimensionMismatch):
        solve_relaxed_local(loc, [0.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        solve_relaxed_local(loc, [np.nan], 1.0)
    with pytest.raises(ValueError):
        SolverSettings(tol=0.0)


def test_nonconvergence_when_cap_is_tiny():
    loc = QuadBoxLinearLocal(1.0, 0.0, -1.0, 1.0, [1.0, 2.0], [0.0, 0.1])
    with pytest.raises(NonConvergence):
        solve_relaxed_local(loc, [0.3, 0.2], 5.0, SolverSettings(tol=1e-12, max_outer_iters=1))


def test_kkt_residual_detects_wrong_points():
    loc = quad()
    sol = solve_relaxed_local(loc, [0.3], 2.0)
    assert kkt_residual(loc, sol.x, sol.rho, sol.mu, np.array([0.3]), 2.0) <= 1e-14
    assert kkt_residual(loc, sol.x + 0.1, sol.rho, sol.mu, np.array([0.3]), 2.0) > 1e-3
    assert kkt_residual(loc, sol.x, sol.rho, sol.mu + 0.5, np.array([0.3]), 2.0) > 1e-3
    assert kkt_residual(loc, sol.x, sol.rho + 0.2, sol.mu, np.array([0.3]), 2.0) > 1e-3


# ---------------------------------------------------------------------------
# properties


quad_params = dict(
    w=st.floats(0.05, 20), r=st.floats(-40, 40), lo=st.floats(-5, 0), width=st.floats(0.1, 10),
    a=st.floats(-12, 12).filter(lambda v: abs(v) > 1e-3), b=st.floats(-10, 10),
    d=st.floats(-5, 5), big_m=st.sampled_from([1.0, 2.0, 1200.0]),
)


@settings(max_examples=300, deadline=None)
@given(**quad_params)
def test_closed_form_solution_properties(w, r, lo, width, a, b, d, big_m):
    loc = QuadBoxLinearLocal(w, r, lo, lo + width, a, b)
    sol = solve_relaxed_local(loc, [d], big_m)
    assert sol.kkt_residual <= 1e-8
    assert 0.0 <= sol.mu[0] <= big_m
    assert loc.lower[0] <= sol.x[0] <= loc.upper[0]
    assert sol.rho[0] == max(0.0, float(loc.coupling(sol.x)[0] + d))
    # feasible local step with a multiplier below M never needs slack
    if sol.mu[0] < big_m:
        assert sol.rho[0] == 0.0
    # an infeasible local step always needs slack; the converse needs M above
    # the local multiplier, checked separately
    if not nonrelaxed_feasibility_diagnostic(loc, [d]):
        assert sol.rho[0] > 0


@settings(max_examples=200, deadline=None)
@given(**quad_params)
def test_feasible_local_step_has_no_slack_when_m_is_large(w, r, lo, width, a, b, d, big_m):
    loc = QuadBoxLinearLocal(w, r, lo, lo + width, a, b)
    # the multiplier never exceeds |f'| / |a| on the box, so 1e9 is always large enough
    if nonrelaxed_feasibility_diagnostic(loc, [d], tol=0.0):
        assert solve_relaxed_local(loc, [d], 1e9).rho[0] == 0.0


@settings(max_examples=150, deadline=None)
@given(**quad_params)
def test_solution_minimizes_exact_penalty(w, r, lo, width, a, b, d, big_m):
    loc = QuadBoxLinearLocal(w, r, lo, lo + width, a, b)
    sol = solve_relaxed_local(loc, [d], big_m)
    x_grid, v_grid, h = penalty_scan(loc, [d], big_m, points=20_001)
    v_sol = loc.cost(sol.x) + big_m * sol.rho[0]
    assert v_sol <= v_grid + 1e-9 * max(1.0, abs(v_grid))


@settings(max_examples=60, deadline=None)
@given(
    w=st.floats(0.2, 5), r=st.floats(-5, 5),
    a1=st.floats(-3, 3), a2=st.floats(-3, 3), b1=st.floats(-1, 1), b2=st.floats(-1, 1),
    d1=st.floats(-2, 2), d2=st.floats(-2, 2), big_m=st.sampled_from([1.0, 5.0, 50.0]),
)
def test_multicomponent_ascent(w, r, a1, a2, b1, b2, d1, d2, big_m):
    loc = QuadBoxLinearLocal(w, r, -1.0, 1.0, [a1, a2], [b1, b2])
    d = np.array([d1, d2])
    sol = solve_relaxed_local(loc, d, big_m, SolverSettings(tol=1e-6))
    assert sol.kkt_residual <= 1e-6
    assert np.all((0 <= sol.mu) & (sol.mu <= big_m))
    _, v_grid, h = penalty_scan(loc, d, big_m, points=20_001)
    v_sol = loc.cost(sol.x) + big_m * sol.rho.sum()
    # residual 1e-6 bounds each complementarity product by 1e-6 * M and the
    # stationarity error by 1e-6 per unit of box width
    lip = 2 * w + abs(r) + big_m * (abs(a1) + abs(a2))
    assert v_sol <= v_grid + 1e-6 * (2 * big_m + 2 * lip)


def test_saddle_inequalities_on_probes():
    rng = np.random.default_rng(11)
    loc = QuadBoxLinearLocal(3.0, -2.0, -1.5, 2.0, 4.0, 1.0)
    for d in (-3.0, 0.0, 1.5, 4.0, 8.0):
        sol = solve_relaxed_local(loc, [d], 2.0)
        dd = np.array([d])
        ref = lagrangian(loc, sol.x, sol.rho, sol.mu, dd, 2.0)
        for _ in range(200):
            mu = rng.uniform(0, 2.0, 1)
            x = rng.uniform(loc.lower, loc.upper)
            rho = rng.uniform(0, 5.0, 1)
            assert lagrangian(loc, sol.x, sol.rho, mu, dd, 2.0) <= ref + 1e-9
            assert ref <= lagrangian(loc, x, rho, sol.mu, dd, 2.0) + 1e-9

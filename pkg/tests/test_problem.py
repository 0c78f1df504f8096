import numpy as np
import pytest

from relaxdual.errors import DimensionMismatch, NegativeSlack
from relaxdual.problem import (
    CoupledProblem,
    FunctionLocal,
    QuadBoxLinearLocal,
    eval_cost,
    eval_coupling,
    eval_relaxed_cost,
    paper_instance,
    slater_check,
)

from conftest import quad


def linear_local(slope, offset, lower=-1.0, upper=1.0, cost=lambda x: 0.0):
    """One variable, ``g(x) = slope * x + offset``."""
    return FunctionLocal(
        cost=lambda x: float(cost(x[0])),
        cost_grad=lambda x: np.zeros(1),
        coupling=lambda x: np.array([slope * x[0] + offset]),
        coupling_jac=lambda x: np.array([[slope]]),
        lower=[lower],
        upper=[upper],
    )


def test_benchmark_instance_shape_and_ranges():
    p = paper_instance(20, seed=3)
    assert p.n_agents == 20 and p.s_dim == 1 and p.big_m == 1200.0
    for loc in p.locals:
        assert 1.0 <= loc.w < 20.0
        assert loc.r == -20.0 * loc.w
        assert -35.0 <= loc.lower[0] < -30.0
        assert 30.0 <= loc.upper[0] < 35.0
        assert 1.0 <= loc.a[0] < 11.0
        assert 0.0 <= loc.b[0] < 10.0


def test_benchmark_instance_single_agent():
    p = paper_instance(1, seed=0)
    assert p.n_agents == 1
    loc = p.locals[0]
    x = np.array([2.0])
    assert eval_coupling(p, [x])[0] == pytest.approx(loc.a[0] * 2.0 - loc.b[0])


def test_benchmark_instance_deterministic_and_multidim():
    p1, p2 = paper_instance(6, s_dim=3, seed=9), paper_instance(6, s_dim=3, seed=9)
    for l1, l2 in zip(p1.locals, p2.locals):
        assert l1.to_dict() == l2.to_dict()
    assert p1.s_dim == 3


@pytest.mark.parametrize("seed", range(10))
def test_slater_paper_instance(seed):
    p = paper_instance(20, seed=seed)
    res = slater_check(p)
    assert res
    assert np.all(res.coupling_value < 0)
    # lower corners are a witness too: a > 0 and b >= 0
    lower = [loc.lower for loc in p.locals]
    expected = sum(loc.a[0] * loc.lower[0] - loc.b[0] for loc in p.locals)
    assert eval_coupling(p, lower)[0] == pytest.approx(expected, rel=1e-14)
    assert expected < 0


def test_slater_simple_cases():
    p = CoupledProblem([linear_local(1.0, -10.0)], 10.0)
    res = slater_check(p)
    assert res and res.witness[0][0] == 0.0
    zero = CoupledProblem([linear_local(0.0, 0.0)], 10.0)
    assert not slater_check(zero, samples=50)


def test_eval_cost_and_coupling():
    p = CoupledProblem([quad(), quad()], 5.0)
    assert eval_cost(p, [[1.0], [2.0]]) == 5.0
    assert eval_coupling(p, [[1.0], [2.0]])[0] == 3.0
    assert eval_coupling(p, [[0.0], [0.0]])[0] == 0.0
    with pytest.raises(DimensionMismatch):
        eval_cost(p, [[1.0]])
    with pytest.raises(DimensionMismatch):
        eval_cost(p, [[1.0, 2.0], [1.0]])


def test_eval_relaxed_cost():
    p = CoupledProblem([quad(), quad()], 5.0)
    x = [[0.5], [-0.25]]
    assert eval_relaxed_cost(p, x, [[0.0], [0.0]]) == eval_cost(p, x)
    zero_cost = FunctionLocal(
        cost=lambda x: 0.0, cost_grad=lambda x: np.zeros(1),
        coupling=lambda x: np.zeros(2), coupling_jac=lambda x: np.zeros((2, 1)),
        lower=[0.0], upper=[1.0],
    )
    single = CoupledProblem([zero_cost], 2.0)
    assert eval_relaxed_cost(single, [[0.3]], [[1.0, 1.0]]) == 4.0
    with pytest.raises(NegativeSlack):
        eval_relaxed_cost(p, x, [[-0.1], [0.0]])
    with pytest.raises(DimensionMismatch):
        eval_relaxed_cost(p, x, [[0.0, 0.0], [0.0]])


def test_quad_local_validation():
    with pytest.raises(ValueError):
        QuadBoxLinearLocal(0.0, 0.0, -1.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        QuadBoxLinearLocal(1.0, 0.0, 1.0, -1.0, 1.0, 0.0)
    with pytest.raises(DimensionMismatch):
        QuadBoxLinearLocal(1.0, 0.0, -1.0, 1.0, [1.0, 2.0], [0.0])


def test_coupled_problem_validation():
    with pytest.raises(ValueError):
        CoupledProblem([], 1.0)
    with pytest.raises(ValueError):
        CoupledProblem([quad()], 0.0)
    with pytest.raises(DimensionMismatch):
        CoupledProblem([quad(), QuadBoxLinearLocal(1.0, 0.0, -1.0, 1.0, [1.0, 1.0], [0.0, 0.0])], 1.0)


def test_quad_local_derivatives_match_finite_differences():
    loc = QuadBoxLinearLocal(2.5, -1.0, -3.0, 3.0, [1.5, -2.0], [0.1, 0.2])
    x, h = np.array([0.7]), 1e-6
    fd = (loc.cost(x + h) - loc.cost(x - h)) / (2 * h)
    assert loc.cost_grad(x)[0] == pytest.approx(fd, rel=1e-7)
    jac_fd = (loc.coupling(x + h) - loc.coupling(x - h)) / (2 * h)
    np.testing.assert_allclose(loc.coupling_jac(x)[:, 0], jac_fd, rtol=1e-7)

import numpy as np
import pytest

from snaploc.discretization import SpatialGrid, TimeGrid, assemble_mass, assemble_stiffness
from snaploc.parabolic import (
    ControlTrajectory,
    Trajectory,
    full_model,
    generate_snapshots,
    march_backward,
    march_forward,
    solve_adjoint,
    solve_state,
    time_derivative,
    time_derivative_values,
)
from snaploc import problems
from snaploc.problems import get_problem

from conftest import zero_problem


def _steppers(n_x):
    g = SpatialGrid(n_x)
    M, A = assemble_mass(g), assemble_stiffness(g)
    return M.matvec, (lambda dt, b: (M + A.scaled(dt)).solve(b))


def test_single_node_euler_step():
    mass, solve = _steppers(2)
    y = march_forward(mass, solve, TimeGrid(np.array([0.0, 0.1])), np.array([1.0]),
                      np.zeros((2, 1)))
    assert y[1, 0] == pytest.approx(10.0 / 22.0, rel=1e-14)


def test_zero_data_zero_state(fine):
    spec = zero_problem()
    tg = TimeGrid.uniform(10)
    y = solve_state(spec, fine, tg, ControlTrajectory.zeros(tg, 1))
    assert np.all(y.values == 0.0)


def test_adjoint_vanishes_when_state_matches_target(rng):
    mass, solve = _steppers(12)
    tg = TimeGrid(np.array([0.0, 0.2, 0.25, 0.7, 1.0]))
    p = march_backward(mass, solve, tg, np.zeros((tg.dof, 11)))
    assert np.all(p == 0.0)


def test_adjoint_terminal_value_is_zero():
    spec = get_problem(1)
    sg, tg = SpatialGrid(20), TimeGrid.uniform(8)
    y = solve_state(spec, sg, tg, ControlTrajectory.zeros(tg, 1))
    p = solve_adjoint(spec, sg, tg, y)
    assert np.all(p.values[-1] == 0.0)
    assert np.abs(p.values[:-1]).max() > 0.0


def test_grid_mismatch_rejected():
    spec = get_problem(1)
    with pytest.raises(ValueError):
        solve_state(spec, SpatialGrid(10), TimeGrid.uniform(4),
                    ControlTrajectory.zeros(TimeGrid.uniform(5), 1))


def test_state_converges_first_order_in_time(fine):
    spec = get_problem(1)
    sol = spec.analytic
    errs = []
    for n in (20, 40, 80):
        tg = TimeGrid.uniform(n)
        u = ControlTrajectory(tg, sol.u(tg.nodes))
        y = solve_state(spec, fine, tg, u)
        e = y.values - full_model(spec, fine).interpolate(sol.y, tg.nodes)
        errs.append(np.sqrt(np.sum(tg.weights * np.sum(e**2, axis=1) * fine.h)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 0.8) and np.all(rates < 1.3)


@pytest.mark.parametrize("family", ["test1", "test2"])
def test_adjoint_converges_first_order_with_resolved_layer(fine, family):
    # with eps = 1e-4 a uniform grid never sees the layer; eps = 0.1 is resolved
    spec = getattr(problems, family)(eps=0.1)
    sol = spec.analytic
    fom = full_model(spec, fine)
    errs = []
    for n in (40, 80, 160):
        tg = TimeGrid.uniform(n)
        y = Trajectory(tg, fom.interpolate(sol.y, tg.nodes))
        p = solve_adjoint(spec, fine, tg, y)
        errs.append(np.abs(p.values - fom.interpolate(sol.p, tg.nodes)).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 0.9) and np.all(rates < 1.1)


def test_unresolved_layer_leaves_terminal_jump(fine):
    """Sampling y_d at nodes misses the O(1) jump of the adjoint inside the layer."""
    spec = get_problem(1)
    fom = full_model(spec, fine)
    tg = TimeGrid.uniform(160)
    y = Trajectory(tg, fom.interpolate(spec.analytic.y, tg.nodes))
    p = solve_adjoint(spec, fine, tg, y)
    err = np.abs(p.values - fom.interpolate(spec.analytic.p, tg.nodes)).max()
    assert 0.2 < err < 0.25  # close to max |x (x - 1)| = 1/4


def test_time_derivative_exact_for_affine_and_quadratic(rng):
    t = np.sort(np.r_[0.0, 1.0, rng.uniform(0, 1, 9)])
    v = (3.0 * t - 1.0)[:, None] * np.ones((1, 4))
    assert np.allclose(time_derivative_values(t, v), 3.0, atol=1e-12)
    assert np.allclose(time_derivative_values(t, np.ones((t.size, 2))), 0.0)
    tu = np.linspace(0.0, 1.0, 11)
    d = time_derivative(Trajectory(TimeGrid(tu), (tu**2)[:, None]))
    assert np.allclose(d.values[1:-1, 0], 2.0 * tu[1:-1], atol=1e-12)


def test_snapshots_zero_for_zero_data(fine):
    tg = TimeGrid.uniform(6)
    s = generate_snapshots(zero_problem(), fine, tg, ControlTrajectory.zeros(tg, 1))
    assert all(np.all(g == 0.0) for g in s.groups)


def test_snapshots_of_first_problem(fine):
    tg = TimeGrid.uniform(20)
    s = generate_snapshots(get_problem(1), fine, tg, ControlTrajectory.zeros(tg, 1))
    assert all(np.abs(g).max() > 0.0 for g in s.groups)
    Z, w = s.columns()
    assert Z.shape == (fine.n_interior, 3 * tg.dof) and w.shape == (3 * tg.dof,)

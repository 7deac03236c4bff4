import numpy as np
import pytest

from heatctrl.descent import (DescentConfig, LineSearchError, armijo_step,
                              descend, project)
from heatctrl.fem import FemSpace, FieldTrajectory, TimeGrid, build_mesh, zero_trajectory
from heatctrl.field import FieldSpec, build_affine
from heatctrl.lattice import ShiftSet, cbc_construct, pod_weights
from heatctrl.parabolic import ControlFunction, ProblemData
from heatctrl.risk import RiskConfig, RiskEstimator


@pytest.fixture(scope="module")
def space():
    return FemSpace(build_mesh(3))


@pytest.fixture(scope="module")
def grid():
    return TimeGrid(8, 1.0)


def rand_w(space, grid, rng, scale=1.0):
    w = FieldTrajectory(scale * rng.standard_normal((grid.n_steps + 1, space.n_dof)),
                        grid)
    w.values[0] = 0.0
    return w


def quadratic_problem(space):
    """J(w) = 1/2 |w|^2 in the L2(V;I) geometry; gradient is w itself."""
    objective = lambda w: 0.5 * space.inner_L2V_I(w, w)
    gradient = lambda w: w.copy()
    return objective, gradient


class TestProject:
    def test_scaling_onto_ball(self, space, grid, rng):
        w = rand_w(space, grid, rng)
        w = (4.0 / space.norm_L2V_I(w)) * w
        p = project(space, w, 2.0)
        assert abs(space.norm_L2V_I(p) - 2.0) < 1e-12
        assert np.allclose(p.values, 0.5 * w.values)

    def test_interior_point_unchanged(self, space, grid, rng):
        w = rand_w(space, grid, rng, scale=1e-3)
        assert project(space, w, 2.0) is w

    def test_idempotent(self, space, grid, rng):
        w = rand_w(space, grid, rng, scale=10.0)
        once = project(space, w, 2.0)
        twice = project(space, once, 2.0)
        assert np.abs(once.values - twice.values).max() < 1e-12

    def test_zero_returned_unchanged(self, space, grid):
        w = zero_trajectory(grid, space.n_dof)
        assert project(space, w, 1.0) is w

    def test_unconstrained_is_identity(self, space, grid, rng):
        w = rand_w(space, grid, rng, scale=100.0)
        assert project(space, w, None) is w


class TestArmijo:
    def test_quadratic_small_step_accepted_first(self, space, grid, rng):
        objective, gradient = quadratic_problem(space)
        w = rand_w(space, grid, rng)
        cfg = DescentConfig(eta0=0.5, gamma=1e-4, beta=0.5)
        eta, w_new, J_new = armijo_step(space, w, gradient(w), objective(w),
                                        objective, cfg)
        assert eta == 0.5
        assert J_new < objective(w)

    def test_zero_gradient_accepts_eta0(self, space, grid, rng):
        objective, _ = quadratic_problem(space)
        w = rand_w(space, grid, rng)
        cfg = DescentConfig(eta0=7.0)
        eta, w_new, _ = armijo_step(space, w, zero_trajectory(grid, space.n_dof),
                                    objective(w), objective, cfg)
        assert eta == 7.0
        assert np.array_equal(w_new.values, w.values)

    def test_accepted_step_satisfies_decrease(self, space, grid, rng):
        objective, gradient = quadratic_problem(space)
        w = rand_w(space, grid, rng)
        cfg = DescentConfig(eta0=100.0, gamma=1e-4, beta=0.1)
        eta, w_new, J_new = armijo_step(space, w, gradient(w), objective(w),
                                        objective, cfg)
        move = space.norm_L2V_I(w - w_new)
        assert J_new - objective(w) <= -(cfg.gamma / eta) * move ** 2

    def test_underflow_raises_with_log(self, space, grid, rng):
        # stepping along an ascent direction never satisfies the decrease test
        w = rand_w(space, grid, rng)
        objective = lambda v: space.norm_L2V_I(v)
        cfg = DescentConfig(eta0=1.0, beta=0.1)
        with pytest.raises(LineSearchError) as err:
            armijo_step(space, w, -1.0 * w, objective(w), objective, cfg)
        assert len(err.value.trial_log) > 10


class TestDescend:
    def test_stationary_start_returns_immediately(self, space, grid, rng):
        objective, gradient = quadratic_problem(space)
        w0 = zero_trajectory(grid, space.n_dof)
        w, trace = descend(space, w0, objective, gradient,
                           DescentConfig(max_iters=10))
        assert trace.iters == [0]
        assert space.norm_L2V_I(w) == 0.0

    def test_quadratic_minimizer_reached(self, space, grid, rng):
        objective, gradient = quadratic_problem(space)
        w0 = rand_w(space, grid, rng)
        cfg = DescentConfig(eta0=1.0, beta=0.5, tol=1e-10, max_iters=60)
        w, trace = descend(space, w0, objective, gradient, cfg)
        assert space.norm_L2V_I(w) <= 1e-9
        assert trace.stationarity[-1] <= 1e-10

    def test_monotone_objective_and_feasibility(self, space, grid, rng):
        objective, gradient = quadratic_problem(space)
        w0 = rand_w(space, grid, rng, scale=5.0)
        cfg = DescentConfig(eta0=10.0, beta=0.5, tol=0.0, max_iters=12, radius=2.0)
        w, trace = descend(space, w0, objective, gradient, cfg)
        assert all(b <= a + 1e-15 for a, b in zip(trace.J, trace.J[1:]))
        assert all(n <= 2.0 + 1e-12 for n in trace.control_norm)

    def test_pure_penalty_pde_objective(self, space, grid, rng):
        # alpha1 tracking with a zero-target, zero-initial problem reduces to
        # a strictly convex quadratic whose unconstrained minimizer is w = 0
        aff = build_affine(space.mesh, FieldSpec(decay=1.3), 2)
        gv = cbc_construct(4, 2, pod_weights(FieldSpec(decay=1.3).b(2), 0.7, 8)).gv
        shift = ShiftSet(1, 2, seed=3).shifts[0]
        data = ProblemData(u0=np.zeros(space.n_dof),
                           target=zero_trajectory(grid, space.n_dof),
                           alpha1=1.0, alpha2=0.0, alpha3=0.1)
        cfg = RiskConfig(kind="expected", gv=gv, shift=shift, s=2)
        est = RiskEstimator(space, grid, aff, data, cfg)
        objective = lambda w: est.objective(ControlFunction(w=w))
        gradient = lambda w: est.gradient(ControlFunction(w=w))
        w0 = rand_w(space, grid, rng)
        w, trace = descend(space, w0, objective, gradient,
                           DescentConfig(eta0=8.0, beta=0.5, tol=1e-9, max_iters=200))
        assert space.norm_L2V_I(w) <= 1e-6
        assert objective(w) <= 1e-12

    def test_trace_records_all_columns(self, space, grid, rng):
        objective, gradient = quadratic_problem(space)
        w0 = rand_w(space, grid, rng)
        _, trace = descend(space, w0, objective, gradient,
                           DescentConfig(eta0=0.3, beta=0.5, tol=0.0, max_iters=3))
        assert len(trace.iters) == len(trace.J) == len(trace.eta)
        assert len(trace.stationarity) == len(trace.control_norm) == 4
        assert np.isnan(trace.eta[0])

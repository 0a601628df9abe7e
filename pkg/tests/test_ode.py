"""Integrator and Lyapunov-trace tests against closed-form and RK4 oracles."""

import numpy as np
import pytest

from modgrad import ode
from modgrad.expr import parse
from modgrad.field import Box, ExpressionField, MatrixPath, System
from modgrad.gallery import _ex21_closed_form
from modgrad.ode import SimOptions, Status, lyapunov_trace, simulate

from helpers import rk4_reference

TIGHT = SimOptions(rel_tol=1e-9, abs_tol=1e-12)


class TestClosedFormExample21:
    def test_reference_trajectory(self, ex21):
        sol, (c1, c2) = _ex21_closed_form(0.0, (2.0, 2.0))
        assert c1 == pytest.approx(np.exp(-2.0), abs=1e-15)
        assert c2 == pytest.approx(1.0, abs=1e-15)
        traj = simulate(ex21.system, (2.0, 2.0), 0.0, 100.0, TIGHT)
        assert traj.status is Status.REACHED_END
        errs = np.linalg.norm(traj.states - sol(traj.times), axis=1)
        assert errs.max() <= 1e-6
        # dense output between accepted steps, on a uniform grid
        ts = np.linspace(0.0, 100.0, 1500)
        dense = np.array([traj.sample_at(t) for t in ts])
        assert np.abs(dense - sol(ts)).max() <= 1e-6

    def test_random_starts_near_equilibrium(self, ex21):
        rng = np.random.default_rng(11)
        for _ in range(10):
            angle = rng.uniform(0.0, 2.0 * np.pi)
            radius = rng.uniform(0.0, 0.5)
            x0 = np.array([1.0 + radius * np.cos(angle), 1.0 + radius * np.sin(angle)])
            sol, _ = _ex21_closed_form(0.0, x0)
            traj = simulate(ex21.system, x0, 0.0, 100.0, TIGHT)
            errs = np.linalg.norm(traj.states - sol(traj.times), axis=1)
            assert errs.max() <= 1e-6

    def test_non_convergence_to_equilibrium(self, ex21):
        # x1 stalls at 1 + c1: proximity to (1,1) alone must not be read
        # as convergence to it
        opts = SimOptions(
            rel_tol=1e-9,
            abs_tol=1e-12,
            convergence_target=(1.0, 1.0),
            convergence_radius=0.2,
        )
        traj = simulate(ex21.system, (1.1, 1.1), 0.0, 100.0, opts)
        assert traj.status is Status.REACHED_END
        assert traj.final_state[0] == pytest.approx(1.1 * np.exp(-2.0) - np.exp(-2.0) + 1.0, rel=1e-3)

    def test_tolerance_order_behavior(self, ex21):
        # error responds to tolerance with exponent ~0.8 under PI control:
        # a 10x tolerance cut buys at least a 4x error cut
        sol, _ = _ex21_closed_form(0.0, (2.0, 2.0))

        def max_err(rel):
            traj = simulate(
                ex21.system, (2.0, 2.0), 0.0, 100.0,
                SimOptions(rel_tol=rel, abs_tol=rel * 1e-3),
            )
            return np.abs(traj.states - sol(traj.times)).max()

        coarse = max_err(1e-5)
        fine = max_err(1e-6)
        finer = max_err(1e-7)
        assert coarse / fine >= 4.0
        assert fine / finer >= 4.0


class TestStatuses:
    def test_constant_trajectory_at_equilibrium(self, ex31):
        traj = simulate(ex31.system, (2.0, 4.0), 0.0, 10.0, TIGHT)
        assert traj.status is Status.REACHED_END
        assert np.abs(traj.states - np.array([2.0, 4.0])).max() <= 1e-12

    def test_converged_at_t0_when_starting_on_target(self, ex31):
        opts = SimOptions(convergence_target=(2.0, 4.0), convergence_radius=1e-6)
        traj = simulate(ex31.system, (2.0, 4.0), 0.0, 10.0, opts)
        assert traj.status is Status.CONVERGED
        assert traj.converged_at == 0.0

    def test_convergence_to_p1_matches_rk4_reference(self, ex31):
        opts = SimOptions(convergence_target=(2.0, 1.0), convergence_radius=1e-6)
        traj = simulate(ex31.system, (2.1, 1.2), 0.0, 50.0, opts)
        assert traj.status is Status.CONVERGED
        assert np.linalg.norm(traj.final_state - np.array([2.0, 1.0])) < 1e-6
        # independent fixed-step RK4 reference over the transient
        ref = rk4_reference(ex31.system.rhs, (2.1, 1.2), 0.0, 1.0, 1e-4)
        dense = traj.sample_at(1.0)
        assert np.linalg.norm(dense - ref) <= 1e-8

    def test_left_domain(self):
        f = ExpressionField(parse("x1^2", 1), Box((-1.0,), (1.0,)))
        system = System(f, MatrixPath.identity(1))
        traj = simulate(system, (0.5,), 0.0, 10.0, TIGHT)
        assert traj.status is Status.LEFT_DOMAIN
        assert traj.exit_point is not None

    def test_step_failure_when_h_min_binds(self):
        # bounded dynamics on a huge box: the forced step can't satisfy the
        # tolerance but never leaves the domain, so h_min binds repeatedly
        f = ExpressionField(parse("0 - cos(x1)", 1), Box((-100.0,), (100.0,)))
        system = System(f, MatrixPath.identity(1))
        opts = SimOptions(rel_tol=1e-14, abs_tol=1e-16, h_min=8.0, h_max=8.0, h_init=8.0)
        traj = simulate(system, (0.5,), 0.0, 50.0, opts)
        assert traj.status is Status.STEP_FAILURE
        assert "h_min" in traj.detail

    def test_precondition_checks(self, ex31):
        with pytest.raises(ValueError):
            simulate(ex31.system, (2.0, 1.0), 5.0, 5.0)
        with pytest.raises(ValueError):
            simulate(ex31.system, (2.0, 1.0), -1.0, 5.0)

    def test_times_strictly_increasing_and_h_bounded(self, ex21):
        opts = SimOptions(rel_tol=1e-9, abs_tol=1e-12, h_max=2.0)
        traj = simulate(ex21.system, (2.0, 2.0), 0.0, 50.0, opts)
        dt = np.diff(traj.times)
        assert np.all(dt > 0.0)
        assert dt.max() <= 2.0 + 1e-12


class TestLyapunovTrace:
    def test_zero_at_anchor(self, ex31):
        traj = simulate(ex31.system, (2.0, 1.0), 0.0, 5.0, TIGHT)
        trace = lyapunov_trace(ex31.system, traj, (2.0, 1.0))
        assert np.abs(trace.rows[:, 1]).max() <= 1e-12  # V
        assert np.abs(trace.rows[:, 2]).max() <= 1e-12  # V'

    def test_hand_arithmetic_example_21(self, ex21):
        # V(2,2) = f(1,1) - f(2,2) = 4 - 2 = 2; V' = -(I(-2,-2)).(-2,-2) = -8
        traj = simulate(ex21.system, (2.0, 2.0), 0.0, 1.0, TIGHT)
        trace = lyapunov_trace(ex21.system, traj, (1.0, 1.0))
        assert trace.rows[0, 1] == pytest.approx(2.0, abs=1e-14)
        assert trace.rows[0, 2] == pytest.approx(-8.0, abs=1e-14)
        assert trace.rows[0, 3] == pytest.approx(1.0, abs=1e-14)  # lambda_1(P(0))
        assert trace.rows[0, 4] == pytest.approx(8.0, abs=1e-14)  # |grad f|^2

    def test_monotone_descent_and_pointwise_bound(self, ex21, ex31):
        for entry, x0 in [(ex21, (2.0, 2.0)), (ex31, (2.4, 1.7)), (ex31, (1.0, 3.0))]:
            traj = simulate(entry.system, x0, 0.0, 20.0, TIGHT)
            anchor = (1.0, 1.0) if entry is ex21 else (2.0, 4.0)
            trace = lyapunov_trace(entry.system, traj, anchor)
            assert trace.max_increase() <= 1e-7
            assert trace.max_bound_violation() <= 1e-10

    def test_v_nonnegative_near_certified_max(self, ex21):
        traj = simulate(ex21.system, (1.3, 0.8), 0.0, 50.0, TIGHT)
        trace = lyapunov_trace(ex21.system, traj, (1.0, 1.0))
        assert np.all(trace.rows[:, 1] >= -1e-14)


class TestDenseOutput:
    def test_hermite_matches_nodes(self, ex21):
        traj = simulate(ex21.system, (2.0, 2.0), 0.0, 10.0, TIGHT)
        for k in [0, len(traj.times) // 2, len(traj.times) - 1]:
            assert np.allclose(traj.sample_at(traj.times[k]), traj.states[k], atol=1e-13)

    def test_out_of_range_rejected(self, ex21):
        traj = simulate(ex21.system, (2.0, 2.0), 0.0, 10.0, TIGHT)
        with pytest.raises(ValueError):
            traj.sample_at(-1.0)
        with pytest.raises(ValueError):
            traj.sample_at(10.5)

    def test_checkpoints(self, ex21):
        traj = simulate(ex21.system, (2.0, 2.0), 0.0, 150.0, TIGHT)
        points = dict((t, x) for t, x in traj.checkpoints())
        assert set(points) == {10.0, 100.0}
        sol, _ = _ex21_closed_form(0.0, (2.0, 2.0))
        assert np.abs(points[100.0] - sol(100.0)).max() <= 1e-6

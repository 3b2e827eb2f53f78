"""Tests for the semi-implicit upwind macroscopic solver."""

import numpy as np
import pytest


def _uniform_state(grid, rho_bar, params, N=5.0):
    from src.model import MacroState

    n = grid.n_cells
    return MacroState(
        t=0.0,
        rho=np.full(n, rho_bar),
        S=np.full(n, params.beta * rho_bar / params.alpha),
        N=np.full(n, N),
    )


class TestOperators:
    """Tridiagonal implicit solves with Neumann walls."""

    def test_implicit_diffusion_conserves_sum(self):
        from src.macro import implicit_diffusion

        rhs = np.random.default_rng(0).uniform(0, 1, 50)
        out = implicit_diffusion(rhs, coef=2.0, dx=0.1, dt=0.05)
        assert out.sum() == pytest.approx(rhs.sum(), rel=1e-13)
        assert out.min() > 0

    def test_laplacian_of_constant_is_zero(self):
        from src.macro import neumann_laplacian

        np.testing.assert_array_equal(neumann_laplacian(np.full(10, 3.0), 0.1), 0.0)


class TestSolveS:
    """Implicit chemoattractant sub-step."""

    def test_pure_decay(self, params):
        from src.macro import solve_S_substep

        S = solve_S_substep(np.full(40, 2.0), np.zeros(40), params, dt=0.1, dx=0.1)
        np.testing.assert_allclose(S, 2.0 / (1 + params.alpha * 0.1), rtol=1e-13)

    def test_fixed_point(self, params):
        from src.macro import solve_S_substep

        r0 = 0.3
        S0 = np.full(40, params.beta * r0 / params.alpha)
        S = solve_S_substep(S0, np.full(40, r0), params, dt=0.1, dx=0.1)
        np.testing.assert_allclose(S, S0, rtol=1e-12)

    def test_point_source_symmetric(self, params):
        from src.macro import solve_S_substep

        rho = np.zeros(101)
        rho[50] = 1.0
        S = solve_S_substep(np.zeros(101), rho, params, dt=0.1, dx=0.1)
        np.testing.assert_allclose(S, S[::-1], rtol=1e-12)
        assert S.argmax() == 50


class TestSolverConfig:
    """Time-stepping settings."""

    def test_defaults(self):
        from src.macro import SolverConfig

        cfg = SolverConfig()
        assert cfg.dt == 0.01 and cfg.cfl_safety == 0.5 and cfg.dSdt_mode == "rhs_eval"

    def test_all_problems_reported(self):
        from src.errors import ConfigError
        from src.macro import SolverConfig

        with pytest.raises(ConfigError) as info:
            SolverConfig(dt=0.0, cfl_safety=2.0, dSdt_mode="guess")
        assert len(info.value.problems) == 3

    @pytest.mark.parametrize("span,dt,expected", [(1.0, 0.1, 10), (0.0, 0.1, 0), (0.05, 0.1, 1), (1.0, 0.3, 4)])
    def test_step_count(self, span, dt, expected):
        from src.macro import step_count

        assert step_count(0.0, span, dt) == expected


class TestStep:
    """One time step of the coupled system."""

    def test_homogeneous_state(self, params, small_grid, stiff_phi):
        from src.macro import SolverConfig, step

        state = _uniform_state(small_grid, 0.05, params)
        new = step(state, small_grid, params, stiff_phi, SolverConfig(dt=0.01))
        np.testing.assert_allclose(new.rho, state.rho, rtol=1e-13)
        np.testing.assert_allclose(new.S, state.S, rtol=1e-12)
        np.testing.assert_allclose(new.N, state.N * np.exp(-params.gamma * 0.05 * 0.01), rtol=1e-14)
        assert new.t == pytest.approx(0.01)

    def test_no_chemotaxis_is_heat_equation(self, small_grid, stiff_phi):
        from src.macro import SolverConfig, step
        from src.model import ModelParams, initial_condition

        params = ModelParams(chi_S=0.0, chi_N=0.0)
        state = initial_condition(small_grid, params, center=10.0)
        new = step(state, small_grid, params, stiff_phi, SolverConfig(dt=0.05))
        assert new.mass(small_grid.dx) == pytest.approx(state.mass(small_grid.dx), rel=1e-13)
        assert new.rho.max() <= state.rho.max()
        assert new.rho.min() >= state.rho.min()

    def test_cfl_violation_refused(self, params, small_grid, stiff_phi):
        from src.errors import CFLViolation
        from src.macro import SolverConfig, step
        from src.model import MacroState

        n = small_grid.n_cells
        state = MacroState(t=2.0, rho=np.full(n, 0.05), S=small_grid.centers.copy(), N=np.full(n, 10.0))
        with pytest.raises(CFLViolation) as info:
            step(state, small_grid, params, stiff_phi, SolverConfig(dt=1.0))
        assert info.value.t == 2.0

    def test_outflow_counts_both_faces(self):
        from src.macro import outflow_speed

        u = np.array([-1.0, 1.0, 0.5, -0.25])
        np.testing.assert_array_equal(outflow_speed(u), [0.0, 2.0, 0.5, 0.0, 0.25])

    def test_diverging_cell_bounds_the_step(self):
        from src.errors import CFLViolation
        from src.macro import SolverConfig, step
        from src.model import Grid1D, MacroState, ModelParams, ResponseFunction

        # S has its minimum in cell 10, so both of its faces carry cells away at speed chi_S
        grid = Grid1D(L=2.1, n_cells=21)
        params = ModelParams(chi_N=0.0, D_rho=1e-6, D_S=0.0, alpha=0.0, beta=0.0)
        phi = ResponseFunction(shape="bivaluated")
        x = grid.centers
        state = MacroState(t=0.0, rho=np.full(21, 1e-3), S=np.abs(x - x[10]), N=np.full(21, 10.0))
        with pytest.raises(CFLViolation):
            step(state, grid, params, phi, SolverConfig(dt=0.09, cfl_safety=1.0))
        new = step(state, grid, params, phi, SolverConfig(dt=0.045, cfl_safety=1.0))
        assert new.rho.min() >= 0.0
        assert new.rho[10] < state.rho[10]
        assert new.mass(grid.dx) == pytest.approx(state.mass(grid.dx), rel=1e-13)

    def test_lagged_mode_without_previous(self, params, small_grid, stiff_phi):
        from src.macro import SolverConfig, step
        from src.model import initial_condition

        state = initial_condition(small_grid, params)
        new = step(state, small_grid, params, stiff_phi, SolverConfig(dSdt_mode="lagged_difference"))
        assert new.mass(small_grid.dx) == pytest.approx(1.0, rel=1e-13)


class TestRun:
    """Whole trajectories."""

    def test_zero_duration(self, params, small_grid, stiff_phi):
        from src.macro import SolverConfig, run
        from src.model import initial_condition

        initial = initial_condition(small_grid, params)
        traj = run(initial, small_grid, params, stiff_phi, SolverConfig(t_end=0.0))
        assert len(traj) == 1
        assert traj.final is initial

    def test_deterministic(self, params, small_grid, stiff_phi):
        from src.macro import SolverConfig, run
        from src.model import initial_condition

        cfg = SolverConfig(t_end=1.0, snapshot_every=25)
        initial = initial_condition(small_grid, params)
        a = run(initial, small_grid, params, stiff_phi, cfg)
        b = run(initial, small_grid, params, stiff_phi, cfg)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.rho, sb.rho)
            np.testing.assert_array_equal(sa.S, sb.S)

    def test_snapshot_cadence(self, params, small_grid, stiff_phi):
        from src.macro import SolverConfig, run
        from src.model import initial_condition

        traj = run(
            initial_condition(small_grid, params), small_grid, params, stiff_phi,
            SolverConfig(t_end=1.05, snapshot_every=50),
        )
        np.testing.assert_allclose(traj.times(), [0.0, 0.5, 1.0, 1.05], atol=1e-12)

    def test_conservation_positivity_and_consumption(self, params, stiff_phi):
        from src.macro import SolverConfig, run
        from src.model import Grid1D, initial_condition

        grid = Grid1D(L=40.0, n_cells=400)
        traj = run(initial_condition(grid, params), grid, params, stiff_phi, SolverConfig(t_end=20.0, snapshot_every=100))
        masses = traj.masses()
        assert np.max(np.abs(masses - masses[0])) / masses[0] < 1e-12
        for previous, state in zip(traj.states, traj.states[1:]):
            assert state.rho.min() >= -1e-13
            assert state.S.min() >= -1e-13
            assert np.all(state.N <= previous.N)

    def test_cells_move_towards_nutrient(self, params, stiff_phi):
        from src.macro import SolverConfig, run
        from src.model import Grid1D, initial_condition

        grid = Grid1D(L=40.0, n_cells=400)
        traj = run(initial_condition(grid, params), grid, params, stiff_phi, SolverConfig(t_end=20.0, snapshot_every=500))

        def centre(state):
            return np.sum(grid.centers * state.rho) / np.sum(state.rho)

        assert centre(traj.final) > centre(traj[0]) + 2.0

    def test_trajectory_times_must_increase(self, params, small_grid):
        from src.macro import Trajectory
        from src.model import initial_condition

        traj = Trajectory(grid=small_grid)
        state = initial_condition(small_grid, params)
        traj.append(state)
        with pytest.raises(ValueError, match="increase"):
            traj.append(state)

"""Full-channel runs against the analytic pulse, cluster and drift-diffusion limit.

These take minutes; run with --runslow.
"""

import numpy as np
import pytest

pytestmark = pytest.mark.slow


def _macro(name, tmp_path_factory, **overrides):
    from src.handlers import run_macro
    from src.runconfig import apply_overrides, load_preset

    config = apply_overrides(load_preset(name), overrides) if overrides else load_preset(name)
    out = tmp_path_factory.mktemp(name)
    return run_macro(config, out), out


@pytest.fixture(scope="module")
def stiff_pulse(tmp_path_factory):
    return _macro("stiff_pulse", tmp_path_factory)


class TestStiffPulse:
    """Stiff response with plenty of nutrient."""

    def test_speed_matches_analysis(self, stiff_pulse):
        summary, _ = stiff_pulse
        assert summary.is_pulse
        assert summary.speed == pytest.approx(summary.sigma_star, rel=0.05)

    def test_tails_match_profile(self, stiff_pulse):
        summary, _ = stiff_pulse
        assert summary.lambda_minus == pytest.approx(summary.lambda_minus_pred, rel=0.10)
        assert summary.lambda_plus == pytest.approx(summary.lambda_plus_pred, rel=0.10)
        assert summary.lambda_minus / abs(summary.lambda_plus) > 1.0

    def test_mass_conserved(self, stiff_pulse):
        summary, _ = stiff_pulse
        assert (summary.mass_max - summary.mass_min) / summary.mass_initial < 1e-11

    def test_more_left_turns_behind_the_pulse(self, stiff_pulse):
        summary, out = stiff_pulse
        x, rho, psi_left, psi_right = np.loadtxt(out / "tumbling_macro.dat", unpack=True)
        peak = x[np.argmax(rho)]
        back = (x > peak - 3.0 / summary.lambda_minus_pred) & (x < peak - 0.5 / summary.lambda_minus_pred)
        assert np.all(psi_left[back] > psi_right[back])

    def test_translation_is_steady(self, stiff_pulse):
        from src.analysis import translation_speeds
        from src.utils import read_snapshots

        summary, out = stiff_pulse
        speeds = translation_speeds(read_snapshots(out / "snapshots"))
        assert np.max(np.abs(speeds / np.mean(speeds) - 1.0)) < 0.02
        assert summary.speed_spread < 0.02

    @pytest.mark.parametrize("overrides", [{"model.M": 10.0}, {"model.D_rho": 2.0}])
    def test_speed_independent_of_mass_and_diffusivity(self, stiff_pulse, tmp_path_factory, overrides):
        base, _ = stiff_pulse
        summary, _ = _macro("stiff_pulse", tmp_path_factory, **overrides)
        assert summary.sigma_star == base.sigma_star
        assert summary.speed == pytest.approx(base.speed, rel=0.05)


class TestOtherRegimes:
    """Smooth response, limited nutrient and the stationary cluster."""

    def test_smooth_response_does_not_travel(self, tmp_path_factory):
        summary, _ = _macro("smooth_response", tmp_path_factory)
        assert summary.is_pulse is False

    def test_limited_nutrient_splits(self, tmp_path_factory):
        summary, _ = _macro("limited_nutrient", tmp_path_factory)
        assert summary.bimodal
        assert 0.0 < summary.translating_fraction < 1.0

    def test_cluster_profile(self, tmp_path_factory):
        from src.handlers import run_cluster
        from src.runconfig import load_preset

        summary = run_cluster(load_preset("cluster"), tmp_path_factory.mktemp("cluster"))
        assert summary.cluster_l2 < 0.05
        assert summary.cluster_lambda == 1.0


class TestKineticLimit:
    """Kinetic density approaches the drift-diffusion density as eps shrinks."""

    def test_distance_decreases_with_eps(self, tmp_path_factory):
        from src.handlers import run_kinetic
        from src.runconfig import RunConfig, apply_overrides

        distances = []
        for eps in (0.2, 0.1, 0.05):
            config = apply_overrides(RunConfig(), {
                "mode": "kinetic",
                "model.epsilon": eps,
                "grid.L": 50.0,
                "grid.n_cells": 1000,
                "solver.t_end": 5.0,
                "initial.center": 10.0,
                "kinetic.n_velocities": 16,
                "output.plots": False,
            })
            summary = run_kinetic(config, tmp_path_factory.mktemp(f"kinetic_{eps}"))
            distances.append(summary.kinetic_macro_l1)
        assert distances[0] > distances[1] > distances[2]


class TestKineticTumbling:
    """Turning rates of the velocity-resolved pulse."""

    def test_more_left_turns_behind_the_kinetic_pulse(self, tmp_path_factory):
        from src.handlers import run_kinetic
        from src.runconfig import RunConfig, apply_overrides

        config = apply_overrides(RunConfig(), {
            "mode": "kinetic",
            "grid.L": 50.0,
            "grid.n_cells": 500,
            "solver.t_end": 40.0,
            "kinetic.n_velocities": 16,
            "kinetic.compare_macro": False,
        })
        out = tmp_path_factory.mktemp("kinetic_tumbling")
        summary = run_kinetic(config, out)
        x, rho, _, psi_left, psi_right = np.loadtxt(out / "tumbling_kinetic.dat", unpack=True)
        peak = x[np.argmax(rho)]
        back = (x > peak - 3.0 / summary.lambda_minus_pred) & (x < peak - 0.5 / summary.lambda_minus_pred)
        assert back.sum() > 5
        assert np.all(psi_left[back] > psi_right[back])


class TestLongRun:
    """Conservation over many macroscopic steps."""

    def test_mass_drift_over_1e5_steps(self, params, small_grid, stiff_phi):
        from src.macro import SolverConfig, run
        from src.model import initial_condition

        config = SolverConfig(dt=0.01, t_end=1000.0, snapshot_every=10000)
        traj = run(initial_condition(small_grid, params), small_grid, params, stiff_phi, config)
        masses = traj.masses()
        assert len(masses) == 11
        assert np.max(np.abs(masses - masses[0])) / masses[0] < 1e-11
        assert all(s.rho.min() >= -1e-13 and s.N.min() >= -1e-13 for s in traj)

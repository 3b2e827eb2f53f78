"""Tests for run configuration, result files, the run ledger and the command line."""

import csv

import numpy as np
import pytest


class TestPresets:
    """Bundled presets load and carry the published parameters."""

    @pytest.mark.parametrize(
        "name,delta,N0",
        [
            ("stiff_pulse", 1e-3, 10.0),
            ("smooth_response", 1e-1, 10.0),
            ("limited_nutrient", 1e-3, 1.0),
            ("fig3", 1e-3, 10.0),
            ("fig4", 1e-1, 10.0),
            ("fig5", 1e-3, 1.0),
        ],
    )
    def test_pulse_presets(self, name, delta, N0):
        from src.runconfig import load_preset

        config = load_preset(name)
        assert config.mode == "macro"
        assert config.response.shape == "arctan"
        assert config.response.delta == delta
        assert config.model.N0 == N0
        assert config.grid.L == 200.0 and config.grid.n_cells == 2000
        assert config.solver.t_end == 360.0

    def test_cluster_preset(self):
        from src.runconfig import load_preset

        config = load_preset("cluster")
        assert config.mode == "cluster"
        assert config.model.gamma == 0.0
        assert config.response.shape == "bivaluated"

    def test_figure_names_listed(self):
        from src.config import get_presets
        from src.runconfig import load_preset

        assert {"fig3", "fig4", "fig5", "cluster"} <= set(get_presets())
        assert load_preset("fig3").to_dict() == load_preset("stiff_pulse").to_dict()

    def test_unknown_preset(self):
        from src.errors import ConfigError
        from src.runconfig import load_preset

        with pytest.raises(ConfigError, match="stiff_pulse"):
            load_preset("fig99")


class TestConfigParsing:
    """YAML documents to validated run configurations."""

    def test_round_trip(self):
        from src.runconfig import load_config_text, load_preset, serialize_config

        config = load_preset("stiff_pulse")
        again = load_config_text(serialize_config(config))
        assert again.to_dict() == config.to_dict()

    def test_exponent_without_dot(self):
        from src.runconfig import load_config_text

        config = load_config_text("response:\n  delta: 1e-3\n")
        assert config.response.delta == 1e-3

    def test_every_problem_reported(self):
        from src.errors import ConfigError
        from src.runconfig import load_config_text

        text = "model:\n  chi_Z: 1.0\n  D_rho: -1.0\nplot:\n  dpi: 300\n"
        with pytest.raises(ConfigError) as info:
            load_config_text(text)
        problems = info.value.problems
        assert "unknown key model.chi_Z" in problems
        assert "unknown section 'plot'" in problems
        assert any("D_rho" in p for p in problems)

    def test_yaml_error_position(self):
        from src.errors import ConfigError
        from src.runconfig import load_config_text

        with pytest.raises(ConfigError, match=r"broken.yaml: line \d+, column \d+"):
            load_config_text("model:\n  M: [1.0\n", source="broken.yaml")

    def test_wrong_types(self):
        from src.errors import ConfigError
        from src.runconfig import load_config_text

        with pytest.raises(ConfigError) as info:
            load_config_text("grid:\n  n_cells: many\noutput:\n  plots: 3\n")
        assert len(info.value.problems) == 2

    def test_empty_document_gives_defaults(self):
        from src.runconfig import RunConfig, load_config_text

        assert load_config_text("").to_dict() == RunConfig().to_dict()


class TestOverrides:
    """--override parsing and application."""

    def test_scalar_types(self):
        from src.utils import parse_overrides

        overrides = parse_overrides(["model.chi_N=2", "response.shape=bivaluated", "output.plots=false"])
        assert overrides == {"model.chi_N": 2, "response.shape": "bivaluated", "output.plots": False}

    def test_malformed(self):
        from src.errors import ConfigError
        from src.utils import parse_override

        with pytest.raises(ConfigError):
            parse_override("model.chi_N")

    def test_apply_revalidates(self):
        from src.errors import ConfigError
        from src.runconfig import RunConfig, apply_overrides

        config = apply_overrides(RunConfig(), {"model.M": 10, "mode": "speed"})
        assert config.model.M == 10.0 and config.mode == "speed"
        with pytest.raises(ConfigError, match="epsilon"):
            apply_overrides(RunConfig(), {"model.epsilon": 2.0})

    def test_sweep_axes_must_name_parameters(self):
        from src.errors import ConfigError
        from src.runconfig import RunConfig, apply_overrides

        with pytest.raises(ConfigError) as info:
            apply_overrides(RunConfig(), {"sweep.axes": {"model.chi_Q": [1.0], "model.M": []}})
        assert len(info.value.problems) == 2

    def test_sweep_points_cross_product(self):
        from src.handlers import sweep_points
        from src.runconfig import RunConfig, apply_overrides

        config = apply_overrides(RunConfig(), {"sweep.axes": {"response.delta": [1e-3, 1e-1], "model.N0": [1, 10]}})
        points = sweep_points(config)
        assert len(points) == 4
        assert points[0] == {"response.delta": 1e-3, "model.N0": 1}


class TestSummary:
    """Run summary document."""

    def test_agreement_and_plain_values(self):
        from src.runconfig import RunSummary

        summary = RunSummary(mode="macro", speed=np.float64(0.43), sigma_star=0.4337, is_pulse=np.bool_(True))
        data = summary.to_dict()
        assert data["agreement"]["speed"] == pytest.approx(0.43 / 0.4337)
        assert data["measured"]["is_pulse"] is True
        assert "cluster_l2" not in data["measured"]
        assert data["units"] == {"time_seconds": 10.0, "space_microns": 200.0}

    def test_ratio_against_zero(self):
        from src.runconfig import RunSummary

        assert RunSummary(mode="macro", speed=0.1, sigma_star=0.0).agreement["speed"] is None


class TestSnapshots:
    """Snapshot directories."""

    def test_written_and_read_back(self, params, small_grid, stiff_phi, tmp_path):
        from src.macro import SolverConfig, run
        from src.model import initial_condition
        from src.utils import read_snapshots, write_snapshots

        cfg = SolverConfig(t_end=0.5, snapshot_every=25)
        traj = run(initial_condition(small_grid, params), small_grid, params, stiff_phi, cfg)
        assert write_snapshots(tmp_path, traj, cfg.dt) == 3
        with open(tmp_path / "index.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["file"] for r in rows] == ["snap_000000.csv", "snap_000025.csv", "snap_000050.csv"]

        back = read_snapshots(tmp_path)
        assert back.grid.n_cells == small_grid.n_cells
        assert back.grid.dx == pytest.approx(small_grid.dx, rel=1e-12)
        np.testing.assert_array_equal(back.times(), traj.times())
        for a, b in zip(back, traj):
            np.testing.assert_array_equal(a.rho, b.rho)
            np.testing.assert_array_equal(a.N, b.N)

    def test_missing_index(self, tmp_path):
        from src.errors import ConfigError
        from src.utils import read_snapshots

        with pytest.raises(ConfigError, match="index"):
            read_snapshots(tmp_path)


class TestLedger:
    """Run ledger operations."""

    def test_record_and_get(self, test_db):
        from src.database import get_run, list_runs, now_iso, record_run

        run_id = record_run(label="stiff_pulse", mode="macro", status="ok", started_at=now_iso(), summary="mode: macro\n")
        row = get_run(run_id)
        assert row[0] == run_id
        assert row[2] == "stiff_pulse" and row[3] == "macro" and row[4] == "ok"
        assert len(list_runs()) == 1

    def test_filters(self, test_db):
        from src.database import list_runs, now_iso, record_run

        started = now_iso()
        record_run(label="a", mode="speed", status="ok", started_at=started, sweep="s1")
        record_run(label="b", mode="speed", status="failed", started_at=started, sweep="s1", error="boom")
        record_run(label="c", mode="speed", status="ok", started_at=started, sweep="s2")
        assert [r[2] for r in list_runs(sweep="s1")] == ["a", "b"]
        assert [r[2] for r in list_runs(status="failed")] == ["b"]
        assert list_runs(sweep="s1", status="failed")[0][6] == "boom"

    def test_timestamps_are_utc(self):
        from datetime import datetime, timedelta

        from src.database import now_iso

        stamp = datetime.fromisoformat(now_iso())
        assert stamp.utcoffset() == timedelta(0)

    def test_missing_run(self, test_db):
        from src.database import get_run

        assert get_run(12345) is None


class TestExecute:
    """Whole runs through the handlers."""

    def test_speed_run(self, test_db, tmp_path):
        import yaml

        from src.database import list_runs
        from src.handlers import execute
        from src.runconfig import RunConfig, apply_overrides

        summary = execute(apply_overrides(RunConfig(), {"mode": "speed"}), tmp_path, "defaults")
        assert 0.43 < summary.sigma_star < 0.44
        assert summary.speed_residual < 1e-10
        written = yaml.safe_load((tmp_path / "summary.yaml").read_text())
        assert written["analytic"]["sigma"] == summary.sigma_star
        assert (tmp_path / "config.yaml").exists() and (tmp_path / "wave.dat").exists()
        assert list_runs()[0][4] == "ok"

    def test_stability_run(self, test_db, tmp_path):
        from src.handlers import execute
        from src.runconfig import RunConfig, apply_overrides

        summary = execute(apply_overrides(RunConfig(), {"mode": "stability"}), tmp_path, "stab")
        assert summary.stable is False
        data = np.loadtxt(tmp_path / "dispersion.dat")
        assert data.shape == (100, 3)

    def test_failure_recorded(self, test_db, tmp_path):
        from src.database import list_runs
        from src.errors import NonPulseRegime
        from src.handlers import execute
        from src.runconfig import RunConfig, apply_overrides

        config = apply_overrides(RunConfig(), {"mode": "speed", "model.chi_S": 0.0})
        with pytest.raises(NonPulseRegime):
            execute(config, tmp_path, "no-pulse")
        row = list_runs()[0]
        assert row[4] == "failed" and "lambda" in row[6]

    def test_sweep_with_failed_point(self, test_db, tmp_path):
        from src.database import list_runs
        from src.errors import NumericalError
        from src.handlers import execute
        from src.runconfig import RunConfig, apply_overrides

        config = apply_overrides(RunConfig(), {
            "mode": "sweep",
            "sweep.mode": "speed",
            "sweep.workers": 1,
            "sweep.axes": {"model.chi_S": [1.0, 0.0]},
        })
        with pytest.raises(NumericalError, match="1 of 2"):
            execute(config, tmp_path, "chi-sweep")
        with open(tmp_path / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["status"] for r in rows] == ["ok", "failed"]
        assert float(rows[0]["sigma_star"]) == pytest.approx(0.4337, abs=1e-3)
        statuses = sorted(r[4] for r in list_runs())
        assert statuses == ["failed", "ok", "partial"]
        assert (tmp_path / "point_000" / "summary.yaml").exists()

    def test_sweep_survives_unexpected_worker_error(self, test_db, tmp_path, monkeypatch):
        from concurrent.futures import ThreadPoolExecutor

        import src.handlers
        from src.database import list_runs
        from src.errors import NumericalError
        from src.runconfig import RunConfig, apply_overrides

        real_speed = src.handlers.POINT_HANDLERS["speed"]

        def flaky_speed(config, out):
            if config.model.chi_S == 2.0:
                raise ValueError("array shapes do not match")
            return real_speed(config, out)

        monkeypatch.setattr("src.handlers.ProcessPoolExecutor", ThreadPoolExecutor)
        monkeypatch.setitem(src.handlers.POINT_HANDLERS, "speed", flaky_speed)
        config = apply_overrides(RunConfig(), {
            "mode": "sweep",
            "sweep.mode": "speed",
            "sweep.workers": 2,
            "sweep.axes": {"model.chi_S": [1.0, 2.0]},
        })
        with pytest.raises(NumericalError, match="1 of 2"):
            src.handlers.execute(config, tmp_path, "flaky")
        with open(tmp_path / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["status"] for r in rows] == ["ok", "failed"]
        assert rows[1]["error"] == "ValueError: array shapes do not match"
        assert sorted(r[4] for r in list_runs()) == ["failed", "ok", "partial"]


class TestCommandLine:
    """Exit codes of run_cli."""

    def test_speed_command(self, test_db, tmp_path, capsys):
        from src.app import run_cli

        assert run_cli(["speed", "--out", str(tmp_path)]) == 0
        assert "sigma" in capsys.readouterr().out
        assert (tmp_path / "summary.yaml").exists()

    def test_unknown_preset_is_config_error(self, test_db, tmp_path):
        from src.app import run_cli

        assert run_cli(["simulate", "--preset", "fig99", "--out", str(tmp_path)]) == 1

    def test_bad_arguments_are_config_errors(self, test_db):
        from src.app import run_cli

        assert run_cli(["simulate", "--config", "a.yaml", "--preset", "stiff_pulse"]) == 1
        assert run_cli(["teleport"]) == 1

    def test_numerical_failure_exit_code(self, test_db, tmp_path):
        from src.app import run_cli

        assert run_cli(["speed", "--override", "model.chi_S=0", "--out", str(tmp_path)]) == 2

    def test_fit_needs_source(self, test_db, tmp_path):
        from src.app import run_cli

        assert run_cli(["fit", "--out", str(tmp_path)]) == 1

    def test_missing_config_file_is_io_error(self, test_db, tmp_path):
        from src.app import run_cli

        assert run_cli(["speed", "--config", str(tmp_path / "absent.yaml"), "--out", str(tmp_path)]) == 3

    def test_runs_command_reads_the_ledger(self, test_db, tmp_path, capsys):
        from src.app import run_cli

        assert run_cli(["speed", "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        assert run_cli(["runs"]) == 0
        assert capsys.readouterr().out.startswith("1. default [speed] ok")
        assert run_cli(["runs", "--id", "1"]) == 0
        assert "sigma" in capsys.readouterr().out
        assert run_cli(["runs", "--status", "failed"]) == 0
        assert capsys.readouterr().out.strip() == "No runs recorded."
        assert run_cli(["runs", "--id", "99"]) == 1

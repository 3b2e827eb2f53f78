"""Run handlers: one per mode. Each writes its artifacts and returns a RunSummary."""

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from .analysis import (
    WaveSolution,
    cluster_l2,
    cluster_profile,
    fit_pulse,
    green_kernel,
    leading_peak,
    peak_position,
    profile_l1,
    speed_residual,
    stability_report,
    translation_speeds,
    wave_solution,
)
from .config import default_workers, logger
from .database import get_run, init_db, list_runs, now_iso, record_run
from .errors import ConfigError, NonPulseRegime, NumericalError, PulseLabError
from .flux import tumbling_rates
from .kinetic import coupled_kinetic_run, moments
from .macro import Trajectory, center_derivatives, face_fluxes, run
from .model import initial_condition
from .runconfig import RunConfig, RunSummary, apply_overrides, serialize_config
from .utils import (
    format_run_row,
    point_label,
    read_snapshots,
    write_columns,
    write_snapshots,
    write_table,
    write_yaml,
)

SWEEP_COLUMNS = [
    "index", "label", "status", "is_pulse", "speed", "sigma_star", "speed_ratio",
    "lambda_minus", "lambda_plus", "translating_fraction", "critical_mass", "stable", "error",
]


# ---- Shared pieces ----
def _predicted_wave(config: RunConfig) -> WaveSolution | None:
    try:
        return wave_solution(config.model)
    except NumericalError as e:
        logger.info("no analytic pulse for these parameters: %s", e)
        return None


def _record_mass(summary: RunSummary, trajectory: Trajectory):
    masses = trajectory.masses()
    summary.mass_initial = float(masses[0])
    summary.mass_min = float(masses.min())
    summary.mass_max = float(masses.max())


def _record_fit(summary: RunSummary, trajectory: Trajectory, config: RunConfig, wave: WaveSolution | None):
    if wave is not None:
        summary.sigma_star = wave.sigma
        summary.lambda_minus_pred = wave.lambda_minus
        summary.lambda_plus_pred = wave.lambda_plus
        summary.rho0_pred = wave.rho0
    predicted = (wave.lambda_minus, wave.lambda_plus) if wave is not None else None
    try:
        fit = fit_pulse(
            trajectory,
            window=config.fit.window,
            predicted=predicted,
            min_r2=config.fit.min_r2,
            min_amplitude_ratio=config.fit.min_amplitude_ratio,
        )
    except NonPulseRegime as e:
        summary.is_pulse = False
        summary.notes.append(f"no pulse: {e}")
        return None
    except ConfigError as e:
        summary.notes.append(f"fit skipped: {e}")
        return None
    summary.speed = fit.speed
    summary.speed_r2 = fit.speed_r2
    summary.lambda_minus = fit.lambda_minus
    summary.lambda_minus_r2 = fit.lambda_minus_r2
    summary.lambda_plus = fit.lambda_plus
    summary.lambda_plus_r2 = fit.lambda_plus_r2
    summary.is_pulse = fit.is_pulse
    summary.bimodal = fit.bimodal
    summary.translating_fraction = fit.peak_mass_fraction
    summary.amplitude_ratio = fit.amplitude_ratio
    if not fit.is_pulse:
        summary.notes.append("no pulse: peak does not translate steadily")
    elif not fit.bimodal:
        speeds = translation_speeds(trajectory, window=config.fit.window)
        summary.speed_spread = float(np.max(np.abs(speeds / np.mean(speeds) - 1.0)))
    if wave is not None and fit.is_pulse and not fit.bimodal:
        final = trajectory.final
        summary.profile_l1 = profile_l1(wave, trajectory.grid.centers, final.rho, fit.final_peak, trajectory.grid.dx)
    return fit


def _write_tumbling(path, x, state, grid, config: RunConfig, extra: dict | None = None):
    dS, dN = center_derivatives(state, grid, config.model)
    signals = [(dS, config.model.chi_S), (dN, config.model.chi_N)]
    columns = {"x": x, "rho": state.rho}
    columns.update(extra or {})
    columns["psi_left"] = tumbling_rates(signals, config.response, config.model.epsilon, -1.0)
    columns["psi_right"] = tumbling_rates(signals, config.response, config.model.epsilon, 1.0)
    write_columns(path, columns)


def _write_macro_diagnostics(out: Path, trajectory: Trajectory, config: RunConfig):
    grid = trajectory.grid
    final = trajectory.final
    previous = trajectory[-2] if len(trajectory) > 1 else None
    u_S, u_N = face_fluxes(final, grid, config.model, config.response, config.solver.dSdt_mode, previous)
    write_columns(out / "flux_final.dat", {"x": grid.faces, "u_S": u_S, "u_N": u_N, "u": u_S + u_N})
    _write_tumbling(out / "tumbling_macro.dat", grid.centers, final, grid, config)


# ---- Modes ----
def run_macro(config: RunConfig, out: Path) -> RunSummary:
    summary = RunSummary(mode="macro")
    initial = initial_condition(config.grid, config.model, config.initial.decay_rate, config.initial.center)
    trajectory = run(initial, config.grid, config.model, config.response, config.solver)
    write_snapshots(out / "snapshots", trajectory, config.solver.dt)
    _record_mass(summary, trajectory)
    _record_fit(summary, trajectory, config, _predicted_wave(config))
    if config.output.plots:
        _write_macro_diagnostics(out, trajectory, config)
    return summary


def run_kinetic(config: RunConfig, out: Path) -> RunSummary:
    summary = RunSummary(mode="kinetic")
    kparams = config.kinetic.params_for(config.model)
    initial = initial_condition(config.grid, config.model, config.initial.decay_rate, config.initial.center)
    kinetic = coupled_kinetic_run(initial, config.grid, config.model, kparams, config.response, config.solver)
    trajectory = kinetic.to_macro()
    write_snapshots(out / "snapshots", trajectory, config.solver.dt)
    _record_mass(summary, trajectory)
    _record_fit(summary, trajectory, config, _predicted_wave(config))
    if config.kinetic.compare_macro:
        macro = run(initial, config.grid, config.model, config.response, config.solver)
        dx = config.grid.dx
        diff = np.sum(np.abs(trajectory.final.rho - macro.final.rho)) * dx
        summary.kinetic_macro_l1 = float(diff / config.model.M)
    if config.output.plots:
        final = trajectory.final
        _, flux = moments(kinetic.final.kinetic)
        _write_tumbling(
            out / "tumbling_kinetic.dat", config.grid.centers, final, config.grid, config, extra={"j": flux}
        )
    return summary


def run_speed(config: RunConfig, out: Path) -> RunSummary:
    summary = RunSummary(mode="speed")
    wave = wave_solution(config.model)
    summary.sigma_star = wave.sigma
    summary.lambda_minus_pred = wave.lambda_minus
    summary.lambda_plus_pred = wave.lambda_plus
    summary.rho0_pred = wave.rho0
    summary.speed_residual = abs(float(speed_residual(wave.sigma, config.model)))
    if wave.sigma == 0.0:
        summary.notes.append("chi_N = 0: degenerate, sigma = 0 is the only speed")
    if config.output.plots:
        z = np.linspace(-10.0 / wave.lambda_minus, 10.0 / abs(wave.lambda_plus), 2001)
        p = config.model
        write_columns(out / "wave.dat", {
            "z": z, "rho": wave.density(z), "K": green_kernel(z, wave.sigma, p.D_S, p.alpha),
        })
    return summary


def run_stability(config: RunConfig, out: Path) -> RunSummary:
    summary = RunSummary(mode="stability")
    p = config.model
    if not p.alpha > 0:
        raise ConfigError("stability analysis needs alpha > 0 (signal range l = alpha^-1/2)")
    l = 1.0 / math.sqrt(p.alpha)
    report = stability_report(p.M, config.grid.L, l, config.response.delta, config.stability.k_max)
    summary.critical_mass = report.critical_mass
    summary.stable = report.stable
    summary.most_unstable_mode = report.most_unstable_mode
    if config.output.plots:
        k = np.arange(1, len(report.eigenvalues) + 1)
        write_columns(out / "dispersion.dat", {
            "k": k, "xi": 2.0 * math.pi * k / config.grid.L, "growth": np.array(report.eigenvalues),
        })
    return summary


def run_cluster(config: RunConfig, out: Path) -> RunSummary:
    summary = RunSummary(mode="cluster")
    lam, rho0 = cluster_profile(config.model)
    summary.cluster_lambda, summary.cluster_rho0 = lam, rho0
    if config.model.gamma != 0.0:
        summary.notes.append("gamma > 0: nutrient consumption moves the cluster")
    initial = initial_condition(config.grid, config.model, config.initial.decay_rate, config.initial.center)
    trajectory = run(initial, config.grid, config.model, config.response, config.solver)
    write_snapshots(out / "snapshots", trajectory, config.solver.dt)
    _record_mass(summary, trajectory)
    x, rho = config.grid.centers, trajectory.final.rho
    i = leading_peak(np.asarray(rho))
    if i is None:
        raise NonPulseRegime("no cluster formed", t=trajectory.final.t)
    peak = peak_position(x, np.asarray(rho), i)
    summary.cluster_l2 = cluster_l2(config.model, x, rho, peak)
    if config.output.plots:
        write_columns(out / "cluster.dat", {"x": x, "rho": rho, "predicted": rho0 * np.exp(-lam * np.abs(x - peak))})
    return summary


def run_fit(config: RunConfig, out: Path) -> RunSummary:
    if not config.fit.source:
        raise ConfigError("fit mode needs fit.source (a snapshots directory)")
    summary = RunSummary(mode="fit")
    trajectory = read_snapshots(config.fit.source)
    _record_mass(summary, trajectory)
    _record_fit(summary, trajectory, config, _predicted_wave(config))
    return summary


POINT_HANDLERS = {
    "macro": run_macro,
    "kinetic": run_kinetic,
    "speed": run_speed,
    "stability": run_stability,
    "cluster": run_cluster,
}


# ---- Sweeps ----
def sweep_points(config: RunConfig) -> list[dict]:
    """Cross product of the sweep axes, in axis order."""
    names = list(config.sweep.axes)
    return [dict(zip(names, values)) for values in itertools.product(*(config.sweep.axes[n] for n in names))]


def _run_point(index: int, config: RunConfig, out: str) -> dict:
    """One isolated sweep point; runs in a worker process and owns its directory."""
    started = now_iso()
    point_dir = Path(out)
    point_dir.mkdir(parents=True, exist_ok=True)
    try:
        summary = POINT_HANDLERS[config.mode](config, point_dir)
    except (PulseLabError, OSError) as e:
        return {"index": index, "status": "failed", "error": str(e), "summary": None, "started": started}
    write_yaml(point_dir / "summary.yaml", summary.to_dict())
    return {"index": index, "status": "ok", "error": None, "summary": summary, "started": started}


def run_sweep(config: RunConfig, out: Path, label: str) -> RunSummary:
    points = sweep_points(config)
    if not points:
        raise ConfigError("sweep has no axes")
    point_mode = config.sweep.mode
    configs = [apply_overrides(config, {**p, "mode": point_mode}) for p in points]
    workers = min(config.sweep.workers or default_workers(), len(points))
    sweep_id = f"{label}@{now_iso()}"
    logger.info("sweep %s: %d points in mode %s on %d workers", sweep_id, len(points), point_mode, workers)

    results = {}
    submitted = now_iso()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(_run_point, i, cfg, str(out / f"point_{i:03d}")): i for i, cfg in enumerate(configs)
        }
        for future in as_completed(futures):
            i = futures[future]
            try:
                result = future.result()
            except Exception as e:
                # raised outside the handler, or the worker process died
                error = f"{type(e).__name__}: {e}"
                result = {"index": i, "status": "failed", "error": error, "summary": None, "started": submitted}
            results[i] = result
            point = point_label(points[i])
            summary = result["summary"]
            record_run(
                label=point,
                mode=point_mode,
                status=result["status"],
                started_at=result["started"],
                summary=summary.to_yaml() if summary else None,
                error=result["error"],
                sweep=sweep_id,
            )
            if result["status"] == "ok":
                logger.info("sweep point %d (%s) done", i, point)
            else:
                logger.error("sweep point %d (%s) failed: %s", i, point, result["error"])

    rows = []
    for i, values in enumerate(points):
        result = results[i]
        summary = result["summary"]
        row = {"index": i, "label": point_label(values), "status": result["status"], "error": result["error"]}
        row.update(values)
        if summary is not None:
            row.update({
                "is_pulse": summary.is_pulse,
                "speed": summary.speed,
                "sigma_star": summary.sigma_star,
                "speed_ratio": summary.agreement["speed"],
                "lambda_minus": summary.lambda_minus,
                "lambda_plus": summary.lambda_plus,
                "translating_fraction": summary.translating_fraction,
                "critical_mass": summary.critical_mass,
                "stable": summary.stable,
            })
        rows.append(row)
    write_table(out / "sweep.csv", rows, SWEEP_COLUMNS[:2] + list(config.sweep.axes) + SWEEP_COLUMNS[2:])

    failed = sum(1 for r in results.values() if r["status"] != "ok")
    summary = RunSummary(mode="sweep", points=len(points), failed_points=failed)
    if failed:
        summary.notes.append(f"{failed} of {len(points)} points failed; see sweep.csv")
    return summary


# ---- Entry ----
def execute(config: RunConfig, out_dir, label: str = "run") -> RunSummary:
    """Run one configuration: write config.yaml, the mode's artifacts and summary.yaml; record it in the ledger.

    A sweep with failed points still writes every result, then raises NumericalError.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(serialize_config(config), encoding="utf-8")
    init_db()
    started = now_iso()
    clock = time.perf_counter()
    try:
        if config.mode == "sweep":
            summary = run_sweep(config, out, label)
        elif config.mode == "fit":
            summary = run_fit(config, out)
        else:
            summary = POINT_HANDLERS[config.mode](config, out)
    except (PulseLabError, OSError) as e:
        record_run(label=label, mode=config.mode, status="failed", started_at=started, error=str(e))
        raise
    summary.label = label
    summary.wall_clock = time.perf_counter() - clock
    write_yaml(out / "summary.yaml", summary.to_dict())
    status = "partial" if summary.failed_points else "ok"
    record_run(label=label, mode=config.mode, status=status, started_at=started, summary=summary.to_yaml())
    logger.info("%s run %r finished in %.2fs, results in %s", config.mode, label, summary.wall_clock, out)
    if summary.failed_points:
        raise NumericalError(f"{summary.failed_points} of {summary.points} sweep points failed")
    return summary


# ---- Ledger ----
def show_runs(sweep: str | None = None, status: str | None = None, run_id: int | None = None) -> list[str]:
    """Ledger rows as display lines; a single run also shows its stored summary."""
    init_db()
    if run_id is not None:
        row = get_run(run_id)
        if row is None:
            raise ConfigError(f"no run with id {run_id}")
        lines = [format_run_row(row)]
        if row[5]:
            lines.append(row[5].rstrip("\n"))
        return lines
    rows = list_runs(sweep=sweep, status=status)
    if not rows:
        return ["No runs recorded."]
    return [format_run_row(r) for r in rows]

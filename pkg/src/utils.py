"""Utility functions for parsing overrides and writing result files."""

import csv
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .macro import Trajectory
from .model import Grid1D, MacroState

SNAPSHOT_HEADER = ("x", "rho", "S", "N")
# 17 significant digits: binary64 values survive the text round trip
FLOAT_FORMAT = "%.16e"


def parse_override(text: str) -> tuple[str, object]:
    """
    Parse one --override argument.

    Accepts "section.key=value" or "mode=value". The value is read as a YAML
    scalar, so "true", "12", "0.5" and "arctan" get their natural types.

    Raises ConfigError on bad input.
    """
    name, sep, raw = text.partition("=")
    name = name.strip()
    if not sep or not name:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError:
        raise ConfigError(f"override {text!r}: value is not a valid YAML scalar") from None
    return name, value


def parse_overrides(items: list[str] | None) -> dict:
    overrides = {}
    for item in items or []:
        name, value = parse_override(item)
        overrides[name] = value
    return overrides


def point_label(values: dict) -> str:
    """Readable label for one sweep point, e.g. "response.delta=0.001,model.N0=1"."""
    return ",".join(f"{k}={v}" for k, v in values.items())


def format_run_row(row) -> str:
    """Format a ledger row for display."""
    run_id, sweep, label, mode, status, _, error, _, finished = row
    text = f"{run_id}. {label} [{mode}] {status} - {finished}"
    if sweep:
        text += f" - sweep {sweep}"
    return text + (f" - {error}" if error else "")


# ---- Snapshots ----
def write_snapshot(path, x: np.ndarray, state: MacroState):
    data = np.column_stack([x, state.rho, state.S, state.N])
    np.savetxt(path, data, delimiter=",", header=",".join(SNAPSHOT_HEADER), comments="", fmt=FLOAT_FORMAT)


def write_snapshots(directory, trajectory: Trajectory, dt: float) -> int:
    """snap_<step>.csv per snapshot plus index.csv mapping step to time. Returns the file count."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    x = trajectory.grid.centers
    t0 = trajectory[0].t
    with open(directory / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "t", "file"])
        for state in trajectory:
            step = int(round((state.t - t0) / dt))
            name = f"snap_{step:06d}.csv"
            write_snapshot(directory / name, x, state)
            writer.writerow([step, FLOAT_FORMAT % state.t, name])
    return len(trajectory)


def read_snapshots(directory) -> Trajectory:
    """Rebuild a trajectory from a snapshot directory written by write_snapshots."""
    directory = Path(directory)
    index = directory / "index.csv"
    if not index.exists():
        raise ConfigError(f"{directory} holds no snapshot index (index.csv)")
    with open(index, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{index} lists no snapshots")
    trajectory = None
    for row in rows:
        data = np.loadtxt(directory / row["file"], delimiter=",", skiprows=1, ndmin=2)
        x = data[:, 0]
        if trajectory is None:
            n = len(x)
            dx = (x[-1] - x[0]) / (n - 1)
            trajectory = Trajectory(grid=Grid1D(L=dx * n, n_cells=n))
        trajectory.append(MacroState(t=float(row["t"]), rho=data[:, 1], S=data[:, 2], N=data[:, 3]))
    return trajectory


# ---- Flat data files ----
def write_columns(path, columns: dict):
    """Whitespace-separated columns with a "# name name ..." header (gnuplot-ready)."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    np.savetxt(path, data, header=" ".join(names), fmt="%.10e")


def write_table(path, rows: list[dict], fieldnames: list[str]):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in fieldnames})


def write_yaml(path, data: dict):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)

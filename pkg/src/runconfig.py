"""Run configuration: YAML documents, presets, overrides and the run summary."""

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .config import SPACE_SCALE_MICRONS, TIME_SCALE_SECONDS, preset_path, get_presets
from .errors import ConfigError
from .kinetic import COLLISIONS, KineticParams
from .macro import SolverConfig
from .model import Grid1D, InitialSpec, ModelParams, ResponseFunction, validate

MODES = ("macro", "kinetic", "speed", "stability", "cluster", "fit", "sweep")
POINT_MODES = ("macro", "kinetic", "speed", "stability", "cluster")


@dataclass(frozen=True)
class KineticOptions:
    """Kinetic solver settings; eps always comes from the model, mu defaults to 1/(6 D_rho)."""

    mu: float | None = None
    n_velocities: int = 32
    cfl_safety: float = 0.5
    collision: str = "exponential"
    compare_macro: bool = True

    def __post_init__(self):
        if self.collision not in COLLISIONS:
            raise ConfigError(f"collision must be one of {COLLISIONS} (got {self.collision!r})")

    def params_for(self, model: ModelParams) -> KineticParams:
        kparams = KineticParams.for_model(
            model, n_velocities=self.n_velocities, cfl_safety=self.cfl_safety, collision=self.collision
        )
        if self.mu is not None:
            kparams = dataclasses.replace(kparams, mu=self.mu)
        return kparams


@dataclass(frozen=True)
class FitOptions:
    window: float = 1.0 / 3.0
    min_r2: float = 0.99
    min_amplitude_ratio: float = 0.8
    source: str | None = None

    def __post_init__(self):
        if not 0 < self.window <= 1:
            raise ConfigError("fit.window must lie in (0, 1]")


@dataclass(frozen=True)
class StabilityOptions:
    k_max: int = 100

    def __post_init__(self):
        if self.k_max < 1:
            raise ConfigError("stability.k_max must be >= 1")


@dataclass(frozen=True)
class OutputOptions:
    dir: str | None = None
    plots: bool = True


@dataclass(frozen=True)
class SweepOptions:
    axes: dict = field(default_factory=dict)
    mode: str = "macro"
    workers: int | None = None

    def __post_init__(self):
        if self.mode not in POINT_MODES:
            raise ConfigError(f"sweep.mode must be one of {POINT_MODES} (got {self.mode!r})")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("sweep.workers must be >= 1")


SECTIONS = {
    "model": ModelParams,
    "grid": Grid1D,
    "solver": SolverConfig,
    "response": ResponseFunction,
    "initial": InitialSpec,
    "kinetic": KineticOptions,
    "fit": FitOptions,
    "stability": StabilityOptions,
    "output": OutputOptions,
    "sweep": SweepOptions,
}


@dataclass(frozen=True)
class RunConfig:
    mode: str = "macro"
    model: ModelParams = field(default_factory=ModelParams)
    grid: Grid1D = field(default_factory=Grid1D)
    solver: SolverConfig = field(default_factory=SolverConfig)
    response: ResponseFunction = field(default_factory=ResponseFunction)
    initial: InitialSpec = field(default_factory=InitialSpec)
    kinetic: KineticOptions = field(default_factory=KineticOptions)
    fit: FitOptions = field(default_factory=FitOptions)
    stability: StabilityOptions = field(default_factory=StabilityOptions)
    output: OutputOptions = field(default_factory=OutputOptions)
    sweep: SweepOptions = field(default_factory=SweepOptions)

    def to_dict(self) -> dict:
        data = {"mode": self.mode}
        for name in SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            if name == "sweep":
                section["axes"] = {k: list(v) for k, v in self.sweep.axes.items()}
            data[name] = section
        return data


# ---- Parsing ----
def _field_types(cls) -> dict:
    """name -> (base type, accepts None) from the dataclass annotations."""
    types = {}
    for f in dataclasses.fields(cls):
        args = [a for a in typing.get_args(f.type) if a is not type(None)]
        if args:
            types[f.name] = (args[0], True)
        else:
            types[f.name] = (f.type, False)
    return types


def _coerce(where: str, value, kind, nullable: bool):
    if value is None:
        if nullable:
            return None
        raise ConfigError(f"{where} must not be empty")
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false (got {value!r})")
        return value
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer (got {value!r})")
        return value
    if kind is float:
        # YAML 1.1 reads 1e-3 (no dot) as a string
        if isinstance(value, bool):
            raise ConfigError(f"{where} must be a number (got {value!r})")
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where} must be a number (got {value!r})") from None
        if not math.isfinite(number):
            raise ConfigError(f"{where} must be finite")
        return number
    if kind is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be a mapping")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{where} must be a string (got {value!r})")
    return value


def _check_axes(axes: dict) -> list[str]:
    problems = []
    for name, values in axes.items():
        section, _, key = str(name).partition(".")
        if section not in SECTIONS or section == "sweep" or key not in _field_types(SECTIONS[section]):
            problems.append(f"sweep axis {name!r} does not name a parameter")
        if not isinstance(values, list) or not values:
            problems.append(f"sweep axis {name!r} needs a non-empty list of values")
    return problems


def config_from_dict(data: dict | None) -> RunConfig:
    """Validate a parsed document. Unknown sections and keys are errors; all problems are reported together."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping of sections")
    problems = []
    kwargs = {}
    for name, value in data.items():
        if name == "mode":
            if value not in MODES:
                problems.append(f"mode must be one of {MODES} (got {value!r})")
            else:
                kwargs["mode"] = value
            continue
        if name not in SECTIONS:
            problems.append(f"unknown section {name!r}")
            continue
        if value is None:
            continue
        if not isinstance(value, dict):
            problems.append(f"section {name!r} must be a mapping")
            continue
        types = _field_types(SECTIONS[name])
        values = {}
        for key, raw in value.items():
            if key not in types:
                problems.append(f"unknown key {name}.{key}")
                continue
            try:
                values[key] = _coerce(f"{name}.{key}", raw, *types[key])
            except ConfigError as e:
                problems.extend(e.problems)
        if name == "sweep" and "axes" in values:
            problems.extend(_check_axes(values["axes"]))
        try:
            kwargs[name] = SECTIONS[name](**values)
        except ConfigError as e:
            problems.extend(f"{name}: {p}" for p in e.problems)
    if "model" in kwargs:
        try:
            validate(kwargs["model"])
        except ConfigError as e:
            problems.extend(f"model: {p}" for p in e.problems)
    if problems:
        raise ConfigError(problems)
    return RunConfig(**kwargs)


def load_config_text(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        if mark is not None:
            raise ConfigError(
                f"{source}: line {mark.line + 1}, column {mark.column + 1}: {getattr(e, 'problem', e)}"
            ) from None
        raise ConfigError(f"{source}: {e}") from None
    return config_from_dict(data)


def load_config(path) -> RunConfig:
    """Read and validate a YAML run configuration."""
    path = Path(path)
    return load_config_text(path.read_text(encoding="utf-8"), source=str(path))


def load_preset(name: str) -> RunConfig:
    path = preset_path(name)
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r} (available: {', '.join(get_presets()) or 'none'})")
    return load_config(path)


def serialize_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Return a copy with dotted keys ("model.chi_N", "mode") replaced; the result is revalidated."""
    data = config.to_dict()
    problems = []
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if not key:
            if section != "mode":
                problems.append(f"override {dotted!r} must look like section.key")
                continue
            data["mode"] = value
        elif section not in data or not isinstance(data[section], dict):
            problems.append(f"unknown section {section!r}")
        else:
            data[section][key] = value
    if problems:
        raise ConfigError(problems)
    return config_from_dict(data)


# ---- Summary ----
@dataclass
class RunSummary:
    """Measured and analytic results of one run. None means not applicable."""

    mode: str
    label: str = ""
    speed: float | None = None
    speed_r2: float | None = None
    speed_spread: float | None = None
    lambda_minus: float | None = None
    lambda_minus_r2: float | None = None
    lambda_plus: float | None = None
    lambda_plus_r2: float | None = None
    is_pulse: bool | None = None
    bimodal: bool | None = None
    translating_fraction: float | None = None
    amplitude_ratio: float | None = None
    mass_initial: float | None = None
    mass_min: float | None = None
    mass_max: float | None = None
    sigma_star: float | None = None
    speed_residual: float | None = None
    lambda_minus_pred: float | None = None
    lambda_plus_pred: float | None = None
    rho0_pred: float | None = None
    profile_l1: float | None = None
    kinetic_macro_l1: float | None = None
    cluster_lambda: float | None = None
    cluster_rho0: float | None = None
    cluster_l2: float | None = None
    critical_mass: float | None = None
    stable: bool | None = None
    most_unstable_mode: int | None = None
    points: int | None = None
    failed_points: int | None = None
    wall_clock: float = 0.0
    notes: list = field(default_factory=list)

    @staticmethod
    def _ratio(measured, predicted):
        if measured is None or predicted is None or predicted == 0:
            return None
        ratio = measured / predicted
        return ratio if math.isfinite(ratio) else None

    @property
    def agreement(self) -> dict:
        return {
            "speed": self._ratio(self.speed, self.sigma_star),
            "lambda_minus": self._ratio(self.lambda_minus, self.lambda_minus_pred),
            "lambda_plus": self._ratio(self.lambda_plus, self.lambda_plus_pred),
        }

    def to_dict(self) -> dict:
        groups = {
            "measured": {
                "speed": self.speed,
                "speed_r2": self.speed_r2,
                "speed_spread": self.speed_spread,
                "lambda_minus": self.lambda_minus,
                "lambda_minus_r2": self.lambda_minus_r2,
                "lambda_plus": self.lambda_plus,
                "lambda_plus_r2": self.lambda_plus_r2,
                "is_pulse": self.is_pulse,
                "bimodal": self.bimodal,
                "translating_fraction": self.translating_fraction,
                "amplitude_ratio": self.amplitude_ratio,
                "profile_l1": self.profile_l1,
                "kinetic_macro_l1": self.kinetic_macro_l1,
                "cluster_l2": self.cluster_l2,
            },
            "mass": {"initial": self.mass_initial, "min": self.mass_min, "max": self.mass_max},
            "analytic": {
                "sigma": self.sigma_star,
                "speed_residual": self.speed_residual,
                "lambda_minus": self.lambda_minus_pred,
                "lambda_plus": self.lambda_plus_pred,
                "rho0": self.rho0_pred,
                "cluster_lambda": self.cluster_lambda,
                "cluster_rho0": self.cluster_rho0,
                "critical_mass": self.critical_mass,
                "stable": self.stable,
                "most_unstable_mode": self.most_unstable_mode,
            },
            "agreement": self.agreement,
            "sweep": {"points": self.points, "failed": self.failed_points},
        }
        out = {"mode": self.mode, "label": self.label}
        for name, group in groups.items():
            kept = {k: _plain(v) for k, v in group.items() if v is not None}
            if kept:
                out[name] = kept
        out["wall_clock_seconds"] = round(self.wall_clock, 3)
        out["units"] = {"time_seconds": TIME_SCALE_SECONDS, "space_microns": SPACE_SCALE_MICRONS}
        if self.notes:
            out["notes"] = list(self.notes)
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _plain(value):
    # numpy scalars do not pass through yaml.safe_dump
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value

"""Domain types shared by every solver: parameters, grid, state, response function.

All quantities are nondimensional (time unit 10 s, space unit 200 um).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SHAPES = ("arctan", "bivaluated")


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the cell / chemoattractant / nutrient system."""

    D_rho: float = 1.0
    chi_S: float = 1.0
    chi_N: float = 1.0
    D_S: float = 2.0
    D_N: float = 0.0
    alpha: float = 0.05
    beta: float = 1.0
    gamma: float = 1.0
    epsilon: float = 0.1
    M: float = 1.0
    N0: float = 10.0


def validate(params: ModelParams) -> ModelParams:
    """Return params unchanged if every invariant holds, else raise ConfigError listing all violations."""
    problems = []
    for name in ("chi_S", "chi_N", "D_S", "D_N", "alpha", "beta", "gamma", "N0"):
        value = getattr(params, name)
        if not math.isfinite(value):
            problems.append(f"{name} must be finite")
        elif value < 0:
            problems.append(f"{name} must be non-negative (got {value})")
    if not (math.isfinite(params.D_rho) and params.D_rho > 0):
        problems.append("D_rho must be positive")
    if not (0.0 < params.epsilon < 1.0):
        problems.append(f"epsilon out of range (0, 1) (got {params.epsilon})")
    if not (math.isfinite(params.M) and params.M > 0):
        problems.append("M must be positive")
    if problems:
        raise ConfigError(problems)
    return params


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centred mesh on [0, L]."""

    L: float = 200.0
    n_cells: int = 2000

    def __post_init__(self):
        if not (self.L > 0 and self.n_cells >= 2):
            raise ConfigError(f"grid needs L > 0 and n_cells >= 2 (got L={self.L}, n_cells={self.n_cells})")

    @property
    def dx(self) -> float:
        return self.L / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        """Interior faces x_{i+1/2}, i = 0..n-2. Wall faces carry no flux."""
        return (np.arange(1, self.n_cells)) * self.dx


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MacroState:
    """Cell density rho, chemoattractant S and nutrient N at time t."""

    t: float
    rho: np.ndarray
    S: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        for name in ("rho", "S", "N"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (self.rho.shape == self.S.shape == self.N.shape):
            raise ValueError("rho, S and N must share one shape")

    def mass(self, dx: float) -> float:
        return float(np.sum(self.rho) * dx)


@dataclass(frozen=True)
class ResponseFunction:
    """Signal response phi_delta.

    arctan:      phi(Y) = -(2/pi) atan(Y/delta)
    bivaluated:  phi(Y) = phi0 for Y < 0, -phi0 for Y > 0, 0 at Y = 0
    """

    shape: str = "arctan"
    delta: float = 1e-3
    phi0: float = 1.0

    def __post_init__(self):
        problems = []
        if self.shape not in SHAPES:
            problems.append(f"response shape must be one of {SHAPES} (got {self.shape!r})")
        if self.shape == "arctan" and not self.delta > 0:
            problems.append("delta must be positive")
        if self.shape == "bivaluated" and not self.phi0 > 0:
            problems.append("phi0 must be positive")
        if problems:
            raise ConfigError(problems)

    def __call__(self, Y):
        Y = np.asarray(Y, dtype=float)
        if self.shape == "arctan":
            return -(2.0 / np.pi) * np.arctan(Y / self.delta)
        return -self.phi0 * np.sign(Y)

    @property
    def amplitude(self) -> float:
        """sup |phi|."""
        return 1.0 if self.shape == "arctan" else self.phi0

    @property
    def slope_at_zero(self) -> float:
        """phi'(0); infinite for the bivaluated step."""
        if self.shape == "arctan":
            return -2.0 / (np.pi * self.delta)
        return -math.inf


def initial_condition(
    grid: Grid1D, params: ModelParams, decay_rate: float = 1.0, center: float = 0.0
) -> MacroState:
    """Exponential bump exp(-decay_rate |x - center|) carrying mass M, no signal, nutrient N0."""
    validate(params)
    if not decay_rate > 0:
        raise ConfigError("decay_rate must be positive")
    x = grid.centers
    # exp underflows to exactly 0 far from the centre
    profile = np.exp(-decay_rate * np.abs(x - center))
    total = profile.sum() * grid.dx
    if total == 0.0:
        raise ConfigError("initial bump lies entirely outside the channel")
    rho = profile * (params.M / total)
    return MacroState(
        t=0.0,
        rho=rho,
        S=np.zeros(grid.n_cells),
        N=np.full(grid.n_cells, float(params.N0)),
    )


@dataclass(frozen=True)
class InitialSpec:
    """Shape of the initial bump."""

    decay_rate: float = 1.0
    center: float = 0.0



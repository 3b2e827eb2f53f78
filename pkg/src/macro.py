"""Semi-implicit upwind solver for the cell / chemoattractant / nutrient system.

    d_t rho = D_rho rho_xx - (rho (u_S + u_N))_x
    d_t S   = D_S S_xx - alpha S + beta rho
    d_t N   = D_N N_xx - gamma rho N

Closed channel: zero total flux for rho, homogeneous Neumann for S and N.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .config import logger
from .errors import CFLViolation, ConfigError, NumericalError
from .flux import FieldDerivatives, macro_flux
from .model import Grid1D, MacroState, ModelParams, ResponseFunction, validate

DSDT_MODES = ("rhs_eval", "lagged_difference")
NEGATIVE_TOLERANCE = -1e-13


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01
    t_end: float = 360.0
    cfl_safety: float = 0.5
    snapshot_every: int = 100
    dSdt_mode: str = "rhs_eval"

    def __post_init__(self):
        problems = []
        if not self.dt > 0:
            problems.append("dt must be positive")
        if not self.t_end >= 0:
            problems.append("t_end must be non-negative")
        if not 0 < self.cfl_safety <= 1:
            problems.append("cfl_safety must lie in (0, 1]")
        if not (isinstance(self.snapshot_every, int) and self.snapshot_every >= 1):
            problems.append("snapshot_every must be a positive integer")
        if self.dSdt_mode not in DSDT_MODES:
            problems.append(f"dSdt_mode must be one of {DSDT_MODES} (got {self.dSdt_mode!r})")
        if problems:
            raise ConfigError(problems)


@dataclass
class Trajectory:
    """Snapshots of one run, in strictly increasing time."""

    grid: Grid1D
    states: list = field(default_factory=list)

    def append(self, state: MacroState):
        if self.states and not state.t > self.states[-1].t:
            raise ValueError(f"snapshot times must increase ({state.t} after {self.states[-1].t})")
        self.states.append(state)

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @property
    def final(self) -> MacroState:
        return self.states[-1]

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def masses(self) -> np.ndarray:
        return np.array([s.mass(self.grid.dx) for s in self.states])


# ---- Discrete operators ----
def neumann_laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    """Conservative second difference with zero-flux walls."""
    lap = np.empty_like(u)
    lap[1:-1] = u[2:] - 2.0 * u[1:-1] + u[:-2]
    lap[0] = u[1] - u[0]
    lap[-1] = u[-2] - u[-1]
    return lap / (dx * dx)


def implicit_diffusion(rhs: np.ndarray, coef: float, dx: float, dt: float, decay: float = 0.0) -> np.ndarray:
    """Solve (I - dt*coef*Lap_h + dt*decay) u = rhs, Lap_h with Neumann walls (tridiagonal)."""
    assert dt > 0 and coef >= 0 and decay >= 0
    if coef == 0.0:
        return rhs / (1.0 + dt * decay)
    n = len(rhs)
    r = dt * coef / (dx * dx)
    ab = np.empty((3, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[2, -1] = 0.0
    ab[1, :] = 1.0 + 2.0 * r + dt * decay
    ab[1, 0] -= r
    ab[1, -1] -= r
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def to_faces(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c[1:] + c[:-1])


def signal_rates(state: MacroState, params: ModelParams, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand sides of the S and N equations at cell centres."""
    dSdt = params.D_S * neumann_laplacian(state.S, dx) - params.alpha * state.S + params.beta * state.rho
    dNdt = -params.gamma * state.rho * state.N
    if params.D_N > 0:
        dNdt = dNdt + params.D_N * neumann_laplacian(state.N, dx)
    return dSdt, dNdt


def center_derivatives(
    state: MacroState, grid: Grid1D, params: ModelParams
) -> tuple[FieldDerivatives, FieldDerivatives]:
    """Derivatives of S and N at cell centres (centred in space, zero at the walls)."""
    dSdt, dNdt = signal_rates(state, params, grid.dx)

    def gradient(c):
        g = np.zeros_like(c)
        g[1:-1] = (c[2:] - c[:-2]) / (2.0 * grid.dx)
        return g

    return (
        FieldDerivatives(dSdt=dSdt, dSdx=gradient(state.S)),
        FieldDerivatives(dSdt=dNdt, dSdx=gradient(state.N)),
    )


def face_derivatives(
    state: MacroState,
    grid: Grid1D,
    params: ModelParams,
    mode: str = "rhs_eval",
    previous: MacroState | None = None,
) -> tuple[FieldDerivatives, FieldDerivatives]:
    """Time and space derivatives of S and N at interior faces.

    rhs_eval:          d_t from the equations' right sides, averaged to faces
    lagged_difference: (X^n - X^{n-1}) / dt averaged to faces; zero without a previous state
    """
    dx = grid.dx
    if mode == "rhs_eval":
        dSdt, dNdt = signal_rates(state, params, dx)
    elif previous is None:
        dSdt = dNdt = np.zeros(grid.n_cells)
    else:
        lag = state.t - previous.t
        dSdt = (state.S - previous.S) / lag
        dNdt = (state.N - previous.N) / lag
    dS = FieldDerivatives(dSdt=to_faces(dSdt), dSdx=np.diff(state.S) / dx)
    dN = FieldDerivatives(dSdt=to_faces(dNdt), dSdx=np.diff(state.N) / dx)
    return dS, dN


def face_fluxes(
    state: MacroState,
    grid: Grid1D,
    params: ModelParams,
    phi: ResponseFunction,
    mode: str = "rhs_eval",
    previous: MacroState | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Chemotactic velocities (u_S, u_N) at interior faces."""
    dS, dN = face_derivatives(state, grid, params, mode, previous)
    u_S = macro_flux(dS, phi, params.chi_S, params.epsilon)
    u_N = macro_flux(dN, phi, params.chi_N, params.epsilon)
    return u_S, u_N


# ---- Sub-steps ----
def solve_S_substep(S: np.ndarray, rho: np.ndarray, params: ModelParams, dt: float, dx: float) -> np.ndarray:
    """(I - dt D_S Lap_h + dt alpha) S_new = S + dt beta rho."""
    return implicit_diffusion(S + dt * params.beta * rho, params.D_S, dx, dt, decay=params.alpha)


def update_nutrient(N: np.ndarray, rho: np.ndarray, params: ModelParams, dt: float, dx: float) -> np.ndarray:
    """Exact consumption N exp(-gamma rho dt), then implicit diffusion when D_N > 0."""
    N_new = N * np.exp(-params.gamma * rho * dt)
    if params.D_N > 0:
        N_new = implicit_diffusion(N_new, params.D_N, dx, dt)
    return N_new


def outflow_speed(u: np.ndarray) -> np.ndarray:
    """Per-cell outflow max(u_{i+1/2}, 0) - min(u_{i-1/2}, 0) from interior face velocities; walls carry none."""
    faces = np.concatenate(([0.0], u, [0.0]))
    return np.maximum(faces[1:], 0.0) - np.minimum(faces[:-1], 0.0)


def step(
    state: MacroState,
    grid: Grid1D,
    params: ModelParams,
    phi: ResponseFunction,
    config: SolverConfig,
    previous: MacroState | None = None,
    dt: float | None = None,
) -> MacroState:
    """Advance one step: fluxes from the current fields, then rho, then S, then N."""
    dt = config.dt if dt is None else dt
    dx = grid.dx
    u_S, u_N = face_fluxes(state, grid, params, phi, config.dSdt_mode, previous)
    u = u_S + u_N
    # donor cells keep rho >= 0 while no cell sends out more than it holds
    out_max = float(np.max(outflow_speed(u)))
    if out_max > 0 and dt > config.cfl_safety * dx / out_max:
        raise CFLViolation(
            f"dt={dt:g} exceeds cfl_safety*dx/max outflow = {config.cfl_safety * dx / out_max:g}", t=state.t
        )

    rho = state.rho
    # upwind face flux, donor cell by the sign of u
    F = np.maximum(u, 0.0) * rho[:-1] + np.minimum(u, 0.0) * rho[1:]
    net = np.zeros_like(rho)
    net[:-1] -= F
    net[1:] += F
    rho_new = implicit_diffusion(rho + (dt / dx) * net, params.D_rho, dx, dt)
    if rho_new.min() < NEGATIVE_TOLERANCE:
        raise NumericalError(f"negative density {rho_new.min():.3e}", t=state.t)

    S_new = solve_S_substep(state.S, rho_new, params, dt, dx)
    N_new = update_nutrient(state.N, rho_new, params, dt, dx)
    if N_new.min() < NEGATIVE_TOLERANCE:
        raise NumericalError(f"negative nutrient {N_new.min():.3e}", t=state.t)
    return MacroState(t=state.t + dt, rho=rho_new, S=S_new, N=N_new)


def step_count(t_start: float, t_end: float, dt: float) -> int:
    span = t_end - t_start
    if span <= 0:
        return 0
    return max(1, math.ceil(span / dt - 1e-9))


def run(
    initial: MacroState,
    grid: Grid1D,
    params: ModelParams,
    phi: ResponseFunction,
    config: SolverConfig,
) -> Trajectory:
    """Integrate to config.t_end, recording every snapshot_every steps and the final state."""
    validate(params)
    if initial.rho.shape != (grid.n_cells,):
        raise ConfigError(f"initial state has {initial.rho.size} cells, grid has {grid.n_cells}")
    trajectory = Trajectory(grid=grid)
    trajectory.append(initial)
    n_steps = step_count(initial.t, config.t_end, config.dt)
    logger.info(
        "macro run: %d cells, dx=%g, dt=%g, %d steps, phi=%s(delta=%g)",
        grid.n_cells, grid.dx, config.dt, n_steps, phi.shape, phi.delta,
    )
    started = time.perf_counter()
    mass0 = initial.mass(grid.dx)
    state, previous = initial, None
    report_every = max(1, n_steps // 10)
    for k in range(1, n_steps + 1):
        # targets t0 + k*dt keep rounding from accumulating over long runs
        target = config.t_end if k == n_steps else initial.t + k * config.dt
        state, previous = step(state, grid, params, phi, config, previous, dt=target - state.t), state
        if k % config.snapshot_every == 0 or k == n_steps:
            trajectory.append(state)
        if k % report_every == 0:
            logger.debug("t=%.4g mass=%.15g max rho=%.4g", state.t, state.mass(grid.dx), state.rho.max())
    if n_steps:
        drift = abs(state.mass(grid.dx) - mass0) / mass0
        logger.info(
            "macro run done: %d steps in %.2fs, relative mass drift %.2e",
            n_steps, time.perf_counter() - started, drift,
        )
    return trajectory

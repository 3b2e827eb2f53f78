"""Velocity-resolved run-and-tumble solver (parabolic scaling).

    d_t f + (v/eps) d_x f = (mu/eps^2) * ( sum_v' w' psi(v') f(v') - |V| psi(v) f(v) )
    psi(v) = 1 + eps * bias(v)

with |V| = 2 and bias(v) = sum over signals of kappa * phi(eps d_t X + v d_x X),
kappa = 2 chi / sup|phi|, so that the eps -> 0 limit is the macroscopic model with
D_rho = 1/(6 mu) and fluxes chi * J_phi.

Transport: flux-limited second-order upwind (minmod), specular reflection at the walls.
Collision: exact relaxation plus explicit bias ("exponential", the default), or backward
Euler on the whole gain-loss operator ("implicit").
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import logger
from .errors import CFLViolation, ConfigError, NumericalError
from .flux import FieldDerivatives, Quadrature, diffusivity_from_kinetic, gauss_legendre
from .macro import (
    SolverConfig,
    Trajectory,
    center_derivatives,
    solve_S_substep,
    step_count,
    update_nutrient,
)
from .model import Grid1D, MacroState, ModelParams, ResponseFunction, validate

COLLISIONS = ("implicit", "exponential")
NEGATIVE_TOLERANCE = -1e-13


@dataclass(frozen=True)
class KineticParams:
    epsilon: float = 0.1
    mu: float = 1.0 / 6.0
    n_velocities: int = 32
    cfl_safety: float = 0.5
    collision: str = "exponential"

    def __post_init__(self):
        problems = []
        if not 0 < self.epsilon < 1:
            problems.append(f"epsilon out of range (0, 1) (got {self.epsilon})")
        if not self.mu > 0:
            problems.append("mu must be positive")
        if not (self.n_velocities >= 2 and self.n_velocities % 2 == 0):
            problems.append("n_velocities must be an even number >= 2")
        if not 0 < self.cfl_safety <= 1:
            problems.append("cfl_safety must lie in (0, 1]")
        if self.collision not in COLLISIONS:
            problems.append(f"collision must be one of {COLLISIONS} (got {self.collision!r})")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def for_model(cls, params: ModelParams, **kwargs) -> "KineticParams":
        """Kinetic parameters whose drift-diffusion limit has the model's eps and D_rho."""
        return cls(epsilon=params.epsilon, mu=1.0 / (6.0 * params.D_rho), **kwargs)

    @property
    def diffusivity(self) -> float:
        return diffusivity_from_kinetic(self.mu)


@dataclass(frozen=True, eq=False)
class KineticState:
    """f[i, j]: density of cells in cell i moving at velocity node j."""

    t: float
    f: np.ndarray
    quad: Quadrature
    epsilon: float

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        if f.ndim != 2 or f.shape[1] != len(self.quad):
            raise ValueError(f"f must have shape (n_cells, {len(self.quad)})")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    def mass(self, dx: float) -> float:
        return float(np.sum(self.f @ self.quad.weights) * dx)


def equilibrium(rho: np.ndarray, quad: Quadrature, epsilon: float, t: float = 0.0) -> KineticState:
    """Velocity-uniform state f = rho F(v), F = 1/|V|."""
    f = np.repeat(0.5 * np.asarray(rho, dtype=float)[:, None], len(quad), axis=1)
    return KineticState(t=t, f=f, quad=quad, epsilon=epsilon)


def moments(state: KineticState) -> tuple[np.ndarray, np.ndarray]:
    """rho = sum_j w_j f_j and flux j = eps^-1 sum_j w_j v_j f_j, per cell."""
    w, v = state.quad.weights, state.quad.nodes
    rho = np.clip(state.f @ w, 0.0, None)
    flux = (state.f @ (w * v)) / state.epsilon
    return rho, flux


def turning_bias(
    signals: list[tuple[FieldDerivatives, float]],
    phi: ResponseFunction,
    quad: Quadrature,
    epsilon: float,
) -> np.ndarray:
    """Bias of the turning rate per (cell, velocity): sum of kappa * phi(eps X_t + v X_x)."""
    bias = None
    for derivs, chi in signals:
        if chi == 0.0:
            continue
        kappa = 2.0 * chi / phi.amplitude
        Y = epsilon * derivs.dSdt[:, None] + quad.nodes[None, :] * derivs.dSdx[:, None]
        term = kappa * phi(Y)
        bias = term if bias is None else bias + term
    if bias is None:
        n = len(signals[0][0]) if signals else 0
        return np.zeros((n, len(quad)))
    return bias


def collision_operator(f: np.ndarray, bias: np.ndarray, quad: Quadrature, kparams: KineticParams) -> np.ndarray:
    """(mu/eps^2) * (sum_v' w' psi' f' - |V| psi f), psi = 1 + eps * bias."""
    eps = kparams.epsilon
    psi = 1.0 + eps * bias
    gain = (psi * f) @ quad.weights
    return (kparams.mu / eps**2) * (gain[:, None] - 2.0 * psi * f)


def _minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _transport(f: np.ndarray, quad: Quadrature, dt: float, dx: float, eps: float) -> np.ndarray:
    mirror = quad.mirror()
    n = f.shape[0]
    g = np.empty((n + 4, f.shape[1]))
    g[2:-2] = f
    # specular walls: ghost cells hold the mirrored velocity
    g[1], g[0] = f[0, mirror], f[1, mirror]
    g[-2], g[-1] = f[-1, mirror], f[-2, mirror]
    slopes = _minmod(np.diff(g, axis=0)[:-1], np.diff(g, axis=0)[1:])
    v = quad.nodes
    nu = np.abs(v) * dt / (eps * dx)
    correction = 0.5 * (1.0 - nu)
    right_moving = g[1:n + 2] + correction * slopes[0:n + 1]
    left_moving = g[2:n + 3] - correction * slopes[1:n + 2]
    face_values = np.where(v > 0, right_moving, left_moving)
    flux = (v / eps) * face_values
    return f - (dt / dx) * (flux[1:] - flux[:-1])


def _collide_implicit(f, bias, quad, kparams, dt):
    eps = kparams.epsilon
    psi = 1.0 + eps * bias
    k = dt * kparams.mu / eps**2
    denom = 1.0 + 2.0 * k * psi
    w = quad.weights
    a = (psi * f / denom) @ w
    b = k * ((psi / denom) @ w)
    gain = a / (1.0 - b)
    return (f + k * gain[:, None]) / denom


def _collide_exponential(f, bias, quad, kparams, dt):
    eps = kparams.epsilon
    w = quad.weights
    rho = f @ w
    decay = math.exp(-2.0 * kparams.mu * dt / eps**2)
    relaxed = 0.5 * rho[:, None] + (f - 0.5 * rho[:, None]) * decay
    gain = (bias * relaxed) @ w
    return relaxed + dt * (kparams.mu / eps) * (gain[:, None] - 2.0 * bias * relaxed)


def kinetic_step(
    state: KineticState,
    grid: Grid1D,
    signals: list[tuple[FieldDerivatives, float]],
    phi: ResponseFunction,
    kparams: KineticParams,
    dt: float,
) -> KineticState:
    """Transport then collision over dt. signals: (derivatives at cell centres, chi) per chemical."""
    dx = grid.dx
    v_max = float(np.max(np.abs(state.quad.nodes)))
    limit = kparams.cfl_safety * kparams.epsilon * dx / v_max
    if dt > limit * (1.0 + 1e-8):
        raise CFLViolation(f"dt={dt:g} exceeds cfl_safety*eps*dx/max|v| = {limit:g}", t=state.t)
    if signals:
        bias = turning_bias(signals, phi, state.quad, kparams.epsilon)
    else:
        bias = np.zeros_like(state.f)
    if bias.size and np.min(1.0 + kparams.epsilon * bias) < 0.0:
        raise NumericalError("turning rate psi = 1 + eps*bias went negative", t=state.t)

    f = _transport(state.f, state.quad, dt, dx, kparams.epsilon)
    if kparams.collision == "implicit":
        f = _collide_implicit(f, bias, state.quad, kparams, dt)
    else:
        f = _collide_exponential(f, bias, state.quad, kparams, dt)
    if f.min() < NEGATIVE_TOLERANCE:
        raise NumericalError(f"negative kinetic density {f.min():.3e}", t=state.t)
    return KineticState(t=state.t + dt, f=f, quad=state.quad, epsilon=state.epsilon)


@dataclass(frozen=True, eq=False)
class KineticSnapshot:
    kinetic: KineticState
    S: np.ndarray
    N: np.ndarray

    def to_macro(self) -> MacroState:
        rho, _ = moments(self.kinetic)
        return MacroState(t=self.kinetic.t, rho=rho, S=self.S, N=self.N)


@dataclass
class KineticTrajectory:
    grid: Grid1D
    snapshots: list = field(default_factory=list)

    def append(self, snapshot: KineticSnapshot):
        if self.snapshots and not snapshot.kinetic.t > self.snapshots[-1].kinetic.t:
            raise ValueError("snapshot times must increase")
        self.snapshots.append(snapshot)

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    @property
    def final(self) -> KineticSnapshot:
        return self.snapshots[-1]

    def to_macro(self) -> Trajectory:
        """rho-moment trajectory, usable wherever a macroscopic trajectory is."""
        out = Trajectory(grid=self.grid)
        for snap in self.snapshots:
            out.append(snap.to_macro())
        return out


def check_turning_bounds(params: ModelParams, kparams: KineticParams):
    """psi = 1 + eps*bias stays non-negative iff 2 eps (chi_S + chi_N) <= 1."""
    bound = 2.0 * kparams.epsilon * (params.chi_S + params.chi_N)
    if bound > 1.0:
        raise ConfigError(
            f"2*eps*(chi_S + chi_N) = {bound:g} > 1: turning rate could become negative"
        )


def coupled_kinetic_run(
    initial: MacroState,
    grid: Grid1D,
    params: ModelParams,
    kparams: KineticParams,
    phi: ResponseFunction,
    config: SolverConfig,
) -> KineticTrajectory:
    """Kinetic cells coupled to the S and N equations through the rho-moment.

    Starts from the velocity-uniform state with the initial density. The step is
    config.dt split into the fewest substeps that satisfy the kinetic CFL bound, so
    snapshots land exactly on the macro cadence
    config.dt * snapshot_every.
    """
    validate(params)
    if not math.isclose(params.epsilon, kparams.epsilon, rel_tol=1e-12):
        raise ConfigError(f"model epsilon {params.epsilon} differs from kinetic epsilon {kparams.epsilon}")
    check_turning_bounds(params, kparams)
    quad = gauss_legendre(kparams.n_velocities)
    dx = grid.dx
    limit = kparams.cfl_safety * kparams.epsilon * dx / float(np.max(np.abs(quad.nodes)))
    substeps = max(1, math.ceil(config.dt / limit - 1e-12))
    dt = config.dt / substeps
    n_steps = step_count(initial.t, config.t_end, dt)
    stride = substeps * config.snapshot_every
    logger.info(
        "kinetic run: %d cells x %d velocities, eps=%g, mu=%g, dt=%g, %d steps",
        grid.n_cells, len(quad), kparams.epsilon, kparams.mu, dt, n_steps,
    )
    if not math.isclose(kparams.diffusivity, params.D_rho, rel_tol=1e-9):
        logger.warning(
            "kinetic diffusivity 1/(6 mu) = %g differs from model D_rho = %g", kparams.diffusivity, params.D_rho
        )

    started = time.perf_counter()
    kin = equilibrium(initial.rho, quad, kparams.epsilon, t=initial.t)
    S, N = np.array(initial.S), np.array(initial.N)
    trajectory = KineticTrajectory(grid=grid)
    trajectory.append(KineticSnapshot(kinetic=kin, S=S, N=N))
    for k in range(1, n_steps + 1):
        target = config.t_end if k == n_steps else initial.t + k * dt
        h = target - kin.t
        rho, _ = moments(kin)
        dS, dN = center_derivatives(MacroState(t=kin.t, rho=rho, S=S, N=N), grid, params)
        kin = kinetic_step(kin, grid, [(dS, params.chi_S), (dN, params.chi_N)], phi, kparams, h)
        rho_new, _ = moments(kin)
        S = solve_S_substep(S, rho_new, params, h, dx)
        N = update_nutrient(N, rho_new, params, h, dx)
        if k % stride == 0 or k == n_steps:
            trajectory.append(KineticSnapshot(kinetic=kin, S=S, N=N))
    logger.info("kinetic run done: %d steps in %.2fs", n_steps, time.perf_counter() - started)
    return trajectory

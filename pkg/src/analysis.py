"""Closed-form traveling pulse, cluster and linear stability results, plus pulse fitting.

Stiff response (fluxes chi * (1 - (eps d_t X / d_x X)^2)_+ sign(d_x X)). Under the
ansatz rho(t, x) = rho~(x - sigma t) the density is a double exponential

    rho(z) = rho0 exp(lambda_minus z)  for z < 0,    rho0 exp(lambda_plus z)  for z > 0

and the speed is the unique root in (0, 1/eps) of

    chi_N - sigma / (1 - (eps sigma)^2) = chi_S sigma / sqrt(4 D_S alpha + sigma^2).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize, signal, stats

from .config import logger
from .errors import ConfigError, NonPulseRegime, NumericalError
from .model import ModelParams, validate

SPEED_XTOL = 1e-12
TAIL_EFOLDS = (1.0, 3.0)


# ---- Traveling speed ----
def speed_residual(sigma, params: ModelParams):
    """Left minus right side of the speed relation; strictly decreasing on (0, 1/eps)."""
    sigma = np.asarray(sigma, dtype=float)
    q = 1.0 - (params.epsilon * sigma) ** 2
    root = np.sqrt(4.0 * params.D_S * params.alpha + sigma * sigma)
    chemo = np.divide(params.chi_S * sigma, root, out=np.zeros_like(sigma), where=root > 0)
    return params.chi_N - sigma / q - chemo


class SpeedRoot(NamedTuple):
    sigma: float
    residual: float
    degenerate: bool


def solve_speed(params: ModelParams) -> SpeedRoot:
    """Bisection on (0, 1/eps - 1e-9), then a secant polish kept only if it improves the residual."""
    validate(params)
    if params.chi_N == 0.0:
        logger.warning("chi_N = 0: no nutrient pull, the only traveling speed is sigma = 0")
        return SpeedRoot(sigma=0.0, residual=0.0, degenerate=True)
    lo, hi = 0.0, 1.0 / params.epsilon - 1e-9

    def f(s):
        return float(speed_residual(s, params))

    if not (f(lo) > 0.0 > f(hi)):
        raise NumericalError(f"speed residual does not change sign on (0, {hi:.6g})")
    sigma = optimize.bisect(f, lo, hi, xtol=SPEED_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)
    best = abs(f(sigma))
    try:
        polished = optimize.newton(f, sigma, x1=sigma * (1.0 + 1e-9), tol=1e-15, maxiter=20)
        if lo < polished < hi and abs(f(polished)) < best:
            sigma, best = float(polished), abs(f(polished))
    except (RuntimeError, ZeroDivisionError):
        pass
    return SpeedRoot(sigma=float(sigma), residual=f(sigma), degenerate=False)


def traveling_speed(params: ModelParams) -> float:
    """Pulse speed sigma* (0 when chi_N = 0)."""
    return solve_speed(params).sigma


# ---- Profile ----
def profile_rates(sigma: float, params: ModelParams) -> tuple[float, float, float]:
    """(lambda_minus, lambda_plus, rho0) of the double-exponential profile at speed sigma."""
    if not 0.0 <= sigma < 1.0 / params.epsilon:
        raise ConfigError(f"sigma must lie in [0, 1/eps) (got {sigma})")
    q = 1.0 - (params.epsilon * sigma) ** 2
    lam_minus = (-sigma + (params.chi_S + params.chi_N) * q) / params.D_rho
    lam_plus = (-sigma + (params.chi_N - params.chi_S) * q) / params.D_rho
    if not lam_minus > 0.0 > lam_plus:
        raise NonPulseRegime(
            f"no pulse profile: lambda_minus={lam_minus:.6g}, lambda_plus={lam_plus:.6g} (need - > 0 > +)"
        )
    rho0 = params.M / (1.0 / lam_minus + 1.0 / abs(lam_plus))
    return lam_minus, lam_plus, rho0


# ---- Chemical kernel ----
def kernel_constants(sigma: float, D_S: float, alpha: float) -> tuple[float, float, float]:
    """(a1, a2, a3) of K(z) = a1 exp(-a2 |z| - a3 z)."""
    if not (alpha > 0 and D_S > 0):
        raise ConfigError("green kernel needs alpha > 0 and D_S > 0")
    a3 = sigma / (2.0 * D_S)
    a2 = math.sqrt(a3 * a3 + alpha / D_S)
    a1 = 1.0 / (2.0 * a2 * D_S)
    return a1, a2, a3


def green_kernel(z, sigma: float, D_S: float, alpha: float):
    """Fundamental solution of -D_S K'' - sigma K' + alpha K = delta_0."""
    a1, a2, a3 = kernel_constants(sigma, D_S, alpha)
    z = np.asarray(z, dtype=float)
    return a1 * np.exp(-a2 * np.abs(z) - a3 * z)


def green_kernel_slope(z, sigma: float, D_S: float, alpha: float):
    """K'(z) for z != 0."""
    a1, a2, a3 = kernel_constants(sigma, D_S, alpha)
    z = np.asarray(z, dtype=float)
    return -(a2 * np.sign(z) + a3) * green_kernel(z, sigma, D_S, alpha)


# ---- Traveling wave ----
@dataclass(frozen=True)
class WaveSolution:
    sigma: float
    lambda_minus: float
    lambda_plus: float
    rho0: float
    a1: float
    a2: float
    a3: float
    signal_slope_at_peak: float = 0.0

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return self.rho0 * np.where(z < 0, np.exp(self.lambda_minus * np.minimum(z, 0.0)),
                                    np.exp(self.lambda_plus * np.maximum(z, 0.0)))

    @property
    def asymmetry(self) -> float:
        """lambda_minus / |lambda_plus|; > 1 means the back is stiffer than the front."""
        return self.lambda_minus / abs(self.lambda_plus)

    @property
    def kernel_asymmetry(self) -> float:
        """(a2 + a3) / (a2 - a3); equals asymmetry at the pulse speed."""
        return (self.a2 + self.a3) / (self.a2 - self.a3)


def signal_slope_at_zero(wave_rates, sigma: float, params: ModelParams) -> float:
    """(K' * beta rho)(0) by adaptive quadrature on each half-line."""
    lam_minus, lam_plus, rho0 = wave_rates

    def back(y):  # y < 0
        return float(green_kernel_slope(-y, sigma, params.D_S, params.alpha)) * params.beta * rho0 * math.exp(lam_minus * y)

    def front(y):  # y > 0
        return float(green_kernel_slope(-y, sigma, params.D_S, params.alpha)) * params.beta * rho0 * math.exp(lam_plus * y)

    left, _ = integrate.quad(back, -np.inf, 0.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    right, _ = integrate.quad(front, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return left + right


def wave_solution(params: ModelParams, tolerance: float = 1e-6) -> WaveSolution:
    """Speed, profile and kernel constants; checks that S peaks where rho peaks."""
    root = solve_speed(params)
    rates = profile_rates(root.sigma, params)
    a1, a2, a3 = kernel_constants(root.sigma, params.D_S, params.alpha)
    slope = signal_slope_at_zero(rates, root.sigma, params)
    if abs(slope) > tolerance:
        raise NumericalError(f"S'(0) = {slope:.3e} exceeds {tolerance:g}: profile and speed are inconsistent")
    return WaveSolution(
        sigma=root.sigma,
        lambda_minus=rates[0],
        lambda_plus=rates[1],
        rho0=rates[2],
        a1=a1,
        a2=a2,
        a3=a3,
        signal_slope_at_peak=slope,
    )


# ---- Cluster ----
def cluster_profile(params: ModelParams) -> tuple[float, float]:
    """Stationary cluster rho0 exp(-lambda |x|): lambda = chi_S / D_rho, rho0 = M lambda / 2."""
    if not (params.chi_S > 0 and params.D_rho > 0):
        raise ConfigError("cluster needs chi_S > 0 and D_rho > 0")
    lam = params.chi_S / params.D_rho
    return lam, params.M * lam / 2.0


# ---- Linear stability of the homogeneous state ----
def dispersion(k: int, L: float, M: float, delta: float, alpha: float) -> float:
    """Growth rate of mode k: -xi^2 + M/(delta L) * xi^2/(alpha + xi^2), xi = 2 pi k / L."""
    if int(k) != k or k < 1:
        raise ConfigError(f"mode k must be an integer >= 1 (got {k}); k = 0 is the conserved mass")
    if not (L > 0 and delta > 0):
        raise ConfigError("dispersion needs L > 0 and delta > 0")
    xi = 2.0 * math.pi * k / L
    return -xi * xi + (M / (delta * L)) * xi * xi / (alpha + xi * xi)


def stability_condition(L: float, l: float, delta: float) -> float:
    """Critical mass M* = delta L / l^2 + 4 pi^2 delta / L; homogeneous state stable iff M < M*."""
    if not l > 0:
        raise ConfigError("signal range l must be positive")
    return delta * L / (l * l) + 4.0 * math.pi**2 * delta / L


def is_stable(M: float, L: float, l: float, delta: float) -> bool:
    return M < stability_condition(L, l, delta)


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: tuple
    stable: bool
    critical_mass: float

    @property
    def most_unstable_mode(self) -> int:
        return int(np.argmax(self.eigenvalues)) + 1


def stability_report(M: float, L: float, l: float, delta: float, k_max: int = 100) -> StabilityReport:
    """Eigenvalues for k = 1..k_max with alpha = l^-2."""
    alpha = 1.0 / (l * l)
    eigen = tuple(dispersion(k, L, M, delta, alpha) for k in range(1, k_max + 1))
    return StabilityReport(
        eigenvalues=eigen,
        stable=max(eigen) < 0.0,
        critical_mass=stability_condition(L, l, delta),
    )


# ---- Fitting simulated pulses ----
@dataclass(frozen=True)
class PulseFit:
    speed: float
    speed_r2: float
    lambda_minus: float
    lambda_minus_r2: float
    lambda_plus: float
    lambda_plus_r2: float
    peak_mass_fraction: float
    is_pulse: bool
    bimodal: bool
    amplitude_ratio: float
    final_peak: float


def peak_position(x: np.ndarray, rho: np.ndarray, i: int) -> float:
    """Sub-cell peak by a parabola through log rho at i-1, i, i+1."""
    if i <= 0 or i >= len(rho) - 1 or min(rho[i - 1], rho[i], rho[i + 1]) <= 0:
        return float(x[i])
    l0, l1, l2 = np.log(rho[i - 1]), np.log(rho[i]), np.log(rho[i + 1])
    curvature = l0 - 2.0 * l1 + l2
    if curvature >= 0:
        return float(x[i])
    dx = x[1] - x[0]
    return float(x[i] + 0.5 * dx * (l0 - l2) / curvature)


def leading_peak(rho: np.ndarray, min_height: float = 0.05, floor: float = 1e-3) -> int | None:
    """Index of the rightmost interior peak at least min_height of the tallest interior peak.

    A mode held against a wall is not an interior peak and sets no threshold; the tallest
    interior peak must still reach floor times the global maximum.
    """
    rho = np.asarray(rho, dtype=float)
    peaks, _ = signal.find_peaks(rho)
    if len(peaks) == 0:
        return None
    heights = rho[peaks]
    top = float(np.max(heights))
    if not top > floor * float(np.max(rho)):
        return None
    prominences = signal.peak_prominences(rho, peaks)[0]
    kept = peaks[(heights >= min_height * top) & (prominences >= min_height * top)]
    return int(kept[-1]) if len(kept) else None


def _tail_rate(x, rho, lo, hi):
    mask = (x >= lo) & (x <= hi) & (rho > 1e-300)
    if mask.sum() < 3:
        return math.nan, math.nan
    reg = stats.linregress(x[mask], np.log(rho[mask]))
    return float(reg.slope), float(reg.rvalue**2)


def fit_pulse(
    trajectory,
    window: float = 1.0 / 3.0,
    predicted: tuple[float, float] | None = None,
    min_r2: float = 0.99,
    min_amplitude_ratio: float = 0.8,
    tail_efolds: tuple[float, float] = TAIL_EFOLDS,
) -> PulseFit:
    """Measure speed, tail rates and the translating mass fraction over the last `window` of the run.

    With predicted rates (lambda_minus, lambda_plus) each tail is fitted between tail_efolds[0]
    and tail_efolds[1] e-folds of the predicted decay from the peak, else between 1% and 10% of
    the channel length. Further out the signal gradients fall towards the response width delta
    and the tails bend away from the stiff-limit rates.
    The run counts as a pulse when a leading peak is found in every snapshot of the window,
    moves monotonically forward along a line (R^2 >= min_r2) and keeps its amplitude within
    min_amplitude_ratio. Snapshots without a peak are skipped; fewer than two raise
    NonPulseRegime.
    """
    grid = trajectory.grid
    x = grid.centers
    dx = grid.dx
    times = trajectory.times()
    t_start = times[-1] - window * (times[-1] - times[0])
    picked = [s for s in trajectory if s.t >= t_start - 1e-12]
    if len(picked) < 3:
        raise ConfigError(f"fit window holds {len(picked)} snapshots, need at least 3")

    positions, amplitudes, t_fit, tracked = [], [], [], []
    for state in picked:
        i = leading_peak(np.asarray(state.rho))
        if i is None:
            continue
        positions.append(peak_position(x, np.asarray(state.rho), i))
        amplitudes.append(float(state.rho[i]))
        t_fit.append(state.t)
        tracked.append(state)
    if len(tracked) < 2:
        raise NonPulseRegime("no discernible peak in the density", t=picked[-1].t)
    positions, amplitudes, t_fit = np.array(positions), np.array(amplitudes), np.array(t_fit)

    reg = stats.linregress(t_fit, positions)
    speed = float(reg.slope)
    moved = positions[-1] - positions[0]
    speed_r2 = float(reg.rvalue**2) if moved != 0 else 0.0
    monotone = bool(np.all(np.diff(positions) >= -dx))
    amplitude_ratio = float(amplitudes.min() / amplitudes.max())
    is_pulse = (
        len(tracked) == len(picked)
        and monotone
        and moved > 2.0 * dx
        and speed_r2 >= min_r2
        and amplitude_ratio >= min_amplitude_ratio
    )

    rho = np.asarray(tracked[-1].rho)
    peak = positions[-1]
    near, far = tail_efolds
    if predicted is not None and predicted[0] > 0 > predicted[1]:
        back_lo, back_hi = peak - far / predicted[0], peak - near / predicted[0]
        front_lo, front_hi = peak + near / abs(predicted[1]), peak + far / abs(predicted[1])
    else:
        back_lo, back_hi = peak - 0.10 * grid.L, peak - 0.01 * grid.L
        front_lo, front_hi = peak + 0.01 * grid.L, peak + 0.10 * grid.L
    lam_minus, r2_minus = _tail_rate(x, rho, back_lo, back_hi)
    lam_plus, r2_plus = _tail_rate(x, rho, front_lo, front_hi)

    fraction, bimodal = _translating_fraction(x, rho, dx, int(round((peak - x[0]) / dx)))
    return PulseFit(
        speed=speed,
        speed_r2=speed_r2,
        lambda_minus=lam_minus,
        lambda_minus_r2=r2_minus,
        lambda_plus=lam_plus,
        lambda_plus_r2=r2_plus,
        peak_mass_fraction=fraction,
        is_pulse=is_pulse,
        bimodal=bimodal,
        amplitude_ratio=amplitude_ratio,
        final_peak=float(peak),
    )


def translation_speeds(trajectory, window: float = 1.0 / 3.0, stride: int = 1) -> np.ndarray:
    """Displacement over elapsed time between snapshots `stride` apart in the last `window` of the run.

    The displacement is the lag of the cross-correlation maximum, refined by a parabola
    through its two neighbours.
    """
    if stride < 1:
        raise ConfigError(f"stride must be >= 1 (got {stride})")
    times = trajectory.times()
    t_start = times[-1] - window * (times[-1] - times[0])
    picked = [s for s in trajectory if s.t >= t_start - 1e-12]
    if len(picked) <= stride:
        raise ConfigError(f"fit window holds {len(picked)} snapshots, need more than {stride}")
    n = trajectory.grid.n_cells
    lags = signal.correlation_lags(n, n, mode="full")
    speeds = []
    for earlier, later in zip(picked, picked[stride:]):
        corr = signal.correlate(np.asarray(later.rho), np.asarray(earlier.rho), mode="full")
        k = int(np.argmax(corr))
        offset = 0.0
        if 0 < k < len(corr) - 1:
            c0, c1, c2 = corr[k - 1], corr[k], corr[k + 1]
            curvature = c0 - 2.0 * c1 + c2
            if curvature < 0:
                offset = 0.5 * (c0 - c2) / curvature
        speeds.append((lags[k] + offset) * trajectory.grid.dx / (later.t - earlier.t))
    return np.array(speeds)


def _translating_fraction(x, rho, dx, i_peak: int) -> tuple[float, bool]:
    """Mass right of the trough between a left-wall mode and the leading peak, over total mass."""
    total = float(np.sum(rho) * dx)
    i_peak = min(max(i_peak, 0), len(rho) - 1)
    if total <= 0 or i_peak <= 1:
        return 1.0, False
    i_trough = int(np.argmin(rho[: i_peak + 1]))
    # a stationary mode sits at the left wall when rho rises again towards x = 0
    bimodal = i_trough > 0 and rho[0] > 2.0 * rho[i_trough] and rho[0] > 0.05 * rho[i_peak]
    if not bimodal:
        return 1.0, False
    return float(np.sum(rho[i_trough:]) * dx / total), True


def profile_l1(wave: WaveSolution, x: np.ndarray, rho: np.ndarray, peak: float, dx: float) -> float:
    """Relative L1 distance between a snapshot and the predicted profile centred on the measured peak."""
    predicted = wave.density(np.asarray(x) - peak)
    total = float(np.sum(rho) * dx)
    return float(np.sum(np.abs(np.asarray(rho) - predicted)) * dx / total)


def cluster_l2(params: ModelParams, x: np.ndarray, rho: np.ndarray, peak: float) -> float:
    """Relative L2 distance between a snapshot and rho0 exp(-lambda |x - peak|)."""
    lam, rho0 = cluster_profile(params)
    predicted = rho0 * np.exp(-lam * np.abs(np.asarray(x) - peak))
    return float(np.linalg.norm(np.asarray(rho) - predicted) / np.linalg.norm(predicted))

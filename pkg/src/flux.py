"""Chemotactic fluxes at cell faces.

Velocity space is V = [-1, 1]. The kinetic flux of a signal with derivatives
(dSdt, dSdx) is

    u = -1/2 * integral_{-1}^{1} v * phi(eps*dSdt + v*dSdx) dv

and in the stiff (bivaluated) limit it reduces to

    u = phi0/2 * (1 - (eps*dSdt/dSdx)^2)_+ * sign(dSdx).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .model import ResponseFunction

DEFAULT_NODES = 32


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Symmetric rule on [-1, 1]; weights sum to |V| = 2."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        problems = []
        if nodes.shape != weights.shape or nodes.ndim != 1:
            problems.append("nodes and weights must be 1-D arrays of equal length")
        else:
            if np.any(weights <= 0):
                problems.append("weights must be positive")
            if abs(weights.sum() - 2.0) > 1e-12:
                problems.append(f"weights must sum to 2 (got {weights.sum():.17g})")
            if np.any(np.abs(nodes) > 1.0):
                problems.append("nodes must lie in [-1, 1]")
            if not np.allclose(np.sort(nodes), -np.sort(nodes)[::-1], rtol=0, atol=1e-14):
                problems.append("node set must be symmetric")
        if problems:
            raise ConfigError(problems)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.nodes)

    def mirror(self) -> np.ndarray:
        """Index of the node -v for each node v."""
        order = np.argsort(self.nodes)
        mirror = np.empty_like(order)
        mirror[order] = order[::-1]
        return mirror


@lru_cache(maxsize=16)
def gauss_legendre(n: int = DEFAULT_NODES) -> Quadrature:
    """n-point Gauss-Legendre rule on [-1, 1]."""
    if n < 2 or n % 2:
        raise ConfigError(f"quadrature needs an even number of nodes >= 2 (got {n})")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return Quadrature(nodes=nodes, weights=weights)


@dataclass(frozen=True, eq=False)
class FieldDerivatives:
    """Temporal and spatial derivative of one chemical field at each face."""

    dSdt: np.ndarray
    dSdx: np.ndarray

    def __post_init__(self):
        dSdt = np.atleast_1d(np.asarray(self.dSdt, dtype=float))
        dSdx = np.atleast_1d(np.asarray(self.dSdx, dtype=float))
        if dSdt.shape != dSdx.shape:
            raise ValueError("dSdt and dSdx must have the same length")
        object.__setattr__(self, "dSdt", dSdt)
        object.__setattr__(self, "dSdx", dSdx)

    def __len__(self):
        return len(self.dSdx)


def flux_kinetic(
    derivs: FieldDerivatives,
    phi: ResponseFunction,
    epsilon: float,
    quad: Quadrature | None = None,
) -> np.ndarray:
    """Velocity-integral flux -1/2 sum_j w_j v_j phi(eps*dSdt + v_j*dSdx), per face.

    The rule is split at v = 0 and at the response switch v0 = -eps*dSdt/dSdx, so v
    keeps one sign on every segment. Then sum_j w_j |v_j| = 1 exactly and
    |u| <= sup|phi| / 2 holds for any number of nodes; for the bivaluated response
    the integrand is piecewise linear and the rule is exact.
    """
    quad = quad or gauss_legendre()
    a = epsilon * derivs.dSdt
    b = derivs.dSdx
    nodes, weights = _split_rule(quad, a, b)
    Y = a[:, None] + nodes * b[:, None]
    return -0.5 * np.sum(weights * nodes * phi(Y), axis=1)


def _split_rule(quad: Quadrature, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-face rule on [-1, p], [p, q] and [q, 1] with {p, q} = {0, v0}, each a scaled copy of quad."""
    v0 = np.clip(np.divide(-a, b, out=np.zeros_like(b), where=b != 0.0), -1.0, 1.0)[:, None]
    breaks = [np.full_like(v0, -1.0), np.minimum(v0, 0.0), np.maximum(v0, 0.0), np.ones_like(v0)]
    nodes, weights = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (quad.nodes + 1.0))
        weights.append(half * quad.weights)
    return np.concatenate(nodes, axis=1), np.concatenate(weights, axis=1)


def flux_stiff(derivs: FieldDerivatives, chi: float, epsilon: float) -> np.ndarray:
    """chi * (1 - (eps*dSdt/dSdx)^2)_+ * sign(dSdx); zero where dSdx == 0."""
    dSdx = derivs.dSdx
    nonzero = dSdx != 0.0
    ratio = np.divide(epsilon * derivs.dSdt, dSdx, out=np.zeros_like(dSdx), where=nonzero)
    u = chi * np.clip(1.0 - ratio * ratio, 0.0, None) * np.sign(dSdx)
    return np.where(nonzero, u, 0.0)


def _arctan_antiderivative(y, a, delta):
    # d/dy of this is (delta*y - a) * atan(y)
    at = np.arctan(y)
    return 0.5 * delta * ((y * y + 1.0) * at - y) - a * (y * at - 0.5 * np.log1p(y * y))


def flux_arctan(
    derivs: FieldDerivatives,
    phi: ResponseFunction,
    epsilon: float,
    quad: Quadrature | None = None,
) -> np.ndarray:
    """Kinetic flux for the arctan response, exact to rounding.

    With scale = max(delta, |eps*dSdt|):
      |dSdx| >  0.1 * scale   closed form (kink-like integrand)
      |dSdx| <= 1e-3 * scale  first-order expansion in dSdx (relative error < 1e-6)
      otherwise               Gauss-Legendre rule (smooth integrand; the closed form cancels badly)
    """
    if phi.shape != "arctan":
        raise ValueError("flux_arctan needs an arctan response function")
    delta = phi.delta
    a = epsilon * derivs.dSdt
    b = derivs.dSdx
    scale = np.maximum(delta, np.abs(a))
    closed = np.abs(b) > 0.1 * scale
    linear = np.abs(b) <= 1e-3 * scale
    smooth = ~(closed | linear)
    u = np.empty_like(b)
    if np.any(closed):
        ac, bc = a[closed], b[closed]
        y_lo = (ac - bc) / delta
        y_hi = (ac + bc) / delta
        span = _arctan_antiderivative(y_hi, ac, delta) - _arctan_antiderivative(y_lo, ac, delta)
        u[closed] = delta * span / (np.pi * bc * bc)
    if np.any(linear):
        c = a[linear] / delta
        u[linear] = (2.0 / (3.0 * np.pi)) * (b[linear] / delta) / (1.0 + c * c)
    if np.any(smooth):
        sub = FieldDerivatives(dSdt=derivs.dSdt[smooth], dSdx=b[smooth])
        u[smooth] = flux_kinetic(sub, phi, epsilon, quad)
    return u


def macro_flux(
    derivs: FieldDerivatives,
    phi: ResponseFunction,
    chi: float,
    epsilon: float,
    quad: Quadrature | None = None,
) -> np.ndarray:
    """Flux used by the macroscopic solver: chi * J_phi with J_phi = 2 u_kinetic / sup|phi|.

    The normalisation makes the stiff limit exactly chi * (1 - (eps dSdt/dSdx)^2)_+ sign(dSdx).
    """
    if chi == 0.0:
        return np.zeros(len(derivs))
    if phi.shape == "bivaluated":
        return flux_stiff(derivs, chi, epsilon)
    return (2.0 * chi / phi.amplitude) * flux_arctan(derivs, phi, epsilon, quad)


def diffusivity_from_kinetic(mu: float, quad: Quadrature | None = None) -> float:
    """D_rho = 1/(4 mu) * integral_{-1}^{1} v^2 dv = 1/(6 mu).

    With a quadrature rule the integral is evaluated numerically instead.
    """
    if not mu > 0:
        raise ConfigError(f"mu must be positive (got {mu})")
    if quad is None:
        return 1.0 / (6.0 * mu)
    return float(np.sum(quad.weights * quad.nodes**2)) / (4.0 * mu)


def tumbling_frequency(v, dSdt, dSdx, phi: ResponseFunction, epsilon: float):
    """Turning rate psi = 1 + eps * phi(eps*dSdt + v*dSdx) for a cell moving at velocity v."""
    return 1.0 + epsilon * phi(epsilon * np.asarray(dSdt) + np.asarray(v) * np.asarray(dSdx))


def tumbling_rates(signals, phi: ResponseFunction, epsilon: float, v: float) -> np.ndarray:
    """psi at velocity v under several signals: 1 + sum of kappa * (tumbling_frequency - 1), kappa = 2 chi / sup|phi|.

    signals: (FieldDerivatives, chi) pairs evaluated at the same points.
    """
    psi = None
    for derivs, chi in signals:
        kappa = 2.0 * chi / phi.amplitude
        term = kappa * (tumbling_frequency(v, derivs.dSdt, derivs.dSdx, phi, epsilon) - 1.0)
        psi = term if psi is None else psi + term
    if psi is None:
        raise ValueError("tumbling_rates needs at least one signal")
    return 1.0 + psi

"""Closed-form oracles used to validate the solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e

from .errors import ConfigError
from .model import InitialLaw
from .simulate import ObservationPath
from .spectral import DensityGrid, _window_axes

TAIL_TOL = 1e-12


@dataclass(frozen=True)
class OracleDensity:
    evaluator: Callable[[np.ndarray], np.ndarray]
    normalization: str  # "analytic" or "numeric-on-window"

    def __call__(self, z) -> np.ndarray:
        return self.evaluator(np.asarray(z, dtype=float))

    def grid(self, window) -> DensityGrid:
        (z,) = _window_axes(window, 1)
        v = self(z)
        return DensityGrid((z,), v, float(np.trapezoid(v, z)))


# -- CIR -----------------------------------------------------------------------

def _poisson_range(lam: float, tol: float) -> tuple[int, int]:
    """Index range holding all but ``tol`` of the Poisson(lam) mass."""
    if lam == 0:
        return 0, 0
    mode = int(math.floor(lam))
    logp = lambda j: -lam + j * math.log(lam) - math.lgamma(j + 1)  # noqa: E731
    lo = mode
    # left tail below lo is bounded by p_{lo-1} / (1 - (lo-1)/lam)
    while lo > 0 and math.exp(logp(lo - 1)) / (1 - (lo - 1) / lam) > tol:
        lo -= 1
    hi = mode
    # geometric bound on the right tail once j > lam
    while True:
        ratio = lam / (hi + 2)
        if ratio < 1 and math.exp(logp(hi + 1)) / (1 - ratio) < tol:
            break
        hi += 1
    return lo, hi


def ncx2_pdf(y: np.ndarray, df: float, nc: float, tol: float = TAIL_TOL) -> np.ndarray:
    """Non-central chi-squared density as a Poisson mixture of chi-squared densities."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    pos = y > 0
    yp = y[pos]
    lam = nc / 2
    lo, hi = _poisson_range(lam, tol)
    logy = np.log(yp)
    acc = np.zeros_like(yp)
    for j in range(lo, hi + 1):
        k = df / 2 + j
        logw = (-lam + j * math.log(lam) - math.lgamma(j + 1)) if lam > 0 else 0.0
        acc += np.exp(logw + (k - 1) * logy - yp / 2 - k * math.log(2) - math.lgamma(k))
    out[pos] = acc
    return out


def cir_exact_density(theta: float, mu: float, sigma: float, x0: float, t: float) -> OracleDensity:
    """Transition density of dX = theta (mu - X) dt + sigma sqrt(X) dV."""
    if not 2 * theta * mu > sigma**2:
        raise ConfigError("Feller condition 2 theta mu > sigma^2 is violated")
    if not t > 0:
        raise ConfigError("t must be positive")
    decay = math.exp(-theta * t)
    c = 2 * theta / (sigma**2 * (1 - decay))
    df = 4 * theta * mu / sigma**2
    nc = 2 * c * x0 * decay
    return OracleDensity(lambda z: 2 * c * ncx2_pdf(2 * c * z, df, nc), "analytic")


def cir_mean(theta: float, mu: float, x0: float, t: float) -> float:
    return x0 * math.exp(-theta * t) + mu * (1 - math.exp(-theta * t))


def cir_first_order_coeffs(theta: float, mu: float, sigma: float, t: float):
    a2 = t**2 * sigma**2 * (8 * theta * mu + sigma**2) / 16
    a3 = -1j * t**2 * sigma**4 * (4 * mu + t * sigma**2) / 16
    a4 = -(t**3) * mu * sigma**6 / 24
    a5 = 1j * t**4 * mu * sigma**8 / 64
    return complex(a2), complex(a3), complex(a4), complex(a5)


def gaussian_derivative(z, mean: float, var: float, k: int) -> np.ndarray:
    """k-th z-derivative of the N(mean, var) density."""
    s = math.sqrt(var)
    u = (np.asarray(z, dtype=float) - mean) / s
    phi = np.exp(-0.5 * u * u) / (s * math.sqrt(2 * math.pi))
    he = hermite_e.hermeval(u, [0] * k + [1])
    return (-1) ** k * he * phi / s**k


def cir_first_order_density(theta: float, mu: float, sigma: float, t: float, window,
                            coeffs=None) -> DensityGrid:
    """First-order correction (-a2 d^2 - i a3 d^3 + a4 d^4 + i a5 d^5) phi_0 for X_0 = mu.

    ``coeffs`` overrides (a2, a3, a4, a5), e.g. to isolate the even part.
    """
    (z,) = _window_axes(window, 1)
    a2, a3, a4, a5 = coeffs if coeffs is not None else cir_first_order_coeffs(theta, mu, sigma, t)
    var = mu * sigma**2 * t
    if var == 0:
        return DensityGrid((z,), np.zeros_like(z), 0.0)
    d = [gaussian_derivative(z, mu, var, k) for k in range(6)]
    vals = -a2 * d[2] - 1j * a3 * d[3] + a4 * d[4] + 1j * a5 * d[5]
    vals = np.real(vals)
    return DensityGrid((z,), vals, float(np.trapezoid(vals, z)))


# -- Benes ---------------------------------------------------------------------

def _log_cosh(u):
    u = np.abs(u)
    return u + np.log1p(np.exp(-2 * u)) - math.log(2)


def _path_index(path: ObservationPath, t: float) -> int:
    k = int(round(t / path.step))
    if k < 1 or k > path.dY.shape[0] or abs(path.times[k] - t) > 1e-9 * max(1.0, t):
        raise ConfigError(f"t = {t} is not a point of the path grid")
    return k


def benes_log_density(a, sigma, h1, h2, path: ObservationPath, t: float):
    """Unnormalised log-density z -> log pi_t(z) for X_0 = 0."""
    if not sigma > 0:
        raise ConfigError("sigma must be positive")
    if h1 == 0:
        raise ConfigError("h1 must be non-zero")
    if path.m != 1:
        raise ConfigError("the Benes oracle needs a scalar observation")
    K = _path_index(path, t)
    c = abs(h1 * sigma)
    sgn = math.copysign(1.0, h1 * sigma)
    tk = path.times[:K]
    # sinh(tk c)/sinh(t c) and 1/sinh(t c) without overflow
    ratio = np.exp(c * (tk - t)) * -np.expm1(-2 * c * tk) / -math.expm1(-2 * c * t)
    inv_sinh = 2 * math.exp(-c * t) / -math.expm1(-2 * c * t)
    coth = 1 / math.tanh(c * t)
    ito = float(np.sum(ratio * path.dY[:K, 0]))
    # the sinh ratio is even in c; 1/sinh and coth are odd
    B = h1 * ito + sgn * h2 / sigma * inv_sinh - sgn * (h2 / sigma) * coth
    quad = h1 / (2 * sigma) * sgn * coth

    def logp(z):
        z = np.asarray(z, dtype=float)
        return _log_cosh(a * z / sigma) - quad * z * z + B * z

    return logp


def benes_exact_density(a, sigma, h1, h2, path: ObservationPath, t: float, window) -> OracleDensity:
    (z,) = _window_axes(window, 1)
    logp = benes_log_density(a, sigma, h1, h2, path, t)
    lz = logp(z)
    shift = lz.max()
    norm = float(np.trapezoid(np.exp(lz - shift), z))
    return OracleDensity(lambda x: np.exp(logp(x) - shift) / norm, "numeric-on-window")


# -- Kalman-Bucy -----------------------------------------------------------------

def kalman_bucy(f_lin, h_lin, sigma: float, law: InitialLaw, path: ObservationPath,
                substeps: int = 16):
    """Mean and variance trajectories for dX = (A X + b) dt + sigma dV, dY = (h1 X + h2) dt + dW.

    Each path step applies the gain kick P_k h1 dY_k at the left point and
    then integrates the deterministic mean and Riccati equations with RK4.
    """
    A, b = f_lin
    h1, h2 = h_lin
    if law.n != 1 or path.m != 1:
        raise ConfigError("kalman_bucy handles the scalar case")
    m = float(law.x0[0])
    P = float(law.cov[0, 0])
    times = path.times
    means = [m]
    vars_ = [P]

    def rhs(y):
        mm, pp = y
        return np.array([(A - h1 * h1 * pp) * mm + b - h1 * h2 * pp,
                         2 * A * pp + sigma**2 - h1 * h1 * pp * pp])

    for k in range(path.dY.shape[0]):
        dt = times[k + 1] - times[k]
        y = np.array([m + P * h1 * path.dY[k, 0], P])
        h = dt / substeps
        for _ in range(substeps):
            k1 = rhs(y)
            k2 = rhs(y + h / 2 * k1)
            k3 = rhs(y + h / 2 * k2)
            k4 = rhs(y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        m, P = float(y[0]), float(y[1])
        means.append(m)
        vars_.append(P)
    return times.copy(), np.array(means), np.array(vars_)


# -- shape helpers ---------------------------------------------------------------

def count_local_maxima(values: np.ndarray, rel_floor: float = 1e-3) -> int:
    """Strict interior local maxima whose height exceeds ``rel_floor`` of the peak."""
    v = np.asarray(values, dtype=float)
    floor = rel_floor * v.max()
    interior = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:]) & (v[1:-1] > floor)
    return int(np.count_nonzero(interior))

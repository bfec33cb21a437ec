"""Polynomial surrogates for nonlinear model coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import ConfigError
from .polyops import MultiPoly

PARITIES = ("any", "odd", "even")


@dataclass(frozen=True)
class TaylorSpec:
    """Taylor expansion about ``center``.

    ``derivatives[k]`` is the k-th derivative at the center when known.
    Otherwise derivatives come from a Cauchy integral on a circle of
    ``radius`` (the target must accept complex input) or, failing that,
    from a local polynomial fit.  ``drop_constant`` removes the value at the
    center, giving e.g. sqrt(x) - sqrt(mu).
    """

    center: float
    degree: int
    derivatives: Sequence[float] | None = None
    radius: float | None = None
    drop_constant: bool = False
    scale: float = 1.0

    def __post_init__(self):
        if self.degree < 0:
            raise ConfigError("degree must be non-negative")
        if self.derivatives is not None and len(self.derivatives) < self.degree + 1:
            raise ConfigError("need derivatives up to the fit degree")


@dataclass(frozen=True)
class LsmSpec:
    """Weighted least squares on ``x_lo, x_lo + step, ..., x_hi``.

    The weight is exp(-w x^2 / (2 scale^2)); ``scale`` is the model sigma.
    """

    x_lo: float
    x_hi: float
    step: float
    degree: int
    weight_w: float = 0.0
    scale: float = 1.0
    parity: str = "any"

    def __post_init__(self):
        if self.parity not in PARITIES:
            raise ConfigError(f"parity must be one of {PARITIES}")
        if self.weight_w < 0:
            raise ConfigError("weight_w must be non-negative")
        if not self.step > 0 or not self.x_hi >= self.x_lo:
            raise ConfigError("need step > 0 and x_hi >= x_lo")
        if self.degree < 0 or not self.scale > 0:
            raise ConfigError("need degree >= 0 and scale > 0")

    def samples(self) -> np.ndarray:
        count = int(math.floor((self.x_hi - self.x_lo) / self.step + 1e-9)) + 1
        return self.x_lo + self.step * np.arange(count)

    def powers(self) -> list[int]:
        start = {"any": 0, "odd": 1, "even": 0}[self.parity]
        stride = 1 if self.parity == "any" else 2
        return list(range(start, self.degree + 1, stride))

    @classmethod
    def sigma_window(cls, sigma: float, degree: int = 11, weight_w: float = 2.0,
                     parity: str = "odd", half_width: float = 5.0, step: float = 0.2) -> LsmSpec:
        """Samples on [-5 sigma, 5 sigma] every 0.2 sigma by default."""
        return cls(-half_width * sigma, half_width * sigma, step * sigma, degree, weight_w, sigma, parity)


@dataclass(frozen=True)
class FitSpec:
    method: TaylorSpec | LsmSpec
    target: Callable


def fit(spec: FitSpec) -> MultiPoly:
    if isinstance(spec.method, TaylorSpec):
        return taylor_fit(spec)
    return lsm_fit(spec)


# -- Taylor ------------------------------------------------------------------

def _cauchy_coeffs(target, center: float, degree: int, radius: float, nodes: int = 64) -> np.ndarray:
    theta = 2 * np.pi * np.arange(nodes) / nodes
    vals = np.asarray(target(center + radius * np.exp(1j * theta)), dtype=complex)
    if vals.shape != theta.shape or not np.all(np.isfinite(vals)):
        raise ValueError("target cannot be evaluated on the contour")
    c = np.fft.fft(vals) / nodes
    return (c[: degree + 1] / radius ** np.arange(degree + 1)).real


def _local_fit_coeffs(target, center: float, degree: int, scale: float) -> np.ndarray:
    # Chebyshev samples on a small interval; exact for polynomials up to degree + 6
    h = 0.05 * scale
    k = np.arange(41)
    u = np.cos(np.pi * (k + 0.5) / 41)
    y = np.array([float(target(center + h * v)) for v in u])
    cheb = np.polynomial.Chebyshev.fit(u, y, degree + 6, domain=[-1, 1])
    poly_u = cheb.convert(kind=np.polynomial.Polynomial).coef
    coeffs = np.zeros(degree + 1)
    n = min(degree + 1, poly_u.size)
    coeffs[:n] = poly_u[:n] / h ** np.arange(n)
    return coeffs


def taylor_coefficients(spec: FitSpec) -> np.ndarray:
    """Coefficients of (x - center)^k, k = 0..degree."""
    m: TaylorSpec = spec.method
    if m.derivatives is not None:
        coeffs = np.array([m.derivatives[k] / math.factorial(k) for k in range(m.degree + 1)], dtype=float)
    else:
        radius = m.radius if m.radius is not None else 0.5 * (abs(m.center) or 1.0)
        try:
            coeffs = _cauchy_coeffs(spec.target, m.center, m.degree, radius)
        except (TypeError, ValueError, ArithmeticError):
            try:
                coeffs = _local_fit_coeffs(spec.target, m.center, m.degree, m.scale)
            except (TypeError, ValueError, ArithmeticError) as exc:
                raise ConfigError(f"cannot differentiate the target at {m.center}: {exc}") from exc
            if not np.all(np.isfinite(coeffs)):
                raise ConfigError(f"cannot differentiate the target at {m.center}")
    if m.drop_constant:
        coeffs[0] = 0.0
    return coeffs


def taylor_fit(spec: FitSpec) -> MultiPoly:
    m: TaylorSpec = spec.method
    coeffs = taylor_coefficients(spec)
    # expand sum c_k (x - center)^k into monomials of x
    shifted = MultiPoly.from_coeffs(coeffs).shift([-m.center])
    return MultiPoly(1, {e: c.real for e, c in shifted.items()})


# -- weighted least squares ----------------------------------------------------

def weighted_lsm(x: np.ndarray, y: np.ndarray, powers: Sequence[int], weights: np.ndarray,
                 rank_tol: float = 1e-12) -> np.ndarray:
    """Minimise sum w_k (sum_p c_p x_k^p - y_k)^2; returns c in the order of ``powers``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.size == 0:
        raise ConfigError("empty sample set")
    if x.size <= len(powers):
        raise ConfigError(f"{x.size} samples cannot determine {len(powers)} coefficients")
    if np.any(w < 0):
        raise ConfigError("weights must be non-negative")
    sw = np.sqrt(w)
    A = sw[:, None] * x[:, None] ** np.asarray(powers)[None, :]
    b = sw * y
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise ConfigError("design matrix has an all-zero column")
    A = A / norms
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[-1] <= rank_tol * diag[0]:
        raise ConfigError("weighted design matrix is rank deficient")
    z = scipy.linalg.solve_triangular(R, Q.T @ b)
    c = np.empty(len(powers))
    c[piv] = z
    return c / norms


def lsm_fit(spec: FitSpec) -> MultiPoly:
    m: LsmSpec = spec.method
    xs = m.samples()
    ys = np.asarray(spec.target(xs), dtype=float)
    return lsm_fit_samples(xs, ys, m)


def lsm_fit_samples(xs, ys, method: LsmSpec) -> MultiPoly:
    """Fit tabulated data with the degree, parity and weight of ``method``."""
    xs = np.asarray(xs, dtype=float)
    g = np.exp(-method.weight_w * xs**2 / (2 * method.scale**2))
    powers = method.powers()
    c = weighted_lsm(xs, ys, powers, g)
    return MultiPoly(1, {(p,): v for p, v in zip(powers, c)})


def weighted_residual(poly: MultiPoly, spec: FitSpec) -> float:
    m: LsmSpec = spec.method
    xs = m.samples()
    g = np.exp(-m.weight_w * xs**2 / (2 * m.scale**2))
    r = np.real(poly(xs)) - spec.target(xs)
    return float(np.sum(g * r * r))


# -- common targets ------------------------------------------------------------

def tanh_drift(a: float, sigma: float) -> Callable:
    """x -> a sigma tanh(a x / sigma)."""
    return lambda x: a * sigma * np.tanh(a * np.asarray(x) / sigma)


def sqrt_vol(mu: float) -> Callable:
    """x -> sqrt(x) - sqrt(mu), the remainder of the square-root volatility about mu."""
    root = math.sqrt(mu)
    return lambda x: np.sqrt(x) - root

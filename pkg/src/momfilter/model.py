"""Perturbed signal/observation model and its generator symbols.

The signal and observation follow

    dX = (f_t + eps F(X)) dt + (nu_t + eps sigma(X)) dV + eps gamma(X) dW
    dY = eps H(X) dt + dW

with polynomial F, sigma, gamma, H.  Acting on exp(i xi.x), every polynomial
factor G(x) becomes the operator G(D_xi) with D_xi = d/(i dxi), so the
generator splits into a scalar part a0(t, xi) and differential operators of
first and second order in eps.  Those operators are represented as
:class:`Descriptor` objects: sums of (xi-polynomial multiplier, x-polynomial
realised through D_xi) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .polyops import MultiPoly

TimeVector = Callable[[float], np.ndarray]


def _as_time_function(value, shape: tuple[int, ...], name: str) -> TimeVector:
    if callable(value):
        return value
    arr = np.array(value, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return lambda t, _a=arr: _a


@dataclass(frozen=True)
class Descriptor:
    """Operator ``sum_k xi_poly_k(xi) * x_poly_k(D_xi)``."""

    terms: tuple[tuple[MultiPoly, MultiPoly], ...] = ()

    def is_zero(self) -> bool:
        return all(a.is_zero() or b.is_zero() for a, b in self.terms)

    def __add__(self, other: Descriptor) -> Descriptor:
        return Descriptor(self.terms + other.terms)

    def max_x_degree(self) -> int:
        return max((b.degree() for _, b in self.terms), default=0)

    @classmethod
    def multiply(cls, x_poly: MultiPoly) -> Descriptor:
        """Plain multiplication by ``x_poly(x)``, i.e. ``x_poly(D_xi)``."""
        return cls(((MultiPoly.const(x_poly.nvars, 1.0), x_poly),))


@dataclass(frozen=True)
class InitialLaw:
    """Law of X_0: Dirac (cov = 0), Gaussian, or polynomial x Gaussian."""

    kind: str
    x0: np.ndarray
    cov: np.ndarray
    prefactor: MultiPoly | None = None

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        n = x0.size
        cov = np.asarray(self.cov, dtype=float).reshape(n, n)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "cov", cov)
        if self.kind not in ("dirac", "gaussian", "gram_charlier"):
            raise ValueError(f"unknown initial law kind {self.kind!r}")
        if not np.allclose(cov, cov.T):
            raise ValueError("initial covariance must be symmetric")
        if self.kind == "dirac" and np.any(cov != 0):
            raise ValueError("a Dirac law has zero covariance")
        if self.kind in ("gaussian", "gram_charlier"):
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise ValueError("Gaussian initial covariance must be positive definite") from exc
        if self.kind == "gram_charlier":
            if self.prefactor is None or self.prefactor.nvars != n:
                raise ValueError("Gram-Charlier law needs a prefactor polynomial in n variables")

    @property
    def n(self) -> int:
        return self.x0.size

    @classmethod
    def dirac(cls, x0) -> InitialLaw:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        return cls("dirac", x0, np.zeros((x0.size, x0.size)))

    @classmethod
    def gaussian(cls, x0, cov) -> InitialLaw:
        return cls("gaussian", x0, cov)

    @classmethod
    def gram_charlier(cls, x0, cov, prefactor: MultiPoly) -> InitialLaw:
        return cls("gram_charlier", x0, cov, prefactor)

    def cf_prefactor(self) -> MultiPoly:
        """Polynomial Q(xi) with rho_0(xi) = Q(xi) exp(i xi.x0 - xi.cov.xi / 2)."""
        n = self.n
        if self.kind != "gram_charlier":
            return MultiPoly.const(n, 1.0)
        # D_j (q e^g) = (-i dq/dxi_j + (x0_j + i (cov xi)_j) q) e^g
        lin = [
            MultiPoly.const(n, self.x0[j])
            + sum((MultiPoly.var(n, k) * (1j * self.cov[j, k]) for k in range(n)), MultiPoly.zero(n))
            for j in range(n)
        ]

        def d(q: MultiPoly, j: int) -> MultiPoly:
            return q.partial(j) * (-1j) + lin[j] * q

        out = MultiPoly.zero(n)
        for e, c in self.prefactor.items():
            q = MultiPoly.const(n, c)
            for j, k in enumerate(e):
                for _ in range(k):
                    q = d(q, j)
            out = out + q
        return out


def initial_cf(law: InitialLaw, xi) -> complex | np.ndarray:
    """Characteristic function of X_0 at ``xi`` (last axis has length n)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1:] != (law.n,):
        xi = xi.reshape(*xi.shape, 1) if law.n == 1 else xi
    if xi.shape[-1] != law.n:
        raise ValueError("xi has the wrong dimension")
    quad = np.einsum("...i,ij,...j->...", xi, law.cov, xi)
    val = np.exp(1j * (xi @ law.x0) - 0.5 * quad)
    if law.kind == "gram_charlier":
        axes = [xi[..., j] for j in range(law.n)]
        val = val * law.cf_prefactor()(*axes)
    return val[()] if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class SignalDynamics:
    """Exact (non-polynomial) coefficients used when simulating paths.

    Each callable takes ``(t, x)`` with ``x`` of shape (n,).
    """

    drift: Callable
    diffusion: Callable
    obs_drift: Callable
    obs_diffusion: Callable | None = None


@dataclass(frozen=True)
class PerturbedModel:
    n: int
    m: int
    d: int
    eps: float
    f: TimeVector
    nu: TimeVector
    F: tuple[MultiPoly, ...]
    sigma: tuple[tuple[MultiPoly, ...], ...]
    gamma: tuple[tuple[MultiPoly, ...], ...]
    H: tuple[MultiPoly, ...]
    exact: SignalDynamics | None = field(default=None, compare=False)

    def __post_init__(self):
        n, m, d = self.n, self.m, self.d
        if min(n, m, d) < 1:
            raise ValueError("dimensions must be positive")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        object.__setattr__(self, "f", _as_time_function(self.f, (n,), "f"))
        object.__setattr__(self, "nu", _as_time_function(self.nu, (n, d), "nu"))
        object.__setattr__(self, "F", tuple(self.F))
        object.__setattr__(self, "H", tuple(self.H))
        object.__setattr__(self, "sigma", tuple(tuple(r) for r in self.sigma))
        object.__setattr__(self, "gamma", tuple(tuple(r) for r in self.gamma))
        shapes = {"F": (len(self.F),), "H": (len(self.H),),
                  "sigma": (len(self.sigma), *{len(r) for r in self.sigma}),
                  "gamma": (len(self.gamma), *{len(r) for r in self.gamma})}
        want = {"F": (n,), "H": (m,), "sigma": (n, d), "gamma": (n, m)}
        for key, shape in shapes.items():
            if shape != want[key]:
                raise ValueError(f"{key} has shape {shape}, expected {want[key]}")
        for p in self.polynomials():
            if p.nvars != n:
                raise ValueError(f"polynomial in {p.nvars} variables, model has n={n}")
        self.check_nu(0.0)

    def polynomials(self):
        yield from self.F
        yield from self.H
        for row in self.sigma + self.gamma:
            yield from row

    def check_nu(self, t: float) -> None:
        nu = np.asarray(self.nu(t), dtype=float)
        try:
            np.linalg.cholesky(nu @ nu.T)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"nu nu^T is not positive definite at t={t}") from exc

    def with_eps(self, eps: float) -> PerturbedModel:
        return PerturbedModel(self.n, self.m, self.d, eps, self.f, self.nu, self.F,
                              self.sigma, self.gamma, self.H, self.exact)

    @classmethod
    def scalar(cls, *, f=0.0, nu, F: MultiPoly | None = None, sigma: MultiPoly | None = None,
               gamma: MultiPoly | None = None, H: MultiPoly | None = None, eps: float = 1.0,
               exact: SignalDynamics | None = None) -> PerturbedModel:
        """One-dimensional signal, observation and noise."""
        z = MultiPoly.zero(1)
        return cls(1, 1, 1, eps, f if callable(f) else [f], nu if callable(nu) else [[nu]],
                   (F or z,), ((sigma or z,),), ((gamma or z,),), (H or z,), exact)


class OperatorSymbols:
    """Generator symbols of a :class:`PerturbedModel`.

    ``a0(t, xi_axes)`` is evaluated pointwise; ``a1``, ``a2`` and ``obs`` return
    descriptors.  Descriptors are cached by the value of nu_t, the only
    time-dependent ingredient.
    """

    def __init__(self, model: PerturbedModel):
        self.model = model
        self._cache: dict[bytes, tuple[Descriptor, Descriptor, tuple[Descriptor, ...]]] = {}

    def a0(self, t: float, xi_axes: Sequence[np.ndarray]):
        f = np.asarray(self.model.f(t), dtype=float)
        nu = np.asarray(self.model.nu(t), dtype=float)
        q = nu @ nu.T
        n = self.model.n
        out = 0j
        for i in range(n):
            out = out + 1j * xi_axes[i] * f[i]
            for j in range(n):
                if q[i, j]:
                    out = out - 0.5 * q[i, j] * xi_axes[i] * xi_axes[j]
        return out

    def a1(self, t: float) -> Descriptor:
        return self._build(t)[0]

    def a2(self, t: float) -> Descriptor:
        return self._build(t)[1]

    def obs(self, t: float) -> tuple[Descriptor, ...]:
        return self._build(t)[2]

    def _build(self, t: float):
        nu = np.asarray(self.model.nu(t), dtype=float)
        key = nu.tobytes()
        if key not in self._cache:
            self._cache[key] = _assemble(self.model, nu)
        return self._cache[key]


def _assemble(model: PerturbedModel, nu: np.ndarray):
    n, m, d = model.n, model.m, model.d
    xi = [MultiPoly.var(n, i) for i in range(n)]
    zero = MultiPoly.zero(n)
    sig, gam = model.sigma, model.gamma

    a1 = []
    for i in range(n):
        if not model.F[i].is_zero():
            a1.append((xi[i] * 1j, model.F[i]))
    # -1/2 tr[xi xi^T (nu sigma^T + sigma nu^T)]
    for i in range(n):
        for j in range(n):
            mix = zero
            for k in range(d):
                mix = mix + sig[i][k] * nu[j, k] + sig[j][k] * nu[i, k]
            if not mix.is_zero():
                a1.append((xi[i] * xi[j] * -0.5, mix))

    # -1/2 tr[xi xi^T (sigma sigma^T + gamma gamma^T)]
    a2 = []
    for i in range(n):
        for j in range(n):
            quad = zero
            for k in range(d):
                quad = quad + sig[i][k] * sig[j][k]
            for k in range(m):
                quad = quad + gam[i][k] * gam[j][k]
            if not quad.is_zero():
                a2.append((xi[i] * xi[j] * -0.5, quad))

    obs = []
    for k in range(m):
        terms = []
        if not model.H[k].is_zero():
            terms.append((MultiPoly.const(n, 1.0), model.H[k]))
        for i in range(n):
            if not gam[i][k].is_zero():
                terms.append((xi[i] * 1j, gam[i][k]))
        obs.append(Descriptor(tuple(terms)))
    return Descriptor(tuple(a1)), Descriptor(tuple(a2)), tuple(obs)


def build_symbols(model: PerturbedModel) -> OperatorSymbols:
    return OperatorSymbols(model)


def free_moments(model: PerturbedModel, law: InitialLaw, t: float, dt: float | None = None):
    """Mean and covariance of the eps = 0 signal at time ``t``.

    f and nu are treated as piecewise constant on a grid of step ``dt``
    (left-point values), which is exact for constant coefficients.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    x = law.x0.copy()
    cov = law.cov.copy()
    if t == 0:
        return x, cov
    dt = t if dt is None else dt
    steps = int(round(t / dt))
    if steps < 1 or abs(steps * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError("t must be a multiple of dt")
    for k in range(steps):
        s = k * dt
        nu = np.asarray(model.nu(s), dtype=float)
        x = x + np.asarray(model.f(s), dtype=float) * dt
        cov = cov + nu @ nu.T * dt
    return x, cov

"""Frequency grid, finite-difference realisation of D_xi, and Fourier inversion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ExpansionBreakdownError
from .model import Descriptor
from .polyops import MultiPoly

# antisymmetric central weights for d/dxi in units of 1/h: w_k (f[i+k] - f[i-k])
_CENTRAL = {
    2: np.array([0.5]),
    4: np.array([8.0, -1.0]) / 12.0,
}
# one-sided rows for the first boundary points; columns: f[0], f[1], ...
_ONE_SIDED = {
    2: np.array([[-1.5, 2.0, -0.5]]),
    4: np.array([[-25.0, 48.0, -36.0, 16.0, -3.0],
                 [-3.0, -10.0, 18.0, -6.0, 1.0]]) / 12.0,
}


def _ddxi(f: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    """d f / d xi along ``axis`` (not yet divided by i).

    Differences are paired and the right boundary mirrors the left one, so a
    Hermitian input gives an exactly anti-Hermitian output.
    """
    g = np.moveaxis(f, axis, 0)
    out = np.empty_like(g)
    m = g.shape[0]
    r = len(_CENTRAL[order])
    acc = 0
    for k, w in enumerate(_CENTRAL[order], start=1):
        acc = acc + w * (g[r + k: m - r + k] - g[r - k: m - r - k])
    out[r: m - r] = acc
    rows = _ONE_SIDED[order]
    width = rows.shape[1]
    for b, row in enumerate(rows):
        out[b] = np.tensordot(row, g[:width], axes=(0, 0))
        out[m - 1 - b] = -np.tensordot(row, g[m - width:][::-1], axes=(0, 0))
    return np.moveaxis(out / h, 0, axis)


@dataclass(frozen=True)
class XiGrid:
    """Tensor grid on [-xi_max, xi_max]^n with an odd mode count per axis.

    ``center`` is a carrier offset c: polynomial operators are applied as
    ``G(D) rho = e^{i xi c} G(c + D)(e^{-i xi c} rho)``, which is the same
    operator but lets the stencils act on a slowly varying envelope.
    """

    n: int = 1
    modes: int = 129
    xi_max: float | Sequence[float] = 20.0
    stencil_order: int = 2
    center: float | Sequence[float] = 0.0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("grid dimension must be positive")
        modes = int(self.modes)
        if modes % 2 == 0:
            modes += 1  # keep xi = 0 on the grid
        if self.stencil_order not in _CENTRAL:
            raise ConfigError(f"stencil_order must be one of {sorted(_CENTRAL)}")
        if modes < 2 * len(_CENTRAL[self.stencil_order]) + 3:
            raise ConfigError(f"{modes} modes is too few for the order-{self.stencil_order} stencil")
        xm = np.broadcast_to(np.asarray(self.xi_max, dtype=float), (self.n,)).copy()
        if np.any(xm <= 0) or not np.all(np.isfinite(xm)):
            raise ConfigError("xi_max must be positive and finite")
        c = np.broadcast_to(np.asarray(self.center, dtype=float), (self.n,)).copy()
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "xi_max", tuple(xm))
        object.__setattr__(self, "center", tuple(c))

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        if "axes" not in self._cache:
            k = np.arange(-(self.modes // 2), self.modes // 2 + 1)
            # h * k rather than linspace keeps the grid exactly symmetric
            self._cache["axes"] = tuple(h * k for h in self.spacing)
        return self._cache["axes"]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(2 * x / (self.modes - 1) for x in self.xi_max)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes,) * self.n

    @property
    def zero_index(self) -> tuple[int, ...]:
        return (self.modes // 2,) * self.n

    def mesh(self) -> list[np.ndarray]:
        """Axes reshaped to broadcast against a state array."""
        out = []
        for j, ax in enumerate(self.axes):
            shape = [1] * self.n
            shape[j] = self.modes
            out.append(ax.reshape(shape))
        return out

    def points(self) -> np.ndarray:
        """All grid points, shape ``(*self.shape, n)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def carrier(self) -> np.ndarray | None:
        if not any(self.center):
            return None
        if "carrier" not in self._cache:
            phase = sum(m * c for m, c in zip(self.mesh(), self.center))
            self._cache["carrier"] = np.exp(1j * phase)
        return self._cache["carrier"]

    def d(self, f: np.ndarray, axis: int = 0, lead: int = 0) -> np.ndarray:
        """D_xi = d/(i dxi) along grid axis ``axis``; ``lead`` batch axes come first."""
        return _ddxi(f, lead + axis, self.spacing[axis], self.stencil_order) * -1j

    def compile(self, descriptor: Descriptor) -> CompiledOperator:
        key = ("op", descriptor)
        if key not in self._cache:
            self._cache[key] = CompiledOperator(self, descriptor)
        return self._cache[key]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=complex)


class CompiledOperator:
    """``sum_alpha W_alpha(xi) D^alpha`` with the weights evaluated on a grid."""

    def __init__(self, grid: XiGrid, descriptor: Descriptor):
        self.grid = grid
        deg = descriptor.max_x_degree()
        if deg >= grid.modes:
            raise ConfigError(f"operator of degree {deg} does not fit {grid.modes} modes")
        mesh = grid.mesh()
        weights: dict[tuple[int, ...], np.ndarray] = {}
        for xi_poly, x_poly in descriptor.terms:
            if xi_poly.is_zero() or x_poly.is_zero():
                continue
            mult = xi_poly(*mesh)
            for alpha, c in x_poly.shift(grid.center).items():
                weights[alpha] = weights.get(alpha, 0) + c * mult
        # drop multipliers that cancelled exactly
        self.weights = {a: np.broadcast_to(w, grid.shape) for a, w in weights.items()
                        if np.any(w != 0)}
        self.is_zero = not self.weights

    def __call__(self, f: np.ndarray) -> np.ndarray:
        """Apply to ``f`` of shape ``(..., *grid.shape)``; leading axes are a batch."""
        grid = self.grid
        if self.is_zero:
            return np.zeros_like(f, dtype=complex)
        car = grid.carrier()
        g = f if car is None else f / car
        lead = np.ndim(f) - grid.n
        derivs = {(0,) * grid.n: g}

        def get(alpha):
            if alpha not in derivs:
                j = max(i for i, k in enumerate(alpha) if k)
                prev = list(alpha)
                prev[j] -= 1
                derivs[alpha] = grid.d(get(tuple(prev)), j, lead)
            return derivs[alpha]

        out = 0
        for alpha in sorted(self.weights, key=lambda a: (sum(a), a)):
            out = out + self.weights[alpha] * get(alpha)
        out = np.asarray(out, dtype=complex)
        return out if car is None else out * car


def apply_descriptor(state_order: np.ndarray, descriptor: Descriptor, grid: XiGrid) -> np.ndarray:
    state_order = np.asarray(state_order, dtype=complex)
    if state_order.shape != grid.shape:
        raise ConfigError(f"state shape {state_order.shape} does not match grid {grid.shape}")
    return grid.compile(descriptor)(state_order)


@dataclass
class SpectralState:
    grid: XiGrid
    orders: list[np.ndarray]
    t: float = 0.0

    def copy(self) -> SpectralState:
        return SpectralState(self.grid, [o.copy() for o in self.orders], self.t)

    def combined(self, eps: float, upto: int | None = None) -> np.ndarray:
        """``sum_j eps^j orders[j]`` for j up to ``upto`` (default: all)."""
        if eps < 0:
            raise ValueError("eps must be non-negative")
        top = len(self.orders) - 1 if upto is None else min(upto, len(self.orders) - 1)
        out = self.orders[top].copy()
        for j in range(top - 1, -1, -1):  # Horner in eps
            out = out * eps + self.orders[j]
        return out

    def value_at_zero(self, eps: float, upto: int | None = None) -> complex:
        return complex(self.combined(eps, upto)[self.grid.zero_index])

    def symmetry_residual(self) -> float:
        """Largest relative violation of rho(-xi) = conj(rho(xi)) over all orders."""
        worst = 0.0
        flip = (slice(None, None, -1),) * self.grid.n
        for o in self.orders:
            scale = np.abs(o).max()
            if scale > 0:
                worst = max(worst, float(np.abs(o[flip] - np.conj(o)).max() / scale))
        return worst


@dataclass
class DensityGrid:
    """Density samples on a (tensor) z-window.

    ``values`` are unnormalised; ``mass`` is their trapezoidal integral over
    the window and may be negative for a broken-down expansion.
    """

    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    mass: float

    @property
    def z(self) -> np.ndarray:
        return self.axes[0]

    @property
    def z_min(self) -> float:
        return float(self.axes[0][0])

    @property
    def z_max(self) -> float:
        return float(self.axes[0][-1])

    @property
    def points(self) -> int:
        return self.axes[0].size

    def normalized(self) -> np.ndarray:
        if self.mass <= 0:
            raise ExpansionBreakdownError(f"cannot normalise a density with mass {self.mass:.3e}")
        return self.values / self.mass

    def to_csv(self, path, normalize: bool = True) -> None:
        if len(self.axes) != 1:
            raise ValueError("CSV output is only defined for one-dimensional densities")
        vals = self.normalized() if normalize else self.values
        write_density_csv(path, self.z, vals)


def trapezoid_nd(values: np.ndarray, axes: Sequence[np.ndarray]) -> float:
    out = values
    for ax in reversed(axes):
        out = np.trapezoid(out, ax, axis=-1)
    return float(out)


def _window_axes(window, n: int) -> tuple[np.ndarray, ...]:
    z_min, z_max, points = window
    lo = np.broadcast_to(np.asarray(z_min, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(z_max, dtype=float), (n,))
    npts = np.broadcast_to(np.asarray(points, dtype=int), (n,))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi <= lo):
        raise ConfigError("density window must be finite with z_max > z_min")
    if np.any(npts < 2):
        raise ConfigError("density window needs at least two points")
    return tuple(np.linspace(a, b, k) for a, b, k in zip(lo, hi, npts))


def invert_array(rho: np.ndarray, grid: XiGrid, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Trapezoidal inverse transform (2 pi)^{-n} sum w e^{-i xi.z} rho, complex result."""
    out = np.asarray(rho, dtype=complex)
    for j, (xi, h, z) in enumerate(zip(grid.axes, grid.spacing, axes)):
        w = np.full(xi.size, h)
        w[0] = w[-1] = h / 2
        kernel = np.exp(-1j * np.outer(z, xi)) * w / (2 * np.pi)
        # contract axis 0 each time; the new z axis goes to the end
        out = np.tensordot(out, kernel, axes=([0], [1]))
    return out


def invert_to_density(state: SpectralState, eps: float, window, upto: int | None = None,
                      imag_tol: float = 1e-6) -> DensityGrid:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    axes = _window_axes(window, state.grid.n)
    vals = invert_array(state.combined(eps, upto), state.grid, axes)
    peak = np.abs(vals.real).max()
    resid = np.abs(vals.imag).max()
    if resid > imag_tol * max(peak, np.finfo(float).tiny):
        raise ExpansionBreakdownError(
            f"imaginary residual {resid:.3e} exceeds {imag_tol:g} of peak {peak:.3e}")
    real = vals.real
    mass = trapezoid_nd(real, axes)
    if not mass > 0:
        raise ExpansionBreakdownError(f"non-positive mass {mass:.3e} on the density window")
    return DensityGrid(axes, real, mass)


def moments_at_zero(state: SpectralState, eps: float, poly: MultiPoly, upto: int | None = None) -> complex:
    """``poly(D_xi) rho |_{xi=0}``: the (unnormalised) expectation of poly(X)."""
    if poly.nvars != state.grid.n:
        raise ConfigError("polynomial dimension does not match the grid")
    op = state.grid.compile(Descriptor.multiply(poly))
    return complex(op(state.combined(eps, upto))[state.grid.zero_index])


def conditional_moments(state: SpectralState, eps: float, upto: int | None = None):
    """Normalised mean and variance of a one-dimensional state."""
    if state.grid.n != 1:
        raise ValueError("conditional_moments handles one dimension")
    one = MultiPoly.const(1, 1.0)
    x = MultiPoly.var(1, 0)
    m0 = moments_at_zero(state, eps, one, upto).real
    m1 = moments_at_zero(state, eps, x, upto).real / m0
    m2 = moments_at_zero(state, eps, x * x, upto).real / m0
    return m1, m2 - m1 * m1


# -- CSV ---------------------------------------------------------------------

def write_density_csv(path, z: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "value"])
        for a, b in zip(z, values):
            w.writerow([f"{a:.17g}", f"{b:.17g}"])


def read_density_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["z", "value"]:
            raise ConfigError(f"{path}: expected header 'z,value'")
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}: malformed row {i}") from exc
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]


def save_state_csv(state: SpectralState, path) -> None:
    if state.grid.n != 1:
        raise ValueError("state snapshots are one-dimensional")
    header = ["xi"]
    for j in range(len(state.orders)):
        header += [f"re_order{j}", f"im_order{j}"]
    cols = [state.grid.axes[0]]
    for o in state.orders:
        cols += [o.real, o.imag]
    np.savetxt(Path(path), np.column_stack(cols), delimiter=",", header=",".join(header),
               comments="", fmt="%.17g")


def load_state_csv(path, grid: XiGrid, t: float = 0.0) -> SpectralState:
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.modes or not np.allclose(data[:, 0], grid.axes[0], rtol=0, atol=1e-12):
        raise ConfigError(f"{path}: xi column does not match the grid")
    pairs = data[:, 1:]
    if pairs.shape[1] % 2:
        raise ConfigError(f"{path}: expected re/im column pairs")
    orders = [pairs[:, 2 * j] + 1j * pairs[:, 2 * j + 1] for j in range(pairs.shape[1] // 2)]
    return SpectralState(grid, orders, t)

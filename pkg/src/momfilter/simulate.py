"""Joint signal/observation path simulation and path CSV files."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ConfigError
from .model import InitialLaw, PerturbedModel
from .polyops import poly_eval


@dataclass
class ObservationPath:
    """Time grid, observation increments and (optionally) the hidden signal.

    ``dY[k]`` is the increment over ``[times[k], times[k+1]]``; Y_0 = 0.
    """

    times: np.ndarray
    dY: np.ndarray
    X: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        dY = np.asarray(self.dY, dtype=float)
        if dY.ndim == 1:
            dY = dY[:, None]
        self.dY = dY
        if self.times.ndim != 1 or self.times.size < 2:
            raise ConfigError("a path needs at least two time points")
        if self.times[0] != 0:
            raise ConfigError("path times must start at 0")
        bad = np.flatnonzero(np.diff(self.times) <= 0)
        if bad.size:
            raise ConfigError(f"times are not strictly increasing at row {bad[0] + 1}")
        if dY.shape[0] != self.times.size - 1:
            raise ConfigError("need exactly one increment per time step")
        if not np.all(np.isfinite(dY)):
            raise ConfigError("observation increments must be finite")
        if self.X is not None:
            X = np.asarray(self.X, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            if X.shape[0] != self.times.size:
                raise ConfigError("signal samples must match the time grid")
            self.X = X

    @property
    def m(self) -> int:
        return self.dY.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def step(self) -> float:
        """The common step of a uniform grid."""
        d = np.diff(self.times)
        if np.ptp(d) > 1e-9 * d.mean():
            raise ConfigError("the path time grid is not uniform")
        return float(self.horizon / d.size)

    @property
    def Y(self) -> np.ndarray:
        return np.vstack([np.zeros((1, self.m)), np.cumsum(self.dY, axis=0)])

    def scaled(self, factor: float) -> ObservationPath:
        return ObservationPath(self.times, self.dY * factor, self.X)

    def __eq__(self, other):
        if not isinstance(other, ObservationPath):
            return NotImplemented
        same_x = (self.X is None and other.X is None) or (
            self.X is not None and other.X is not None and np.array_equal(self.X, other.X))
        return np.array_equal(self.times, other.times) and np.array_equal(self.dY, other.dY) and same_x


def _poly_vec(polys, x) -> np.ndarray:
    return np.array([poly_eval(p, x).real if not p.is_zero() else 0.0 for p in polys])


def _sample_initial(law: InitialLaw, rng: np.random.Generator) -> np.ndarray:
    if law.kind == "dirac":
        return law.x0.copy()
    if law.kind == "gaussian":
        return law.x0 + np.linalg.cholesky(law.cov) @ rng.standard_normal(law.n)
    raise ConfigError("simulation from a Gram-Charlier initial law is not supported")


def simulate_paths(model: PerturbedModel, law: InitialLaw, T: float, steps: int, seed: int) -> ObservationPath:
    """Euler-Maruyama for the signal and observation.

    Uses ``model.exact`` coefficients when present and otherwise the free
    parts plus the eps-scaled polynomials.  Noise comes from a Philox
    counter-based generator so a seed fixes the path bit for bit.
    """
    if steps < 1:
        raise ConfigError("steps must be at least 1")
    if not T > 0:
        raise ConfigError("horizon must be positive")
    n, m, d, eps = model.n, model.m, model.d, model.eps
    rng = np.random.Generator(np.random.Philox(seed))
    x = _sample_initial(law, rng)
    dt = T / steps
    noise = rng.standard_normal((steps, d + m)) * np.sqrt(dt)
    times = np.linspace(0.0, T, steps + 1)
    X = np.empty((steps + 1, n))
    dY = np.empty((steps, m))
    X[0] = x
    ex = model.exact
    zero_sig = all(p.is_zero() for row in model.sigma for p in row)
    zero_gam = all(p.is_zero() for row in model.gamma for p in row)
    for k in range(steps):
        t = times[k]
        dV, dW = noise[k, :d], noise[k, d:]
        if ex is not None:
            drift = np.asarray(ex.drift(t, x), dtype=float)
            diff = np.asarray(ex.diffusion(t, x), dtype=float).reshape(n, d)
            h = np.asarray(ex.obs_drift(t, x), dtype=float)
            gam = (np.zeros((n, m)) if ex.obs_diffusion is None
                   else np.asarray(ex.obs_diffusion(t, x), dtype=float).reshape(n, m))
        else:
            drift = np.asarray(model.f(t), dtype=float) + eps * _poly_vec(model.F, x)
            diff = np.asarray(model.nu(t), dtype=float)
            if not zero_sig:
                diff = diff + eps * np.array([_poly_vec(row, x) for row in model.sigma])
            h = eps * _poly_vec(model.H, x)
            gam = (np.zeros((n, m)) if zero_gam
                   else eps * np.array([_poly_vec(row, x) for row in model.gamma]))
        dY[k] = h * dt + dW
        x = x + drift * dt + diff @ dV + gam @ dW
        if not np.all(np.isfinite(x)):
            raise BlowUpError(f"signal path diverged at step {k + 1}", step=k + 1)
        X[k + 1] = x
    return ObservationPath(times, dY, X)


# -- CSV ---------------------------------------------------------------------

def _names(prefix: str, k: int) -> list[str]:
    return [prefix] if k == 1 else [f"{prefix}_{i + 1}" for i in range(k)]


def save_path(path: ObservationPath, file) -> None:
    """Write ``t,dY[,X]`` rows; the first row holds t = 0 and a zero increment."""
    header = ["t"] + _names("dY", path.m)
    if path.X is not None:
        header += _names("X", path.X.shape[1])
    inc = np.vstack([np.zeros((1, path.m)), path.dY])
    cols = [path.times[:, None], inc]
    if path.X is not None:
        cols.append(path.X)
    data = np.hstack(cols)
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([f"{v:.17g}" for v in row])


def load_path(file) -> ObservationPath:
    """Read a path CSV with ``dY`` (increments) or ``Y`` (cumulative) columns."""
    with open(file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ConfigError(f"{file}: empty file")
        header = [h.strip() for h in header]
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ConfigError(f"{file}: row {i} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ConfigError(f"{file}: malformed value in row {i}") from exc
    if header[0] != "t":
        raise ConfigError(f"{file}: first column must be 't'")
    if len(rows) < 2:
        raise ConfigError(f"{file}: need at least two rows")
    data = np.array(rows)
    t = data[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise ConfigError(f"{file}: time is not increasing at row {bad[0] + 2}")

    def cols(prefix):
        idx = [i for i, h in enumerate(header) if h == prefix or h.startswith(prefix + "_")]
        return data[:, idx] if idx else None

    dY, Y, X = cols("dY"), cols("Y"), cols("X")
    if (dY is None) == (Y is None):
        raise ConfigError(f"{file}: need exactly one of dY or Y columns")
    if dY is not None:
        if np.any(dY[0] != 0):
            raise ConfigError(f"{file}: first increment row must be 0 (Y_0 = 0)")
        inc = dY[1:]
    else:
        if np.any(Y[0] != 0):
            raise ConfigError(f"{file}: Y must start at 0")
        inc = np.diff(Y, axis=0)
    return ObservationPath(t, inc, X)

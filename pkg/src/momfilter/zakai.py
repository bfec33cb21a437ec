"""Order-by-order integration of the unnormalised filter in frequency space.

Each order obeys a linear equation driven by the two orders below it:

    d rho_j = a0 rho_j dt + (A1 rho_{j-1} + A2 rho_{j-2}) dt + obs rho_{j-1} dY

The diagonal a0 part is integrated exactly per mode; the sources are taken at
the left end of the step.  Sub-period collapse ("substepping") folds the
truncated series back into order 0 at regular boundaries.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ConfigError, ExpansionBreakdownError
from .model import InitialLaw, OperatorSymbols, PerturbedModel, build_symbols, initial_cf
from .simulate import ObservationPath
from .spectral import SpectralState, XiGrid

BLOWUP_LIMIT = 1e12
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    max_order: int = 1
    dt: float | None = None
    substeps: int = 1
    substep_order: int = 1
    eps: float | None = None
    check_symmetry: bool = True

    def __post_init__(self):
        if self.max_order < 0:
            raise ConfigError("max_order must be non-negative")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.substeps < 1:
            raise ConfigError("substeps must be at least 1")
        if self.substeps > 1 and not 0 <= self.substep_order <= self.max_order:
            raise ConfigError("substep_order must lie in [0, max_order]")
        if self.eps is not None and self.eps < 0:
            raise ConfigError("eps must be non-negative")

    @property
    def carried_orders(self) -> int:
        """Highest order integrated: max_order, or substep_order when substepping."""
        return self.max_order if self.substeps == 1 else self.substep_order


@dataclass
class StepRecord:
    t: float
    mass: float
    symmetry_residual: float


class ExpansionRun:
    """Shared driver state; subclasses define the per-order update."""

    max_supported_order: int | None = None

    def __init__(self, model: PerturbedModel, law: InitialLaw, grid: XiGrid,
                 config: SolverConfig, path: ObservationPath | None = None,
                 horizon: float | None = None):
        if law.n != model.n or grid.n != model.n:
            raise ConfigError("model, initial law and grid dimensions differ")
        if path is not None and path.m != model.m:
            raise ConfigError(f"path has {path.m} observation channels, model has {model.m}")
        top = config.carried_orders
        if self.max_supported_order is not None and max(top, config.max_order) > self.max_supported_order:
            raise ConfigError(f"this solver supports orders up to {self.max_supported_order}")
        self.model = model
        self.law = law
        self.grid = grid
        self.config = config
        self.path = path
        self.symbols: OperatorSymbols = build_symbols(model)
        self.eps = model.eps if config.eps is None else config.eps
        self.dt, self.steps, self._ratio = _time_grid(config, path, horizon)
        if self.steps % config.substeps:
            raise ConfigError(f"{self.steps} steps cannot be split into {config.substeps} sub-periods")
        self.period = self.steps // config.substeps
        orders = [np.asarray(initial_cf(law, grid.points()), dtype=complex)]
        orders += [grid.zeros() for _ in range(top)]
        self.state = SpectralState(grid, orders, 0.0)
        self.step_index = 0
        self.diagnostics: list[StepRecord] = []
        self._decay_cache: dict[bytes, np.ndarray] = {}

    # -- pieces -------------------------------------------------------------

    def decay(self, t: float) -> np.ndarray:
        key = np.asarray(self.model.f(t), float).tobytes() + np.asarray(self.model.nu(t), float).tobytes()
        if key not in self._decay_cache:
            self._decay_cache[key] = np.exp(self.symbols.a0(t, self.grid.mesh()) * self.dt)
        return self._decay_cache[key]

    def increment(self, k: int) -> np.ndarray | None:
        """Observation increment over solver step ``k`` (None without a path)."""
        if self.path is None:
            return None
        r = self._ratio
        return self.path.dY[k * r:(k + 1) * r].sum(axis=0)

    def advance(self, orders: list[np.ndarray], t: float, dY) -> list[np.ndarray]:
        raise NotImplementedError

    # -- driver -------------------------------------------------------------

    def step(self) -> SpectralState:
        if self.step_index >= self.steps:
            raise ConfigError("the run has already reached its horizon")
        k = self.step_index
        t = self.state.t
        dY = self.increment(k)
        new = self.advance(self.state.orders, t, dY)
        self._guard(new, k)
        self.step_index += 1
        self.state = SpectralState(self.grid, new, (k + 1) * self.dt)
        if self.step_index % self.period == 0 and self.step_index < self.steps:
            self.collapse()
        self._record()
        return self.state

    def collapse(self) -> None:
        """Fold the truncated series into order 0 and reset the rest."""
        folded = self.state.combined(self.eps)
        self.state.orders = [folded] + [self.grid.zeros() for _ in self.state.orders[1:]]

    def run(self) -> SpectralState:
        while self.step_index < self.steps:
            self.step()
        return self.state

    def _guard(self, orders: list[np.ndarray], k: int) -> None:
        for j, o in enumerate(orders):
            mag = np.abs(o)
            bad = ~np.isfinite(mag) | (mag > BLOWUP_LIMIT)
            if bad.any():
                mode = np.unravel_index(int(np.argmax(bad)), o.shape)
                mode = mode[0] if len(mode) == 1 else mode
                raise BlowUpError(f"state blew up at step {k + 1}, mode {mode}, order {j}",
                                  step=k + 1, mode=mode, order=j)

    def _record(self) -> None:
        resid = self.state.symmetry_residual()
        if self.config.check_symmetry and resid > SYMMETRY_TOL:
            raise ExpansionBreakdownError(
                f"Hermitian symmetry residual {resid:.2e} at t={self.state.t:g}")
        mass = self.state.value_at_zero(self.eps).real
        self.diagnostics.append(StepRecord(self.state.t, mass, resid))

    def write_diagnostics(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "symmetry_residual"])
            for r in self.diagnostics:
                w.writerow([f"{r.t:.17g}", f"{r.mass:.17g}", f"{r.symmetry_residual:.17g}"])


def _time_grid(config: SolverConfig, path: ObservationPath | None, horizon: float | None):
    if path is None:
        if horizon is None or config.dt is None:
            raise ConfigError("a run without a path needs both a horizon and dt")
        dt = config.dt
        steps = int(round(horizon / dt))
        if steps < 1 or abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
            raise ConfigError(f"horizon {horizon} is not a multiple of dt {dt}")
        return dt, steps, 1
    pdt = path.step
    dt = pdt if config.dt is None else config.dt
    ratio = int(round(dt / pdt))
    if ratio < 1 or abs(ratio * pdt - dt) > 1e-9 * dt:
        raise ConfigError(f"solver dt {dt} is not a whole multiple of the path step {pdt}")
    T = path.horizon if horizon is None else horizon
    if T > path.horizon * (1 + 1e-12):
        raise ConfigError(f"horizon {T} exceeds the path horizon {path.horizon}")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"horizon {T} is not a multiple of dt {dt}")
    return dt, steps, ratio


class ZakaiRun(ExpansionRun):
    def advance(self, orders, t, dY):
        grid = self.grid
        a1 = grid.compile(self.symbols.a1(t))
        a2 = grid.compile(self.symbols.a2(t))
        obs = [grid.compile(d) for d in self.symbols.obs(t)] if dY is not None else []
        E = self.decay(t)
        dt = self.dt
        top = len(orders) - 1
        # sources read from the pre-step snapshot only; lower orders go through
        # each operator as one batch
        if top == 0:
            return [E * orders[0]]
        low = np.stack(orders[:top])
        src = 0
        if not a1.is_zero:
            src = a1(low) * dt
        if top >= 2 and not a2.is_zero:
            shifted = np.concatenate([np.zeros_like(low[:1]), a2(low[:-1])])
            src = src + shifted * dt
        for k, op in enumerate(obs):
            if not op.is_zero and dY[k] != 0:
                src = src + op(low) * dY[k]
        new = [E * orders[0]]
        for j in range(1, top + 1):
            new.append(E * (orders[j] + src[j - 1]) if np.ndim(src) else E * orders[j])
        return new


def step(run: ZakaiRun) -> ZakaiRun:
    run.step()
    return run


def solve(model: PerturbedModel, law: InitialLaw, path: ObservationPath, config: SolverConfig,
          grid: XiGrid, horizon: float | None = None) -> SpectralState:
    return ZakaiRun(model, law, grid, config, path, horizon).run()


def solve_unconditional(model: PerturbedModel, law: InitialLaw, T: float, config: SolverConfig,
                        grid: XiGrid) -> SpectralState:
    """Same recursion with the observation term removed."""
    return ZakaiRun(model, law, grid, config, None, T).run()

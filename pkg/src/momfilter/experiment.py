"""Config-driven experiments: build a problem, get a path, run solver variants, compare."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, MomfilterError, OracleMismatchError
from .ks import KsRun
from .model import InitialLaw, PerturbedModel, free_moments
from .polyops import from_text
from .problems import Problem, auto_xi_max, benes_problem, cir_problem, linear_problem
from .reference import benes_exact_density, cir_exact_density, count_local_maxima, kalman_bucy
from .simulate import ObservationPath, load_path, save_path, simulate_paths
from .spectral import (DensityGrid, XiGrid, conditional_moments, invert_to_density,
                       read_density_csv, write_density_csv)
from .zakai import SolverConfig, ZakaiRun

PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6")
SOLVERS = ("zakai", "ks", "unconditional")
DENSITY_ORACLES = ("cir", "benes")


@dataclass(frozen=True)
class Variant:
    name: str
    solver: str = "zakai"
    max_order: int = 1
    substeps: int = 1
    substep_order: int = 1
    truncations: tuple[int, ...] | None = None  # report partial sums at these orders
    weight_w: float | None = None  # refit the drift with this weight

    def labels(self) -> list[tuple[str, int]]:
        orders = self.truncations if self.truncations is not None else (self.max_order,)
        if "{order}" in self.name:
            return [(self.name.format(order=j), j) for j in orders]
        if len(orders) > 1:
            raise ConfigError(f"variant {self.name!r} lists truncations but its name has no '{{order}}'")
        return [(self.name, orders[0])]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: dict
    path: dict
    solver: dict
    output: dict
    oracle: dict
    variants: tuple[Variant, ...]
    initial: dict | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        missing = [k for k in ("model", "solver", "output") if k not in raw]
        if missing:
            raise ConfigError(f"config is missing {', '.join(missing)}")
        solver = dict(raw["solver"])
        variants = []
        for v in solver.pop("variants", None) or [{"name": "run"}]:
            v = dict(v)
            if "truncations" in v:
                v["truncations"] = tuple(int(j) for j in v["truncations"])
            try:
                variants.append(Variant(**v))
            except TypeError as exc:
                raise ConfigError(f"bad variant {v}: {exc}") from exc
        for v in variants:
            if v.solver not in SOLVERS:
                raise ConfigError(f"variant {v.name!r}: solver must be one of {SOLVERS}")
            if v.truncations and max(v.truncations) > v.max_order:
                raise ConfigError(f"variant {v.name!r}: truncation above max_order")
        labels = [lab for v in variants for lab, _ in v.labels()]
        if len(set(labels)) != len(labels):
            raise ConfigError("variant names must be unique")
        oracle = raw.get("oracle") or {}
        if isinstance(oracle, list):
            oracle = {"densities": oracle}
        for o in oracle.get("densities", []):
            if o not in DENSITY_ORACLES:
                raise ConfigError(f"unknown density oracle {o!r}")
        return cls(str(raw.get("name", "experiment")), dict(raw["model"]), dict(raw.get("path") or {}),
                   solver, dict(raw["output"]), dict(oracle), tuple(variants), raw.get("initial"))

    def with_seed(self, seed: int) -> ExperimentConfig:
        sim = dict(self.path.get("simulate") or {})
        if not sim:
            raise ConfigError("--seed needs a simulated path")
        sim["seed"] = int(seed)
        return replace(self, path={**self.path, "simulate": sim})


def load_config(file) -> ExperimentConfig:
    try:
        with open(file) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {file}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {file}: {exc}") from exc
    cfg = ExperimentConfig.from_dict(raw)
    base = Path(file).resolve().parent
    if "file" in cfg.path and not Path(cfg.path["file"]).is_absolute():
        cfg = replace(cfg, path={**cfg.path, "file": str(base / cfg.path["file"])})
    return cfg


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("momfilter.presets").joinpath(f"{name}.yaml").read_text()
    return ExperimentConfig.from_dict(yaml.safe_load(text))


# -- building blocks ---------------------------------------------------------------

def _f(d: dict, key: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ConfigError(f"missing parameter {key!r}")
        return default
    try:
        return float(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key!r} must be a number") from exc


def build_problem(cfg: ExperimentConfig, weight_w: float | None = None) -> Problem:
    m = cfg.model
    kind = m.get("kind")
    eps = _f(m, "eps", 1.0)
    if kind == "benes":
        fit = m.get("fit") or {}
        w = _f(fit, "weight_w", 2.0) if weight_w is None else weight_w
        prob = benes_problem(_f(m, "a"), _f(m, "sigma"), _f(m, "h1"), _f(m, "h2"), w,
                             int(fit.get("degree", 11)), _f(fit, "half_width", 5.0),
                             _f(fit, "step", 0.2), eps)
    elif kind == "cir":
        fit = m.get("fit") or {}
        prob = cir_problem(_f(m, "theta"), _f(m, "mu"), _f(m, "sigma"),
                           _f(m, "x0", _f(m, "mu")), int(fit.get("degree", 3)), eps)
    elif kind == "linear":
        prob = linear_problem(_f(m, "A", 0.0), _f(m, "b", 0.0), _f(m, "sigma"), _f(m, "h1"),
                              _f(m, "h2", 0.0), _f(m, "x0", 0.0), eps)
    elif kind == "explicit":
        prob = _explicit_problem(m)
    else:
        raise ConfigError(f"model kind must be benes, cir, linear or explicit, not {kind!r}")
    if cfg.initial is not None:
        prob = Problem(prob.model, _initial_law(cfg.initial, prob.model.n), prob.fit_target)
    return prob


def _explicit_problem(m: dict) -> Problem:
    try:
        n, mm, d = int(m["n"]), int(m["m"]), int(m["d"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("explicit model needs integer n, m, d") from exc

    def poly(s):
        return from_text(str(s), n)

    def vec(key, k):
        vals = m.get(key) or ["0"] * k
        return [poly(s) for s in vals]

    def mat(key, rows, cols):
        vals = m.get(key) or [["0"] * cols for _ in range(rows)]
        return [[poly(s) for s in row] for row in vals]

    try:
        model = PerturbedModel(n, mm, d, _f(m, "eps", 1.0), m.get("f", [0.0] * n), m["nu"],
                               vec("F", n), mat("sigma", n, d), mat("gamma", n, mm), vec("H", mm))
    except KeyError as exc:
        raise ConfigError("explicit model needs nu") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Problem(model, InitialLaw.dirac(np.zeros(n)))


def _initial_law(d: dict, n: int) -> InitialLaw:
    kind = d.get("kind", "dirac")
    x0 = np.asarray(d.get("x0", [0.0] * n), dtype=float)
    try:
        if kind == "dirac":
            return InitialLaw.dirac(x0)
        cov = np.asarray(d["cov"], dtype=float).reshape(n, n)
        if kind == "gaussian":
            return InitialLaw.gaussian(x0, cov)
        if kind == "gram_charlier":
            return InitialLaw.gram_charlier(x0, cov, from_text(str(d["prefactor"]), n))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad initial law: {exc}") from exc
    raise ConfigError(f"unknown initial law kind {kind!r}")


def horizon_of(cfg: ExperimentConfig) -> float:
    if "horizon" in cfg.solver:
        return _f(cfg.solver, "horizon")
    sim = cfg.path.get("simulate")
    if sim:
        return _f(sim, "horizon")
    raise ConfigError("solver.horizon is required")


def build_path(cfg: ExperimentConfig, prob: Problem) -> ObservationPath | None:
    if "file" in cfg.path:
        f = Path(cfg.path["file"])
        if not f.exists():
            raise ConfigError(f"path file {f} does not exist")
        return load_path(f)
    sim = cfg.path.get("simulate")
    if sim:
        return simulate_paths(prob.model, prob.law, _f(sim, "horizon"), int(sim["steps"]), int(sim["seed"]))
    return None


def build_grid(cfg: ExperimentConfig, prob: Problem, T: float) -> XiGrid:
    g = cfg.solver.get("grid") or {}
    order = int(g.get("stencil_order", 2))
    model, law = prob.model, prob.law
    x_T, cov_T = free_moments(model, law, T, _f(cfg.solver, "dt", T))
    xi_max = g.get("xi_max", "auto")
    if xi_max == "auto":
        xi_max = auto_xi_max(float(np.linalg.eigvalsh(cov_T).min()))
    xi_max = float(xi_max)
    if "spacing" in g:
        modes = 2 * math.ceil(xi_max / _f(g, "spacing") - 1e-9) + 1
    else:
        modes = g.get("modes", 129)
    center = g.get("center", "auto")
    if center == "auto":
        center = x_T
    return XiGrid(model.n, int(modes), xi_max, order, center)


# -- running -----------------------------------------------------------------------

@dataclass
class VariantResult:
    label: str
    status: str  # "ok", "blowup" or "breakdown"
    density: DensityGrid | None = None
    linf: float = math.nan
    l1: float = math.nan
    peak_gap: float = math.nan
    mass: float = math.nan
    symmetry: float = math.nan
    runtime: float = 0.0
    mean: float = math.nan
    variance: float = math.nan
    message: str = ""
    modes: int = 0


@dataclass
class Report:
    name: str
    out_dir: Path | None
    results: list[VariantResult]
    exact: DensityGrid | None = None
    path: ObservationPath | None = None
    kalman: tuple[float, float] | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, label: str) -> VariantResult:
        for r in self.results:
            if r.label == label:
                return r
        raise KeyError(label)


def _window(cfg: ExperimentConfig):
    w = cfg.output.get("window")
    if not w or len(w) != 3:
        raise ConfigError("output.window must be [z_min, z_max, points]")
    return float(w[0]), float(w[1]), int(w[2])


def _exact_density(cfg, prob, path, T, window) -> DensityGrid | None:
    dens = cfg.oracle.get("densities", [])
    if not dens:
        return None
    m = cfg.model
    if dens[0] == "cir":
        o = cir_exact_density(_f(m, "theta"), _f(m, "mu"), _f(m, "sigma"), _f(m, "x0", _f(m, "mu")), T)
    else:
        if path is None:
            raise ConfigError("the Benes oracle needs an observation path")
        o = benes_exact_density(_f(m, "a"), _f(m, "sigma"), _f(m, "h1"), _f(m, "h2"), path, T, window)
    return o.grid(window)


def run_variant(cfg: ExperimentConfig, v: Variant, path, T: float, window,
                exact: DensityGrid | None, diagnostics_dir: Path | None = None) -> list[VariantResult]:
    prob = build_problem(cfg, v.weight_w)
    grid = build_grid(cfg, prob, T)
    dt = cfg.solver.get("dt")
    config = SolverConfig(v.max_order, None if dt is None else float(dt), v.substeps,
                          v.substep_order, cfg.solver.get("eps"))
    cls = KsRun if v.solver == "ks" else ZakaiRun
    use_path = None if v.solver == "unconditional" else path
    if use_path is None and v.solver != "unconditional":
        raise ConfigError(f"variant {v.name!r} needs an observation path")
    t0 = time.perf_counter()
    labels = v.labels()
    try:
        run = cls(prob.model, prob.law, grid, config, use_path, T)
        state = run.run()
    except MomfilterError as exc:
        if isinstance(exc, ConfigError):
            raise
        status = "blowup" if exc.exit_code == 3 and "blew up" in str(exc) else "breakdown"
        return [VariantResult(lab, status, message=str(exc), runtime=time.perf_counter() - t0,
                              modes=grid.modes) for lab, _ in labels]
    if diagnostics_dir is not None:
        run.write_diagnostics(diagnostics_dir / f"diagnostics_{v.name.replace('{order}', 'all')}.csv")
    elapsed = time.perf_counter() - t0
    out = []
    sym = max((r.symmetry_residual for r in run.diagnostics), default=0.0)
    for lab, j in labels:
        res = VariantResult(lab, "ok", runtime=elapsed, symmetry=sym, modes=grid.modes)
        try:
            d = invert_to_density(state, run.eps, window, upto=j)
            res.density = d
            res.mass = d.mass
            res.mean, res.variance = conditional_moments(state, run.eps, upto=j)
            if exact is not None:
                err = d.normalized() - exact.values
                res.linf = float(np.abs(err).max())
                res.l1 = float(np.trapezoid(np.abs(err), exact.z))
                res.peak_gap = float(d.normalized().max() - exact.values.max())
        except MomfilterError as exc:
            res.status = "breakdown"
            res.message = str(exc)
        out.append(res)
    return out


def run_experiment(cfg: ExperimentConfig, out_root: Path | None = None, diagnostics: bool = False) -> Report:
    """Run every variant; write densities, errors and a summary under ``out_root/name``."""
    stage = "setup"
    try:
        window = _window(cfg)
        stage = "problem"
        prob = build_problem(cfg)
        T = horizon_of(cfg)
        stage = "path"
        path = build_path(cfg, prob)
        stage = "oracle"
        exact = _exact_density(cfg, prob, path, T, window)
    except ConfigError as exc:
        raise ConfigError(f"{stage}: {exc}") from exc

    out_dir = None
    if out_root is not None:
        out_dir = Path(out_root) / cfg.output.get("dir", cfg.name)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {out_dir} is not writable: {exc}") from exc

    results = []
    for v in cfg.variants:
        results.extend(run_variant(cfg, v, path, T, window, exact,
                                   out_dir if diagnostics else None))

    kal = None
    if cfg.oracle.get("kalman_bucy"):
        m = cfg.model
        if m.get("kind") != "linear" or path is None:
            raise ConfigError("oracle: kalman_bucy needs a linear model and a path")
        _, means, var = kalman_bucy((_f(m, "A", 0.0), _f(m, "b", 0.0)), (_f(m, "h1"), _f(m, "h2", 0.0)),
                                    _f(m, "sigma"), prob.law, path)
        k = int(round(T / path.step))
        kal = (float(means[k]), float(var[k]))

    report = Report(cfg.name, out_dir, results, exact, path, kal)
    if out_dir is not None:
        _write_outputs(report)
    tol = cfg.oracle.get("max_linf_rel")
    if tol is not None and exact is not None:
        peak = exact.values.max()
        bad = [r.label for r in results if r.status == "ok" and r.linf > float(tol) * peak]
        if bad:
            raise OracleMismatchError(f"L-inf error above {tol} of peak for: {', '.join(bad)}")
    return report


def _write_outputs(report: Report) -> None:
    d = report.out_dir
    if report.path is not None:
        save_path(report.path, d / "path.csv")
    if report.exact is not None:
        write_density_csv(d / "density_exact.csv", report.exact.z, report.exact.values)
    for r in report.results:
        if r.density is None:
            continue
        vals = r.density.normalized()
        write_density_csv(d / f"density_{r.label}.csv", r.density.z, vals)
        if report.exact is not None:
            write_density_csv(d / f"error_{r.label}.csv", r.density.z, vals - report.exact.values)
    cols = ["variant", "status", "linf", "l1", "peak_gap", "mass", "mean", "variance",
            "symmetry_residual", "modes"]
    with open(d / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in report.results:
            w.writerow([r.label, r.status] + [f"{x:.10g}" for x in
                        (r.linf, r.l1, r.peak_gap, r.mass, r.mean, r.variance, r.symmetry)] + [r.modes])
    (d / "summary.txt").write_text(format_report(report) + "\n")


def format_report(report: Report) -> str:
    lines = [f"experiment {report.name}"]
    head = f"{'variant':<16}{'status':<11}{'linf':>11}{'l1':>11}{'mass':>11}{'runtime_s':>11}"
    lines.append(head)
    for r in report.results:
        lines.append(f"{r.label:<16}{r.status:<11}{r.linf:>11.3e}{r.l1:>11.3e}{r.mass:>11.4f}{r.runtime:>11.2f}"
                     + (f"  {r.message}" if r.message else ""))
    if report.exact is not None:
        lines.append(f"exact peak {report.exact.values.max():.6f}")
    if report.kalman is not None:
        lines.append(f"kalman-bucy mean {report.kalman[0]:.6f} variance {report.kalman[1]:.6f}")
    return "\n".join(lines)


# -- comparing files -----------------------------------------------------------------

def diff_densities(file_a, file_b) -> tuple[float, float, float]:
    """(L-inf, L1, peak height of a minus peak height of b) over a common z-grid."""
    za, va = read_density_csv(file_a)
    zb, vb = read_density_csv(file_b)
    if za.shape != zb.shape or not np.allclose(za, zb, rtol=0, atol=1e-12):
        raise ConfigError("density files use different z-grids")
    diff = va - vb
    return float(np.abs(diff).max()), float(np.trapezoid(np.abs(diff), za)), float(va.max() - vb.max())


def first_bimodal_seed(a: float, sigma: float, h1: float, h2: float, start: int, steps: int = 1000,
                       T: float = 1.0, window=(-4.0, 4.0, 801), limit: int = 200) -> int:
    """First seed >= start whose exact posterior has two local maxima."""
    prob = benes_problem(a, sigma, h1, h2)
    for seed in range(start, start + limit):
        path = simulate_paths(prob.model, prob.law, T, steps, seed)
        dens = benes_exact_density(a, sigma, h1, h2, path, T, window).grid(window)
        if count_local_maxima(dens.values) == 2:
            return seed
    raise ConfigError(f"no bimodal posterior among seeds {start}..{start + limit - 1}")


def write_density(grid: DensityGrid, file) -> None:
    write_density_csv(file, grid.z, grid.normalized())

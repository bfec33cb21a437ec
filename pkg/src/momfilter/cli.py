"""Command-line entry point: ``momfilter run|preset|fit|simulate|diff``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .errors import BlowUpError, ConfigError, MomfilterError
from .experiment import (PRESETS, build_problem, diff_densities, format_report, load_config,
                         preset_config, run_experiment)
from .fit import FitSpec, LsmSpec, TaylorSpec, fit, lsm_fit_samples, sqrt_vol, tanh_drift
from .polyops import to_text
from .simulate import save_path, simulate_paths

OUTPUT_ENV = "MOMFILTER_OUTPUT"


def _out_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV, "momfilter_output"))


def _config(name: str):
    return preset_config(name) if name in PRESETS else load_config(name)


def _run(cfg, args) -> int:
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    report = run_experiment(cfg, _out_root(args.out), diagnostics=args.diagnostics)
    print(format_report(report))
    print(f"wrote {report.out_dir}")
    if report.results and all(r.status != "ok" for r in report.results):
        return BlowUpError.exit_code
    return 0


def cmd_run(args) -> int:
    return _run(load_config(args.config), args)


def cmd_preset(args) -> int:
    return _run(preset_config(args.name), args)


def cmd_fit(args) -> int:
    if args.target == "tanh-drift":
        spec = LsmSpec.sigma_window(args.sigma, args.degree, args.w, args.parity, args.half_width, args.step)
        poly = fit(FitSpec(spec, tanh_drift(args.a, args.sigma)))
    elif args.target == "sqrt-vol":
        spec = TaylorSpec(args.mu, args.degree, scale=args.mu)
        poly = fit(FitSpec(spec, sqrt_vol(args.mu)))
    else:
        if not args.table:
            raise ConfigError("--table is required for target 'table'")
        try:
            data = np.loadtxt(args.table, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read table {args.table}: {exc}") from exc
        spec = LsmSpec(float(data[:, 0].min()), float(data[:, 0].max()), 1.0, args.degree, args.w,
                       args.sigma, args.parity)
        poly = lsm_fit_samples(data[:, 0], data[:, 1], spec)
    print(to_text(poly))
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args.config)
    prob = build_problem(cfg)
    sim = dict(cfg.path.get("simulate") or {})
    seed = args.seed if args.seed is not None else sim.get("seed")
    steps = args.steps if args.steps is not None else sim.get("steps")
    horizon = args.horizon if args.horizon is not None else sim.get("horizon")
    if seed is None or steps is None or horizon is None:
        raise ConfigError("need --seed, --steps and --horizon (or a path.simulate block)")
    path = simulate_paths(prob.model, prob.law, float(horizon), int(steps), int(seed))
    save_path(path, args.output)
    print(f"wrote {args.output}")
    return 0


def cmd_diff(args) -> int:
    linf, l1, gap = diff_densities(args.a, args.b)
    print(f"linf {linf:.10g}\nl1 {l1:.10g}\npeak_gap {gap:.10g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momfilter", description="Frequency-space expansion filters.")
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("--seed", type=int, help="override the path seed")
        sp.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./momfilter_output)")
        sp.add_argument("--diagnostics", action="store_true", help="write per-step t,mass,symmetry CSVs")

    sp = sub.add_parser("run", help="run an experiment config")
    sp.add_argument("config")
    run_opts(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("preset", help="run a built-in experiment")
    sp.add_argument("name", choices=PRESETS)
    run_opts(sp)
    sp.set_defaults(func=cmd_preset)

    sp = sub.add_parser("fit", help="print a polynomial fit")
    sp.add_argument("target", choices=["tanh-drift", "sqrt-vol", "table"])
    sp.add_argument("--a", type=float, default=0.8)
    sp.add_argument("--sigma", type=float, default=0.5)
    sp.add_argument("--mu", type=float, default=1.0)
    sp.add_argument("--w", type=float, default=2.0)
    sp.add_argument("--degree", type=int, default=None)
    sp.add_argument("--parity", choices=["any", "odd", "even"], default="odd")
    sp.add_argument("--half-width", type=float, default=5.0)
    sp.add_argument("--step", type=float, default=0.2)
    sp.add_argument("--table", help="CSV with header and x,f(x) columns")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("simulate", help="simulate an observation path")
    sp.add_argument("config", help="config file or preset name")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("-o", "--output", default="path.csv")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("diff", help="compare two density CSVs")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.set_defaults(func=cmd_diff)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fit" and args.degree is None:
        args.degree = 3 if args.target == "sqrt-vol" else 11
    try:
        return args.func(args)
    except MomfilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

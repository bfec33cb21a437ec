"""Polynomial-perturbation filters solved order by order in frequency space."""

from .errors import (BlowUpError, ConfigError, ExpansionBreakdownError, MomfilterError,
                     OracleMismatchError)
from .fit import FitSpec, LsmSpec, TaylorSpec, fit
from .ks import ks_solve
from .model import InitialLaw, PerturbedModel, build_symbols
from .polyops import MultiPoly
from .simulate import ObservationPath, load_path, save_path, simulate_paths
from .spectral import DensityGrid, SpectralState, XiGrid, invert_to_density
from .zakai import SolverConfig, solve, solve_unconditional

__all__ = [
    "BlowUpError", "ConfigError", "DensityGrid", "ExpansionBreakdownError", "FitSpec",
    "InitialLaw", "LsmSpec", "MomfilterError", "MultiPoly", "ObservationPath",
    "OracleMismatchError", "PerturbedModel", "SolverConfig", "SpectralState", "TaylorSpec",
    "XiGrid", "build_symbols", "fit", "invert_to_density", "ks_solve", "load_path",
    "save_path", "simulate_paths", "solve", "solve_unconditional",
]

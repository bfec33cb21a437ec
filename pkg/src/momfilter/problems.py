"""Ready-made models: tanh-drift (Benes), square-root (CIR) and linear-Gaussian."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fit import FitSpec, LsmSpec, TaylorSpec, fit, sqrt_vol, tanh_drift
from .model import InitialLaw, PerturbedModel, SignalDynamics
from .polyops import MultiPoly

@dataclass(frozen=True)
class Problem:
    model: PerturbedModel
    law: InitialLaw
    fit_target: object = None  # the function F approximates, if fitted


def benes_problem(a: float, sigma: float, h1: float, h2: float, weight_w: float = 2.0,
                  degree: int = 11, half_width: float = 5.0, step: float = 0.2,
                  eps: float = 1.0) -> Problem:
    """dX = a sigma tanh(a X / sigma) dt + sigma dV, dY = (h1 X + h2) dt + dW, X_0 = 0.

    The drift enters the solver through its odd weighted least-squares fit.
    """
    target = tanh_drift(a, sigma)
    spec = LsmSpec.sigma_window(sigma, degree, weight_w, "odd", half_width, step)
    F = fit(FitSpec(spec, target)) if a != 0 else MultiPoly.zero(1)
    H = MultiPoly.from_coeffs([h2, h1])
    exact = SignalDynamics(
        drift=lambda t, x: target(x),
        diffusion=lambda t, x: np.array([[sigma]]),
        obs_drift=lambda t, x: h1 * x + h2,
    )
    model = PerturbedModel.scalar(f=0.0, nu=sigma, F=F, H=H, eps=eps, exact=exact)
    return Problem(model, InitialLaw.dirac([0.0]), target)


def linear_problem(A: float, b: float, sigma: float, h1: float, h2: float, x0: float = 0.0,
                   eps: float = 1.0) -> Problem:
    F = MultiPoly.from_coeffs([b, A])
    H = MultiPoly.from_coeffs([h2, h1])
    model = PerturbedModel.scalar(f=0.0, nu=sigma, F=F, H=H, eps=eps)
    return Problem(model, InitialLaw.dirac([x0]))


def cir_sqrt_remainder(mu: float, degree: int = 3) -> MultiPoly:
    """Taylor polynomial of sqrt(x) - sqrt(mu) about mu."""
    derivs = [0.0]
    coef = 0.5
    for k in range(1, degree + 1):
        derivs.append(coef * mu ** (0.5 - k))
        coef *= 0.5 - k
    spec = TaylorSpec(mu, degree, derivatives=derivs, scale=mu)
    return fit(FitSpec(spec, sqrt_vol(mu)))


def cir_problem(theta: float, mu: float, sigma: float, x0: float | None = None,
                degree: int = 3, eps: float = 1.0) -> Problem:
    """dX = theta (mu - X) dt + sigma sqrt(X) dV with sqrt(X) = sqrt(mu) + R(X).

    The free part is a Brownian motion with volatility sigma sqrt(mu); the
    drift and sigma R(x) are the perturbations.  There is no observation.
    """
    x0 = mu if x0 is None else x0
    R = cir_sqrt_remainder(mu, degree)
    F = MultiPoly.from_coeffs([theta * mu, -theta])
    exact = SignalDynamics(
        drift=lambda t, x: theta * (mu - x),
        diffusion=lambda t, x: np.array([[sigma * math.sqrt(max(float(x[0]), 0.0))]]),
        obs_drift=lambda t, x: np.zeros(1),
    )
    model = PerturbedModel.scalar(f=0.0, nu=sigma * math.sqrt(mu), F=F, sigma=R * sigma,
                                  eps=eps, exact=exact)
    return Problem(model, InitialLaw.dirac([x0]))


def auto_xi_max(free_var: float) -> float:
    """Band edge where the free Gaussian envelope exp(-xi^2 var / 2) drops to 1e-12."""
    return math.sqrt(2 * 27.6 / free_var)

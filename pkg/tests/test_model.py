import numpy as np
import pytest
from scipy.integrate import quad

from momfilter.model import (Descriptor, InitialLaw, PerturbedModel, build_symbols, free_moments,
                             initial_cf)
from momfilter.polyops import MultiPoly
from momfilter.problems import benes_problem, cir_problem, cir_sqrt_remainder


def flatten(desc: Descriptor, n: int = 1) -> MultiPoly:
    """Descriptor as one polynomial in (xi, x); canonical since xi always sits on the left."""
    out = MultiPoly.zero(2 * n)
    for a, b in desc.terms:
        lift_a = MultiPoly(2 * n, {e + (0,) * n: c for e, c in a.items()})
        lift_b = MultiPoly(2 * n, {(0,) * n + e: c for e, c in b.items()})
        out = out + lift_a * lift_b
    return out


xi = MultiPoly.var(2, 0)
X = MultiPoly.var(2, 1)


def lift_x(p: MultiPoly) -> MultiPoly:
    return MultiPoly(2, {(0,) + e: c for e, c in p.items()})


def test_cir_symbols():
    theta, mu, sigma = 0.1, 1.0, 0.15
    prob = cir_problem(theta, mu, sigma)
    sym = build_symbols(prob.model)
    g = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(sym.a0(0.0, [g]), -0.5 * g**2 * sigma**2 * mu, rtol=1e-14)
    R = lift_x(cir_sqrt_remainder(mu))
    a1 = 1j * xi * theta * (mu - X) - xi**2 * sigma**2 * np.sqrt(mu) * R
    a2 = -0.5 * xi**2 * sigma**2 * R * R
    assert flatten(sym.a1(0.0)).allclose(a1, 1e-14)
    assert flatten(sym.a2(0.0)).allclose(a2, 1e-14)
    assert all(d.is_zero() for d in sym.obs(0.0))


def test_benes_symbols():
    a, sigma, h1, h2 = 0.8, 0.5, 0.8, 0.5
    prob = benes_problem(a, sigma, h1, h2)
    sym = build_symbols(prob.model)
    g = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(sym.a0(0.0, [g]), -0.5 * g**2 * sigma**2)
    F = lift_x(prob.model.F[0])
    assert flatten(sym.a1(0.0)).allclose(1j * xi * F, 1e-14)
    assert sym.a2(0.0).is_zero()
    (obs,) = sym.obs(0.0)
    assert flatten(obs).allclose(h1 * X + h2, 1e-14)


def test_free_system_symbols():
    model = PerturbedModel(2, 1, 2, 1.0, [0.3, -0.2], [[1.0, 0.0], [0.5, 2.0]],
                           [MultiPoly.zero(2)] * 2, [[MultiPoly.zero(2)] * 2] * 2,
                           [[MultiPoly.zero(2)]] * 2, [MultiPoly.zero(2)])
    sym = build_symbols(model)
    assert sym.a1(0).is_zero() and sym.a2(0).is_zero() and all(d.is_zero() for d in sym.obs(0))
    k1, k2 = np.meshgrid([-1.0, 0.5, 2.0], [0.0, 1.5], indexing="ij")
    q = np.array([[1.0, 0.5], [0.5, 4.25]])
    k = np.stack([k1, k2], -1)
    want = 1j * (k @ np.array([0.3, -0.2])) - 0.5 * np.einsum("...i,ij,...j", k, q, k)
    np.testing.assert_allclose(sym.a0(0, [k1, k2]), want, rtol=1e-14)


def test_initial_cf_values():
    assert initial_cf(InitialLaw.gaussian([0.7], [[0.3]]), [0.0]) == 1
    np.testing.assert_allclose(initial_cf(InitialLaw.dirac([0.0]), np.linspace(-5, 5, 11)), 1)
    val = initial_cf(InitialLaw.gaussian([1.0], [[0.04]]), [2.0])
    assert val == pytest.approx(np.exp(2j - 0.08), rel=1e-15)


def test_gram_charlier_cf_matches_quadrature():
    x0, v = 0.4, 0.09
    law = InitialLaw.gram_charlier([x0], [[v]], MultiPoly.from_coeffs([0.5, -1.0, 2.0]))
    dens = lambda x: (0.5 - x + 2 * x * x) * np.exp(-(x - x0) ** 2 / (2 * v)) / np.sqrt(2 * np.pi * v)
    for k in (0.0, 1.3, -2.0):
        re = quad(lambda x: dens(x) * np.cos(k * x), -6, 6, epsabs=1e-13)[0]
        im = quad(lambda x: dens(x) * np.sin(k * x), -6, 6, epsabs=1e-13)[0]
        assert initial_cf(law, [k]) == pytest.approx(re + 1j * im, abs=1e-11)


def test_initial_law_validation():
    with pytest.raises(ValueError):
        InitialLaw.gaussian([0.0], [[-1.0]])
    with pytest.raises(ValueError):
        InitialLaw("dirac", [0.0], [[1.0]])
    with pytest.raises(ValueError):
        InitialLaw.gram_charlier([0.0], [[1.0]], MultiPoly.zero(2))


def test_free_moments():
    sigma, mu = 0.15, 1.0
    prob = cir_problem(0.1, mu, sigma)
    x, cov = free_moments(prob.model, prob.law, 3.0)
    assert x[0] == mu
    assert cov[0, 0] == pytest.approx(mu * sigma**2 * 3.0, rel=1e-14)
    x0, c0 = free_moments(prob.model, InitialLaw.gaussian([0.2], [[0.5]]), 0.0)
    assert x0[0] == 0.2 and c0[0, 0] == 0.5


def test_free_moments_time_dependent():
    model = PerturbedModel.scalar(f=lambda t: np.array([1.0 + t]), nu=lambda t: np.array([[2.0]]))
    x, cov = free_moments(model, InitialLaw.dirac([0.0]), 1.0, dt=0.25)
    assert x[0] == pytest.approx(0.25 * (1 + 1.25 + 1.5 + 1.75))
    assert cov[0, 0] == pytest.approx(4.0)


def test_model_validation():
    z = MultiPoly.zero(1)
    with pytest.raises(ValueError):
        PerturbedModel.scalar(nu=0.0)
    with pytest.raises(ValueError):
        PerturbedModel(1, 1, 1, 1.0, [0.0], [[1.0]], [z, z], [[z]], [[z]], [z])
    with pytest.raises(ValueError):
        PerturbedModel.scalar(nu=1.0, F=MultiPoly.var(2, 0))
    with pytest.raises(ValueError):
        PerturbedModel.scalar(nu=1.0, eps=-1.0)


def test_with_eps_keeps_coefficients():
    m = benes_problem(0.8, 0.5, 0.8, 0.5).model
    half = m.with_eps(0.5)
    assert half.eps == 0.5 and half.F == m.F and half.H == m.H

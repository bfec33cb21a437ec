import numpy as np
import pytest

from momfilter.errors import ConfigError
from momfilter.ks import KsRun, ks_solve, ks_step
from momfilter.model import PerturbedModel
from momfilter.problems import benes_problem, linear_problem
from momfilter.reference import kalman_bucy
from momfilter.simulate import ObservationPath, simulate_paths
from momfilter.spectral import XiGrid, conditional_moments, invert_to_density
from momfilter.zakai import SolverConfig, ZakaiRun, solve

BENES = (0.8, 0.5, 0.8, 0.5)


def gauss_cf(k, mean, var):
    return np.exp(1j * k * mean - 0.5 * var * k * k)


def test_free_system_keeps_corrections_zero():
    model = PerturbedModel.scalar(f=0.1, nu=0.5)
    prob = benes_problem(*BENES)
    path = simulate_paths(prob.model, prob.law, 0.1, 100, 1)
    g = XiGrid(1, 33, 12.0, 4)
    s = ks_solve(model, prob.law, path, SolverConfig(2), g)
    assert not np.any(s.orders[1]) and not np.any(s.orders[2])
    k = g.axes[0]
    np.testing.assert_allclose(s.orders[0], gauss_cf(k, 0.01, 0.025), rtol=1e-12)


def test_order_one_is_zakai_minus_mass_compensation():
    a, sigma, h1, h2 = BENES
    prob = benes_problem(*BENES)
    g = XiGrid(1, 65, 12.0, 4)
    t = np.linspace(0, 1, 1001)
    dY = 0.042
    path = ObservationPath(t, np.full((1000, 1), dY))
    k = g.axes[0]
    o = [gauss_cf(k, 0.1, 0.2), 0.3 * gauss_cf(k, -0.2, 0.1)]
    runs = []
    for cls in (KsRun, ZakaiRun):
        r = cls(prob.model, prob.law, g, SolverConfig(1), path)
        r.state.orders = [x.copy() for x in o]
        r.step()
        runs.append(r.state.orders[1])
    ks, zk = runs
    z = g.zero_index[0]
    c0 = (h1 * g.d(o[0]) + h2 * o[0])[z]
    E = np.exp(-0.5 * sigma**2 * k * k * 1e-3)
    np.testing.assert_allclose(ks, zk - E * c0 * o[0] * dY, rtol=1e-12, atol=1e-14)


def test_first_order_correction_carries_no_mass():
    prob = benes_problem(*BENES)
    path = simulate_paths(prob.model, prob.law, 0.5, 500, 3)
    s = ks_solve(prob.model, prob.law, path, SolverConfig(2), XiGrid(1, 33, 12.0, 4, 0.2))
    z = s.grid.zero_index
    assert abs(s.orders[0][z] - 1) < 1e-14
    assert abs(s.orders[1][z]) < 1e-13


def test_agrees_with_normalised_zakai():
    prob = benes_problem(*BENES)
    path = simulate_paths(prob.model, prob.law, 0.5, 500, 3)
    g = XiGrid(1, 33, 12.0, 4, 0.2)
    window = (-3, 3, 601)
    zk = solve(prob.model, prob.law, path, SolverConfig(1, substeps=500), g)
    ks = ks_solve(prob.model, prob.law, path, SolverConfig(2, substeps=500, substep_order=2), g)
    a = invert_to_density(ks, 1.0, window)
    b = invert_to_density(zk, 1.0, window)
    assert np.abs(a.normalized() - b.normalized()).max() <= 5e-3


def test_agrees_with_normalised_zakai_at_matching_truncation():
    prob = benes_problem(*BENES)
    path = simulate_paths(prob.model, prob.law, 0.1, 100, 3)
    g = XiGrid(1, 33, 12.0, 4, 0.2)
    window = (-3, 3, 601)
    a = invert_to_density(ks_solve(prob.model, prob.law, path, SolverConfig(1), g), 1.0, window)
    b = invert_to_density(solve(prob.model, prob.law, path, SolverConfig(1), g), 1.0, window)
    assert np.abs(a.normalized() - b.normalized()).max() <= 5e-3


def test_substepping_needs_the_second_order_drift():
    # one-step periods restart order 1 from zero, so order 1 alone drops the
    # innovation drift -c0 (L - c0) pi_0 dt and drifts away from the filter
    sigma, h1, h2 = 0.5, 0.8, 0.5
    prob = linear_problem(0.0, 0.0, sigma, h1, h2)
    path = simulate_paths(prob.model, prob.law, 1.0, 1000, 7)
    g = XiGrid(1, 129, 20.0, 4)
    _, means, _ = kalman_bucy((0.0, 0.0), (h1, h2), sigma, prob.law, path)
    errs = []
    for so in (1, 2):
        s = ks_solve(prob.model, prob.law, path, SolverConfig(2, substeps=1000, substep_order=so), g)
        errs.append(abs(conditional_moments(s, 1.0)[0] - means[-1]))
    assert errs[1] < 1e-3 < errs[0]


def test_single_period_equals_iterated_steps():
    prob = benes_problem(*BENES)
    path = simulate_paths(prob.model, prob.law, 0.1, 100, 5)
    g = XiGrid(1, 33, 12.0, 4)
    a = ks_solve(prob.model, prob.law, path, SolverConfig(2, substeps=1, substep_order=2), g)
    run = KsRun(prob.model, prob.law, g, SolverConfig(2), path)
    for _ in range(100):
        ks_step(run)
    for x, y in zip(a.orders, run.state.orders):
        assert np.array_equal(x, y)


def test_linear_mean_matches_kalman_bucy():
    sigma, h1, h2 = 0.5, 0.8, 0.5
    prob = linear_problem(0.0, 0.0, sigma, h1, h2)
    path = simulate_paths(prob.model, prob.law, 1.0, 1000, 7)
    g = XiGrid(1, 129, 20.0, 4)
    s = ks_solve(prob.model, prob.law, path, SolverConfig(2, substeps=1000, substep_order=2), g)
    mean, _ = conditional_moments(s, 1.0)
    _, means, _ = kalman_bucy((0.0, 0.0), (h1, h2), sigma, prob.law, path)
    assert mean == pytest.approx(means[-1], abs=1e-3)


def test_rejects_orders_above_two():
    prob = benes_problem(*BENES)
    path = simulate_paths(prob.model, prob.law, 0.1, 100, 5)
    with pytest.raises(ConfigError):
        KsRun(prob.model, prob.law, XiGrid(1, 33, 12.0), SolverConfig(3), path)

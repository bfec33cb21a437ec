import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from momfilter.errors import ConfigError, ExpansionBreakdownError
from momfilter.model import Descriptor
from momfilter.polyops import MultiPoly
from momfilter.spectral import (SpectralState, XiGrid, apply_descriptor, conditional_moments,
                                invert_array, invert_to_density, load_state_csv, moments_at_zero,
                                read_density_csv, save_state_csv, write_density_csv)

ONE = MultiPoly.const(1, 1.0)
X = MultiPoly.var(1, 0)
XI = MultiPoly.var(1, 0)


def gauss_cf(grid, mean, var):
    k = grid.axes[0]
    return np.exp(1j * k * mean - 0.5 * var * k * k)


def gauss_pdf(z, mean, var):
    return np.exp(-(z - mean) ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var)


def test_identity_descriptor():
    g = XiGrid(1, 65, 10.0, 4, 0.3)
    rho = gauss_cf(g, 0.3, 0.2)
    np.testing.assert_allclose(apply_descriptor(rho, Descriptor.multiply(ONE), g), rho, rtol=1e-15, atol=1e-16)


def test_multiplication_by_x_converges_at_second_order():
    x0 = 0.7
    errs = []
    for modes in (201, 401, 801):
        g = XiGrid(1, modes, 5.0, 2)
        f = np.exp(1j * g.axes[0] * x0)
        out = apply_descriptor(f, Descriptor.multiply(X), g)
        errs.append(np.abs(out - x0 * f)[2:-2].max())
    assert errs[-1] < 1e-4
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_fourth_order_stencil_beats_second():
    x0 = 0.7
    out = {}
    for order in (2, 4):
        g = XiGrid(1, 201, 5.0, order)
        f = np.exp(1j * g.axes[0] * x0)
        out[order] = np.abs(apply_descriptor(f, Descriptor.multiply(X), g) - x0 * f)[3:-3].max()
    assert out[4] < out[2] / 100


def test_carrier_makes_plane_wave_exact():
    x0 = 0.7
    g = XiGrid(1, 65, 5.0, 2, x0)
    f = np.exp(1j * g.axes[0] * x0)
    out = apply_descriptor(f, Descriptor.multiply(X * X), g)
    np.testing.assert_allclose(out, x0 * x0 * f, atol=1e-12)


def test_drift_operator_matches_symbolic_form():
    theta, mu, var = 0.1, 1.0, 0.0675
    k = sympy.Symbol("k", real=True)
    rho = sympy.exp(sympy.I * k * mu - var * k**2 / 2)
    D = lambda e: -sympy.I * sympy.diff(e, k)
    expr = sympy.lambdify(k, sympy.I * k * theta * (mu * rho - D(rho)), "numpy")
    g = XiGrid(1, 257, 20.0, 4, mu)
    desc = Descriptor(((XI * 1j * theta, MultiPoly.from_coeffs([mu, -1.0])),))
    got = apply_descriptor(gauss_cf(g, mu, var), desc, g)
    np.testing.assert_allclose(got[4:-4], expr(g.axes[0])[4:-4], atol=1e-6)


def test_batched_application_matches_single():
    g = XiGrid(1, 65, 10.0, 4, 0.5)
    op = g.compile(Descriptor(((XI * 1j, MultiPoly.from_coeffs([0.2, -1.0, 0.3])),)))
    a, b = gauss_cf(g, 0.5, 0.1), gauss_cf(g, -0.2, 0.3)
    batch = op(np.stack([a, b]))
    np.testing.assert_allclose(batch[0], op(a), rtol=1e-14, atol=1e-16)
    np.testing.assert_allclose(batch[1], op(b), rtol=1e-14, atol=1e-16)


def test_gaussian_roundtrip():
    g = XiGrid(1, 256, 60.0, 4)
    z = np.linspace(-1, 3, 801)
    dens = invert_to_density(SpectralState(g, [gauss_cf(g, 1.0, 0.0675)]), 1.0, (-1, 3, 801))
    assert np.abs(dens.values - gauss_pdf(z, 1.0, 0.0675)).max() <= 1e-8


def test_eps_zero_inverts_order_zero():
    g = XiGrid(1, 129, 30.0, 4)
    rho0 = gauss_cf(g, 0.2, 0.1)
    full = SpectralState(g, [rho0, gauss_cf(g, 0.5, 0.2), gauss_cf(g, -1, 0.3)])
    only = SpectralState(g, [rho0])
    a = invert_to_density(full, 0.0, (-2, 2, 101))
    b = invert_to_density(only, 1.0, (-2, 2, 101))
    np.testing.assert_array_equal(a.values, b.values)


def test_cir_order_zero_density():
    var = 1.0 * 0.15**2 * 3
    g = XiGrid(1, 129, 28.6, 4, 1.0)
    dens = invert_to_density(SpectralState(g, [gauss_cf(g, 1.0, var)]), 1.0, (-0.5, 2.5, 601))
    np.testing.assert_allclose(dens.values, gauss_pdf(dens.z, 1.0, var), atol=1e-9)
    assert dens.mass == pytest.approx(1.0, abs=1e-7)


def test_two_dimensional_inversion():
    g = XiGrid(2, 129, 40.0, 4)
    k1, k2 = g.mesh()
    cov = np.array([[0.1, 0.03], [0.03, 0.05]])
    m = np.array([0.2, -0.1])
    rho = np.exp(1j * (k1 * m[0] + k2 * m[1]) - 0.5 * (cov[0, 0] * k1**2 + 2 * cov[0, 1] * k1 * k2
                                                         + cov[1, 1] * k2**2))
    axes = (np.linspace(-1, 1, 41), np.linspace(-1, 1, 31))
    vals = invert_array(rho, g, axes).real
    z1, z2 = np.meshgrid(*axes, indexing="ij")
    d = np.stack([z1 - m[0], z2 - m[1]], -1)
    inv = np.linalg.inv(cov)
    want = np.exp(-0.5 * np.einsum("...i,ij,...j", d, inv, d)) / (2 * np.pi * np.sqrt(np.linalg.det(cov)))
    np.testing.assert_allclose(vals, want, atol=1e-8)


def test_moments_at_zero():
    var = 0.0675
    g = XiGrid(1, 257, 30.0, 4, 1.0)
    st_ = SpectralState(g, [gauss_cf(g, 1.0, var)])
    assert moments_at_zero(st_, 1.0, ONE) == pytest.approx(1.0, abs=1e-14)
    assert moments_at_zero(st_, 1.0, X).real == pytest.approx(1.0, abs=1e-8)
    mean, v = conditional_moments(st_, 1.0)
    assert mean == pytest.approx(1.0, abs=1e-8)
    assert v == pytest.approx(var, abs=1e-5)


def test_moments_without_carrier_are_second_order_accurate():
    errs = []
    for modes in (65, 129):
        g = XiGrid(1, modes, 20.0, 2)
        mean, v = conditional_moments(SpectralState(g, [gauss_cf(g, 1.0, 0.0675)]), 1.0)
        errs.append(abs(v - 0.0675))
    assert errs[0] / errs[1] >= 3.5


def test_combined_uses_eps_powers():
    g = XiGrid(1, 9, 1.0)
    orders = [np.full(9, 1 + 0j), np.full(9, 2 + 0j), np.full(9, 4 + 0j)]
    s = SpectralState(g, orders)
    assert s.combined(0.5)[0] == 1 + 1 + 1
    assert s.combined(0.5, upto=1)[0] == 2


def test_breakdown_on_negative_mass():
    g = XiGrid(1, 65, 20.0)
    with pytest.raises(ExpansionBreakdownError):
        invert_to_density(SpectralState(g, [-gauss_cf(g, 0.0, 0.1)]), 1.0, (-2, 2, 101))


def test_breakdown_on_imaginary_residual():
    g = XiGrid(1, 65, 20.0)
    rho = gauss_cf(g, 0.0, 0.1) * (1 + 0.5j)
    with pytest.raises(ExpansionBreakdownError):
        invert_to_density(SpectralState(g, [rho]), 1.0, (-2, 2, 101))


def test_grid_validation():
    assert XiGrid(1, 64, 5.0).modes == 65
    with pytest.raises(ConfigError):
        XiGrid(1, 5, 5.0, 4)
    with pytest.raises(ConfigError):
        XiGrid(1, 33, 5.0, 3)
    with pytest.raises(ConfigError):
        XiGrid(1, 33, -1.0)
    with pytest.raises(ConfigError):
        invert_to_density(SpectralState(XiGrid(1, 33, 5.0), [np.ones(33, complex)]), 1.0, (1, 0, 10))


def test_grid_is_symmetric():
    g = XiGrid(1, 129, 28.6)
    ax = g.axes[0]
    assert np.array_equal(ax, -ax[::-1])
    assert ax[g.zero_index[0]] == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6), st.floats(-1, 1), st.floats(0.05, 0.5),
       st.sampled_from([2, 4]), st.floats(-1, 1))
def test_real_operators_preserve_hermitian_symmetry(coeffs, mean, var, order, center):
    # i xi F(D) and F(D) with real F map CFs of real measures to CFs of real measures
    g = XiGrid(1, 65, 15.0, order, center)
    F = MultiPoly.from_coeffs(coeffs)
    desc = Descriptor(((XI * 1j, F), (MultiPoly.const(1, 1.0), F)))
    out = apply_descriptor(gauss_cf(g, mean, var), desc, g)
    s = SpectralState(g, [out])
    assert s.symmetry_residual() <= 1e-12


def test_density_csv_roundtrip(tmp_path):
    z = np.linspace(-1, 1, 5)
    v = np.array([0.1, 0.2, 1 / 3, 0.2, 0.1])
    write_density_csv(tmp_path / "d.csv", z, v)
    z2, v2 = read_density_csv(tmp_path / "d.csv")
    assert np.array_equal(z, z2) and np.array_equal(v, v2)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "z,value"


def test_state_csv_roundtrip(tmp_path):
    g = XiGrid(1, 17, 4.0)
    s = SpectralState(g, [gauss_cf(g, 0.1, 0.2), 1j * gauss_cf(g, 0.3, 0.1)], 0.5)
    save_state_csv(s, tmp_path / "s.csv")
    back = load_state_csv(tmp_path / "s.csv", g, 0.5)
    for a, b in zip(s.orders, back.orders):
        assert np.array_equal(a, b)

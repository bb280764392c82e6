"""Tests of the discretized one-particle space."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import spherical_jn

from infralab.charges import GaussianProfile, make_test_vector
from infralab.hilbert import (
    AngularQuadrature,
    IncompatibleBasisError,
    ModeSet,
    RadialGrid,
    TestVector,
    WaveFunction,
    apply_gamma,
    dilate,
    infrared_tail,
    inner_product,
    inverse_radial_fourier,
    legendre_table,
    radial_fourier,
    real_space_gamma_check,
    shell_project,
    spherical_jn_table,
    symplectic_form,
)

TWO_PI_CUBED = (2 * math.pi) ** 3


@pytest.fixture(scope="module")
def grid():
    return RadialGrid.log(2048, 1e-4, 1e2)


@pytest.fixture(scope="module")
def modes():
    return ModeSet(3)


def _random_wf(grid, modes, rng):
    shape = (len(modes), grid.size)
    c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.exp(-grid.nodes)
    return WaveFunction(grid, modes, c)


# -- grid and modes ---------------------------------------------------------


def test_grid_invariants(grid):
    inv = grid.check_invariants()
    assert np.all(grid.nodes > 0) and np.all(np.diff(grid.nodes) > 0)
    assert np.all(grid.weights > 0)
    ratios = grid.nodes[1:] / grid.nodes[:-1]
    assert np.ptp(ratios) / ratios.mean() < 1e-12
    exact = (grid.edges[-1] ** 3 - grid.edges[0] ** 3) / 3
    assert abs(grid.weights.sum() - exact) / exact < 1e-8
    assert isinstance(inv, dict)


def test_dyadic_grid_edges_contain_powers_of_two():
    g = RadialGrid.dyadic(16, -40, 6)
    assert g.size == 736
    le = np.log2(g.edges)
    assert np.allclose(le[::16], np.arange(-40, 7), atol=1e-12)


@pytest.mark.parametrize("ell_max", [0, 1, 4, 12])
def test_modeset_order_and_size(ell_max):
    m = ModeSet(ell_max)
    assert len(m) == (ell_max + 1) ** 2
    assert list(m.modes) == [(l, mm) for l in range(ell_max + 1) for mm in range(-l, l + 1)]


def test_zonal_modeset_keeps_m0():
    m = ModeSet(5, zonal=True)
    assert len(m) == 6 and np.all(m.ms == 0)


# -- inner product and symplectic form ---------------------------------------


def test_inner_product_unit_mode():
    g = RadialGrid.linear(64, 0.5, (1.5 ** 3 + 3) ** (1 / 3))  # any band
    w = np.full(g.size, 1.0 / math.sqrt(g.weights.sum()))
    m = ModeSet(1)
    v = WaveFunction.from_mode(g, m, 0, 0, w)
    assert inner_product(v, v) == pytest.approx(1.0, abs=1e-14)


def test_inner_product_disjoint_modes(grid, modes):
    u = WaveFunction.from_mode(grid, modes, 1, 0, np.exp(-grid.nodes))
    v = WaveFunction.from_mode(grid, modes, 2, 1, np.exp(-grid.nodes))
    assert inner_product(u, v) == 0


def test_inner_product_gaussian_oracle(grid, modes):
    u = WaveFunction.from_mode(grid, modes, 0, 0, np.exp(-grid.nodes ** 2))
    v = WaveFunction.from_mode(grid, modes, 0, 0, np.exp(-2 * grid.nodes ** 2))
    oracle, _ = integrate.quad(lambda w: w * w * math.exp(-3 * w * w), 0, np.inf, epsabs=1e-14)
    assert inner_product(u, v).real == pytest.approx(oracle, rel=1e-8)


def test_incompatible_basis_raises(grid, modes):
    u = WaveFunction.zeros(grid, modes)
    v = WaveFunction.zeros(grid, ModeSet(1))
    with pytest.raises(IncompatibleBasisError):
        inner_product(u, v)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_inner_product_hermitian_and_positive(seed):
    g = RadialGrid.log(128, 1e-2, 10)
    m = ModeSet(2)
    rng = np.random.default_rng(seed)
    u, v = _random_wf(g, m, rng), _random_wf(g, m, rng)
    assert inner_product(u, v) == pytest.approx(np.conj(inner_product(v, u)), rel=1e-13)
    assert inner_product(u, u).real > 0
    assert abs(symplectic_form(u, u)) <= 1e-14 * u.norm_squared()
    assert symplectic_form(u, v) == pytest.approx(-symplectic_form(v, u), rel=1e-12, abs=1e-15)


def test_symplectic_form_h_and_g_from_same_profile(grid, modes):
    h = GaussianProfile().hat(grid, modes)
    f = TestVector.from_parts(grid, modes, h_hat=h).wf
    gvec = WaveFunction(grid, modes, 1j * np.sqrt(grid.nodes)[None, :] * h)
    flat = float(np.sum(np.abs(h) ** 2 * grid.weights[None, :]))
    assert symplectic_form(f, gvec) == pytest.approx(-flat, rel=1e-12)


def test_symplectic_form_position_space_oracle(grid, modes):
    f1 = make_test_vector(grid, modes, h=GaussianProfile(1.0, 1.0))
    f2 = make_test_vector(grid, modes, g=GaussianProfile(1.0, 2.0))
    # int (g1 h2 - h1 g2) d^3x with g1 = h2 = 0
    oracle = -(math.pi / 1.25) ** 1.5
    assert symplectic_form(f1, f2) / TWO_PI_CUBED == pytest.approx(oracle, rel=1e-6)


# -- Gamma --------------------------------------------------------------------


def test_gamma_real_l0_unchanged(grid, modes):
    v = WaveFunction.from_mode(grid, modes, 0, 0, np.exp(-grid.nodes))
    assert np.array_equal(apply_gamma(v).coeffs, v.coeffs)


def test_gamma_l1_real_profile_flips_sign(grid, modes):
    v = WaveFunction.from_mode(grid, modes, 1, 0, np.exp(-grid.nodes))
    assert np.array_equal(apply_gamma(v).coeffs, -v.coeffs)


def test_gamma_formula_matches_angular_sampling():
    g = RadialGrid.log(16, 0.1, 10)
    m = ModeSet(4)
    v = _random_wf(g, m, np.random.default_rng(3))
    direct = real_space_gamma_check(v, node=5, quad=AngularQuadrature(4, 12, 16))
    assert np.max(np.abs(direct - apply_gamma(v).coeffs[:, 5])) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.booleans())
def test_gamma_antiunitary_involution(seed, hat):
    g = RadialGrid.log(64, 1e-2, 10)
    m = ModeSet(3)
    rng = np.random.default_rng(seed)
    u, v = _random_wf(g, m, rng), _random_wf(g, m, rng)
    assert np.array_equal(apply_gamma(apply_gamma(u, hat), hat).coeffs, u.coeffs)
    lhs = inner_product(apply_gamma(u, hat), apply_gamma(v, hat))
    assert abs(lhs - np.conj(inner_product(u, v))) <= 1e-12 * max(1.0, abs(lhs))


# -- dilation ------------------------------------------------------------------


def test_dilate_identity(grid, modes):
    v = WaveFunction.from_mode(grid, modes, 0, 0, np.exp(-grid.nodes ** 2))
    assert np.allclose(dilate(v, 1.0).coeffs, v.coeffs, rtol=0, atol=1e-15)


@pytest.mark.filterwarnings("ignore::infralab.hilbert.ResolutionWarning")
@pytest.mark.parametrize("lam", [0.1, 0.5, 2.0, 10.0])
def test_dilate_preserves_norm(grid, modes, lam):
    v = WaveFunction.from_mode(grid, modes, 0, 0, np.exp(-grid.nodes ** 2) * grid.nodes ** 0.5)
    assert dilate(v, lam).norm() == pytest.approx(v.norm(), rel=1e-6)


def test_dilate_rejects_nonpositive(grid, modes):
    v = WaveFunction.zeros(grid, modes)
    with pytest.raises(ValueError):
        dilate(v, 0.0)


def test_symplectic_form_decays_under_dilation(grid, modes):
    f = make_test_vector(grid, modes, h=GaussianProfile(), g=GaussianProfile(0.5, 1.5))
    g2 = make_test_vector(grid, modes, h=GaussianProfile(1.0, 2.0), g=GaussianProfile(1.0, 0.7))
    # Large-lambda tail: the pairing falls off like 1/lambda
    lams = (10, 100, 1000)
    vals = [abs(symplectic_form(dilate(f.wf, lam), g2.wf)) for lam in lams]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[2] * lams[2] == pytest.approx(vals[1] * lams[1], rel=0.02)


# -- radial Fourier transform ------------------------------------------------------


def test_radial_fourier_gaussian_closed_form():
    r = np.linspace(0, 12, 3001)
    w = np.linspace(0.01, 8, 50)
    got = radial_fourier(np.exp(-r ** 2), r, 0, w)
    exact = math.pi ** 1.5 * np.exp(-w ** 2 / 4)
    assert np.max(np.abs(got - exact)) < 1e-6 * exact.max()


def test_inverse_square_pair(grid, modes):
    # int d^3k h_hat / omega^2 = 2 pi^2 int d^3x h / |x| for Gaussian h
    h = GaussianProfile().hat(grid, modes)[modes.index(0, 0)]
    band = float(np.sum(h.real * grid.weights / grid.nodes ** 2))
    lhs = math.sqrt(4 * math.pi) * (band + float(infrared_tail(h.real, grid)))
    rhs = 2 * math.pi ** 2 * 2 * math.pi        # int e^{-r^2}/r d^3x = 2 pi
    assert lhs == pytest.approx(rhs, rel=1e-5)


def test_radial_fourier_zero_and_domain():
    r = np.linspace(0, 1, 11)
    assert not np.any(radial_fourier(np.zeros(11), r, 0, [1.0, 2.0]))
    with pytest.raises(ValueError):
        radial_fourier(np.ones(11), r, 5, [1.0], ell_max=3)


@pytest.mark.parametrize("ell", [0, 1, 2])
def test_radial_fourier_roundtrip(ell):
    g = RadialGrid.log(2048, 1e-4, 60)
    r = np.linspace(0, 14, 2801)
    H = r ** ell * np.exp(-r ** 2)
    Hhat = radial_fourier(H, r, ell, g.nodes)
    rr = np.array([0.3, 0.7, 1.2, 2.0])
    back = inverse_radial_fourier(Hhat, g, ell, rr)
    exact = rr ** ell * np.exp(-rr ** 2)
    assert np.max(np.abs(back - exact)) < 1e-6 * np.max(np.abs(exact))


def test_bessel_table_matches_scipy():
    x = np.array([1e-6, 0.3, 2.0, 17.5, 300.0])
    tab = spherical_jn_table(30, x)
    ref = np.array([spherical_jn(l, x) for l in range(31)])
    assert np.max(np.abs(tab - ref)) < 1e-12


@pytest.mark.parametrize("ell_max", [4, 40, 800])
def test_bessel_table_mixed_scales_in_one_chunk(ell_max):
    # tiny and order-one arguments share one recurrence; none may lose its normalization
    x = np.geomspace(1.01e-4, 50.0, 2000)
    tab = spherical_jn_table(ell_max, x)
    ref = spherical_jn(np.arange(ell_max + 1)[:, None], x[None, :])
    assert np.all(np.isfinite(tab))
    assert np.max(np.abs(tab - ref)) < 1e-12


def test_legendre_table_matches_closed_forms():
    x = np.linspace(-1, 1, 7)
    P = legendre_table(3, x)
    assert np.allclose(P[2], 0.5 * (3 * x ** 2 - 1), atol=1e-14)
    assert np.allclose(P[3], 0.5 * (5 * x ** 3 - 3 * x), atol=1e-14)


# -- shell projection --------------------------------------------------------------


def test_shell_project_limits(grid, modes):
    v = _random_wf(grid, modes, np.random.default_rng(0))
    assert np.array_equal(shell_project(v, grid.nodes[0]).coeffs, v.coeffs)
    assert not np.any(shell_project(v, 2 * grid.nodes[-1]).coeffs)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 5.0), st.floats(1e-3, 5.0))
def test_shell_project_orthogonal_projection(e1, e2):
    g = RadialGrid.log(256, 1e-4, 1e2)
    m = ModeSet(2)
    v = _random_wf(g, m, np.random.default_rng(1))
    p = shell_project(v, e1)
    q = v - p
    assert p.norm_squared() + q.norm_squared() == pytest.approx(v.norm_squared(), rel=1e-12)
    assert np.array_equal(shell_project(p, e1).coeffs, p.coeffs)
    assert np.array_equal(shell_project(shell_project(v, e1), e2).coeffs,
                          shell_project(v, max(e1, e2)).coeffs)
    assert np.array_equal(apply_gamma(p).coeffs, shell_project(apply_gamma(v), e1).coeffs)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma, hyp1f1

from kpburgers.errors import QuadratureError
from kpburgers.evolution import make_initial_data
from kpburgers.kernels import (
    AmplitudeFunctionQ,
    KernelEvaluator,
    MomentProfile,
    _line_symbol,
    kernel_K,
    kernel_K_spectral,
    kernel_K_sup,
    kernel_S_field,
    kernel_S_sup,
    kstar,
    kstar_sup,
    moment_profile,
    profile_field,
    taylor_remainder_bound,
    taylor_remainder_sup,
)
from kpburgers.spectral import Field, MultiplierSymbol, apply_multiplier, make_grid


def kstar_closed_form(l, x, y, nu=1.0, eps=1):
    """Confluent hypergeometric form of the r-integral."""
    a = 0.75 + 0.5 * l
    w = (x + eps * y * y / 4) / math.sqrt(nu)
    z = -w * w / 4
    core = gamma(a) * hyp1f1(a, 0.5, z) + 1j * w * gamma(a + 0.5) * hyp1f1(a + 0.5, 1.5, z)
    phase = -0.25 * math.pi * eps + 0.5 * math.pi * l
    c0 = 1 / (4 * math.pi**1.5 * nu**0.75)
    return c0 * nu ** (-0.5 * l) * (np.exp(1j * phase) * core).real


# --- evaluator ---------------------------------------------------------------------


@pytest.mark.parametrize("kw", [{"nu": 0}, {"nu": -1}, {"eps": 0}, {"quad_rel_tol": 1e-2},
                                {"quad_rel_tol": 1e-11, "quad_cutoff": 20}])
def test_invalid_evaluator(kw):
    with pytest.raises(ValueError):
        KernelEvaluator(**kw)


def test_c0():
    assert KernelEvaluator(2.0).c0 == pytest.approx(1 / (4 * math.pi**1.5 * 2**0.75))


# --- K* ---------------------------------------------------------------------------


def test_origin_value():
    expected = gamma(0.75) * math.cos(math.pi / 4) / (4 * math.pi**1.5)
    assert expected == pytest.approx(0.03890, abs=1e-5)
    for eps in (-1, 1):
        assert kstar(KernelEvaluator(1.0, eps), 0, 0.0, 0.0) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("nu", [0.5, 1.0, 2.0])
def test_origin_derivative_constant(nu):
    expected = gamma(1.25) / (2**2.5 * math.pi**1.5 * nu**1.25)
    assert abs(kstar(KernelEvaluator(nu, 1), 1, 0.0, 0.0)) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("l", [0, 1, 2])
@pytest.mark.parametrize("nu,eps", [(1.0, 1), (0.5, -1), (2.0, 1)])
def test_quadrature_matches_hypergeometric_form(l, nu, eps):
    ev = KernelEvaluator(nu, eps)
    pts = [(0.0, 0.0), (1.3, -0.4), (-4.0, 2.0), (7.5, 0.0), (-12.0, 3.5), (0.2, 5.0)]
    for x, y in pts:
        assert kstar(ev, l, x, y) == pytest.approx(kstar_closed_form(l, x, y, nu, eps), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(-8, 8), st.integers(0, 2), st.sampled_from([-1, 1]))
def test_even_in_y(x, y, l, eps):
    ev = KernelEvaluator(1.0, eps)
    assert kstar(ev, l, x, y) == kstar(ev, l, x, -y)


def test_array_shapes_preserved():
    ev = KernelEvaluator()
    out = kstar(ev, 0, np.zeros((3, 4)), 0.0)
    assert out.shape == (3, 4)
    assert isinstance(kstar(ev, 0, 0.0, 0.0), float)


def test_quadrature_error_on_extreme_phase():
    with pytest.raises(QuadratureError):
        kstar(KernelEvaluator(), 0, 1e7, 0.0)


# --- K ----------------------------------------------------------------------------------


def test_K_at_unit_time_is_profile():
    ev = KernelEvaluator(1.0, -1)
    x, y = np.linspace(-5, 5, 11), np.linspace(-3, 3, 11)
    assert np.array_equal(kernel_K(ev, 0, x, y, 1.0), kstar(ev, 0, x, y))


def test_K_origin_scaling():
    ev = KernelEvaluator()
    assert kernel_K(ev, 0, 0.0, 0.0, 16.0) == pytest.approx(16**-1.25 * kstar(ev, 0, 0.0, 0.0), rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(-30, 30), st.floats(-30, 30), st.floats(0.1, 200), st.integers(0, 2))
def test_scaling_identity(x, y, t, l):
    ev = KernelEvaluator()
    direct = kernel_K(ev, l, x, y, t)
    scaled = t ** (-1.25 - 0.5 * l) * kstar(ev, l, x * t**-0.5, y * t**-0.75)
    assert direct == scaled


@pytest.mark.parametrize("l", [0, 1])
def test_sup_identity(l):
    ev = KernelEvaluator()
    ks, _ = kstar_sup(ev, l)
    for t in (1.0, 4.0, 16.0):
        assert kernel_K_sup(ev, l, t) == pytest.approx(ks * t ** (-1.25 - 0.5 * l), rel=1e-6)


def test_sup_not_below_origin():
    ev = KernelEvaluator()
    assert kstar_sup(ev, 1)[0] >= abs(kstar(ev, 1, 0.0, 0.0))


def test_K_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        kernel_K(KernelEvaluator(), 0, 0.0, 0.0, 0.0)


# --- spectral form -------------------------------------------------------------------------


def test_spectral_form_matches_quadrature_at_origin():
    ev = KernelEvaluator()
    x = np.linspace(-10, 10, 201)
    line = kernel_K_spectral(ev, 1.0, 0.0, x)
    assert line[100] == pytest.approx(kernel_K(ev, 0, 0.0, 0.0, 1.0), abs=1e-6)


@pytest.mark.parametrize("nu,eps,t,y", [(1.0, 1, 1.0, 0.0), (0.5, -1, 4.0, 2.0), (2.0, 1, 4.0, -3.0)])
def test_spectral_form_matches_quadrature_on_line(nu, eps, t, y):
    ev = KernelEvaluator(nu, eps)
    x = np.linspace(-15, 15, 301)
    lt = kernel_K_spectral(ev, t, y, x, 1)
    quad = kernel_K(ev, 1, x, y, t)
    assert np.all(np.abs(lt - quad) <= np.maximum(1e-6, 1e-4 * np.abs(quad)))


def test_line_integrand_is_hermitian_and_vanishes_at_zero():
    ev = KernelEvaluator(1.0, -1)
    xi = np.linspace(-3, 3, 61)
    g = _line_symbol(ev, 2.0, 1.5, xi, 1, True, None)
    assert g[30] == 0
    assert np.max(np.abs(g[::-1] - np.conj(g))) < 1e-15


# --- S on the grid ----------------------------------------------------------------------------


def test_S_field_convolution_matches_multiplier():
    g = make_grid(16, 16, 4 * math.pi, 4 * math.pi)
    ev = KernelEvaluator(1.0, 1)
    t = 0.3
    u0 = make_initial_data("random-zero-mass", g, 1.0, seed=2, k0=1.5, budget=np.inf)
    S = kernel_S_field(ev, t, g).physical
    u = u0.physical
    # sum_k S(x_i - x_k) u(x_k) dx dy; the displacement (i - k) dx sits at index i - k + n/2
    k = np.arange(g.nx)
    direct = np.zeros_like(u)
    for i in range(g.nx):
        for j in range(g.ny):
            a = (i - k + g.nx // 2) % g.nx
            b = (j - k + g.ny // 2) % g.ny
            direct[i, j] = np.sum(S[np.ix_(a, b)] * u)
    direct *= g.dx * g.dy
    sym = MultiplierSymbol(
        lambda xi, eta: np.exp(t * (-xi**2 + 1j * (xi**3 - eta**2 / xi))), "force-zero")
    assert np.max(np.abs(direct - apply_multiplier(u0, sym).physical)) < 1e-10


def test_S_sup_decreases_with_viscosity():
    assert kernel_S_sup(KernelEvaluator(4.0), 1.0) < kernel_S_sup(KernelEvaluator(1.0), 1.0)


# --- Taylor remainder ---------------------------------------------------------------------------


def test_remainder_bound_value():
    ev = KernelEvaluator()
    assert taylor_remainder_bound(ev, 0, 0, 1.0) == pytest.approx(gamma(2.25) / (4 * math.pi**1.5))
    assert taylor_remainder_bound(ev, 0, 0, 1.0) == pytest.approx(0.05086, abs=1e-5)


@pytest.mark.parametrize("l,m", [(0, 0), (0, 1), (1, 0), (1, 1), (2, 3)])
def test_remainder_bound_power_law(l, m):
    ev = KernelEvaluator(0.7)
    ratio = taylor_remainder_bound(ev, l, m, 8.0) / taylor_remainder_bound(ev, l, m, 2.0)
    assert ratio == pytest.approx(4 ** (-1.75 - 0.5 * (l + m)), rel=1e-14)


@pytest.mark.parametrize("l,m", [(0, 0), (1, 1)])
def test_remainder_below_bound(l, m):
    ev = KernelEvaluator()
    for t in (1.0, 2.0):
        assert taylor_remainder_sup(ev, l, m, t) <= taylor_remainder_bound(ev, l, m, t)


# --- moments and profiles ------------------------------------------------------------------------

GRID = make_grid(128, 64, 16.0, 16.0)


def test_moments_of_dipole():
    c = 0.3
    u0 = make_initial_data("gaussian-dipole", GRID, c)
    m0 = moment_profile(u0, 0)
    assert np.max(np.abs(m0.values)) < 1e-14
    m1 = moment_profile(u0, 1)
    assert np.max(np.abs(m1.values + c * math.sqrt(math.pi) / 2 * np.exp(-GRID.y**2))) < 1e-12


def test_mirrored_field_flips_first_moment():
    rng = np.random.default_rng(4)
    X, Y = GRID.meshgrid()
    # compact support keeps the self-mirrored edge column x = -L/2 at zero
    a = rng.standard_normal(X.shape) * np.exp(-(X**2 + Y**2))
    u0 = Field(GRID, physical=a)
    # x -> -x on the lattice x_i = -L/2 + i dx maps index i to (n - i) mod n
    mirrored = Field(GRID, physical=np.roll(a[::-1], 1, axis=0))
    assert np.allclose(moment_profile(mirrored, 1).values, -moment_profile(u0, 1).values, atol=1e-13)


def test_spike_profile_reproduces_shifted_kernel():
    ev = KernelEvaluator()
    t = 4.0
    vals = np.zeros(GRID.ny)
    j0 = GRID.ny // 2 + 5
    vals[j0] = 1 / GRID.dy
    f = profile_field(ev, t, MomentProfile(1, vals, GRID.y), GRID)
    X, Y = GRID.meshgrid()
    exact = kernel_K(ev, 1, X, Y - GRID.y[j0], t)
    # a lattice spike is a sinc in w after interpolation; compare in relative sup norm
    assert np.max(np.abs(f.physical - exact)) <= 0.02 * np.max(np.abs(exact))


def test_V_with_zero_total_decays_faster():
    ev = KernelEvaluator()
    q = GRID.y * np.exp(-GRID.y**2)
    Q = AmplitudeFunctionQ(q, GRID.y)
    assert abs(Q.integral_of_Q) < 1e-14
    scaled = [t**1.75 * profile_field(ev, t, Q, GRID).linf_norm() for t in (4.0, 16.0, 64.0)]
    assert scaled[0] > scaled[1] > scaled[2]


def test_V_with_narrow_bump_matches_scaled_kernel():
    ev = KernelEvaluator()
    n0 = -0.2
    q = n0 * np.exp(-(GRID.y**2) / 0.5) / math.sqrt(0.5 * math.pi)
    Q = AmplitudeFunctionQ(q, GRID.y)
    assert Q.integral_of_Q == pytest.approx(n0, rel=1e-10)
    t = 64.0
    V = profile_field(ev, t, Q, GRID).physical
    X, Y = GRID.meshgrid()
    rows = np.abs(GRID.y) <= 5
    target = n0 * kernel_K(ev, 1, X[:, rows], Y[:, rows], t)
    assert np.max(np.abs(V[:, rows] - target)) <= 0.05 * np.max(np.abs(target))

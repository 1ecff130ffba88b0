import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracdrift.fracops import (GridField, GridSpec, apply_symbol, divergence_spectral,
                               frac_laplacian_radial_point, fraclap_power_exact, grad_l2,
                               gradient_spectral, lyapunov_residual, riesz_potential_radial,
                               spherical_mean, symbol)
from fracdrift.model import ModelParams, beta_of_kappa, kappa_of_beta
from fracdrift.specfun import gamma_weight


# --------------------------------------------------------------------------
# radial quadratures

def test_fraclap_of_constant_is_zero():
    assert abs(frac_laplacian_radial_point(lambda s: 1.0, 0.8, 0.5, 3)) < 1e-10


def test_fraclap_of_power_against_gamma_ratio():
    b, a, d, r = 0.3, 0.5, 3, 0.7
    target = -b * (d + b - 2) * gamma_weight(d + b - 2, d) / gamma_weight(d + b - a, d) * r ** (b - a)
    assert fraclap_power_exact(b, r, a, d) == pytest.approx(target, rel=1e-12)
    val = frac_laplacian_radial_point(lambda s: abs(s) ** b, r, a, d, growth=b)
    assert val == pytest.approx(target, rel=1e-5)


def _fourier_fraclap_gaussian(r, alpha):
    # (2 pi)^-3 int |xi|^alpha pi^{3/2} e^{-|xi|^2/4} e^{i xi.x} dxi, radial reduction
    val, _ = integrate.quad(lambda k: k ** (1 + alpha) * math.pi**1.5 * math.exp(-k * k / 4),
                            0, np.inf, weight="sin", wvar=r)
    return val / (2 * math.pi**2 * r)


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_fraclap_gaussian_against_fourier_quadrature(alpha):
    val = frac_laplacian_radial_point(lambda s: math.exp(-s * s), 1.0, alpha, 3)
    assert val == pytest.approx(_fourier_fraclap_gaussian(1.0, alpha), abs=1e-5)


def test_fraclap_rejects_bad_input():
    with pytest.raises(ValueError):
        frac_laplacian_radial_point(lambda s: 1.0, 0.0, 0.5, 3)
    with pytest.raises(ValueError):
        frac_laplacian_radial_point(lambda s: s, 1.0, 0.5, 3, growth=0.6)


def test_spherical_mean_of_linear_radial_function():
    # mean of |z| over |z - x| = rho with |x| = r > rho is r + rho^2 / (3 r) in 3-d
    r, rho = 1.3, 0.4
    assert spherical_mean(lambda s: s, r, rho, 3) == pytest.approx(r + rho**2 / (3 * r), rel=1e-12)
    assert spherical_mean(lambda s: 1.0, r, rho, 5) == pytest.approx(1.0, rel=1e-10)


def test_riesz_potential_of_power():
    b, a, d, r = 0.3, 0.5, 3, 0.6
    val = riesz_potential_radial(lambda s: s ** (b - 2), 2 - a, r, d, decay=2 - b)
    target = gamma_weight(d + b - 2, d) / gamma_weight(d + b - a, d) * r ** (b - a)
    assert val == pytest.approx(target, rel=1e-4)


def test_riesz_potential_zero_and_linear():
    assert riesz_potential_radial(lambda s: 0.0, 1.5, 0.5, 3) == 0.0

    def f(s):
        return math.exp(-s * s)

    def g(s):
        return 1.0 / (1 + s**4)

    a, b = 0.7, -1.9
    lhs = riesz_potential_radial(lambda s: a * f(s) + b * g(s), 1.5, 0.8, 3)
    rhs = a * riesz_potential_radial(f, 1.5, 0.8, 3) + b * riesz_potential_radial(g, 1.5, 0.8, 3)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_riesz_potential_rejects_divergent():
    with pytest.raises(ValueError):
        riesz_potential_radial(lambda s: 1.0, 1.5, 0.5, 3, decay=1.0)


# --------------------------------------------------------------------------
# Lyapunov identity

@pytest.mark.parametrize("d,alpha,kappa", [(3, 0.5, 1.0), (3, 1.0, 1.0), (4, 0.7, 0.3)])
def test_lyapunov_residual_vanishes(d, alpha, kappa):
    p = ModelParams(d=d, alpha=alpha, kappa=kappa)
    beta = beta_of_kappa(kappa, p).beta
    for r in (0.25, 0.5, 1.0):
        res = lyapunov_residual(beta, kappa, r, p)
        assert abs(res) / r ** (beta - alpha) <= 1e-4


def test_lyapunov_residual_linear_in_kappa():
    p = ModelParams(d=3, alpha=0.5, kappa=1.0)
    beta = 0.3
    k = float(kappa_of_beta(beta, p))
    r = 0.5
    res = lyapunov_residual(beta, 1.1 * k, r, p)
    assert res == pytest.approx(0.1 * k * (3 + beta - 0.5) * r ** (beta - 0.5), rel=1e-5)
    scaled = [lyapunov_residual(beta, 1.1 * k, s, p) / s ** (beta - 0.5) for s in (0.25, 0.5, 1.0)]
    assert max(scaled) - min(scaled) < 1e-6 * abs(scaled[0])


# --------------------------------------------------------------------------
# periodic grids

SPEC = GridSpec(3, 32, 4.0)


def test_grid_layout():
    assert SPEC.h == 0.25
    ax = SPEC.axis
    assert ax[0] == -4.0 and ax[-1] == 4.0 - 0.25 and ax.size == 32
    k1 = SPEC.wavenumbers[0].ravel()
    assert set(np.round(k1 / (math.pi / 4)).astype(int)) == set(range(-16, 16))
    with pytest.raises(ValueError):
        GridSpec(3, 15, 4.0)
    with pytest.raises(ValueError):
        GridSpec(3, 8, 4.0)


def test_norms():
    u = GridField(SPEC, np.ones(SPEC.shape))
    vol = 8.0**3
    assert u.l1 == pytest.approx(vol)
    assert u.l2 == pytest.approx(math.sqrt(vol))
    assert u.linf == 1.0
    assert u.lp_norm(3) == pytest.approx(vol ** (1 / 3))
    assert u.lp_norm(np.inf) == 1.0


def test_symbol_on_constants_and_modes():
    c = GridField(SPEC, np.full(SPEC.shape, 3.0))
    assert np.max(np.abs(apply_symbol(c, 0.5, 1e-2).values)) < 1e-12
    X, Y, Z = SPEC.coords
    k0 = np.array([2, -1, 3]) * math.pi / SPEC.L
    u = GridField(SPEC, np.cos(k0[0] * X + k0[1] * Y + k0[2] * Z))
    lam = np.linalg.norm(k0) ** 0.5 + 1e-2 * np.linalg.norm(k0) ** 2
    np.testing.assert_allclose(apply_symbol(u, 0.5, 1e-2).values, lam * u.values, atol=1e-12)


def test_symbol_form_is_nonnegative(rng):
    u = GridField(SPEC, rng.normal(size=SPEC.shape))
    assert apply_symbol(u, 0.5, 1e-3).inner(u) >= 0
    assert np.all(symbol(SPEC, 0.5, 1e-3) >= 0)


def test_gradient_of_resolved_mode():
    X = np.broadcast_arrays(*SPEC.coords)[0]
    u = GridField(SPEC, np.sin(math.pi * X / SPEC.L))
    g = gradient_spectral(u)
    np.testing.assert_allclose(g[0].values, math.pi / SPEC.L * np.cos(math.pi * X / SPEC.L), atol=1e-12)
    assert np.max(np.abs(g[1].values)) < 1e-12


def test_gradient_mean_zero_and_constant(rng):
    u = GridField(SPEC, rng.normal(size=SPEC.shape))
    for gi in gradient_spectral(u):
        assert abs(gi.integral()) < 1e-9
    c = GridField(SPEC, np.full(SPEC.shape, 2.0))
    assert all(np.max(np.abs(g.values)) < 1e-12 for g in gradient_spectral(c))


def test_divergence_of_gradient_is_minus_symbol_two(rng):
    X, Y, Z = SPEC.coords
    u = GridField(SPEC, np.exp(-2 * (X**2 + Y**2 + Z**2)))
    lap = divergence_spectral(gradient_spectral(u, dealias=False), SPEC, dealias=False)
    # -Delta = |xi|^2 = symbol with alpha = 2; only the Nyquist plane (not a real
    # derivative mode) can differ, at the level of the Gaussian's tail there
    np.testing.assert_allclose(-lap.values, apply_symbol(u, 2.0).values, atol=1e-6)


def test_grad_l2_matches_gradient_fields():
    X, Y, Z = SPEC.coords
    u = GridField(SPEC, np.exp(-(X**2 + 2 * Y**2 + Z**2)) * np.cos(X))
    direct = math.sqrt(sum(g.l2**2 for g in gradient_spectral(u, dealias=False)))
    assert grad_l2(u) == pytest.approx(direct, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_field_arithmetic(seed):
    r = np.random.default_rng(seed)
    a = GridField(SPEC, r.normal(size=SPEC.shape))
    b = GridField(SPEC, r.normal(size=SPEC.shape))
    assert (a + b).l2 <= a.l2 + b.l2 + 1e-12
    assert (a - a).linf == 0
    assert (2.0 * a).l1 == pytest.approx(2 * a.l1)
    assert abs(a.inner(b)) <= a.l2 * b.l2 + 1e-9

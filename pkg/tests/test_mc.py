import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from fracdrift.mc import (MCConfig, ParticleEnsemble, RadialProfile, block_rng, cauchy_density,
                          cauchy_radial_cdf, cauchy_shell_probability, euler_step,
                          fit_vanishing_exponent, radial_density, sample_one_sided_stable,
                          sample_stable_increment, shell_volumes, simulate_ensemble)
from fracdrift.model import ModelParams

CAUCHY = ModelParams(3, 1.0, 0.0)


# --------------------------------------------------------------------------
# samplers

@pytest.mark.parametrize("a", [0.25, 0.5])
def test_one_sided_laplace_transform(a):
    s = sample_one_sided_stable(a, block_rng(7, 0), 10**6)
    assert np.all(s > 0)
    for lam in (0.5, 1.0, 2.0):
        v = np.exp(-lam * s)
        z = (v.mean() - math.exp(-lam**a)) / (v.std() / 1e3)
        assert abs(z) < 3


def test_one_sided_half_is_levy():
    s = sample_one_sided_stable(0.5, block_rng(8, 0), 10**5)
    # E exp(-lam S) = exp(-sqrt(lam)) is the Levy law with CDF erfc(1 / (2 sqrt(s)))
    p = stats.kstest(s, lambda x: special.erfc(1.0 / (2.0 * np.sqrt(x)))).pvalue
    assert p > 0.01


def test_one_sided_rejects_bad_index():
    with pytest.raises(ValueError):
        sample_one_sided_stable(1.0, block_rng(0, 0), 4)


def test_characteristic_function():
    dt = 0.3
    x = sample_stable_increment(0.5, dt, 3, block_rng(9, 0), 10**6)
    for xi in ([1, 0, 0], [0.5, 0.5, 0.2], [3, 0, 1], [0, 0.1, 0], [2, -2, 2]):
        xi = np.asarray(xi, float)
        c = np.cos(x @ xi)
        z = (c.mean() - math.exp(-dt * np.linalg.norm(xi) ** 0.5)) / (c.std() / 1e3)
        assert abs(z) < 3


def test_increment_isotropy():
    x = sample_stable_increment(0.5, 1.0, 3, block_rng(10, 0), 20000)
    u = np.array([1.0, 0.0, 0.0])
    v = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
    half = x.shape[0] // 2
    assert stats.ks_2samp(x[:half] @ u, x[half:] @ v).pvalue > 0.01


def test_cauchy_radial_law():
    x = sample_stable_increment(1.0, 0.7, 3, block_rng(11, 0), 10**5)
    p = stats.kstest(np.linalg.norm(x, axis=1), lambda R: cauchy_radial_cdf(R, 0.7)).pvalue
    assert p > 0.01


def test_increment_shapes_and_validation():
    rng = block_rng(0, 0)
    assert sample_stable_increment(0.5, 0.1, 3, rng).shape == (3,)
    assert sample_stable_increment(0.5, 0.1, 4, rng, 5).shape == (5, 4)
    with pytest.raises(ValueError):
        sample_stable_increment(1.5, 0.1, 3, rng, 5)
    with pytest.raises(ValueError):
        sample_stable_increment(0.5, 0.0, 3, rng, 5)


def test_block_streams_are_independent_and_reproducible():
    a = block_rng(42, 0).random(5)
    b = block_rng(42, 0).random(5)
    c = block_rng(42, 1).random(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# --------------------------------------------------------------------------
# Euler scheme and ensembles

def test_noise_free_euler_follows_radial_ode(params_beta03):
    # inside the unit ball r' = kappa r^(1 - alpha), so r^alpha grows like alpha kappa t
    x = np.array([[0.2, 0.0, 0.0], [0.0, 0.1, 0.1]])
    r0 = np.linalg.norm(x, axis=1)
    dt, n = 1e-4, 2000
    for _ in range(n):
        x = euler_step(x, dt, None, params_beta03, noise=False)
    exact = (r0**0.5 + 0.5 * params_beta03.kappa * dt * n) ** 2
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), exact, rtol=1e-3)
    assert abs(x[0, 1]) < 1e-15


def test_euler_step_without_drift_is_stable_step():
    x0 = np.zeros((4, 3))
    a = euler_step(x0, 0.1, block_rng(3, 0), ModelParams(3, 0.5, 0.0))
    b = sample_stable_increment(0.5, 0.1, 3, block_rng(3, 0), 4)
    np.testing.assert_array_equal(a, b)


def test_config_validation(params_beta03):
    with pytest.raises(ValueError):
        MCConfig(n_particles=0)
    with pytest.raises(ValueError):
        MCConfig(bins=(0.0, 1.0, 0.5))
    with pytest.raises(ValueError):
        MCConfig(dt=0.1).check_drift_step(params_beta03)
    assert MCConfig(dt=0.005).check_drift_step(params_beta03) > 0


def test_zero_time_keeps_start(params_beta03):
    e = simulate_ensemble(MCConfig(n_particles=100, t_end=0.0, start=(0.3, 0.1, 0.0)), params_beta03)
    assert np.all(e.positions == np.array([0.3, 0.1, 0.0]))


def test_workers_do_not_change_output(params_beta03):
    cfg = MCConfig(n_particles=3000, dt=0.01, t_end=0.05, seed=5, block_size=1000)
    a = simulate_ensemble(cfg, params_beta03, workers=1)
    b = simulate_ensemble(cfg, params_beta03, workers=2)
    c = simulate_ensemble(cfg, params_beta03, workers=1)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.positions, c.positions)
    assert a.n_blocks == 3


def test_start_dimension_checked(params_beta03):
    with pytest.raises(ValueError):
        simulate_ensemble(MCConfig(n_particles=10, start=(1.0, 0.0)), params_beta03)


def test_cauchy_ensemble_radial_cdf():
    e = simulate_ensemble(MCConfig(n_particles=10**5, dt=0.05, t_end=1.0, seed=3, start=(0.0, 0.0, 0.0)),
                          CAUCHY)
    assert stats.kstest(e.radii, lambda R: cauchy_radial_cdf(R, 1.0)).pvalue > 0.01


def test_cauchy_ensemble_profile_within_three_se():
    n = 10**5
    e = simulate_ensemble(MCConfig(n_particles=n, dt=0.05, t_end=1.0, seed=4, start=(0.0, 0.0, 0.0)),
                          CAUCHY)
    edges = np.linspace(0.0, 3.0, 16)
    prof = radial_density(e, edges)
    expected = cauchy_shell_probability(edges, np.zeros(3), 1.0) / shell_volumes(edges, 3)
    assert np.all(np.abs(prof.density - expected) <= 3 * np.maximum(prof.stderr, 1e-300))


# --------------------------------------------------------------------------
# density estimation and fits

def test_uniform_ball_has_flat_profile():
    rng = np.random.default_rng(0)
    n = 400000
    r = rng.random(n) ** (1 / 3)
    prof = radial_density(r, np.linspace(0.1, 1.0, 10))
    target = 1.0 / (4 * math.pi / 3)
    assert np.all(np.abs(prof.density - target) <= 4 * prof.stderr)


def test_profile_bookkeeping():
    rng = np.random.default_rng(1)
    r = np.abs(rng.standard_cauchy(5000))
    edges = np.linspace(0.0, 2.0, 21)
    prof = radial_density(r, edges)
    mass = np.sum(prof.density * shell_volumes(edges, 3))
    assert mass == pytest.approx(np.mean(r < 2.0), rel=1e-12)
    with pytest.raises(ValueError):
        radial_density(r, [0.0, 1.0, 1.0])


def test_profile_from_ensemble_uses_positions():
    pos = np.array([[0.1, 0, 0], [0, 0.5, 0], [0, 0, 1.5]])
    e = ParticleEnsemble(pos, 0, 1, 1, 1)
    prof = radial_density(e, [0.0, 1.0, 2.0])
    assert list(prof.counts) == [2, 1]


def test_fit_synthetic_power_law():
    rng = np.random.default_rng(2)
    edges = np.geomspace(0.01, 0.1, 9)
    mid = np.sqrt(edges[:-1] * edges[1:])
    dens = 5.0 * mid**0.3 * (1 + 0.01 * rng.normal(size=mid.size))
    prof = RadialProfile(edges, mid, dens, 0.01 * dens, np.full(mid.size, 10000), 10**6)
    fit = fit_vanishing_exponent(prof, (0.01, 0.1))
    assert fit.beta_hat == pytest.approx(0.3, abs=0.02)
    assert fit.n_bins == 8


def test_fit_needs_bins():
    edges = np.geomspace(0.01, 0.1, 4)
    mid = np.sqrt(edges[:-1] * edges[1:])
    prof = RadialProfile(edges, mid, mid, 0.1 * mid, np.ones(3), 10)
    with pytest.raises(ValueError):
        fit_vanishing_exponent(prof, (0.01, 0.1))


def test_fit_without_drift_is_flat():
    e = simulate_ensemble(MCConfig(n_particles=2 * 10**5, dt=0.05, t_end=1.0, seed=6, start=(0.0, 0.0, 0.0)),
                          CAUCHY)
    fit = fit_vanishing_exponent(radial_density(e, np.geomspace(0.05, 0.3, 7)), (0.05, 0.3))
    # the Cauchy density is flat to O(r^2) near the origin
    assert abs(fit.beta_hat) < max(3 * fit.stderr, 0.1)


# --------------------------------------------------------------------------
# closed forms

def test_cauchy_cdf_matches_density():
    t = 0.7
    for R in (0.3, 1.0, 4.0):
        num, _ = integrate.quad(lambda r: 4 * math.pi * r * r * float(cauchy_density(r, t)), 0, R)
        assert float(cauchy_radial_cdf(R, t)) == pytest.approx(num, rel=1e-10)
    assert float(cauchy_radial_cdf(1e9, t)) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(0.2, 1.5))
def test_shell_probability_off_centre(c, t):
    edges = np.array([0.2, 0.7, 1.5])
    probs = cauchy_shell_probability(edges, np.array([c, 0.0, 0.0]), t)

    # integrate in spherical coordinates about the origin
    for k, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        num, _ = integrate.dblquad(
            lambda th, r: 2 * math.pi * r * r * math.sin(th)
            * float(cauchy_density(math.sqrt(r * r + c * c - 2 * r * c * math.cos(th)), t)),
            a, b, 0, math.pi, epsrel=1e-9)
        assert probs[k] == pytest.approx(num, rel=1e-6)

"""Noise distributions, characteristic functions, and the ensemble average.

Closed-form expectations are frozen from the standard characteristic
functions (Lorentzian e^{i mu u - sigma |u|}, Gaussian
e^{i mu u - sigma^2 u^2 / 2}) so the implementation is checked against
independent arithmetic.  Monte Carlo checks use a fixed seed and
tolerances a few times the standard error, validated ahead of time.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from nvecho.noise import (
    CHUNK,
    Distribution,
    NoiseSource,
    delta,
    dephasing_factor,
    field_source,
    gaussian,
    lorentzian,
    monte_carlo_attenuation,
    residual_field_source,
    strain_source,
    temperature_source,
)
from nvecho.response import default_linear_response, default_quasiharmonic_set
from nvecho.spin_model import PhaseCoefficients, Segment, default_params, phase_coefficients
from nvecho.units import TWO_PI

SEED = 12345


def echo_coefficients(t=1e-3, tau=0.18e-3, pair=(0, -1)):
    p = default_params()
    return phase_coefficients(p, pair, (Segment(t - tau, 0), Segment(tau, +1)))


def test_lorentzian_characteristic_function():
    d = lorentzian(0.0, 2.0)
    assert d.characteristic_function(3.0) == pytest.approx(0.0024787521766663585, rel=1e-12)
    d2 = lorentzian(1.5, 2.0)
    expected = np.exp(1j * 1.5) * math.exp(-2.0)
    assert d2.characteristic_function(1.0) == pytest.approx(expected, rel=1e-12)


def test_gaussian_characteristic_function():
    d = gaussian(0.0, 3.0)
    assert d.characteristic_function(2.0) == pytest.approx(1.5229979744712628e-08, rel=1e-12)
    d2 = gaussian(-0.5, 1.0)
    expected = np.exp(-1j * 0.5 * 2.0 - 0.5 * 4.0)
    assert d2.characteristic_function(2.0) == pytest.approx(expected, rel=1e-12)


def test_delta_characteristic_function():
    d = delta(0.7)
    u = np.array([-2.0, 0.0, 5.0])
    cf = d.characteristic_function(u)
    assert np.allclose(np.abs(cf), 1.0, rtol=1e-12)
    assert np.allclose(cf, np.exp(1j * 0.7 * u), rtol=1e-12)


def test_characteristic_function_conjugate_symmetry():
    for d in (lorentzian(0.3, 1.2), gaussian(-0.2, 0.5), delta(1.1)):
        u = np.linspace(-4, 4, 17)
        cf = d.characteristic_function(u)
        assert np.allclose(cf[::-1], np.conj(cf), rtol=1e-12)


def test_centered_distribution():
    d = lorentzian(2.5, 1.0)
    c = d.centered()
    assert c.location == 0.0 and c.scale == 1.0 and c.kind == d.kind
    assert abs(d.characteristic_function(0.7)) == pytest.approx(
        c.characteristic_function(0.7).real, rel=1e-12
    )


def test_distribution_validation():
    with pytest.raises(ValueError):
        Distribution(kind="lorentzian", location=0.0, scale=-1.0)
    with pytest.raises(ValueError):
        Distribution(kind="uniform", location=0.0, scale=1.0)
    with pytest.raises(ValueError):
        Distribution(kind="delta", location=0.0, scale=0.5)


def test_sampling_is_deterministic():
    d = lorentzian(0.0, 1.0)
    a = d.sample(1000, seed=SEED, source_index=0)
    b = d.sample(1000, seed=SEED, source_index=0)
    assert np.array_equal(a, b)
    c = d.sample(1000, seed=SEED + 1, source_index=0)
    assert not np.array_equal(a, c)
    e = d.sample(1000, seed=SEED, source_index=1)
    assert not np.array_equal(a, e)


def test_sample_statistics():
    n = 1 << 17
    g = gaussian(0.0, 1.0).sample(n, seed=SEED)
    assert abs(np.mean(g)) < 0.01
    assert np.var(g) == pytest.approx(1.0, rel=0.02)
    lo = lorentzian(0.0, 1.0).sample(n, seed=SEED)
    assert abs(np.median(lo)) < 0.01
    # half the mass of a unit Lorentzian lies within one half width
    assert np.mean(np.abs(lo) < 1.0) == pytest.approx(0.5, abs=0.01)
    de = delta(3.25).sample(100, seed=SEED)
    assert np.all(de == 3.25)


def test_phase_coefficient_temperature_source():
    c = echo_coefficients(t=1e-3, tau=0.18e-3)
    resp = default_linear_response()
    src = temperature_source(lorentzian(0.0, 5.0), response=resp)
    expected = c.quadrupole * resp.quadrupole_per_K + c.hyperfine * resp.hyperfine_per_K
    assert src.phase_coefficient(c) == pytest.approx(expected, rel=1e-12)
    # cancellation point zeroes the coefficient
    t = 1e-3
    tau = t * resp.quadrupole_per_K / resp.hyperfine_per_K
    c0 = echo_coefficients(t=t, tau=tau)
    assert abs(src.phase_coefficient(c0)) < 1e-12 * abs(t * resp.quadrupole_per_K)


def test_phase_coefficient_field_and_strain():
    c = echo_coefficients()
    src_b = field_source(lorentzian(0.0, 0.1))
    assert src_b.phase_coefficient(c) == pytest.approx(c.field, rel=1e-12)
    resp = default_linear_response()
    src_e = strain_source(gaussian(0.0, 1e-4), response=resp)
    expected = (
        c.quadrupole * resp.quadrupole_per_strain + c.hyperfine * resp.hyperfine_per_strain
    )
    assert src_e.phase_coefficient(c) == pytest.approx(expected, rel=1e-12)


def test_residual_field_source_width():
    src = residual_field_source(dq_coherence_time=3.9e-3)
    assert src.kind == "field"
    assert src.distribution.kind == "lorentzian"
    assert src.distribution.location == 0.0
    expected_width = 1.0 / (2.0 * TWO_PI * 307.7 * 3.9e-3)
    assert src.distribution.scale == pytest.approx(expected_width, rel=1e-12)
    # implied single-quantum rate is half the double-quantum one
    rate_sq = TWO_PI * 307.7 * src.distribution.scale
    assert rate_sq == pytest.approx(1.0 / (2 * 3.9e-3), rel=1e-12)


def test_dephasing_factor_is_product_of_characteristic_functions():
    c = echo_coefficients()
    resp = default_linear_response()
    t_src = temperature_source(lorentzian(0.3, 5.0), response=resp)
    b_src = field_source(gaussian(0.0, 0.05))
    expected = t_src.distribution.characteristic_function(
        t_src.phase_coefficient(c)
    ) * b_src.distribution.characteristic_function(c.field)
    got = dephasing_factor((t_src, b_src), c)
    assert got == pytest.approx(expected, rel=1e-12)
    assert abs(got) < 1.0


def test_dephasing_factor_rejects_nonlinear_sources():
    c = echo_coefficients()
    src = temperature_source(
        lorentzian(300.0, 25.0), response=default_quasiharmonic_set()
    )
    with pytest.raises(TypeError):
        dephasing_factor((src,), c)


def test_monte_carlo_matches_closed_form_linear():
    c = echo_coefficients(t=1e-3, tau=0.05e-3)
    resp = default_linear_response()
    sources = (
        temperature_source(lorentzian(0.0, 5.0), response=resp),
        field_source(lorentzian(0.0, 0.0663)),
    )
    exact = dephasing_factor(sources, c)
    result = monte_carlo_attenuation(sources, c, n_samples=1 << 19, seed=SEED)
    assert result.n_retained == result.n_samples == 1 << 19
    assert abs(result.attenuation - exact) < 5e-3
    assert result.std_error < 2e-3


def test_monte_carlo_worker_count_does_not_change_result():
    c = echo_coefficients()
    sources = (
        temperature_source(lorentzian(0.0, 5.0)),
        field_source(gaussian(0.0, 0.05)),
    )
    n = CHUNK + 17  # force an unequal final chunk
    r1 = monte_carlo_attenuation(sources, c, n_samples=n, seed=SEED, workers=1)
    r4 = monte_carlo_attenuation(sources, c, n_samples=n, seed=SEED, workers=4)
    assert r1.attenuation == r4.attenuation
    assert r1.n_retained == r4.n_retained


def test_truncation_mass_absolute_temperature():
    # Cauchy(300 K, 25 K) clipped to [0, location + 50 sigma]
    src = temperature_source(
        lorentzian(300.0, 25.0), response=default_quasiharmonic_set()
    )
    lo, hi = src.truncation_window()
    assert lo == 0.0
    assert hi == pytest.approx(300.0 + 50 * 25.0)
    c = echo_coefficients(t=20e-6, tau=0.0)
    result = monte_carlo_attenuation((src,), c, n_samples=1 << 18, seed=SEED)
    expected_mass = 1.0 - (math.atan(50.0) + math.atan(12.0)) / math.pi
    assert expected_mass == pytest.approx(0.0328300, abs=1e-6)
    assert result.truncated_mass["temperature"] == pytest.approx(expected_mass, rel=1e-9)
    dropped = 1.0 - result.n_retained / result.n_samples
    assert dropped == pytest.approx(expected_mass, abs=5e-3)


def test_monte_carlo_nonlinear_matches_quadrature():
    # Ramsey-style segment in m_S = 0: only the quadrupole drift matters.
    t = 20e-6
    c = PhaseCoefficients(quadrupole=-t, hyperfine=0.0, field=0.0)
    qh = default_quasiharmonic_set()
    src = temperature_source(lorentzian(300.0, 25.0), response=qh)
    lo, hi = src.truncation_window()

    def pdf(T):
        return 25.0 / (math.pi * ((T - 300.0) ** 2 + 25.0**2))

    def integrand_re(T):
        return math.cos(-t * qh.quadrupole.shift_at(T)) * pdf(T)

    def integrand_im(T):
        return math.sin(-t * qh.quadrupole.shift_at(T)) * pdf(T)

    norm = quad(pdf, lo, hi, limit=200)[0]
    expected = (
        quad(integrand_re, lo, hi, limit=200)[0]
        + 1j * quad(integrand_im, lo, hi, limit=200)[0]
    ) / norm
    result = monte_carlo_attenuation((src,), c, n_samples=1 << 19, seed=SEED)
    assert abs(result.attenuation - expected) < 5e-3


def test_monte_carlo_rejects_bad_arguments():
    c = echo_coefficients()
    src = field_source(gaussian(0.0, 0.05))
    with pytest.raises(ValueError):
        monte_carlo_attenuation((src,), c, n_samples=0, seed=SEED)
    with pytest.raises(ValueError):
        monte_carlo_attenuation((src,), c, n_samples=100, seed=SEED, workers=0)


def test_source_requires_matching_response_type():
    with pytest.raises(TypeError):
        temperature_source(lorentzian(0.0, 5.0), response="linear")
    with pytest.raises(ValueError):
        NoiseSource(
            name="x", kind="humidity", distribution=gaussian(0.0, 1.0), response=None
        )

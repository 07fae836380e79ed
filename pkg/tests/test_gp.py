import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from gpnet.errors import DomainError, InvalidParameterError, RangeError
from gpnet.gp import (
    GPParams,
    GPReparam,
    cumulant,
    lambert_w0,
    log_mgf,
    log_mgf_derivative,
    log_pmf,
    log_pmf_vec,
    mean_var,
    mgf,
    pmf_table,
    sample,
    sample_array,
    stirling2,
    subexp_constants,
    w_poly,
    zeta_j0,
)
from oracles import gp_pmf_direct, log_mgf_by_summation, richardson_derivative


# --- parameters and pmf ------------------------------------------------------


@pytest.mark.parametrize("lam, theta", [(0.0, 0.1), (-1.0, 0.1), (math.inf, 0.1), (1.0, 1.0), (1.0, -1.0)])
def test_params_reject_invalid(lam, theta):
    with pytest.raises(InvalidParameterError):
        GPParams(lam, theta)


def test_hand_computed_pmf_value():
    # lam=0.5, theta=0.5, y=2: 0.5 * 1.5 * e^-1.5 / 2
    assert log_pmf(GPParams(0.5, 0.5), 2) == pytest.approx(math.log(0.375) - 1.5, abs=1e-14)


def test_poisson_limit_matches_scipy():
    y = np.arange(40)
    got = log_pmf_vec(y, 3.7, 0.0)
    np.testing.assert_allclose(got, stats.poisson.logpmf(y, 3.7), rtol=1e-12)


@pytest.mark.parametrize("lam, theta", [(2.0, 0.4), (0.7, -0.2), (5.0, 0.9)])
def test_pmf_matches_direct_formula(lam, theta):
    y = np.arange(60)
    np.testing.assert_allclose(np.exp(log_pmf_vec(y, lam, theta)), gp_pmf_direct(y, lam, theta),
                               rtol=1e-11, atol=1e-300)


def test_negative_theta_truncates_support():
    p = GPParams(2.0, -0.3)
    assert p.support_max == 6
    assert log_pmf(p, 6) > -math.inf
    assert log_pmf(p, 7) == -math.inf
    assert pmf_table(p).size == 7
    # at an integer truncation point the last mass is exactly zero
    assert log_pmf(GPParams(2.0, -0.25), 8) == -math.inf


def test_log_pmf_rejects_bad_counts():
    with pytest.raises(InvalidParameterError):
        log_pmf(GPParams(1.0, 0.1), -1)
    with pytest.raises(InvalidParameterError):
        log_pmf(GPParams(1.0, 0.1), 1.5)


@given(lam=st.floats(0.05, 30.0), theta=st.floats(0.0, 0.9))
def test_pmf_sums_to_one(lam, theta):
    total = pmf_table(GPParams(lam, theta)).sum()
    assert total == pytest.approx(1.0, abs=1e-12)


@given(lam=st.floats(0.1, 20.0), theta=st.floats(0.0, 0.8))
def test_table_moments_match_closed_form(lam, theta):
    p = GPParams(lam, theta)
    pmf = pmf_table(p)
    y = np.arange(pmf.size)
    m = pmf @ y
    v = pmf @ (y - m) ** 2
    assert m == pytest.approx(p.mean, rel=1e-7)
    assert v == pytest.approx(p.variance, rel=1e-6)
    assert mean_var(p) == (p.mean, p.variance)


def test_convolution_closure_pointwise():
    for theta in (0.0, 0.3, 0.6):
        a, b = pmf_table(GPParams(1.3, theta), 60), pmf_table(GPParams(2.1, theta), 60)
        conv = np.convolve(a, b)[:61]
        np.testing.assert_allclose(conv, pmf_table(GPParams(3.4, theta), 60), atol=1e-12)


# --- reparametrization ---------------------------------------------------------


def test_reparam_round_trip_and_moments():
    r = GPReparam.from_zeta(4.0, 1.3)
    p = r.to_params()
    assert p.mean == pytest.approx(4.0, rel=1e-12)
    assert p.variance / p.mean == pytest.approx(r.rho, rel=1e-12)
    assert GPReparam.from_rho(4.0, r.rho).zeta == pytest.approx(1.3, rel=1e-12)


def test_reparam_poisson_point():
    r = GPReparam.from_zeta(1.0, math.log(0.75))
    assert r.theta == 0.0


def test_reparam_rejects_inconsistent_fields():
    with pytest.raises(InvalidParameterError):
        GPReparam(mu=1.0, rho=2.0, zeta=0.0)
    with pytest.raises(InvalidParameterError):
        GPReparam.from_rho(1.0, 0.2)


# --- sampling ---------------------------------------------------------------


@pytest.mark.parametrize("method", ["branching", "inversion"])
@pytest.mark.parametrize("lam, theta", [(2.0, 0.4), (0.5, 0.7), (6.0, 0.0)])
def test_sampler_distribution(method, lam, theta):
    rng = np.random.default_rng(12)
    y = sample_array(np.full(40000, lam), theta, rng, method=method)
    pmf = pmf_table(GPParams(lam, theta))
    cut = 12
    obs = np.bincount(np.minimum(y, cut), minlength=cut + 1)
    exp = np.append(pmf[:cut], 1 - pmf[:cut].sum()) * y.size
    keep = exp > 5
    chi2 = np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep])
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-3


def test_negative_theta_sampler_respects_support():
    rng = np.random.default_rng(3)
    y = sample_array(np.full(20000, 2.0), -0.25, rng)
    assert y.max() <= 8
    pmf = pmf_table(GPParams(2.0, -0.25))
    pmf = pmf / pmf.sum()
    np.testing.assert_allclose(np.bincount(y, minlength=9) / y.size, pmf, atol=0.012)


def test_heavy_tail_is_sampled_beyond_cap():
    # theta close to 1 stresses the inversion cap extension
    rng = np.random.default_rng(5)
    y = sample_array(np.full(5000, 1.0), 0.95, rng, method="inversion")
    assert y.mean() == pytest.approx(20.0, rel=0.25)


def test_sampler_is_deterministic_and_scalar_api():
    a = sample_array([1.0, 2.0, 3.0], 0.3, np.random.default_rng(9))
    b = sample_array([1.0, 2.0, 3.0], 0.3, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    assert isinstance(sample(GPParams(1.0, 0.3), np.random.default_rng(0)), int)


def test_sampler_rejects_bad_input():
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidParameterError):
        sample_array([1.0, -1.0], 0.2, rng)
    with pytest.raises(InvalidParameterError):
        sample_array([1.0], 1.2, rng)


# --- Lambert W, mgf and cumulants ---------------------------------------------------


@given(z=st.floats(-math.exp(-1) + 1e-12, 50.0))
def test_lambert_residual(z):
    w = float(lambert_w0(z))
    assert w * math.exp(w) == pytest.approx(z, rel=1e-12, abs=1e-14)
    assert w >= -1.0


def test_lambert_rejects_below_branch_point():
    with pytest.raises(DomainError):
        lambert_w0(-0.5)


@pytest.mark.parametrize("lam, theta, u", [(2.0, 0.4, 0.3), (1.0, 0.7, -0.5), (3.0, 0.0, 0.2), (2.0, -0.2, 0.4)])
def test_mgf_closed_form_vs_summation(lam, theta, u):
    assert log_mgf(GPParams(lam, theta), u) == pytest.approx(log_mgf_by_summation(lam, theta, u), rel=1e-9)
    assert mgf(GPParams(lam, theta), 0.0) == pytest.approx(1.0, abs=1e-12)


def test_mgf_domain_boundary():
    p = GPParams(1.0, 0.4)
    edge = 0.4 - 1.0 - math.log(0.4)
    assert math.isfinite(log_mgf(p, edge - 1e-6))
    with pytest.raises(DomainError):
        log_mgf(p, edge + 1e-6)


def test_stirling_and_polynomials():
    assert [stirling2(4, l) for l in range(1, 5)] == [1, 7, 6, 1]
    assert w_poly(1) == (1,)
    assert w_poly(2) == (-2, -1)
    assert w_poly(3) == (9, 8, 2)
    with pytest.raises(RangeError):
        stirling2(21, 1)
    with pytest.raises(RangeError):
        w_poly(13)


@pytest.mark.parametrize("theta", [0.4, -0.3, 0.85])
def test_zeta_j0_reproduces_cumulants(theta):
    lam = 2.0
    p = GPParams(lam, theta)
    for j in range(1, 5):
        assert -lam * zeta_j0(theta, j) == pytest.approx(cumulant(p, j), rel=1e-12)


def test_zeta_j0_domain():
    with pytest.raises(DomainError):
        zeta_j0(0.0, 1)
    with pytest.raises(RangeError):
        zeta_j0(0.3, 9)


@pytest.mark.parametrize("lam, theta", [(2.0, 0.4), (1.5, 0.7), (2.0, 0.0), (4.0, -0.2)])
def test_exact_derivatives_vs_finite_differences(lam, theta):
    p = GPParams(lam, theta)
    for order in range(1, 5):
        exact = log_mgf_derivative(p, -0.2, order)
        num = richardson_derivative(lambda u: log_mgf(p, u), -0.2, order, h=0.08, levels=4)
        assert exact == pytest.approx(num, rel=1e-5)


def test_subexp_constants_bound_holds():
    p = GPParams(2.0, 0.4)
    r = 0.15
    v, b = subexp_constants(p, r)
    assert v == pytest.approx(p.variance)
    for u in np.linspace(-r, r, 41):
        centered = log_mgf(p, u) - u * p.mean
        assert centered <= v * u * u / (2 * (1 - b * abs(u))) + 1e-12


def test_subexp_constants_domain():
    with pytest.raises(DomainError):
        subexp_constants(GPParams(1.0, 0.4), 0.0)
    with pytest.raises(DomainError):
        subexp_constants(GPParams(1.0, 0.4), 0.4 - 1.0 - math.log(0.4))

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpnet.diagnostics import (
    autocorrelation,
    credible_ellipse_coverage,
    dic,
    ess,
    ess_fraction,
    flatten_draws,
    geweke,
    posterior_mean_state,
    summarize,
)
from gpnet.errors import DegenerateSequenceError, InvalidParameterError
from gpnet.network import log_likelihood
from gpnet.sampler import SamplerConfig, run_chain
from gpnet.simgen import SimDesign, generate


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / math.sqrt(1 - phi * phi)
    for k in range(1, n):
        x[k] = phi * x[k - 1] + e[k]
    return x


def test_autocorrelation_matches_direct_sum():
    x = ar1(0.5, 200, 0)
    c = x - x.mean()
    direct = [c[: 200 - k] @ c[k:] / (c @ c) for k in range(5)]
    np.testing.assert_allclose(autocorrelation(x)[:5], direct, atol=1e-12)


@pytest.mark.parametrize("phi", [0.0, 0.5, 0.9])
def test_ess_of_ar1_process(phi):
    x = ar1(phi, 50_000, 1)
    expected = (1 - phi) / (1 + phi)
    assert ess_fraction(x) == pytest.approx(expected, rel=0.1)


def test_ess_is_capped_at_n():
    # antithetic sequences would otherwise claim ESS > n
    x = np.tile([1.0, -1.0], 200) + np.random.default_rng(0).normal(0, 0.01, 400)
    assert ess(x) <= 400


@given(n=st.integers(0, 9))
def test_ess_needs_enough_draws(n):
    with pytest.raises(DegenerateSequenceError):
        ess(np.arange(float(n)))


def test_constant_sequences_are_degenerate():
    with pytest.raises(DegenerateSequenceError):
        ess(np.ones(100))


def test_geweke_detects_drift_and_passes_stationary():
    rng = np.random.default_rng(2)
    _, p = geweke(rng.standard_normal(5000))
    assert p > 0.01
    _, p = geweke(np.linspace(0, 1, 5000) + rng.normal(0, 0.1, 5000))
    assert p < 1e-6


def test_geweke_pvalues_are_roughly_uniform():
    rng = np.random.default_rng(3)
    ps = np.array([geweke(rng.standard_normal(1000))[1] for _ in range(300)])
    assert 0.02 < np.mean(ps < 0.05) < 0.09


def test_geweke_validation():
    with pytest.raises(InvalidParameterError):
        geweke(np.arange(1000.0), 0.6, 0.5)
    with pytest.raises(DegenerateSequenceError):
        geweke(np.arange(100.0))


def test_credible_ellipse_coverage():
    rng = np.random.default_rng(4)
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    draws = rng.multivariate_normal([1.0, -1.0], cov, size=(4000, 1, 1))
    inside = credible_ellipse_coverage(draws, np.array([[[1.2, -0.8]]]))
    outside = credible_ellipse_coverage(draws, np.array([[[5.0, 5.0]]]))
    assert inside.shape == (1, 1) and inside[0, 0] and not outside[0, 0]
    truths = rng.multivariate_normal([1.0, -1.0], cov, size=2000)
    hits = [credible_ellipse_coverage(draws, t.reshape(1, 1, 2))[0, 0] for t in truths]
    assert np.mean(hits) == pytest.approx(0.95, abs=0.015)


@pytest.fixture(scope="module")
def m1_chain():
    design = SimDesign.reference("M1", seed=0, n_nodes=10, n_times=5)
    net, truth = generate(design)
    spec = design.model_spec()
    chain = run_chain(spec, net, SamplerConfig(iterations=400, burn_in=200, thin=2, seed=1))
    return spec, net, chain


def test_dic_definition(m1_chain):
    spec, net, chain = m1_chain
    d, p = dic(chain, spec, net)
    ll_bar = log_likelihood(spec, posterior_mean_state(chain.draws), net)
    lls = [log_likelihood(spec, s, net) for s in chain.draws]
    np.testing.assert_allclose(chain.loglik, lls, rtol=1e-10)
    assert p == pytest.approx(2 * (ll_bar - np.mean(lls)), rel=1e-8)
    assert d == pytest.approx(-2 * ll_bar + 2 * p, rel=1e-12)
    assert p > 0


def test_summaries(m1_chain):
    _, net, chain = m1_chain
    names, mat = flatten_draws(chain.draws)
    assert names[:3] == ["zeta", "theta", "sigma_eps2"]
    assert "alpha_10" in names and "f_5" in names
    assert mat.shape == (len(chain.draws), len(names))
    summary = summarize(chain)
    row = summary["theta"]
    assert row.lower <= row.median <= row.upper
    assert row.mean == pytest.approx(chain.stack("theta").mean())
    header, body = summary.as_table()
    assert len(body) == len(names) and header[0] == "parameter"

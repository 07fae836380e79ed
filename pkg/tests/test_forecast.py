import math

import numpy as np
import pytest
from scipy import stats

from gpnet.errors import InsufficientDrawsError, InvalidParameterError, NoMissingEntriesError
from gpnet.forecast import (
    impute_missing,
    mask_random_entries,
    posterior_predictive_strength,
    predictive_metrics,
    randomized_pit,
)
from gpnet.gp import GPParams, pmf_table, sample_array
from gpnet.network import ModelSpec, ParamState, log_mean_tensor
from gpnet.sampler import ChainOutput, SamplerConfig
from gpnet.simgen import SimDesign, generate
from oracles import ks_uniform_pvalue


def degenerate_chain(spec, state, n_draws):
    cfg = SamplerConfig(iterations=n_draws + 1, burn_in=1, thin=1)
    return ChainOutput(spec, cfg, [state.copy() for _ in range(n_draws)], np.zeros(n_draws), {})


@pytest.fixture(scope="module")
def m1_case():
    design = SimDesign.reference("M1", seed=1, n_nodes=10, n_times=4)
    net, truth = generate(design)
    return design.model_spec(), net, truth


def test_pit_is_uniform_under_the_true_law():
    rng = np.random.default_rng(0)
    lam = rng.uniform(0.5, 4.0, 3000)
    truths = sample_array(lam, 0.4, rng)
    draws = sample_array(np.repeat(lam[:, None], 400, axis=1), 0.4, rng)
    u = randomized_pit(truths, draws, rng)
    assert ks_uniform_pvalue(u) > 0.01
    assert u.mean() == pytest.approx(0.5, abs=0.02)
    assert u.var() == pytest.approx(1 / 12, abs=0.01)


def test_metrics_hand_example():
    draws = np.tile(np.arange(100), (2, 1))  # predictive uniform on 0..99
    rep = predictive_metrics([10, 200], draws, np.random.default_rng(0))
    assert rep.mae == pytest.approx((39.5 + 150.5) / 2)
    assert rep.mse == pytest.approx((39.5 ** 2 + 150.5 ** 2) / 2)
    assert rep.rmse == pytest.approx(math.sqrt(rep.mse))
    assert rep.coverage == 0.5 and rep.pe == 0.5
    lo, hi = np.quantile(np.arange(100), [0.025, 0.975])
    assert rep.awi == pytest.approx(hi - lo)
    assert rep.n_targets == 2


def test_metric_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(InsufficientDrawsError):
        predictive_metrics([1], np.zeros((1, 50)), rng)
    with pytest.raises(InvalidParameterError):
        predictive_metrics([1, 2], np.zeros((1, 200)), rng)


def test_mask_random_entries(m1_case):
    _, net, _ = m1_case
    masked, targets, truths = mask_random_entries(net, 3, np.random.default_rng(5))
    assert masked.n_masked_pairs == 3
    for (i, j, t), c in zip(targets, truths):
        assert t == net.n_times - 1 and i < j
        assert not masked.mask[i, j, t] and not masked.mask[j, i, t]
        assert c == net.counts[i, j, t]
    with pytest.raises(InvalidParameterError):
        mask_random_entries(net, 10_000, np.random.default_rng(0))


def test_impute_requires_missing_entries(m1_case):
    spec, net, truth = m1_case
    with pytest.raises(NoMissingEntriesError):
        impute_missing(degenerate_chain(spec, truth, 5), spec, net, np.random.default_rng(0))


def test_imputation_draws_follow_the_edge_law(m1_case):
    spec, net, truth = m1_case
    masked, targets, _ = mask_random_entries(net, 2, np.random.default_rng(1))
    pred = impute_missing(degenerate_chain(spec, truth, 20000), spec, masked, np.random.default_rng(2))
    assert pred.targets == sorted(targets, key=lambda x: (x[2], x[0], x[1]))
    eta = log_mean_tensor(spec, truth, net)
    for (i, j, t), row in zip(pred.targets, pred.values):
        law = GPParams(math.exp(eta[t, i, j]) * truth.rho ** -0.5, truth.theta)
        assert row.mean() == pytest.approx(law.mean, abs=4 * math.sqrt(law.variance / row.size))
        pmf = pmf_table(law, 3)
        assert np.mean(row == 0) == pytest.approx(pmf[0], abs=0.015)


def test_strength_band_centered_on_theory():
    spec = ModelSpec.m1()
    design = SimDesign.reference("M1", seed=2, n_nodes=12, n_times=3)
    net, _ = generate(design)
    state = ParamState.zeros(spec, net, zeta=1.0)
    state.f = np.array([0.5, 0.8, 1.1])
    band = posterior_predictive_strength(degenerate_chain(spec, state, 4000), spec, net, np.random.default_rng(3))
    # with alpha = 0 each edge has mean e^f, so the average strength is (N - 1) e^f
    expected = (net.n_nodes - 1) * np.exp(state.f)
    se = band.draws.std(axis=0, ddof=1) / math.sqrt(band.draws.shape[0])
    assert np.all(np.abs(band.mean - expected) < 4 * se)
    assert np.all(band.lower < band.mean) and np.all(band.mean < band.upper)


def test_strength_band_poisson_dispersion():
    # GP edges are overdispersed relative to Poisson: check the band's variance
    spec = ModelSpec.m1()
    design = SimDesign.reference("M1", seed=2, n_nodes=12, n_times=1)
    net, _ = generate(design)
    state = ParamState.zeros(spec, net, zeta=2.0)
    state.f = np.array([0.3])
    band = posterior_predictive_strength(degenerate_chain(spec, state, 6000), spec, net, np.random.default_rng(4))
    n = net.n_nodes
    pairs = n * (n - 1) / 2
    var_theory = 4 / n ** 2 * pairs * math.exp(0.3) * state.rho
    ratio = band.draws[:, 0].var(ddof=1) / var_theory
    assert stats.chi2.sf(ratio * 5999, 5999) > 0.001 and stats.chi2.cdf(ratio * 5999, 5999) > 0.001

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpnet.errors import ConfigError
from gpnet.gp import sample_array
from gpnet.network import POISSON_ZETA, ModelSpec, ParamState, TemporalNetwork, log_likelihood, log_mean_tensor
from gpnet.sampler import (
    GibbsKernel,
    SamplerConfig,
    apply_identification,
    initial_state,
    posterior_mode,
    procrustes_align,
    run_chain,
    sigma_eps_posterior,
    taylor_gradient,
    update_alpha,
    update_delta,
    update_f,
    update_sigma_eps,
    update_x,
    update_zeta,
)
from gpnet.simgen import SimDesign, generate
from test_network import random_network


def small(kind, seed=0, n=8, t=4):
    return generate(SimDesign.reference(kind, seed=seed, n_nodes=n, n_times=t))


def m3_case(seed, zeta, n=8, t=4):
    """Random M3 state and a network simulated from it (so the likelihood
    is finite even when theta < 0)."""
    rng = np.random.default_rng(seed)
    spec = ModelSpec.m3()
    shell = TemporalNetwork(np.zeros((n, n, t), dtype=int))
    state = ParamState.zeros(spec, shell, zeta)
    state.alpha = rng.normal(0.5, 0.3, n)
    state.f = rng.normal(0.0, 0.3, t)
    state.x = rng.normal(0.0, 0.5, (t, n, 2))
    lam = np.exp(log_mean_tensor(spec, state, shell)) * state.rho ** -0.5
    iu = np.triu_indices(n, 1)
    y = np.zeros((t, n, n), dtype=int)
    y[:, iu[0], iu[1]] = sample_array(lam[:, iu[0], iu[1]], state.theta, rng)
    return spec, state, TemporalNetwork.from_slices(y + y.transpose(0, 2, 1))


def fd_gradient(spec, state, net, i, t, c, h=1e-6):
    def ll_at(v):
        s = state.copy()
        s.x[t, i] = v
        return GibbsKernel(spec, net, s).ll[t, i, :].sum()

    return np.array([(ll_at(c + h * e) - ll_at(c - h * e)) / (2 * h) for e in np.eye(len(c))])


# --- configuration -----------------------------------------------------------------


@pytest.mark.parametrize("kw", [dict(iterations=10, burn_in=10), dict(thin=0), dict(step_x=1.5),
                                dict(likelihood="nb"), dict(step_alpha=-1.0), dict(seed=-1)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SamplerConfig(**kw)


def test_retained_count():
    assert SamplerConfig(iterations=2000, burn_in=800, thin=4).n_retained == 300


# --- gradient and caches --------------------------------------------------------------


@pytest.mark.parametrize("zeta", [1.5, math.log(0.5)])  # theta > 0 and theta < 0
def test_taylor_gradient_matches_finite_differences(zeta):
    spec, state, net = m3_case(1, zeta)
    rng = np.random.default_rng(0)
    for _ in range(5):
        i, t = int(rng.integers(net.n_nodes)), int(rng.integers(net.n_times))
        c = state.x[t, i] + rng.normal(0, 0.01, 2)
        g = taylor_gradient(state, spec, net, i, t, c)
        np.testing.assert_allclose(g, fd_gradient(spec, state, net, i, t, c), rtol=1e-5, atol=1e-7)


def test_taylor_gradient_requires_m3():
    net = random_network()
    with pytest.raises(ConfigError):
        taylor_gradient(ParamState.zeros(ModelSpec.m1(), net), ModelSpec.m1(), net, 0, 0, np.zeros(2))


@pytest.mark.parametrize("kind", ["M1", "M2", "M3"])
def test_kernel_cache_tracks_likelihood(kind):
    net, truth = small(kind, seed=2)
    spec = SimDesign.reference(kind, n_nodes=8, n_times=4).model_spec()
    kern = GibbsKernel(spec, net, truth.copy())
    rng = np.random.default_rng(1)
    for _ in range(5):
        kern.step_alpha(rng, np.full(net.n_nodes, 0.2))
        if kind == "M2":
            kern.step_delta(rng, 0.05)
        else:
            kern.step_f(rng, np.full(net.n_times, 0.2))
            kern.draw_sigma_eps(rng)
        if kind == "M3":
            kern.step_x(rng, np.full(net.n_nodes, 0.5))
        kern.step_zeta(rng, 0.2)
        assert kern.loglik() == pytest.approx(log_likelihood(spec, kern.state, net), rel=1e-10)


# --- single-block updates ---------------------------------------------------------------


def test_sigma_eps_posterior_parameters():
    spec = ModelSpec.m1(ig_a=3.0, ig_b=0.5)
    a, b = sigma_eps_posterior(spec, np.array([0.0, 1.0, 3.0]))
    assert a == 4.0 and b == pytest.approx(0.5 + (1 + 4) / 2)


def test_wrappers_do_not_mutate_and_check_kind():
    net, truth = small("M3", seed=3)
    spec = ModelSpec.m3(x0_var=0.25)
    rng = np.random.default_rng(0)
    before = truth.copy()
    for new in (update_alpha(truth, spec, net, rng, 0.3), update_f(truth, spec, net, rng, 0.3),
                update_x(truth, spec, net, rng, 1.0), update_zeta(truth, spec, net, rng, 0.3),
                update_sigma_eps(truth, spec, rng)):
        new.validate(spec, net)
    np.testing.assert_array_equal(truth.x, before.x)
    np.testing.assert_array_equal(truth.alpha, before.alpha)
    with pytest.raises(ConfigError):
        update_delta(truth, spec, net, rng, 0.1)
    with pytest.raises(ConfigError):
        update_x(truth, ModelSpec.m1(), net, rng)


def test_zero_step_never_moves():
    net, truth = small("M1", seed=4)
    spec = ModelSpec.m1()
    new = update_alpha(truth, spec, net, np.random.default_rng(0), 0.0)
    np.testing.assert_array_equal(new.alpha, truth.alpha)


# --- identification ----------------------------------------------------------------


@given(seed=st.integers(0, 10_000))
def test_procrustes_recovers_rotation(seed):
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=(6, 2))
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    aligned, r = procrustes_align(ref @ q, ref)
    np.testing.assert_allclose(aligned, ref, atol=1e-10)
    np.testing.assert_allclose(r @ r.T, np.eye(2), atol=1e-12)


def test_procrustes_warns_on_degenerate_configuration():
    x = np.zeros((4, 2))
    x[:, 0] = np.arange(4.0)
    with pytest.warns(RuntimeWarning):
        procrustes_align(x, x)


@pytest.mark.parametrize("kind", ["M1", "M3"])
def test_identification_preserves_likelihood(kind):
    net, truth = small(kind, seed=5)
    spec = SimDesign.reference(kind, n_nodes=8, n_times=4).model_spec()
    ident = apply_identification(truth, spec, reference=np.random.default_rng(0).normal(size=(4, 8, 2))
                                 if kind == "M3" else None)
    assert abs(ident.alpha.mean()) < 1e-12
    if kind == "M3":
        np.testing.assert_allclose(ident.x.mean(axis=1), 0.0, atol=1e-12)
    assert log_likelihood(spec, ident, net) == pytest.approx(log_likelihood(spec, truth, net), rel=1e-10)


# --- initialization and driver --------------------------------------------------------


def test_mode_search_improves_log_posterior():
    net, _ = small("M3", seed=6)
    spec = ModelSpec.m3()
    start = initial_state(spec, net, zeta=1.0)
    mode = posterior_mode(spec, net, start)
    assert log_likelihood(spec, mode, net) > log_likelihood(spec, start, net)


def test_run_chain_is_reproducible_and_shaped():
    net, _ = small("M2", seed=7)
    spec = ModelSpec.m2()
    cfg = SamplerConfig(iterations=120, burn_in=40, thin=4, seed=11)
    a = run_chain(spec, net, cfg)
    b = run_chain(spec, net, cfg)
    assert len(a.draws) == cfg.n_retained == 20
    assert a.trace["theta"].shape == (80,)
    np.testing.assert_array_equal(a.stack("delta"), b.stack("delta"))
    np.testing.assert_array_equal(a.loglik, b.loglik)
    assert set(a.acceptance) == {"alpha", "delta", "zeta"}
    c = run_chain(spec, net, SamplerConfig(iterations=120, burn_in=40, thin=4, seed=12))
    assert not np.array_equal(a.stack("delta"), c.stack("delta"))


def test_poisson_chain_holds_zeta_fixed():
    net, _ = small("M1", seed=8)
    chain = run_chain(ModelSpec.m1(), net, SamplerConfig(iterations=60, burn_in=20, thin=2, likelihood="poisson"))
    assert np.all(chain.stack("zeta") == POISSON_ZETA)
    assert np.all(chain.stack("theta") == 0.0)
    assert "zeta" not in chain.acceptance


def test_m3_draws_are_identified():
    net, _ = small("M3", seed=9)
    chain = run_chain(ModelSpec.m3(), net, SamplerConfig(iterations=60, burn_in=20, thin=4))
    x = chain.stack("x")
    np.testing.assert_allclose(x.mean(axis=2), 0.0, atol=1e-10)
    np.testing.assert_allclose(chain.stack("alpha").mean(axis=1), 0.0, atol=1e-10)

import math

import numpy as np
import pytest

from gpnet.errors import ConfigError
from gpnet.network import avg_strength, log_mean_tensor, m2_regressors, theta_of_zeta
from gpnet.sampler import SamplerConfig
from gpnet.simgen import SimDesign, focal_parameter, generate, misspecification_experiment


def test_design_validation():
    with pytest.raises(ConfigError):
        SimDesign("M5")
    with pytest.raises(ConfigError):
        SimDesign("M1")
    with pytest.raises(ConfigError):
        SimDesign("M2", delta=(0.5,), presample=(1.0, 1.0))
    with pytest.raises(ConfigError):
        SimDesign.reference("M1", n_nodes=1)
    assert SimDesign.desk("m3").kind == "M3" and SimDesign.desk("m3").n_nodes == 20


def test_reference_design_values():
    d = SimDesign.reference("M3")
    assert (d.n_nodes, d.n_times, d.zeta, d.mu_alpha, d.sigma_alpha2) == (40, 8, 3.0, 2.0, 0.025)
    assert theta_of_zeta(d.zeta)[1] == pytest.approx(0.78, abs=0.01)
    assert SimDesign.reference("M2").delta == (0.7, 0.1)


@pytest.mark.parametrize("kind", ["M1", "M2", "M3"])
def test_generate_is_deterministic_and_consistent(kind):
    design = SimDesign.reference(kind, seed=3, n_nodes=10, n_times=5)
    net, truth = generate(design)
    net2, truth2 = generate(design)
    np.testing.assert_array_equal(net.counts, net2.counts)
    np.testing.assert_array_equal(truth.alpha, truth2.alpha)
    assert net.counts.shape == (10, 10, 5)
    spec = design.model_spec()
    truth.validate(spec, net)
    other, _ = generate(SimDesign.reference(kind, seed=4, n_nodes=10, n_times=5))
    assert not np.array_equal(net.counts, other.counts)


def test_m2_truth_uses_realized_lags():
    design = SimDesign.reference("M2", seed=1, n_nodes=12, n_times=6)
    net, truth = generate(design)
    reg = m2_regressors(design.model_spec(), net)
    assert reg[2, 0] == pytest.approx(math.log(avg_strength(net, 1) / 11))
    assert reg[0].tolist() == [1.2, 1.2]


def test_generated_counts_match_the_model_mean():
    design = SimDesign.reference("M1", seed=2, n_nodes=60, n_times=3)
    net, truth = generate(design)
    spec = design.model_spec()
    mu = np.exp(log_mean_tensor(spec, truth, net))
    iu = np.triu_indices(60, 1)
    y = net.y[:, iu[0], iu[1]]
    m = mu[:, iu[0], iu[1]]
    z = (y - m).sum() / math.sqrt((m * truth.rho).sum())
    assert abs(z) < 4


def test_focal_parameters():
    _, truth = generate(SimDesign.reference("M2", seed=0, n_nodes=6, n_times=3))
    assert focal_parameter("M2", truth) == pytest.approx(0.8)


def test_misspecification_experiment_runs():
    design = SimDesign.reference("M1", seed=0, n_nodes=10, n_times=4)
    rep = misspecification_experiment(design, SamplerConfig(iterations=200, burn_in=100, thin=2))
    assert rep.kind == "M1" and rep.seed == 0
    assert rep.gp_preferred == (rep.dic_gp < rep.dic_poisson)
    assert rep.pdic_gp > 0 and 0 < rep.theta_gp < 1
    assert rep.focal_gp[1] <= rep.focal_gp[0] <= rep.focal_gp[2]

"""Synthetic GP networks from the three model classes, and the
overdispersion misspecification experiment (GP fit vs Poisson fit)."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .gp import sample_array
from .network import ModelSpec, ParamState, TemporalNetwork, theta_of_zeta

__all__ = ["SimDesign", "generate", "MisspecReport", "misspecification_experiment", "focal_parameter"]


@dataclass(frozen=True)
class SimDesign:
    """Ground truth and size of a simulated network.

    Use :meth:`reference` for the published designs (40 nodes) or
    :meth:`desk` for the 20-node version used in tests.
    """

    kind: str
    n_nodes: int = 40
    n_times: int = 8
    zeta: float = 3.0
    mu_alpha: float = 0.0
    sigma_alpha2: float = 0.01
    seed: int = 0
    # M1 / M3
    sigma_eps2: Optional[float] = None
    f0_var: Optional[float] = None
    # M2
    delta: Optional[tuple] = None
    presample: Optional[tuple] = None
    # M3
    d: Optional[int] = None
    sigma_x2: Optional[float] = None
    x0_var: Optional[float] = None

    def __post_init__(self):
        kind = str(self.kind).upper()
        object.__setattr__(self, "kind", kind)
        if kind not in ("M1", "M2", "M3"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.n_nodes < 2 or self.n_times < 1:
            raise ConfigError("need at least two nodes and one time point")
        if not self.sigma_alpha2 > 0:
            raise ConfigError("sigma_alpha2 must be positive")
        need = {
            "M1": ("sigma_eps2", "f0_var"),
            "M2": ("delta", "presample"),
            "M3": ("sigma_eps2", "f0_var", "d", "sigma_x2", "x0_var"),
        }[kind]
        for name in need:
            if getattr(self, name) is None:
                raise ConfigError(f"{kind} design requires {name}")
        for name in ("sigma_eps2", "f0_var", "sigma_x2", "x0_var"):
            v = getattr(self, name)
            if name in need and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if kind == "M2":
            delta = tuple(float(v) for v in self.delta)
            pre = tuple(float(v) for v in self.presample)
            if len(delta) != len(pre) or len(delta) > self.n_times:
                raise ConfigError("delta and presample need the same length k <= T")
            object.__setattr__(self, "delta", delta)
            object.__setattr__(self, "presample", pre)

    @classmethod
    def reference(cls, kind: str, seed: int = 0, n_nodes: int = 40, n_times: int = 8) -> "SimDesign":
        kind = kind.upper()
        base = dict(kind=kind, n_nodes=n_nodes, n_times=n_times, zeta=3.0, seed=seed)
        if kind == "M1":
            return cls(**base, mu_alpha=0.0, sigma_alpha2=0.01, sigma_eps2=0.01, f0_var=25.0)
        if kind == "M2":
            return cls(**base, mu_alpha=0.0, sigma_alpha2=0.01, delta=(0.7, 0.1), presample=(1.2, 1.2))
        if kind == "M3":
            return cls(**base, mu_alpha=2.0, sigma_alpha2=0.025, sigma_eps2=0.01, f0_var=1.0,
                       d=2, sigma_x2=0.25, x0_var=0.25)
        raise ConfigError(f"unknown model kind {kind!r}")

    @classmethod
    def desk(cls, kind: str, seed: int = 0) -> "SimDesign":
        return cls.reference(kind, seed=seed, n_nodes=20, n_times=8)

    def model_spec(self, **kw) -> ModelSpec:
        """Fitting specification that matches this design."""
        if self.kind == "M1":
            return ModelSpec.m1(**kw)
        if self.kind == "M2":
            return ModelSpec.m2(k=len(self.delta), presample=self.presample, **kw)
        return ModelSpec.m3(d=self.d, sigma_x2=self.sigma_x2, x0_var=self.x0_var, **kw)


def _draw_slice(eta_t: np.ndarray, rho: float, theta: float, rng) -> np.ndarray:
    n = eta_t.shape[0]
    iu = np.triu_indices(n, 1)
    vals = sample_array(np.exp(eta_t[iu]) * rho ** -0.5, theta, rng)
    out = np.zeros((n, n), dtype=np.int64)
    out[iu] = vals
    return out + out.T


def generate(design: SimDesign) -> tuple[TemporalNetwork, ParamState]:
    """Simulate a network and return it with the (unidentified) truth."""
    rng = np.random.default_rng(design.seed)
    n, t_len = design.n_nodes, design.n_times
    rho, theta = theta_of_zeta(design.zeta)
    alpha = rng.normal(design.mu_alpha, math.sqrt(design.sigma_alpha2), n)
    base = alpha[:, None] + alpha[None, :]
    truth = ParamState(alpha=alpha, zeta=float(design.zeta))
    slices = np.zeros((t_len, n, n), dtype=np.int64)

    if design.kind in ("M1", "M3"):
        f0 = rng.normal(0.0, math.sqrt(design.f0_var))
        f = f0 + np.cumsum(rng.normal(0.0, math.sqrt(design.sigma_eps2), t_len))
        truth.f, truth.sigma_eps2 = f, float(design.sigma_eps2)
    if design.kind == "M3":
        x0 = rng.normal(0.0, math.sqrt(design.x0_var), (n, design.d))
        steps = rng.normal(0.0, math.sqrt(design.sigma_x2), (t_len, n, design.d))
        x = x0[None] + np.cumsum(steps, axis=0)
        truth.x = x

    if design.kind == "M2":
        k = len(design.delta)
        delta = np.array(design.delta)
        truth.delta = delta
        log_yt = list(reversed(design.presample))  # oldest first
        for t in range(t_len):
            lags = np.array([log_yt[-l] for l in range(1, k + 1)])
            eta = base + float(delta @ lags)
            slices[t] = _draw_slice(eta, rho, theta, rng)
            ytil = slices[t].sum() / n / (n - 1)
            if ytil <= 0:
                raise ConfigError(f"simulated slice {t} is empty; the autoregression is undefined")
            log_yt.append(math.log(ytil))
    else:
        for t in range(t_len):
            eta = base + truth.f[t]
            if design.kind == "M3":
                diff = truth.x[t][:, None, :] - truth.x[t][None, :, :]
                eta = eta - np.einsum("ijk,ijk->ij", diff, diff)
            slices[t] = _draw_slice(eta, rho, theta, rng)

    return TemporalNetwork.from_slices(slices), truth


def focal_parameter(kind: str, state: ParamState) -> float:
    """Scalar tracked in the misspecification study: ``f_1`` (M1),
    ``delta_1 + delta_2`` (M2) or the first coordinate ``x_{1,1,1}`` (M3)."""
    if kind == "M1":
        return float(state.f[0])
    if kind == "M2":
        return float(np.sum(state.delta[:2]))
    return float(state.x[0, 0, 0])


@dataclass
class MisspecReport:
    kind: str
    seed: int
    dic_gp: float
    pdic_gp: float
    dic_poisson: float
    pdic_poisson: float
    focal_truth: float
    focal_gp: tuple  # (mean, 2.5%, 97.5%)
    focal_poisson: tuple
    theta_gp: float

    @property
    def gp_preferred(self) -> bool:
        return self.dic_gp < self.dic_poisson


def misspecification_experiment(design: SimDesign, config, spec: Optional[ModelSpec] = None) -> MisspecReport:
    """Fit the design's model class under GP and Poisson likelihoods."""
    from .diagnostics import dic
    from .sampler import apply_identification, run_chain

    network, truth = generate(design)
    spec = design.model_spec() if spec is None else spec
    truth_id = apply_identification(truth, spec)
    reference = truth_id.x if spec.kind == "M3" else None
    out = {}
    for lik in ("gp", "poisson"):
        chain = run_chain(spec, network, replace(config, likelihood=lik), reference=reference)
        d, p = dic(chain, spec, network)
        vals = np.array([focal_parameter(spec.kind, s) for s in chain.draws])
        out[lik] = (d, p, (float(vals.mean()), float(np.quantile(vals, 0.025)), float(np.quantile(vals, 0.975))),
                    float(chain.stack("theta").mean()))
    return MisspecReport(
        kind=spec.kind,
        seed=design.seed,
        dic_gp=out["gp"][0],
        pdic_gp=out["gp"][1],
        dic_poisson=out["poisson"][0],
        pdic_poisson=out["poisson"][1],
        focal_truth=focal_parameter(spec.kind, truth_id),
        focal_gp=out["gp"][2],
        focal_poisson=out["poisson"][2],
        theta_gp=out["gp"][3],
    )

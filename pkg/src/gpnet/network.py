"""Temporal count networks, the three dynamic mean specifications and the
joint GP log-likelihood.

Arrays are indexed from zero.  User-facing tensors follow the ``(N, N, T)``
layout; the likelihood code works on ``(T, N, N)`` views that are built
once and cached on the network object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, InvalidParameterError, MaskedEntryError
from .gp import log_pmf_vec

__all__ = [
    "TemporalNetwork",
    "ModelSpec",
    "ParamState",
    "theta_of_zeta",
    "POISSON_ZETA",
    "mean_intensity",
    "log_mean_tensor",
    "m2_regressors",
    "avg_strength",
    "edge_loglik",
    "log_likelihood",
]

# zeta at which rho = 1 and theta = 0
POISSON_ZETA = math.log(0.75)


def theta_of_zeta(zeta: float) -> tuple[float, float]:
    """Map ``zeta`` to ``(rho, theta)`` with ``rho = 1/4 + e^zeta``."""
    rho = 0.25 + math.exp(zeta)
    return rho, 1.0 - rho ** -0.5


@dataclass(frozen=True, eq=False)
class TemporalNetwork:
    """Undirected weighted network observed at ``T`` time points.

    ``counts`` and ``mask`` have shape ``(N, N, T)``; ``mask`` is True where
    the count is observed.  Diagonal entries are ignored and stored as zero.
    """

    counts: np.ndarray
    mask: Optional[np.ndarray] = None
    labels: Optional[tuple] = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 3 or counts.shape[0] != counts.shape[1]:
            raise InvalidParameterError(f"counts must have shape (N, N, T), got {counts.shape}")
        n, _, t = counts.shape
        if n < 2 or t < 1:
            raise InvalidParameterError("need at least two nodes and one time point")
        if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
            raise InvalidParameterError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise InvalidParameterError("counts must be nonnegative")
        mask = np.ones(counts.shape, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != counts.shape:
            raise InvalidParameterError("mask shape must match counts")
        if not np.array_equal(counts, counts.transpose(1, 0, 2)):
            raise InvalidParameterError("each time slice of counts must be symmetric")
        if not np.array_equal(mask, mask.transpose(1, 0, 2)):
            raise InvalidParameterError("each time slice of mask must be symmetric")
        diag = np.arange(n)
        counts = counts.copy()
        counts[diag, diag, :] = 0
        # unobserved cells carry no information; zero them so that nothing
        # downstream can accidentally depend on them
        counts[~mask] = 0
        mask = mask.copy()
        mask[diag, diag, :] = False
        counts.setflags(write=False)
        mask.setflags(write=False)
        labels = tuple(str(i) for i in range(n)) if self.labels is None else tuple(str(s) for s in self.labels)
        if len(labels) != n:
            raise InvalidParameterError("need one label per node")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "labels", labels)

    @property
    def n_nodes(self) -> int:
        return self.counts.shape[0]

    @property
    def n_times(self) -> int:
        return self.counts.shape[2]

    @classmethod
    def from_slices(cls, slices, mask=None, labels=None) -> "TemporalNetwork":
        """Build from a ``(T, N, N)`` stack of adjacency matrices."""
        counts = np.moveaxis(np.asarray(slices), 0, -1)
        if mask is not None:
            mask = np.moveaxis(np.asarray(mask), 0, -1)
        return cls(counts, mask, labels)

    def with_mask(self, mask) -> "TemporalNetwork":
        """Same counts with a new observation mask (``(N, N, T)``)."""
        return TemporalNetwork(self.counts, mask, self.labels)

    def permuted(self, perm: Sequence[int]) -> "TemporalNetwork":
        perm = np.asarray(perm)
        return TemporalNetwork(
            self.counts[np.ix_(perm, perm)],
            self.mask[np.ix_(perm, perm)],
            tuple(self.labels[p] for p in perm),
        )

    # (T, N, N) views used by the likelihood code
    @cached_property
    def y(self) -> np.ndarray:
        return np.ascontiguousarray(np.moveaxis(self.counts, -1, 0), dtype=float)

    @cached_property
    def observed(self) -> np.ndarray:
        """Observed entries of the strict upper triangle, shape ``(T, N, N)``."""
        m = np.moveaxis(self.mask, -1, 0)
        return np.ascontiguousarray(m & np.triu(np.ones((self.n_nodes,) * 2, dtype=bool), 1))

    @cached_property
    def observed_sym(self) -> np.ndarray:
        """Observed off-diagonal entries (both triangles), shape ``(T, N, N)``."""
        return np.ascontiguousarray(np.moveaxis(self.mask, -1, 0))

    @cached_property
    def log_fact(self) -> np.ndarray:
        return gammaln(self.y + 1.0)

    @property
    def n_masked_pairs(self) -> int:
        iu = np.triu_indices(self.n_nodes, 1)
        return int((~self.mask[iu[0], iu[1], :]).sum())


@dataclass(frozen=True)
class ModelSpec:
    """Model class and prior hyperparameters.

    Fields that do not belong to ``kind`` must stay ``None``; the
    constructors :meth:`m1`, :meth:`m2` and :meth:`m3` fill in defaults.
    """

    kind: str
    sigma_alpha2: float = 1.0
    mu_zeta: float = 0.0
    sigma_zeta2: float = 10.0
    # M1 / M3
    ig_a: Optional[float] = None
    ig_b: Optional[float] = None
    f0_prior_var: Optional[float] = None
    # M2
    k: Optional[int] = None
    sigma_delta2: Optional[float] = None
    presample: Optional[tuple] = None
    # M3 (x0_var: prior variance of the starting positions x_i0; 0 pins them at the origin)
    d: Optional[int] = None
    sigma_x2: Optional[float] = None
    x0_var: Optional[float] = None

    _KIND_FIELDS = {
        "M1": ("ig_a", "ig_b", "f0_prior_var"),
        "M2": ("k", "sigma_delta2", "presample"),
        "M3": ("ig_a", "ig_b", "f0_prior_var", "d", "sigma_x2", "x0_var"),
    }

    def __post_init__(self):
        kind = str(self.kind).upper()
        object.__setattr__(self, "kind", kind)
        if kind not in self._KIND_FIELDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        own = self._KIND_FIELDS[kind]
        optional = {"ig_a", "ig_b", "f0_prior_var", "k", "sigma_delta2", "presample", "d", "sigma_x2", "x0_var"}
        for name in optional:
            value = getattr(self, name)
            if name in own and value is None:
                raise ConfigError(f"{kind} requires {name}")
            if name not in own and value is not None:
                raise ConfigError(f"{name} is not a parameter of {kind}")
        for name in ("sigma_alpha2", "sigma_zeta2", "ig_a", "ig_b", "f0_prior_var", "sigma_delta2", "sigma_x2"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if not math.isfinite(self.mu_zeta):
            raise ConfigError("mu_zeta must be finite")
        if kind == "M2":
            if int(self.k) != self.k or self.k < 1:
                raise ConfigError("lag order k must be a positive integer")
            pre = tuple(float(v) for v in self.presample)
            if len(pre) != self.k:
                raise ConfigError(f"presample needs {self.k} values, got {len(pre)}")
            object.__setattr__(self, "presample", pre)
            object.__setattr__(self, "k", int(self.k))
        if kind == "M3" and (int(self.d) != self.d or self.d < 1):
            raise ConfigError("latent dimension d must be a positive integer")
        if kind == "M3" and not (math.isfinite(self.x0_var) and self.x0_var >= 0):
            raise ConfigError("x0_var must be nonnegative")

    @classmethod
    def m1(cls, ig_a=2.0, ig_b=2.0, f0_prior_var=100.0, **kw) -> "ModelSpec":
        return cls("M1", ig_a=ig_a, ig_b=ig_b, f0_prior_var=f0_prior_var, **kw)

    @classmethod
    def m2(cls, k=2, sigma_delta2=1.0, presample=None, **kw) -> "ModelSpec":
        presample = (1.2,) * k if presample is None else presample
        return cls("M2", k=k, sigma_delta2=sigma_delta2, presample=presample, **kw)

    @classmethod
    def m3(cls, d=2, sigma_x2=0.25, x0_var=0.0, ig_a=2.0, ig_b=2.0, f0_prior_var=100.0, **kw) -> "ModelSpec":
        return cls("M3", ig_a=ig_a, ig_b=ig_b, f0_prior_var=f0_prior_var, d=d, sigma_x2=sigma_x2,
                   x0_var=x0_var, **kw)

    @classmethod
    def default(cls, kind: str, **kw) -> "ModelSpec":
        return {"M1": cls.m1, "M2": cls.m2, "M3": cls.m3}[kind.upper()](**kw)

    @property
    def has_f(self) -> bool:
        return self.kind in ("M1", "M3")

    def check_network(self, network: TemporalNetwork) -> None:
        if self.kind == "M2" and self.k > network.n_times:
            raise ConfigError(f"lag order {self.k} exceeds T={network.n_times}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}


@dataclass
class ParamState:
    """Current values of all model parameters (unused blocks are ``None``)."""

    alpha: np.ndarray
    zeta: float
    f: Optional[np.ndarray] = None
    sigma_eps2: Optional[float] = None
    delta: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None  # (T, N, d)

    def copy(self) -> "ParamState":
        return ParamState(
            alpha=self.alpha.copy(),
            zeta=float(self.zeta),
            f=None if self.f is None else self.f.copy(),
            sigma_eps2=None if self.sigma_eps2 is None else float(self.sigma_eps2),
            delta=None if self.delta is None else self.delta.copy(),
            x=None if self.x is None else self.x.copy(),
        )

    @property
    def rho(self) -> float:
        return theta_of_zeta(self.zeta)[0]

    @property
    def theta(self) -> float:
        return theta_of_zeta(self.zeta)[1]

    @classmethod
    def zeros(cls, spec: ModelSpec, network: TemporalNetwork, zeta: float = POISSON_ZETA) -> "ParamState":
        n, t = network.n_nodes, network.n_times
        state = cls(alpha=np.zeros(n), zeta=float(zeta))
        if spec.has_f:
            state.f = np.zeros(t)
            state.sigma_eps2 = 0.1
        if spec.kind == "M2":
            state.delta = np.zeros(spec.k)
        if spec.kind == "M3":
            state.x = np.zeros((t, n, spec.d))
        return state

    def validate(self, spec: ModelSpec, network: TemporalNetwork) -> None:
        n, t = network.n_nodes, network.n_times
        if np.shape(self.alpha) != (n,):
            raise InvalidParameterError("alpha must have one entry per node")
        if not math.isfinite(self.zeta):
            raise InvalidParameterError("zeta must be finite")
        want = {
            "f": (t,) if spec.has_f else None,
            "delta": (spec.k,) if spec.kind == "M2" else None,
            "x": (t, n, spec.d) if spec.kind == "M3" else None,
        }
        for name, shape in want.items():
            value = getattr(self, name)
            if shape is None and value is not None:
                raise InvalidParameterError(f"{name} is not a parameter of {spec.kind}")
            if shape is not None and np.shape(value) != shape:
                raise InvalidParameterError(f"{name} must have shape {shape}")
        if spec.has_f:
            if self.sigma_eps2 is None or not self.sigma_eps2 > 0:
                raise InvalidParameterError("sigma_eps2 must be positive")
        elif self.sigma_eps2 is not None:
            raise InvalidParameterError(f"sigma_eps2 is not a parameter of {spec.kind}")

    def as_dict(self) -> dict:
        out = {"alpha": self.alpha.tolist(), "zeta": float(self.zeta)}
        for name in ("f", "delta", "x"):
            value = getattr(self, name)
            if value is not None:
                out[name] = np.asarray(value).tolist()
        if self.sigma_eps2 is not None:
            out["sigma_eps2"] = float(self.sigma_eps2)
        return out


def avg_strength(network: TemporalNetwork, t: int) -> float:
    """Average node strength ``N^-1 sum_i sum_{j != i} y_ijt`` of slice ``t``."""
    if not 0 <= t < network.n_times:
        raise IndexError(f"time index {t} out of range")
    n = network.n_nodes
    off = ~np.eye(n, dtype=bool)
    if not network.mask[:, :, t][off].all():
        raise MaskedEntryError(
            f"slice {t} has unobserved entries; impute them before computing the average strength"
        )
    return float(network.counts[:, :, t].sum()) / n


def m2_regressors(spec: ModelSpec, network: TemporalNetwork) -> np.ndarray:
    """``(T, k)`` matrix whose ``(t, l)`` entry is ``log ytilde_{t-l-1}``.

    ``ytilde_s = S_s / (N - 1)``; pre-sample values come from ``spec.presample``
    with ``presample[0]`` standing for the most recent pre-sample period.
    The last slice never enters as a regressor, so it may contain
    unobserved entries.
    """
    if spec.kind != "M2":
        raise ConfigError("regressors only exist for M2")
    spec.check_network(network)
    n, t_len, k = network.n_nodes, network.n_times, spec.k
    logs = np.empty(t_len)
    for s in range(t_len - 1):
        ytil = avg_strength(network, s) / (n - 1)
        # an all-zero slice would give log 0; treat it as a domain problem
        if ytil <= 0:
            raise InvalidParameterError(f"slice {s} is empty; log average strength undefined")
        logs[s] = math.log(ytil)
    reg = np.empty((t_len, k))
    for t in range(t_len):
        for lag in range(1, k + 1):
            s = t - lag
            reg[t, lag - 1] = logs[s] if s >= 0 else spec.presample[-s - 1]
    return reg


def _pair_sqdist(x: np.ndarray) -> np.ndarray:
    # x: (..., N, d) -> (..., N, N)
    diff = x[..., :, None, :] - x[..., None, :, :]
    return np.einsum("...k,...k->...", diff, diff)


def log_mean_tensor(spec: ModelSpec, state: ParamState, network: TemporalNetwork, regressors=None) -> np.ndarray:
    """``log mu_ijt`` for every cell, shape ``(T, N, N)`` (diagonal meaningless)."""
    a = state.alpha
    base = a[:, None] + a[None, :]
    if spec.kind == "M2":
        reg = m2_regressors(spec, network) if regressors is None else regressors
        level = reg @ state.delta
    else:
        level = state.f
    eta = base[None, :, :] + np.asarray(level, dtype=float)[:, None, None]
    if spec.kind == "M3":
        eta = eta - _pair_sqdist(state.x)
    return eta


def mean_intensity(spec: ModelSpec, state: ParamState, network: TemporalNetwork, i: int, j: int, t: int) -> float:
    """Mean ``mu_ijt`` of edge ``(i, j)`` at time ``t``."""
    n, t_len = network.n_nodes, network.n_times
    if not (0 <= i < n and 0 <= j < n and 0 <= t < t_len):
        raise IndexError("node or time index out of range")
    if i == j:
        raise IndexError("self-loops have no mean")
    eta = state.alpha[i] + state.alpha[j]
    if spec.kind == "M2":
        eta += float(m2_regressors(spec, network)[t] @ state.delta)
    else:
        eta += state.f[t]
    if spec.kind == "M3":
        diff = state.x[t, i] - state.x[t, j]
        eta -= float(diff @ diff)
    return math.exp(eta)


def edge_loglik(y, log_fact, eta, rho: float, theta: float) -> np.ndarray:
    """Per-edge GP log-likelihood at log-mean ``eta``."""
    lam = np.exp(eta) * rho ** -0.5
    return log_pmf_vec(y, lam, theta, log_fact)


def log_likelihood(spec: ModelSpec, state: ParamState, network: TemporalNetwork, regressors=None) -> float:
    """Joint log-likelihood over observed unordered pairs ``j > i``."""
    rho, theta = theta_of_zeta(state.zeta)
    obs = network.observed
    if not obs.any():
        return 0.0
    eta = log_mean_tensor(spec, state, network, regressors)
    ll = edge_loglik(network.y[obs], network.log_fact[obs], eta[obs], rho, theta)
    return float(ll.sum())

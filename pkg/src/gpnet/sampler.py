"""Metropolis-within-Gibbs sampler for the GP network models.

One iteration updates, in order, the node effects ``alpha``; the dynamic
block (``delta`` for M2, ``f`` and ``sigma_eps2`` for M1, plus the latent
coordinates ``x`` for M3); and finally the dispersion coordinate ``zeta``.

The kernel keeps two ``(T, N, N)`` caches, the log-means ``eta`` and the
per-edge log-likelihood ``ll`` (zero on unobserved cells and on the
diagonal), so that single-node and single-slice moves only touch the
affected rows.  Sites that are conditionally independent given the rest
(the even and odd time points of ``f``, and of ``x`` for a fixed node) are
proposed and accepted together, which is the same Markov kernel as a
sequential sweep over those sites.

Each block draws from its own random stream spawned from the chain seed,
so switching one block off leaves the draws of every other block intact.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .network import (
    POISSON_ZETA,
    ModelSpec,
    ParamState,
    TemporalNetwork,
    edge_loglik,
    log_mean_tensor,
    m2_regressors,
    theta_of_zeta,
)

__all__ = [
    "SamplerConfig",
    "ChainOutput",
    "initial_state",
    "posterior_mode",
    "warm_start",
    "GibbsKernel",
    "update_alpha",
    "update_delta",
    "update_f",
    "update_sigma_eps",
    "update_x",
    "update_zeta",
    "taylor_gradient",
    "run_chain",
    "apply_identification",
    "procrustes_align",
]

_BLOCKS = ("alpha", "dyn", "sigma", "x", "zeta")
TARGET_SCALAR = 0.44
TARGET_MULTI = 0.234
TARGET_TAYLOR = 0.574


@dataclass(frozen=True)
class SamplerConfig:
    """MCMC run settings.

    ``step_x`` is the initial scale ``h`` in (0, 1] of the Taylor proposal
    for latent coordinates; ``h = 1`` is the plain normal approximation.
    """

    iterations: int = 5000
    burn_in: int = 2000
    thin: int = 5
    seed: int = 0
    step_alpha: float = 0.1
    step_delta: float = 0.02
    step_f: float = 0.1
    step_zeta: float = 0.1
    step_x: float = 0.1
    adapt: bool = True
    likelihood: str = "gp"
    update_zeta: bool = True
    zeta_init: Optional[float] = None
    warm_start: bool = True

    def __post_init__(self):
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ConfigError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        for name in ("step_alpha", "step_delta", "step_f", "step_zeta"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0 < self.step_x <= 1:
            raise ConfigError("step_x must lie in (0, 1]")
        if self.likelihood not in ("gp", "poisson"):
            raise ConfigError("likelihood must be 'gp' or 'poisson'")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    @property
    def samples_zeta(self) -> bool:
        return self.update_zeta and self.likelihood == "gp"


@dataclass
class ChainOutput:
    """Retained (identified) draws plus bookkeeping.

    ``trace`` holds every post-burn-in iteration, unthinned, for a few
    scalar and vector summaries: ``zeta``, ``theta``, ``loglik``, ``alpha``
    and, by model, ``f``, ``sigma_eps2`` or ``delta``.
    """

    spec: ModelSpec
    config: SamplerConfig
    draws: list
    loglik: np.ndarray
    acceptance: dict
    trace: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed

    def stack(self, name: str) -> np.ndarray:
        """Stack one parameter across retained draws."""
        if name == "theta":
            return np.array([d.theta for d in self.draws])
        if name == "rho":
            return np.array([d.rho for d in self.draws])
        return np.array([np.asarray(getattr(d, name), dtype=float) for d in self.draws])


# ---------------------------------------------------------------------------
# initialization


def _classical_mds(sq: np.ndarray, d: int) -> np.ndarray:
    n = sq.shape[0]
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ sq @ j
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1][:d]
    vals = np.clip(vals[order], 0.0, None)
    return vecs[:, order] * np.sqrt(vals)


def _slice_positions(network, alpha, c, d, fallback):
    """Classical MDS of each slice, Procrustes-aligned to its predecessor."""
    y, obs = network.y, network.observed_sym
    out = np.empty((network.n_times, network.n_nodes, d))
    prev = None
    for t in range(network.n_times):
        logm = np.where(obs[t], np.log(y[t] + 0.5), fallback)
        sq = np.clip(alpha[:, None] + alpha[None, :] + c - logm, 0.0, None)
        np.fill_diagonal(sq, 0.0)
        pos = _classical_mds(sq, d)
        if prev is not None:
            pos = procrustes_align(pos, prev)[0]
        out[t] = prev = pos
    return out


def initial_state(spec: ModelSpec, network: TemporalNetwork, zeta: float = 0.0,
                  positions: str = "average") -> ParamState:
    """Data-driven starting point that only looks at observed entries.

    For M3 the latent positions come from classical MDS of the
    time-averaged log counts (``positions="average"``) or of every slice
    separately (``positions="slices"``).
    """
    spec.check_network(network)
    n, t_len = network.n_nodes, network.n_times
    y, obs = network.y, network.observed_sym
    w = obs.sum(axis=0)
    pair_mean = np.where(w > 0, (y * obs).sum(axis=0) / np.maximum(w, 1), np.nan)
    logm = np.log(pair_mean + 0.5)
    off = ~np.eye(n, dtype=bool)
    overall = np.nanmean(logm[off]) if np.any(w[off] > 0) else 0.0
    logm = np.where(np.isnan(logm), overall, logm)
    np.fill_diagonal(logm, overall)
    row = np.array([logm[i, off[i]].mean() for i in range(n)])
    alpha = row - row.mean()
    state = ParamState.zeros(spec, network, zeta)
    state.alpha = alpha
    # per-slice level shifts relative to the time average
    slice_mean = np.array([
        y[t][obs[t]].mean() if obs[t].any() else np.nan for t in range(t_len)
    ])
    slice_log = np.log(slice_mean + 0.5)
    fill = np.nanmean(slice_log) if np.any(~np.isnan(slice_log)) else 0.0
    shift = np.where(np.isnan(slice_log), fill, slice_log) - fill
    if spec.kind == "M1":
        state.f = overall + shift
        state.sigma_eps2 = 0.1
    elif spec.kind == "M2":
        state.alpha = alpha + 0.5 * overall
        state.delta = np.zeros(spec.k)
    else:
        resid = alpha[:, None] + alpha[None, :] - logm
        np.fill_diagonal(resid, np.nan)
        c = -np.nanmin(resid)
        if positions == "slices":
            state.x = _slice_positions(network, alpha, c, spec.d, logm)
        elif positions == "average":
            sq = resid + c
            np.fill_diagonal(sq, 0.0)
            pos = _classical_mds(np.clip(sq, 0.0, None), spec.d)
            state.x = np.repeat(pos[None], t_len, axis=0)
        else:
            raise ConfigError(f"unknown position initializer {positions!r}")
        state.f = c + shift
        state.sigma_eps2 = 0.1
    return state


def _pack(spec, state):
    parts = [state.alpha, state.delta if spec.kind == "M2" else state.f]
    if spec.kind == "M3":
        parts.append(state.x.ravel())
    return np.concatenate(parts)


def _unpack(spec, state, vec):
    n = state.alpha.size
    out = state.copy()
    out.alpha = vec[:n].copy()
    if spec.kind == "M2":
        out.delta = vec[n:n + spec.k].copy()
        return out
    t_len = state.f.size
    out.f = vec[n:n + t_len].copy()
    if spec.kind == "M3":
        out.x = vec[n + t_len:].reshape(state.x.shape).copy()
    return out


def _mode_search(spec, network, state, regressors=None, max_iter: int = 500):
    from scipy.optimize import minimize

    kern = GibbsKernel(spec, network, state.copy(), regressors)
    y, obs = kern.y, kern.obs
    upper = network.observed
    rho, theta = kern.rho, kern.theta
    t_len = kern.t_len

    def neg_post(vec):
        s = _unpack(spec, state, vec)
        eta = log_mean_tensor(spec, s, network, kern.reg)
        ll = kern._ll(eta, y, kern.lf, obs)
        total = ll.sum() / 2.0
        lam = np.exp(eta) * rho ** -0.5
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            score = 1.0 + (y - 1.0) * lam / (lam + theta * y) - lam
        score = np.where(obs, score, 0.0)
        g_alpha = score.sum(axis=(0, 2)) - s.alpha / spec.sigma_alpha2
        lp = -0.5 * float(s.alpha @ s.alpha) / spec.sigma_alpha2
        grads = [g_alpha]
        if spec.kind == "M2":
            g_level = np.where(upper, score, 0.0).sum(axis=(1, 2))
            grads.append(kern.reg.T @ g_level - s.delta / spec.sigma_delta2)
            lp -= 0.5 * float(s.delta @ s.delta) / spec.sigma_delta2
        else:
            f = s.f
            s2, v0 = s.sigma_eps2, spec.f0_prior_var
            inc = np.diff(f)
            lp -= 0.5 * f[0] ** 2 / v0 + 0.5 * float(inc @ inc) / s2
            g_f = np.where(upper, score, 0.0).sum(axis=(1, 2))
            g_f[0] -= f[0] / v0
            g_f[1:] -= inc / s2
            g_f[:-1] += inc / s2
            grads.append(g_f)
        if spec.kind == "M3":
            x = s.x
            diff = x[:, :, None, :] - x[:, None, :, :]
            g_x = -2.0 * np.einsum("tij,tijk->tik", score, diff)
            step = np.diff(np.concatenate([np.zeros((1,) + x.shape[1:]), x]), axis=0)
            step_var = np.full(t_len, spec.sigma_x2)
            step_var[0] += spec.x0_var
            lp -= 0.5 * float(np.sum(step ** 2 / step_var[:, None, None]))
            g_x -= step / step_var[:, None, None]
            g_x[:-1] += step[1:] / spec.sigma_x2
            grads.append(g_x.ravel())
        val = -(total + lp)
        if not np.isfinite(val):
            return np.inf, np.zeros_like(vec)
        return val, -np.concatenate(grads)

    x0 = _pack(spec, state)
    f0, _ = neg_post(x0)
    res = minimize(neg_post, x0, jac=True, method="L-BFGS-B", options={"maxiter": max_iter})
    if not np.isfinite(res.fun) or not res.fun <= f0:
        return state.copy(), -f0
    return _unpack(spec, state, res.x), -float(res.fun)


def posterior_mode(spec: ModelSpec, network: TemporalNetwork, state: ParamState, regressors=None,
                   max_iter: int = 500) -> ParamState:
    """Maximize the log posterior over ``alpha``, ``f``/``delta`` and ``x``
    with ``zeta`` and ``sigma_eps2`` held at their values in ``state``.

    Returns ``state`` unchanged if the optimizer cannot improve on it.
    """
    return _mode_search(spec, network, state, regressors, max_iter)[0]


def _zeta_mode(spec, network, state, regressors):
    from scipy.optimize import minimize_scalar

    eta = log_mean_tensor(spec, state, network, regressors)
    y, lf, obs = network.y[network.observed], network.log_fact[network.observed], eta[network.observed]

    def neg(z):
        rho, theta = theta_of_zeta(z)
        val = edge_loglik(y, lf, obs, rho, theta).sum() - 0.5 * (z - spec.mu_zeta) ** 2 / spec.sigma_zeta2
        return -val if np.isfinite(val) else np.inf

    res = minimize_scalar(neg, bounds=(POISSON_ZETA, 8.0), method="bounded")
    return float(res.x) if np.isfinite(res.fun) else state.zeta


def warm_start(spec: ModelSpec, network: TemporalNetwork, zeta: float, regressors=None,
               fit_zeta: bool = True) -> ParamState:
    """Posterior-mode starting point.

    Alternates a mode search over the location parameters with a 1-d
    search over ``zeta`` (if ``fit_zeta``).  For M3, both position
    initializers are tried and the one reaching the higher log posterior
    wins.
    """
    layouts = ("average", "slices") if spec.kind == "M3" else ("average",)
    best, best_val = None, -np.inf
    for layout in layouts:
        state = initial_state(spec, network, zeta, positions=layout)
        state, val = _mode_search(spec, network, state, regressors)
        if fit_zeta:
            for _ in range(2):
                state.zeta = _zeta_mode(spec, network, state, regressors)
                state, val = _mode_search(spec, network, state, regressors)
        if val > best_val:
            best, best_val = state, val
    return best


# ---------------------------------------------------------------------------
# kernel


def _rm_gain(n: int) -> float:
    return (n + 1.0) ** -0.6


class GibbsKernel:
    """Stateful Metropolis-within-Gibbs kernel; mutates ``state`` in place."""

    def __init__(self, spec: ModelSpec, network: TemporalNetwork, state: ParamState, regressors=None):
        spec.check_network(network)
        state.validate(spec, network)
        self.spec, self.net, self.state = spec, network, state
        self.y, self.lf, self.obs = network.y, network.log_fact, network.observed_sym
        self.n, self.t_len = network.n_nodes, network.n_times
        self.reg = None
        if spec.kind == "M2":
            self.reg = m2_regressors(spec, network) if regressors is None else np.asarray(regressors, float)
        self.refresh()

    # caches
    def refresh(self) -> None:
        self.rho, self.theta = theta_of_zeta(self.state.zeta)
        self.eta = log_mean_tensor(self.spec, self.state, self.net, self.reg)
        self.ll = self._ll(self.eta, self.y, self.lf, self.obs)

    def _ll(self, eta, y, lf, obs, rho=None, theta=None):
        rho = self.rho if rho is None else rho
        theta = self.theta if theta is None else theta
        return np.where(obs, edge_loglik(y, lf, eta, rho, theta), 0.0)

    def loglik(self) -> float:
        return float(self.ll.sum()) / 2.0

    # alpha -------------------------------------------------------------
    def alpha_delta(self, i: int, new: float):
        """Log-likelihood change from setting ``alpha_i = new``, using only
        the edges incident to ``i``."""
        d = new - self.state.alpha[i]
        row_eta = self.eta[:, i, :] + d
        row_ll = self._ll(row_eta, self.y[:, i, :], self.lf[:, i, :], self.obs[:, i, :])
        return float(row_ll.sum() - self.ll[:, i, :].sum()), row_eta, row_ll

    def _set_row(self, i, t_idx, row_eta, row_ll):
        self.eta[t_idx, i, :] = row_eta
        self.eta[t_idx, :, i] = row_eta
        self.ll[t_idx, i, :] = row_ll
        self.ll[t_idx, :, i] = row_ll

    def step_alpha(self, rng, steps: np.ndarray) -> np.ndarray:
        a = self.state.alpha
        s2 = self.spec.sigma_alpha2
        acc = np.zeros(self.n, dtype=bool)
        z = rng.standard_normal(self.n)
        logu = np.log(rng.random(self.n))
        all_t = slice(None)
        for i in range(self.n):
            if steps[i] == 0:
                continue
            new = a[i] + steps[i] * z[i]
            dll, row_eta, row_ll = self.alpha_delta(i, new)
            dlp = (a[i] ** 2 - new ** 2) / (2 * s2)
            if logu[i] < dll + dlp:
                diag = self.eta[:, i, i] + 2 * (new - a[i])
                a[i] = new
                self._set_row(i, all_t, row_eta, row_ll)
                self.eta[:, i, i] = diag
                acc[i] = True
        return acc

    # f ------------------------------------------------------------------
    def _f_logprior_terms(self, f_vals, idx, f):
        """Prior terms of ``f`` that involve sites ``idx`` (neighbors fixed)."""
        s2 = self.state.sigma_eps2
        v0 = self.spec.f0_prior_var
        prev = np.where(idx > 0, f[np.maximum(idx - 1, 0)], 0.0)
        var_prev = np.where(idx > 0, s2, v0)
        out = -((f_vals - prev) ** 2) / (2 * var_prev)
        has_next = idx < self.t_len - 1
        nxt = f[np.minimum(idx + 1, self.t_len - 1)]
        out -= np.where(has_next, (nxt - f_vals) ** 2 / (2 * s2), 0.0)
        return out

    def step_f(self, rng, steps: np.ndarray) -> np.ndarray:
        f = self.state.f
        acc = np.zeros(self.t_len, dtype=bool)
        for parity in (0, 1):
            idx = np.arange(parity, self.t_len, 2)
            if idx.size == 0:
                continue
            z = rng.standard_normal(idx.size)
            logu = np.log(rng.random(idx.size))
            active = steps[idx] > 0
            prop = f[idx] + steps[idx] * z
            d = prop - f[idx]
            eta_new = self.eta[idx] + d[:, None, None]
            ll_new = self._ll(eta_new, self.y[idx], self.lf[idx], self.obs[idx])
            dll = (ll_new.sum(axis=(1, 2)) - self.ll[idx].sum(axis=(1, 2))) / 2.0
            dlp = self._f_logprior_terms(prop, idx, f) - self._f_logprior_terms(f[idx], idx, f)
            ok = active & (logu < dll + dlp)
            sel = idx[ok]
            f[sel] = prop[ok]
            self.eta[sel] = eta_new[ok]
            self.ll[sel] = ll_new[ok]
            acc[sel] = True
        return acc

    def draw_sigma_eps(self, rng) -> float:
        a_bar, b_bar = sigma_eps_posterior(self.spec, self.state.f)
        self.state.sigma_eps2 = float(b_bar / rng.gamma(a_bar))
        return self.state.sigma_eps2

    # delta --------------------------------------------------------------
    def step_delta(self, rng, step: float) -> bool:
        delta = self.state.delta
        z = rng.standard_normal(delta.size)
        logu = math.log(rng.random())
        if step == 0:
            return False
        prop = delta + step * z
        shift = self.reg @ (prop - delta)
        eta_new = self.eta + shift[:, None, None]
        ll_new = self._ll(eta_new, self.y, self.lf, self.obs)
        dll = (ll_new.sum() - self.ll.sum()) / 2.0
        dlp = (delta @ delta - prop @ prop) / (2 * self.spec.sigma_delta2)
        if logu < dll + dlp:
            self.state.delta = prop
            self.eta, self.ll = eta_new, ll_new
            return True
        return False

    # zeta ---------------------------------------------------------------
    def step_zeta(self, rng, step: float) -> bool:
        zeta = self.state.zeta
        z = rng.standard_normal()
        logu = math.log(rng.random())
        if step == 0:
            return False
        prop = zeta + step * z
        rho, theta = theta_of_zeta(prop)
        if not -1.0 < theta < 1.0:
            return False
        ll_new = self._ll(self.eta, self.y, self.lf, self.obs, rho, theta)
        dll = (ll_new.sum() - self.ll.sum()) / 2.0
        mu, s2 = self.spec.mu_zeta, self.spec.sigma_zeta2
        dlp = ((zeta - mu) ** 2 - (prop - mu) ** 2) / (2 * s2)
        if logu < dll + dlp:
            self.state.zeta = float(prop)
            self.rho, self.theta = rho, theta
            self.ll = ll_new
            return True
        return False

    # x ------------------------------------------------------------------
    def _x_rows(self, i, idx, xi):
        """Log-mean rows and gradients for node ``i`` at times ``idx`` with
        its coordinates set to ``xi`` (shape ``(len(idx), d)``)."""
        a = self.state.alpha
        diff = xi[:, None, :] - self.state.x[idx]  # (p, N, d)
        sq = np.einsum("pnk,pnk->pn", diff, diff)
        row_eta = a[i] + a[None, :] + self.state.f[idx][:, None] - sq
        y, lf, obs = self.y[idx, i, :], self.lf[idx, i, :], self.obs[idx, i, :]
        row_ll = self._ll(row_eta, y, lf, obs)
        lam = np.exp(row_eta) * self.rho ** -0.5
        with np.errstate(divide="ignore", invalid="ignore"):
            score = 1.0 + (y - 1.0) * lam / (lam + self.theta * y) - lam
        score = np.where(obs, score, 0.0)
        grad = -2.0 * np.einsum("pn,pnk->pk", score, diff)
        return row_eta, row_ll, grad

    def _x_prior(self, i, idx):
        """Conditional prior mean and variance of ``x_it`` given neighbors.

        The first position has prior variance ``x0_var + sigma_x2`` (the
        random walk starts from ``x_i0 ~ N(0, x0_var I)``, a fixed origin
        when ``x0_var = 0``).
        """
        x = self.state.x
        s2 = self.spec.sigma_x2
        first = idx == 0
        prev = np.where(first[:, None], 0.0, x[np.maximum(idx - 1, 0), i])
        prev_var = np.where(first, self.spec.x0_var + s2, s2)
        interior = idx < self.t_len - 1
        nxt = x[np.minimum(idx + 1, self.t_len - 1), i]
        prec = 1.0 / prev_var + np.where(interior, 1.0 / s2, 0.0)
        var = 1.0 / prec
        mean = var[:, None] * (prev / prev_var[:, None] + np.where(interior[:, None], nxt / s2, 0.0))
        return mean, var

    def step_x(self, rng, h: np.ndarray) -> np.ndarray:
        x = self.state.x
        d = self.spec.d
        acc = np.zeros((self.n, self.t_len), dtype=bool)
        for i in range(self.n):
            for parity in (0, 1):
                idx = np.arange(parity, self.t_len, 2)
                if idx.size == 0:
                    continue
                z = rng.standard_normal((idx.size, d))
                logu = np.log(rng.random(idx.size))
                cur = x[idx, i].copy()
                m, v = self._x_prior(i, idx)
                hv = h[i] * v
                _, _, g_cur = self._x_rows(i, idx, cur)
                fwd = cur + h[i] * (m - cur + v[:, None] * g_cur)
                prop = fwd + np.sqrt(hv)[:, None] * z
                row_eta, row_ll, g_prop = self._x_rows(i, idx, prop)
                rev = prop + h[i] * (m - prop + v[:, None] * g_prop)
                dll = row_ll.sum(axis=1) - self.ll[idx, i, :].sum(axis=1)
                dlp = (np.sum((cur - m) ** 2, axis=1) - np.sum((prop - m) ** 2, axis=1)) / (2 * v)
                dlq = (np.sum((prop - fwd) ** 2, axis=1) - np.sum((cur - rev) ** 2, axis=1)) / (2 * hv)
                with np.errstate(invalid="ignore"):
                    ok = logu < dll + dlp + dlq
                sel = idx[ok]
                if sel.size:
                    x[sel, i] = prop[ok]
                    diag = self.eta[sel, i, i]
                    self._set_row(i, sel, row_eta[ok], row_ll[ok])
                    self.eta[sel, i, i] = diag
                    acc[i, sel] = True
        return acc


def sigma_eps_posterior(spec: ModelSpec, f: np.ndarray) -> tuple[float, float]:
    """Inverse-gamma full-conditional parameters of ``sigma_eps2`` given ``f``."""
    inc = np.diff(np.asarray(f, dtype=float))
    return spec.ig_a + inc.size / 2.0, spec.ig_b + float(inc @ inc) / 2.0


# ---------------------------------------------------------------------------
# single-block public wrappers (one sweep each, on a copy of ``state``)


def _as_steps(step, size):
    return np.broadcast_to(np.asarray(step, dtype=float), (size,)).copy()


def update_alpha(state, spec, network, rng, step) -> ParamState:
    k = GibbsKernel(spec, network, state.copy())
    k.step_alpha(rng, _as_steps(step, network.n_nodes))
    return k.state


def update_delta(state, spec, network, rng, step, regressors=None) -> ParamState:
    if spec.kind != "M2":
        raise ConfigError("delta only exists for M2")
    k = GibbsKernel(spec, network, state.copy(), regressors)
    k.step_delta(rng, float(step))
    return k.state


def update_f(state, spec, network, rng, step) -> ParamState:
    if not spec.has_f:
        raise ConfigError("f only exists for M1 and M3")
    k = GibbsKernel(spec, network, state.copy())
    k.step_f(rng, _as_steps(step, network.n_times))
    return k.state


def update_sigma_eps(state, spec, rng) -> ParamState:
    if not spec.has_f:
        raise ConfigError("sigma_eps2 only exists for M1 and M3")
    out = state.copy()
    a_bar, b_bar = sigma_eps_posterior(spec, out.f)
    out.sigma_eps2 = float(b_bar / rng.gamma(a_bar))
    return out


def update_x(state, spec, network, rng, h=1.0) -> ParamState:
    if spec.kind != "M3":
        raise ConfigError("x only exists for M3")
    k = GibbsKernel(spec, network, state.copy())
    k.step_x(rng, _as_steps(h, network.n_nodes))
    return k.state


def update_zeta(state, spec, network, rng, step, regressors=None) -> ParamState:
    k = GibbsKernel(spec, network, state.copy(), regressors)
    k.step_zeta(rng, float(step))
    return k.state


def taylor_gradient(state, spec, network, i: int, t: int, center) -> np.ndarray:
    """Gradient of the log-likelihood of node ``i``'s edges at time ``t``
    with respect to ``x_it``, evaluated at ``x_it = center``."""
    if spec.kind != "M3":
        raise ConfigError("taylor_gradient needs an M3 model")
    if not (0 <= i < network.n_nodes and 0 <= t < network.n_times):
        raise IndexError("node or time index out of range")
    k = GibbsKernel(spec, network, state)
    _, _, g = k._x_rows(i, np.array([t]), np.asarray(center, dtype=float).reshape(1, -1))
    return g[0]


# ---------------------------------------------------------------------------
# identification


def procrustes_align(x: np.ndarray, reference: np.ndarray):
    """Rotate ``x`` (N x d) onto ``reference`` by the orthogonal matrix
    minimizing ``||x R - reference||_F``.  Returns ``(x R, R)``."""
    x = np.asarray(x, dtype=float)
    reference = np.asarray(reference, dtype=float)
    u, s, vt = np.linalg.svd(x.T @ reference)
    if s.size and s[-1] <= 1e-12 * max(s[0], 1e-300):
        warnings.warn("rank-deficient configuration in Procrustes alignment", RuntimeWarning)
    r = u @ vt
    return x @ r, r


def _center_state(state: ParamState, spec: ModelSpec) -> ParamState:
    out = state.copy()
    if spec.kind in ("M1", "M3"):
        abar = out.alpha.mean()
        out.alpha = out.alpha - abar
        out.f = out.f + 2 * abar
    if spec.kind == "M3":
        out.x = out.x - out.x.mean(axis=1, keepdims=True)
    return out


def apply_identification(draws, spec: ModelSpec, reference=None):
    """Map a state (or list of states) to its identified representative.

    M1/M3 center ``alpha`` and move the offset into ``f``; M3 also
    centers each ``x_t`` and rotates it onto ``reference`` (``(T, N, d)``;
    by default the first draw in the list).  M2 is returned unchanged.
    """
    single = isinstance(draws, ParamState)
    items = [draws] if single else list(draws)
    out = [_center_state(s, spec) for s in items]
    if spec.kind == "M3" and out:
        ref = out[0].x if reference is None else np.asarray(reference, dtype=float)
        ref = ref - ref.mean(axis=1, keepdims=True)
        for s in out:
            s.x = np.stack([procrustes_align(s.x[t], ref[t])[0] for t in range(s.x.shape[0])])
    return out[0] if single else out


# ---------------------------------------------------------------------------
# driver


def run_chain(
    spec: ModelSpec,
    network: TemporalNetwork,
    config: SamplerConfig,
    init: Optional[ParamState] = None,
    regressors=None,
    reference=None,
) -> ChainOutput:
    """Run one chain; see :class:`SamplerConfig` for the knobs."""
    spec.check_network(network)
    streams = dict(zip(_BLOCKS, (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(len(_BLOCKS)))))
    if config.likelihood == "poisson":
        zeta0 = POISSON_ZETA
    elif config.zeta_init is not None:
        zeta0 = float(config.zeta_init)
    else:
        zeta0 = spec.mu_zeta
    if init is None:
        if config.warm_start:
            state = warm_start(spec, network, zeta0, regressors, fit_zeta=config.samples_zeta)
        else:
            state = initial_state(spec, network, zeta0)
    else:
        state = init.copy()
    if config.likelihood == "poisson":
        state.zeta = POISSON_ZETA
    kern = GibbsKernel(spec, network, state, regressors)
    n, t_len = network.n_nodes, network.n_times

    s_alpha = np.full(n, float(config.step_alpha))
    s_f = np.full(t_len, float(config.step_f))
    s_delta = float(config.step_delta)
    s_zeta = float(config.step_zeta)
    h_x = np.full(n, float(config.step_x))
    counts = {b: [0, 0] for b in ("alpha", "f", "delta", "x", "zeta")}

    draws, logliks = [], []
    trace = {key: [] for key in ("zeta", "theta", "loglik", "alpha")}
    if spec.has_f:
        trace.update(f=[], sigma_eps2=[])
    if spec.kind == "M2":
        trace["delta"] = []
    ref = None if reference is None else np.asarray(reference, dtype=float)

    for it in range(config.iterations):
        burning = it < config.burn_in
        adapt = config.adapt and burning
        gain = _rm_gain(it)
        acc = kern.step_alpha(streams["alpha"], s_alpha)
        if adapt:
            s_alpha *= np.exp(gain * (acc - TARGET_SCALAR))
        if not burning:
            counts["alpha"][0] += int(acc.sum())
            counts["alpha"][1] += n

        if spec.kind == "M2":
            ok = kern.step_delta(streams["dyn"], s_delta)
            if adapt:
                s_delta *= math.exp(gain * (ok - TARGET_MULTI))
            if not burning:
                counts["delta"][0] += int(ok)
                counts["delta"][1] += 1
        else:
            acc = kern.step_f(streams["dyn"], s_f)
            if adapt:
                s_f *= np.exp(gain * (acc - TARGET_SCALAR))
            if not burning:
                counts["f"][0] += int(acc.sum())
                counts["f"][1] += t_len
            kern.draw_sigma_eps(streams["sigma"])
            if spec.kind == "M3":
                acc = kern.step_x(streams["x"], h_x)
                if adapt:
                    h_x = np.minimum(h_x * np.exp(gain * (acc.mean(axis=1) - TARGET_TAYLOR)), 1.0)
                if not burning:
                    counts["x"][0] += int(acc.sum())
                    counts["x"][1] += acc.size

        if config.samples_zeta:
            ok = kern.step_zeta(streams["zeta"], s_zeta)
            if adapt:
                s_zeta *= math.exp(gain * (ok - TARGET_SCALAR))
            if not burning:
                counts["zeta"][0] += int(ok)
                counts["zeta"][1] += 1

        if burning:
            continue
        ll = kern.loglik()
        cur = _center_state(kern.state, spec) if spec.kind != "M2" else kern.state
        trace["zeta"].append(cur.zeta)
        trace["theta"].append(cur.theta)
        trace["loglik"].append(ll)
        trace["alpha"].append(cur.alpha.copy())
        if spec.has_f:
            trace["f"].append(cur.f.copy())
            trace["sigma_eps2"].append(cur.sigma_eps2)
        if spec.kind == "M2":
            trace["delta"].append(cur.delta.copy())
        if (it - config.burn_in + 1) % config.thin == 0:
            draw = kern.state.copy()
            if spec.kind == "M3" and ref is None:
                ref = _center_state(draw, spec).x
            draws.append(apply_identification(draw, spec, ref))
            logliks.append(ll)

    acceptance = {b: c[0] / c[1] for b, c in counts.items() if c[1] > 0}
    steps = {"alpha": s_alpha.tolist(), "zeta": s_zeta}
    if spec.kind == "M2":
        steps["delta"] = s_delta
    else:
        steps["f"] = s_f.tolist()
    if spec.kind == "M3":
        steps["x"] = h_x.tolist()
    return ChainOutput(
        spec=spec,
        config=config,
        draws=draws,
        loglik=np.array(logliks),
        acceptance=acceptance,
        trace={k: np.array(v) for k, v in trace.items()},
        steps=steps,
    )


def config_dict(config: SamplerConfig) -> dict:
    return asdict(config)

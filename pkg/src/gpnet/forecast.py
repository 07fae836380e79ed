"""Posterior predictive checks: average-strength bands, imputation of
missing edges and calibration metrics for predictive draws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDrawsError, InvalidParameterError, NoMissingEntriesError
from .gp import sample_array
from .network import ModelSpec, TemporalNetwork, log_mean_tensor, m2_regressors

__all__ = [
    "StrengthBand",
    "PredictiveDraws",
    "MetricReport",
    "posterior_predictive_strength",
    "impute_missing",
    "predictive_metrics",
    "randomized_pit",
    "mask_random_entries",
]


@dataclass
class StrengthBand:
    mean: np.ndarray  # (T,)
    lower: np.ndarray
    upper: np.ndarray
    draws: np.ndarray  # (S, T)


@dataclass
class PredictiveDraws:
    targets: list  # (i, j, t) triples, zero-based, i < j
    values: np.ndarray  # (n_targets, S) integers


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mse: float
    rmse: float
    coverage: float
    awi: float
    mtp: float
    vtp: float
    pe: float
    n_targets: int


def _regressors(spec, network):
    return m2_regressors(spec, network) if spec.kind == "M2" else None


def posterior_predictive_strength(chain, spec: ModelSpec, network: TemporalNetwork,
                                  rng: np.random.Generator) -> StrengthBand:
    """Average strength of one replicated network per posterior draw.

    For M2 the lagged regressors are the observed ones, so each slice is
    a one-step-ahead replicate.
    """
    if not chain.draws:
        raise InvalidParameterError("empty chain")
    reg = _regressors(spec, network)
    n = network.n_nodes
    iu = np.triu_indices(n, 1)
    out = np.empty((len(chain.draws), network.n_times))
    for s, state in enumerate(chain.draws):
        eta = log_mean_tensor(spec, state, network, reg)
        lam = np.exp(eta[:, iu[0], iu[1]]) * state.rho ** -0.5
        y = sample_array(lam, state.theta, rng)
        out[s] = 2.0 * y.sum(axis=1) / n
    lo, hi = np.quantile(out, [0.025, 0.975], axis=0)
    return StrengthBand(out.mean(axis=0), lo, hi, out)


def impute_missing(chain, spec: ModelSpec, network: TemporalNetwork, rng: np.random.Generator,
                   regressors=None) -> PredictiveDraws:
    """One GP draw per posterior draw for every unobserved pair."""
    iu = np.triu_indices(network.n_nodes, 1)
    miss = ~network.mask[iu[0], iu[1], :]  # (pairs, T)
    pair_idx, t_idx = np.nonzero(miss)
    if pair_idx.size == 0:
        raise NoMissingEntriesError("the network has no missing entries to impute")
    if not chain.draws:
        raise InvalidParameterError("empty chain")
    order = np.lexsort((iu[1][pair_idx], iu[0][pair_idx], t_idx))
    pair_idx, t_idx = pair_idx[order], t_idx[order]
    ii, jj = iu[0][pair_idx], iu[1][pair_idx]
    if spec.kind == "M2" and regressors is None:
        regressors = m2_regressors(spec, network)
    vals = np.empty((ii.size, len(chain.draws)), dtype=np.int64)
    for s, state in enumerate(chain.draws):
        eta = log_mean_tensor(spec, state, network, regressors)
        lam = np.exp(eta[t_idx, ii, jj]) * state.rho ** -0.5
        vals[:, s] = sample_array(lam, state.theta, rng)
    targets = [(int(a), int(b), int(t)) for a, b, t in zip(ii, jj, t_idx)]
    return PredictiveDraws(targets, vals)


def randomized_pit(truths, draws: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``u = F(y - 1) + v p(y)`` under the empirical predictive law."""
    truths = np.asarray(truths)
    draws = np.asarray(draws)
    below = (draws < truths[:, None]).mean(axis=1)
    at = (draws == truths[:, None]).mean(axis=1)
    return below + rng.random(truths.size) * at


def predictive_metrics(truths, draws, rng: np.random.Generator, min_draws: int = 100) -> MetricReport:
    """Point-forecast errors, 95% interval coverage and width, and the
    mean / variance of randomized PIT values over all targets."""
    values = draws.values if isinstance(draws, PredictiveDraws) else np.asarray(draws)
    truths = np.asarray(truths, dtype=float)
    if values.ndim != 2 or values.shape[0] != truths.size:
        raise InvalidParameterError("need one row of draws per truth")
    if values.shape[1] < min_draws:
        raise InsufficientDrawsError(f"need at least {min_draws} draws per target, got {values.shape[1]}")
    pred = values.mean(axis=1)
    err = pred - truths
    mse = float(np.mean(err ** 2))
    lo, hi = np.quantile(values, [0.025, 0.975], axis=1)
    inside = (truths >= lo) & (truths <= hi)
    u = randomized_pit(truths, values, rng)
    coverage = float(inside.mean())
    return MetricReport(
        mae=float(np.mean(np.abs(err))),
        mse=mse,
        rmse=math.sqrt(mse),
        coverage=coverage,
        awi=float(np.mean(hi - lo)),
        mtp=float(u.mean()),
        vtp=float(u.var(ddof=1)) if u.size > 1 else 0.0,
        pe=1.0 - coverage,
        n_targets=int(truths.size),
    )


def mask_random_entries(network: TemporalNetwork, count: int, rng: np.random.Generator,
                        t: int = -1) -> tuple[TemporalNetwork, list, np.ndarray]:
    """Hide ``count`` random pairs of slice ``t`` (default: the last).

    Returns the masked network, the hidden ``(i, j, t)`` targets and their
    true counts, in the order used by :func:`impute_missing`.
    """
    t = t % network.n_times
    iu = np.triu_indices(network.n_nodes, 1)
    avail = np.flatnonzero(network.mask[iu[0], iu[1], t])
    if count > avail.size:
        raise InvalidParameterError("not enough observed pairs to mask")
    pick = np.sort(rng.choice(avail, size=count, replace=False))
    mask = network.mask.copy()
    targets, truths = [], []
    for p in pick:
        i, j = int(iu[0][p]), int(iu[1][p])
        mask[i, j, t] = mask[j, i, t] = False
        targets.append((i, j, t))
        truths.append(int(network.counts[i, j, t]))
    return network.with_mask(mask), targets, np.array(truths)

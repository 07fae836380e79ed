"""Chain diagnostics: effective sample size, Geweke's convergence test,
DIC and posterior summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateSequenceError, InvalidParameterError
from .network import ParamState, log_likelihood

__all__ = [
    "ess",
    "ess_fraction",
    "autocorrelation",
    "geweke",
    "dic",
    "posterior_mean_state",
    "ParamSummary",
    "ChainSummary",
    "summarize",
    "flatten_draws",
    "credible_ellipse_coverage",
]


def _check_series(x, min_len: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < min_len:
        raise DegenerateSequenceError(f"need at least {min_len} draws, got {x.size}")
    if np.ptp(x) == 0:
        raise DegenerateSequenceError("constant sequence")
    return x


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelations at all lags (FFT, biased normalization)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    c = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(c, size)
    acov = np.fft.irfft(spec * np.conjugate(spec), size)[:n] / n
    return acov / acov[0]


def ess(draws) -> float:
    """Effective sample size with Geyer's initial positive sequence rule,
    capped at the number of draws."""
    x = _check_series(draws, 10)
    n = x.size
    rho = autocorrelation(x)
    tau = -1.0
    for k in range(0, n - 1, 2):
        gamma = rho[k] + rho[k + 1]
        if gamma <= 0:
            break
        tau += 2.0 * gamma
    return float(min(n, n / max(tau, 1e-12)))


def ess_fraction(draws) -> float:
    x = np.asarray(draws, dtype=float).ravel()
    return ess(x) / x.size


def _batch_variance(x: np.ndarray) -> float:
    # zero-frequency spectral density by non-overlapping batch means
    b = max(1, int(math.floor(x.size ** (1.0 / 3.0))))
    m = x.size // b
    means = x[: m * b].reshape(m, b).mean(axis=1)
    if m < 2:
        return float(np.var(x, ddof=1))
    return float(b * np.var(means, ddof=1))


def geweke(draws, frac_first: float = 0.1, frac_last: float = 0.5) -> tuple[float, float]:
    """Geweke z-score comparing the first and last windows; two-sided p."""
    x = np.asarray(draws, dtype=float).ravel()
    if not (0 < frac_first < 1 and 0 < frac_last < 1 and frac_first + frac_last <= 1):
        raise InvalidParameterError("window fractions must be in (0, 1) and not overlap")
    n1 = int(math.floor(frac_first * x.size))
    n2 = int(math.floor(frac_last * x.size))
    if n1 < 20 or n2 < 20:
        raise DegenerateSequenceError("both Geweke windows need at least 20 draws")
    a, b = x[:n1], x[x.size - n2:]
    var = _batch_variance(a) / n1 + _batch_variance(b) / n2
    diff = a.mean() - b.mean()
    if var <= 0:
        if diff == 0:
            return 0.0, 1.0
        raise DegenerateSequenceError("zero variance in Geweke windows")
    z = diff / math.sqrt(var)
    return float(z), float(2.0 * stats.norm.sf(abs(z)))


def posterior_mean_state(draws) -> ParamState:
    """Elementwise average of every continuous field across draws."""
    first = draws[0]
    out = first.copy()
    out.alpha = np.mean([d.alpha for d in draws], axis=0)
    out.zeta = float(np.mean([d.zeta for d in draws]))
    for name in ("f", "delta", "x"):
        if getattr(first, name) is not None:
            setattr(out, name, np.mean([getattr(d, name) for d in draws], axis=0))
    if first.sigma_eps2 is not None:
        out.sigma_eps2 = float(np.mean([d.sigma_eps2 for d in draws]))
    return out


def dic(chain, spec, network, regressors=None) -> tuple[float, float]:
    """``(DIC, p_DIC)`` with the plug-in posterior mean of all parameters.

    ``p_DIC = 2 (log p(y | mean) - mean log p(y | draw))`` and
    ``DIC = -2 log p(y | mean) + 2 p_DIC``.  If the likelihood at the
    posterior mean is zero (a truncation violation when theta < 0) the
    result is ``(inf, nan)``.
    """
    if not chain.draws:
        raise InvalidParameterError("empty chain")
    mean_state = posterior_mean_state(chain.draws)
    ll_bar = log_likelihood(spec, mean_state, network, regressors)
    if not np.isfinite(ll_bar):
        return math.inf, math.nan
    mean_ll = float(np.mean(chain.loglik))
    p = 2.0 * (ll_bar - mean_ll)
    return float(-2.0 * ll_bar + 2.0 * p), float(p)


def flatten_draws(draws) -> tuple[list, np.ndarray]:
    """Column names and a ``(n_draws, n_columns)`` matrix of all parameters.

    Indices in names are 1-based; ``x_t_i_k`` is coordinate ``k`` of node
    ``i`` at time ``t``.
    """
    first = draws[0]
    names = ["zeta", "theta"]
    if first.sigma_eps2 is not None:
        names.append("sigma_eps2")
    names += [f"alpha_{i + 1}" for i in range(first.alpha.size)]
    if first.f is not None:
        names += [f"f_{t + 1}" for t in range(first.f.size)]
    if first.delta is not None:
        names += [f"delta_{l + 1}" for l in range(first.delta.size)]
    if first.x is not None:
        t_len, n, d = first.x.shape
        names += [f"x_{t + 1}_{i + 1}_{k + 1}" for t in range(t_len) for i in range(n) for k in range(d)]
    rows = []
    for s in draws:
        row = [s.zeta, s.theta]
        if s.sigma_eps2 is not None:
            row.append(s.sigma_eps2)
        parts = [np.array(row), s.alpha]
        for name in ("f", "delta", "x"):
            v = getattr(s, name)
            if v is not None:
                parts.append(np.ravel(v))
        rows.append(np.concatenate(parts))
    return names, np.array(rows)


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    median: float
    sd: float
    lower: float
    upper: float
    ess_fraction: float
    geweke_z: float
    geweke_p: float


@dataclass
class ChainSummary:
    names: list
    rows: list  # ParamSummary per name

    def __getitem__(self, name) -> ParamSummary:
        return self.rows[self.names.index(name)]

    def as_table(self) -> tuple[list, list]:
        header = ["parameter", "mean", "median", "sd", "lower95", "upper95", "ess_fraction", "geweke_z", "geweke_p"]
        body = [[n, r.mean, r.median, r.sd, r.lower, r.upper, r.ess_fraction, r.geweke_z, r.geweke_p]
                for n, r in zip(self.names, self.rows)]
        return header, body


def _summarize_column(x: np.ndarray) -> ParamSummary:
    lo, med, hi = np.quantile(x, [0.025, 0.5, 0.975])
    try:
        frac = ess_fraction(x)
    except DegenerateSequenceError:
        frac = math.nan
    try:
        z, p = geweke(x)
    except DegenerateSequenceError:
        z, p = math.nan, math.nan
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return ParamSummary(float(x.mean()), float(med), sd, float(lo), float(hi), frac, z, p)


def summarize(chain) -> ChainSummary:
    """Per-parameter posterior summaries of the retained draws."""
    draws = chain.draws if hasattr(chain, "draws") else chain
    if not draws:
        raise InvalidParameterError("empty chain")
    names, mat = flatten_draws(draws)
    return ChainSummary(names, [_summarize_column(mat[:, c]) for c in range(mat.shape[1])])


def credible_ellipse_coverage(x_draws: np.ndarray, x_true: np.ndarray, level: float = 0.95) -> np.ndarray:
    """Whether each true position lies in the Gaussian-approximation
    credible ellipse of the draws.

    ``x_draws`` has shape ``(S, T, N, d)`` and ``x_true`` ``(T, N, d)``;
    returns a ``(T, N)`` boolean array.
    """
    x_draws = np.asarray(x_draws, dtype=float)
    d = x_draws.shape[-1]
    mean = x_draws.mean(axis=0)
    cen = x_draws - mean
    cov = np.einsum("stnk,stnl->tnkl", cen, cen) / (x_draws.shape[0] - 1)
    diff = np.asarray(x_true, dtype=float) - mean
    m2 = np.einsum("tnk,tnk->tn", diff, np.linalg.solve(cov, diff[..., None])[..., 0])
    return m2 <= stats.chi2.ppf(level, d)

"""Closed-form properties of GP networks and the Monte Carlo experiments
that check them: strength laws, average-strength moments, cumulant
moments, spectral concentration, sensitivity solvers and per-edge
dispersion diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidParameterError
from .gp import GPParams, _mgf_domain_max, sample_array, subexp_constants, zeta_j0

__all__ = [
    "StrengthMoments",
    "total_strength_law",
    "expected_avg_strength",
    "dispersion_index",
    "cumulant_moment",
    "spectral_radius",
    "ConcentrationReport",
    "concentration_pattern",
    "concentration_experiment",
    "lognormal_sum_variance",
    "theta_for_dispersion",
    "theta_for_strength",
    "EdgeDispersion",
    "dispersion_diagnostics",
    "AvgStrengthMC",
    "avg_strength_mc",
]


@dataclass(frozen=True)
class StrengthMoments:
    expected: float
    variance: float

    @property
    def dispersion_index(self) -> float:
        return self.variance / self.expected if self.expected > 0 else math.nan


def total_strength_law(lams: Sequence[float], theta: float) -> tuple[GPParams, StrengthMoments]:
    """Law of a sum of independent GP(lam_k, theta) edges: GP(sum lam, theta)."""
    lams = np.asarray(lams, dtype=float)
    if lams.size == 0 or np.any(lams <= 0) or not np.all(np.isfinite(lams)):
        raise InvalidParameterError("need at least one positive finite intensity")
    law = GPParams(float(lams.sum()), theta)
    return law, StrengthMoments(law.mean, law.variance)


def _gamma(sigma_alpha2: float) -> float:
    if sigma_alpha2 < 0:
        raise InvalidParameterError("sigma_alpha2 must be nonnegative")
    return math.exp(sigma_alpha2)


def expected_avg_strength(sigma_alpha2: float, theta: float, f_value: float,
                          sigma_eps2: float = 0.0, f_known: bool = True) -> float:
    """Expected edge-level strength ``gamma e^f / (1 - theta)``.

    With ``f_known=False``, ``f_value`` is ``f_{t-1}`` and ``e^f`` is
    replaced by its one-step-ahead expectation ``e^{f_{t-1} + sigma_eps2/2}``.
    """
    g = _gamma(sigma_alpha2)
    level = f_value if f_known else f_value + sigma_eps2 / 2.0
    return g * math.exp(level) / (1.0 - theta)


def dispersion_index(sigma_alpha2: float, theta: float, f_value: float, sigma_eps2: float = 0.0,
                     n_nodes: int = 2, f_known: bool = True) -> float:
    """``1/(1-theta)^2 + 2 gamma (gamma-1)(2N + gamma - 3) e^f``."""
    if n_nodes < 2:
        raise InvalidParameterError("need at least two nodes")
    g = _gamma(sigma_alpha2)
    level = f_value if f_known else f_value + sigma_eps2
    return 1.0 / (1.0 - theta) ** 2 + 2.0 * g * (g - 1.0) * (2 * n_nodes + g - 3.0) * math.exp(level)


def cumulant_moment(j: int, m: int, sigma_alpha2: float, theta: float, f_value: float,
                    sigma_eps2: float = 0.0, f_known: bool = True) -> float:
    """``E[(kappa^(j))^m]`` for the random cumulants of the average strength.

    Equal to ``exp(m^2 sigma_alpha2/2 + m f) zeta_j0(theta, j)^m`` (plus
    ``m^2 sigma_eps2 / 2`` when ``f`` is unknown).  The cumulants of the
    strength itself are ``-lambda * zeta_j0``.
    """
    if theta == 0:
        raise DomainError("cumulant moments need theta != 0; use the Poisson limit")
    if m < 1:
        raise InvalidParameterError("m must be a positive integer")
    expo = m * m * sigma_alpha2 / 2.0 + m * f_value
    if not f_known:
        expo += m * m * sigma_eps2 / 2.0
    return math.exp(expo) * zeta_j0(theta, j) ** m


def spectral_radius(matrix, tol: float = 1e-10, max_iter: int = 20000, restarts: int = 5,
                    seed: int = 0) -> float:
    """Largest absolute eigenvalue of a symmetric matrix by power iteration.

    The estimate is ``||A v||`` for the current unit vector ``v``; a
    random restart is used if an attempt stalls.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameterError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0))):
        raise InvalidParameterError("matrix must be symmetric")
    n = a.shape[0]
    if n == 0 or not np.any(a):
        return 0.0
    rng = np.random.default_rng(seed)
    best = 0.0
    for attempt in range(restarts):
        v = np.abs(rng.standard_normal(n)) + 1.0 if attempt == 0 else rng.standard_normal(n)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(max_iter):
            w = a @ v
            new = float(np.linalg.norm(w))
            if new == 0.0:
                break
            v = w / new
            if abs(new - est) <= tol * new:
                return new
            est = new
        best = max(best, est)
    return best


@dataclass
class ConcentrationReport:
    n: int
    theta: float
    deviations: np.ndarray
    v2: float
    k_const: float
    bound_shape: float
    quantile95: float
    rho_mean: float

    @property
    def ratio(self) -> float:
        return self.quantile95 / self.bound_shape


def concentration_pattern(n: int, base: float = 2.0, amplitude: float = 0.5) -> np.ndarray:
    """Intensity matrix ``base * exp(a_i + a_j)`` with a smooth node profile."""
    a = amplitude * np.sin(2 * np.pi * (np.arange(n) + 0.5) / n)
    lam = base * np.exp(a[:, None] + a[None, :])
    np.fill_diagonal(lam, 0.0)
    return lam


def _edge_k(lams: np.ndarray, theta: float, r: Optional[float]) -> float:
    if r is None:
        r = 0.5 * _mgf_domain_max(theta) if theta > 0 else 0.5
    best = 0.0
    for lam in np.unique(lams):
        v, b = subexp_constants(GPParams(float(lam), theta), r)
        best = max(best, math.sqrt(v) + b)
    return best


def concentration_experiment(lam_matrix, theta: float, reps: int = 200, seed: int = 0,
                             r: Optional[float] = None) -> ConcentrationReport:
    """Monte Carlo of ``|rho(Y) - rho(E Y)|`` for GP adjacency matrices.

    ``v2`` is the largest row sum of edge variances and ``bound_shape``
    is ``sqrt(v2 log N) + K log N`` with ``K = max_ij (sqrt(v_ij) + b_ij)``
    from the edge sub-exponential constants.
    """
    lam = np.asarray(lam_matrix, dtype=float)
    n = lam.shape[0]
    if lam.shape != (n, n) or np.any(lam < 0) or not np.allclose(lam, lam.T):
        raise InvalidParameterError("intensity matrix must be square, symmetric and nonnegative")
    if np.any(np.diag(lam) != 0):
        raise InvalidParameterError("intensity matrix must have a zero diagonal")
    if reps < 1:
        raise InvalidParameterError("reps must be positive")
    mean = lam / (1.0 - theta)
    rho_mean = spectral_radius(mean)
    v2 = float((lam / (1.0 - theta) ** 3).sum(axis=1).max())
    iu = np.triu_indices(n, 1)
    lams = lam[iu]
    pos = lams > 0
    if not pos.any():
        return ConcentrationReport(n, theta, np.zeros(reps), 0.0, 0.0, 0.0, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    vals = sample_array(np.tile(lams[pos], reps), theta, rng).reshape(reps, -1)
    devs = np.empty(reps)
    y = np.zeros((n, n))
    rows, cols = iu[0][pos], iu[1][pos]
    for k in range(reps):
        y[rows, cols] = vals[k]
        y[cols, rows] = vals[k]
        devs[k] = abs(spectral_radius(y) - rho_mean)
    k_const = _edge_k(lams[pos], theta, r)
    log_n = math.log(n)
    bound = math.sqrt(v2 * log_n) + k_const * log_n
    return ConcentrationReport(n, theta, devs, v2, k_const, bound, float(np.quantile(devs, 0.95)), rho_mean)


def lognormal_sum_variance(n_nodes: int, sigma2: float) -> float:
    """``Var(sum_{i != j} X_i X_j)`` for i.i.d. ``X = e^V``, ``V ~ N(0, sigma2)``."""
    if n_nodes < 2 or sigma2 < 0:
        raise InvalidParameterError("need N >= 2 and sigma2 >= 0")
    g = math.exp(sigma2)
    n = n_nodes
    return 2.0 * n * (n - 1) * g * g * (g - 1.0) * (2 * n + g - 3.0)


def _bisect_increasing(func, target: float, lo: float, hi: float, tol: float = 1e-10) -> float:
    flo = func(lo) - target
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= tol * 1e-3:
            break
        fm = func(mid) - target
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


_THETA_LO = -1.0 + 1e-15
_THETA_HI = 1.0 - 1e-15


def theta_for_dispersion(sigma_alpha2: float, target_d: float, n_nodes: int, f_value: float,
                         sigma_eps2: float = 0.0, f_known: bool = True) -> Optional[float]:
    """Dispersion parameter giving dispersion index ``target_d``, or ``None``
    when even theta -> -1 overshoots the target."""
    if not target_d > 0:
        raise InvalidParameterError("target dispersion must be positive")

    def func(th):
        return dispersion_index(sigma_alpha2, th, f_value, sigma_eps2, n_nodes, f_known)

    if func(_THETA_LO) > target_d:
        return None
    return _bisect_increasing(func, target_d, _THETA_LO, _THETA_HI)


def theta_for_strength(sigma_alpha2: float, target_strength: float, f_value: float,
                       sigma_eps2: float = 0.0, f_known: bool = True) -> Optional[float]:
    """Dispersion parameter giving expected strength ``target_strength``."""
    if not target_strength > 0:
        raise InvalidParameterError("target strength must be positive")

    def func(th):
        return expected_avg_strength(sigma_alpha2, th, f_value, sigma_eps2, f_known)

    if func(_THETA_LO) > target_strength:
        return None
    return _bisect_increasing(func, target_strength, _THETA_LO, _THETA_HI)


@dataclass(frozen=True)
class EdgeDispersion:
    period: int
    i: int
    j: int
    n_obs: int
    mean: float
    variance: float
    log_mean: float
    log_variance: float
    log_dispersion: float
    acf1: float
    zero_variance: bool
    insufficient: bool


def dispersion_diagnostics(network, split_index: Optional[int] = None) -> list[EdgeDispersion]:
    """Per-edge mean, variance, dispersion index and lag-1 autocorrelation
    over time, separately before and after ``split_index``.

    Uses unbiased sample variances.  Edges with fewer than three observed
    values in a period are flagged ``insufficient``; zero-variance edges
    are flagged and their log statistics left as NaN.
    """
    t_len = network.n_times
    bounds = [(0, t_len)] if split_index is None else [(0, split_index), (split_index, t_len)]
    if split_index is not None and not 0 < split_index < t_len:
        raise InvalidParameterError("split_index must fall strictly inside the time range")
    rows = []
    n = network.n_nodes
    for period, (a, b) in enumerate(bounds):
        for i in range(n):
            for j in range(i + 1, n):
                m = network.mask[i, j, a:b]
                vals = network.counts[i, j, a:b][m].astype(float)
                k = vals.size
                if k < 3:
                    rows.append(EdgeDispersion(period, i, j, k, math.nan, math.nan, math.nan, math.nan,
                                               math.nan, math.nan, False, True))
                    continue
                mean = float(vals.mean())
                var = float(vals.var(ddof=1))
                c = vals - mean
                denom = float(c @ c)
                acf1 = float(c[:-1] @ c[1:] / denom) if denom > 0 else math.nan
                if var == 0 or mean == 0:
                    rows.append(EdgeDispersion(period, i, j, k, mean, var, math.nan, math.nan, math.nan,
                                               acf1, True, False))
                    continue
                rows.append(EdgeDispersion(period, i, j, k, mean, var, math.log(mean), math.log(var),
                                           math.log(var / mean), acf1, False, False))
    return rows


@dataclass(frozen=True)
class AvgStrengthMC:
    edge_mean: float
    edge_mean_se: float
    dispersion: float
    dispersion_se: float


def avg_strength_mc(sigma_alpha2: float, theta: float, f_value: float, n_nodes: int,
                    reps: int, seed: int = 0, chunk: int = 20000) -> AvgStrengthMC:
    """Monte Carlo counterparts of :func:`expected_avg_strength` and
    :func:`dispersion_index` with ``f`` known.

    The expected strength is checked as the average edge weight of an
    undirected network whose edges are ``GP(exp(a_i + a_j + f), theta)``.
    The dispersion index is checked on ``Z = sum_{i != j} y_ij`` over
    ordered pairs, each pair an independent GP edge with mean
    ``exp(a_i + a_j + f)``.  Node effects are ``N(0, sigma_alpha2)``.
    """
    rng = np.random.default_rng(seed)
    n = n_nodes
    iu = np.triu_indices(n, 1)
    off = ~np.eye(n, dtype=bool)
    means, totals = [], []
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        a = rng.normal(0.0, math.sqrt(sigma_alpha2), (m, n))
        s = a[:, :, None] + a[:, None, :] + f_value
        lam_u = np.exp(s[:, iu[0], iu[1]])
        y = sample_array(lam_u, theta, rng)
        means.append(y.mean(axis=1))
        lam_o = np.exp(s[:, off]) * (1.0 - theta)
        z = sample_array(lam_o, theta, rng).sum(axis=1)
        totals.append(z)
        done += m
    em = np.concatenate(means)
    z = np.concatenate(totals).astype(float)
    mz, vz = z.mean(), z.var(ddof=1)
    # delta-method standard error of var/mean
    psi = ((z - mz) ** 2 - vz) / mz - vz * (z - mz) / mz ** 2
    return AvgStrengthMC(
        edge_mean=float(em.mean()),
        edge_mean_se=float(em.std(ddof=1) / math.sqrt(em.size)),
        dispersion=float(vz / mz),
        dispersion_se=float(psi.std(ddof=1) / math.sqrt(z.size)),
    )

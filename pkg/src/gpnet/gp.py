"""Generalized Poisson distribution: pmf, sampling, moments and the
Lambert-W cumulant machinery.

The GP(lam, theta) law has pmf

    p(y) = lam (lam + theta y)^(y-1) exp(-(lam + theta y)) / y!,  y = 0, 1, ...

with mean lam / (1 - theta) and variance lam / (1 - theta)^3.  For
``theta < 0`` the formula is only meaningful while ``lam + theta y > 0``;
``log_pmf`` returns ``-inf`` past that point and does *not* renormalize,
while ``sample`` and ``mgf`` renormalize over the truncated support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, InvalidParameterError, RangeError

__all__ = [
    "GPParams",
    "GPReparam",
    "log_pmf",
    "log_pmf_vec",
    "pmf_table",
    "mean_var",
    "sample",
    "sample_array",
    "mgf",
    "log_mgf",
    "log_mgf_derivative",
    "lambert_w0",
    "cumulant",
    "stirling2",
    "w_poly",
    "zeta_j0",
    "subexp_constants",
    "fourth_derivative_bound",
]

_INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class GPParams:
    """Intensity ``lam`` > 0 and dispersion ``theta`` in (-1, 1)."""

    lam: float
    theta: float

    def __post_init__(self):
        lam, theta = float(self.lam), float(self.theta)
        if not (math.isfinite(lam) and lam > 0):
            raise InvalidParameterError(f"lam must be positive and finite, got {self.lam!r}")
        if not (-1.0 < theta < 1.0):
            raise InvalidParameterError(f"theta must lie in (-1, 1), got {self.theta!r}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "theta", theta)

    @property
    def support_max(self) -> float:
        """Largest support point; ``inf`` unless theta < 0."""
        if self.theta >= 0:
            return math.inf
        return float(math.floor(-self.lam / self.theta))

    @property
    def mean(self) -> float:
        return self.lam / (1.0 - self.theta)

    @property
    def variance(self) -> float:
        return self.lam / (1.0 - self.theta) ** 3


@dataclass(frozen=True)
class GPReparam:
    """Mean / dispersion-ratio parameterization.

    ``rho`` is the variance-to-mean ratio and ``zeta`` its unconstrained
    log-scale coordinate, ``rho = 1/4 + exp(zeta)``.
    """

    mu: float
    rho: float
    zeta: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise InvalidParameterError(f"mu must be positive, got {self.mu!r}")
        if not self.rho > 0.25:
            raise InvalidParameterError(f"rho must exceed 1/4, got {self.rho!r}")
        if self.rho != 0.25 + math.exp(self.zeta):
            raise InvalidParameterError("rho must equal 1/4 + exp(zeta)")

    @classmethod
    def from_zeta(cls, mu: float, zeta: float) -> "GPReparam":
        return cls(mu=float(mu), rho=0.25 + math.exp(zeta), zeta=float(zeta))

    @classmethod
    def from_rho(cls, mu: float, rho: float) -> "GPReparam":
        if not rho > 0.25:
            raise InvalidParameterError(f"rho must exceed 1/4, got {rho!r}")
        zeta = math.log(rho - 0.25)
        return cls.from_zeta(mu, zeta)

    @property
    def theta(self) -> float:
        return 1.0 - self.rho ** -0.5

    def to_params(self) -> GPParams:
        return GPParams(self.mu * self.rho ** -0.5, self.theta)


# ---------------------------------------------------------------------------
# pmf


def log_pmf_vec(y, lam, theta: float, log_fact=None) -> np.ndarray:
    """Elementwise GP log-pmf for arrays ``y`` and ``lam`` sharing ``theta``.

    No validation; ``log_fact`` may carry a precomputed ``gammaln(y + 1)``.
    """
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    z = lam + theta * y
    if log_fact is None:
        log_fact = gammaln(y + 1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.log(lam) + (y - 1.0) * np.log(z) - z - log_fact
    if theta < 0:
        out = np.where(z > 0, out, -np.inf)
    return out


def log_pmf(params: GPParams, y: int) -> float:
    """Log-probability of a single count ``y``.

    Returns ``-inf`` beyond the truncation point when theta < 0.
    """
    if y < 0 or int(y) != y:
        raise InvalidParameterError(f"y must be a nonnegative integer, got {y!r}")
    y = int(y)
    z = params.lam + params.theta * y
    if z <= 0:
        return -math.inf
    return math.log(params.lam) + (y - 1) * math.log(z) - z - math.lgamma(y + 1)


def _cap(params: GPParams, n_sd: float = 20.0) -> int:
    if params.theta < 0:
        return int(params.support_max)
    return int(math.ceil(params.mean + n_sd * math.sqrt(params.variance))) + 1


def _table_cap(params: GPParams) -> int:
    # the tail decays like exp(-(theta - 1 - log theta) y), which for theta
    # near 1 is far slower than the normal approximation suggests
    cap = _cap(params)
    if params.theta > 0:
        rate = _mgf_domain_max(params.theta)
        cap = max(cap, int(math.ceil(params.mean + 45.0 / rate)))
    return cap


def pmf_table(params: GPParams, y_max: int | None = None) -> np.ndarray:
    """pmf values on ``0..y_max``.

    The default range is the truncation point when theta < 0 and
    otherwise reaches far enough that the omitted tail is below ~1e-16.
    """
    if y_max is None:
        y_max = _table_cap(params)
    y = np.arange(int(y_max) + 1)
    return np.exp(log_pmf_vec(y, params.lam, params.theta))


def mean_var(params: GPParams) -> tuple[float, float]:
    return params.mean, params.variance


# ---------------------------------------------------------------------------
# sampling by CDF inversion


def _invert_with_extension(lam: float, theta: float, u: float, cap: int) -> int:
    # u lies beyond the mass accumulated up to cap; keep doubling the cap.
    total = math.fsum(np.exp(log_pmf_vec(np.arange(cap + 1), lam, theta)))
    lo = cap + 1
    while True:
        hi = 2 * lo
        p = np.exp(log_pmf_vec(np.arange(lo, hi + 1), lam, theta))
        cdf = total + np.cumsum(p)
        k = int(np.searchsorted(cdf, u, side="left"))
        if k < cdf.size:
            return lo + k
        if not np.any(p > 0) and cdf[-1] <= total:
            # no mass left to find: u is within rounding of 1
            return hi
        total = cdf[-1]
        lo = hi + 1


def _chunk_end(caps: np.ndarray, pos: int, budget: int) -> int:
    # largest end with (end - pos) rows of width caps[end - 1] + 1 within budget
    lo, hi = pos + 1, caps.size
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if (mid - pos) * (caps[mid - 1] + 1) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return lo


def _sample_branching(flat: np.ndarray, theta: float, rng: np.random.Generator) -> np.ndarray:
    # total progeny of a Galton-Watson process with Poisson(lam) founders
    # and Poisson(theta) offspring is GP(lam, theta) for 0 <= theta < 1
    gen = rng.poisson(flat)
    total = gen.copy()
    if theta == 0:
        return total
    active = np.flatnonzero(gen)
    gen = gen[active]
    while active.size:
        gen = rng.poisson(theta * gen)
        total[active] += gen
        keep = gen > 0
        active, gen = active[keep], gen[keep]
    return total


def sample_array(lam, theta: float, rng: np.random.Generator, method: str = "auto",
                 n_sd: float = 20.0, budget: int = 2_000_000) -> np.ndarray:
    """Vectorized sampler for GP variates with a shared ``theta``.

    ``method="branching"`` (the default for theta >= 0) simulates the
    Poisson branching process whose total progeny is GP distributed.
    ``method="inversion"`` walks the CDF until it exceeds a uniform
    variate; the search is capped at mean + ``n_sd`` sd and extended by
    doubling when the uniform falls past the cap.  For theta < 0 only
    inversion applies, with the pmf renormalized over the truncated support.
    """
    lam = np.asarray(lam, dtype=float)
    shape = lam.shape
    flat = lam.ravel()
    if flat.size and (not np.all(np.isfinite(flat)) or np.any(flat <= 0)):
        raise InvalidParameterError("lam must be positive and finite")
    if not -1.0 < theta < 1.0:
        raise InvalidParameterError(f"theta must lie in (-1, 1), got {theta!r}")
    if method not in ("auto", "branching", "inversion"):
        raise InvalidParameterError(f"unknown sampling method {method!r}")
    if method == "branching" and theta < 0:
        raise InvalidParameterError("the branching sampler needs theta >= 0")
    if theta >= 0 and method != "inversion":
        return _sample_branching(flat, theta, rng).reshape(shape)
    u = rng.random(flat.size)
    out = np.empty(flat.size, dtype=np.int64)
    if flat.size == 0:
        return out.reshape(shape)

    uniq, inverse = np.unique(flat, return_inverse=True)
    if theta < 0:
        caps = np.floor(-uniq / theta).astype(np.int64)
    else:
        mean = uniq / (1.0 - theta)
        sd = np.sqrt(uniq / (1.0 - theta) ** 3)
        caps = np.ceil(mean + n_sd * sd).astype(np.int64) + 1

    # draws grouped by their unique intensity
    draw_order = np.argsort(inverse, kind="stable")
    group_start = np.searchsorted(inverse[draw_order], np.arange(uniq.size))
    group_end = np.append(group_start[1:], flat.size)

    # unique values are sorted by lam, and caps are monotone in lam
    pos = 0
    while pos < uniq.size:
        end = _chunk_end(caps, pos, budget)
        width = int(caps[end - 1]) + 1
        grid = np.arange(width)
        logp = log_pmf_vec(grid[None, :], uniq[pos:end, None], theta)
        cdf = np.cumsum(np.exp(logp), axis=1)
        rows = np.arange(end - pos)
        if theta < 0:
            row_total = cdf[:, -1]
        else:
            row_total = np.ones(end - pos)
        # offset each row so one searchsorted serves the whole block
        offset = 3.0 * rows[:, None]
        flat_cdf = (cdf / row_total[:, None] + offset).ravel()
        d_lo, d_hi = group_start[pos], group_end[end - 1]
        draws = draw_order[d_lo:d_hi]
        row_of = inverse[draws] - pos
        target = u[draws] + 3.0 * row_of
        k = np.searchsorted(flat_cdf, target, side="left") - row_of * width
        overflow = k >= width
        out[draws] = k
        if theta >= 0 and np.any(overflow):
            for idx in draws[overflow]:
                out[idx] = _invert_with_extension(float(flat[idx]), theta, float(u[idx]),
                                                  int(caps[inverse[idx]]))
        elif np.any(overflow):
            # rounding at the very top of a truncated support
            out[draws[overflow]] = caps[inverse[draws[overflow]]]
        pos = end
    return out.reshape(shape)


def sample(params: GPParams, rng: np.random.Generator) -> int:
    """Draw one GP variate."""
    return int(sample_array(np.array([params.lam]), params.theta, rng)[0])


# ---------------------------------------------------------------------------
# Lambert W, principal branch


def _w0_initial(z: np.ndarray) -> np.ndarray:
    w = np.empty_like(z)
    near = z < -0.25
    p = np.sqrt(np.maximum(2.0 * (math.e * z[near] + 1.0), 0.0))
    w[near] = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    mid = (~near) & (z <= math.e)
    w[mid] = np.log1p(z[mid]) * (1.0 - 0.1 * np.log1p(np.maximum(z[mid], 0.0)))
    big = z > math.e
    l1 = np.log(z[big])
    l2 = np.log(l1)
    w[big] = l1 - l2 + l2 / l1
    return w


def lambert_w0(z, tol: float = 1e-14, max_iter: int = 50):
    """Principal branch of Lambert's W by Halley iteration.

    Accepts a scalar or an array; ``z`` must be >= -1/e (a rounding
    slack of a few ulp below the branch point is clipped).
    """
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float)).copy()
    if np.any(np.isnan(z)):
        raise DomainError("lambert_w0 of nan")
    if np.any(z < -_INV_E - 4e-16):
        raise DomainError("lambert_w0 requires z >= -1/e")
    z = np.maximum(z, -_INV_E)
    w = _w0_initial(z)
    branch = z == -_INV_E
    w[branch] = -1.0
    active = ~branch & (z != 0.0)
    w[z == 0.0] = 0.0
    for _ in range(max_iter):
        if not np.any(active):
            break
        wa, za = w[active], z[active]
        ew = np.exp(wa)
        f = wa * ew - za
        wp1 = wa + 1.0
        denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(denom != 0.0, f / denom, 0.0)
        w_new = wa - step
        w_new = np.maximum(w_new, -1.0)
        done = np.abs(w_new - wa) <= tol * (1.0 + np.abs(w_new))
        w[active] = w_new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return float(w[0]) if scalar else w


# ---------------------------------------------------------------------------
# mgf and cumulants


def _mgf_domain_max(theta: float) -> float:
    if theta > 0:
        return theta - 1.0 - math.log(theta)
    return math.inf


def _truncated_log_mgf(params: GPParams, u) -> np.ndarray:
    y = np.arange(int(params.support_max) + 1, dtype=float)
    logp = log_pmf_vec(y, params.lam, params.theta)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return logsumexp(logp[None, :] + u[:, None] * y[None, :], axis=1) - logsumexp(logp)


def log_mgf(params: GPParams, u) -> float:
    """Log of the moment generating function at ``u``."""
    lam, theta = params.lam, params.theta
    if theta == 0:
        return lam * math.expm1(u)
    if theta < 0:
        return float(_truncated_log_mgf(params, u)[0])
    if u > _mgf_domain_max(theta):
        raise DomainError(f"mgf undefined for u={u} > theta - 1 - log(theta)")
    w = lambert_w0(-theta * math.exp(u - theta))
    return -(lam / theta) * (w + theta)


def mgf(params: GPParams, u: float) -> float:
    """Moment generating function E[exp(u Y)] via the Lambert-W closed form."""
    return math.exp(log_mgf(params, u))


@lru_cache(maxsize=None)
def stirling2(j: int, l: int) -> int:
    """Stirling number of the second kind S(j, l) for 1 <= l <= j <= 20."""
    if not (1 <= l <= j <= 20):
        raise RangeError(f"stirling2 needs 1 <= l <= j <= 20, got ({j}, {l})")
    return _stirling2(j, l)


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


@lru_cache(maxsize=None)
def w_poly(l: int) -> tuple[int, ...]:
    """Integer coefficients (ascending powers) of the Lambert-derivative polynomial p_l.

    p_1 = 1 and p_{l+1}(x) = (1 + x) p_l'(x) - (l x + 3 l - 1) p_l(x).
    """
    if not (1 <= l <= 12):
        raise RangeError(f"w_poly supports 1 <= l <= 12, got {l}")
    p = [1]
    for n in range(1, l):
        deriv = [k * p[k] for k in range(1, len(p))] or [0]
        nxt = [0] * (len(p) + 1)
        for k, c in enumerate(deriv):
            nxt[k] += c          # 1 * p'
            nxt[k + 1] += c      # x * p'
        for k, c in enumerate(p):
            nxt[k] -= (3 * n - 1) * c
            nxt[k + 1] -= n * c
        while len(nxt) > 1 and nxt[-1] == 0:
            nxt.pop()
        p = nxt
    return tuple(p)


def _polyval(coeffs, x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def zeta_j0(theta: float, j: int) -> float:
    """j-th derivative at zero of (W(-theta e^{u-theta}) + theta) / theta.

    Cumulants of GP(lam, theta) are ``-lam * zeta_j0(theta, j)``.
    """
    if theta == 0 or not -1 < theta < 1:
        raise DomainError("zeta_j0 needs theta in (-1, 1) without 0")
    if not 1 <= j <= 8:
        raise RangeError(f"zeta_j0 supports 1 <= j <= 8, got {j}")
    total = 0.0
    for l in range(1, j + 1):
        total += (stirling2(j, l) * (-theta) ** l * _polyval(w_poly(l), -theta)
                  / (1.0 - theta) ** (2 * l - 1))
    return total / theta


def cumulant(params: GPParams, j: int) -> float:
    """Closed-form cumulants kappa_1..kappa_4."""
    lam, th = params.lam, params.theta
    if j == 1:
        return lam / (1 - th)
    if j == 2:
        return lam / (1 - th) ** 3
    if j == 3:
        return lam * (2 * th + 1) / (1 - th) ** 5
    if j == 4:
        return lam * (6 * th ** 2 + 8 * th + 1) / (1 - th) ** 7
    raise RangeError(f"cumulant order must be in 1..4, got {j}")


def log_mgf_derivative(params: GPParams, u, order: int) -> np.ndarray | float:
    """Exact ``order``-th derivative of the log-mgf at ``u`` (array-friendly).

    theta > 0 uses the Stirling / p_l expansion of the Lambert-W form,
    theta = 0 the Poisson case and theta < 0 the cumulants of the
    exponentially tilted truncated pmf (orders up to 4).
    """
    scalar = np.ndim(u) == 0
    uu = np.atleast_1d(np.asarray(u, dtype=float))
    lam, theta = params.lam, params.theta
    if order < 1:
        raise RangeError("order must be >= 1")
    if theta == 0:
        out = lam * np.exp(uu)
    elif theta > 0:
        if order > 8:
            raise RangeError("order must be <= 8")
        if np.any(uu >= _mgf_domain_max(theta)):
            raise DomainError("u outside the mgf domain")
        w = lambert_w0(-theta * np.exp(uu - theta))
        acc = np.zeros_like(uu)
        for l in range(1, order + 1):
            pl = np.polynomial.polynomial.polyval(w, np.array(w_poly(l), dtype=float))
            acc += stirling2(order, l) * w ** l * pl / (1.0 + w) ** (2 * l - 1)
        out = -(lam / theta) * acc
    else:
        if order > 4:
            raise RangeError("order must be <= 4 for theta < 0")
        y = np.arange(int(params.support_max) + 1, dtype=float)
        logp = log_pmf_vec(y, lam, theta)
        lw = logp[None, :] + uu[:, None] * y[None, :]
        wts = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
        m1 = wts @ y
        c = y[None, :] - m1[:, None]
        m2 = np.sum(wts * c ** 2, axis=1)
        m3 = np.sum(wts * c ** 3, axis=1)
        m4 = np.sum(wts * c ** 4, axis=1)
        out = {1: m1, 2: m2, 3: m3, 4: m4 - 3.0 * m2 ** 2}[order]
    return float(out[0]) if scalar else out


def fourth_derivative_bound(params: GPParams, r: float, n_grid: int = 401) -> float:
    """Grid estimate of sup |d^4/du^4 log M(u)| over |u| <= r."""
    grid = np.linspace(-r, r, n_grid)
    return float(np.max(np.abs(log_mgf_derivative(params, grid, 4))))


def subexp_constants(params: GPParams, r: float) -> tuple[float, float]:
    """Constants (v, b) of the log-mgf bound
    ``log E exp(u (Y - EY)) <= v u^2 / (2 (1 - b |u|))`` for ``|u| <= r``.
    """
    theta, lam = params.theta, params.lam
    if not r > 0 or r >= _mgf_domain_max(theta):
        raise DomainError(f"r must lie in (0, theta - 1 - log theta), got {r}")
    v = lam * (1 - theta) ** -3
    b_r = fourth_derivative_bound(params, r)
    b = abs(2 * theta + 1) / (3 * (1 - theta) ** 2) + r * b_r * (1 - theta) ** 3 / (12 * lam)
    return v, b

"""Independent numerical oracles shared by the test modules."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, logsumexp

# central finite-difference stencils for derivatives of order 1..4
_STENCILS = {
    1: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
    3: (np.array([-2, -1, 1, 2]), np.array([-0.5, 1.0, -1.0, 0.5])),
    4: (np.array([-2, -1, 0, 1, 2]), np.array([1.0, -4.0, 6.0, -4.0, 1.0])),
}


def richardson_derivative(func, x: float, order: int, h: float = 0.08, levels: int = 5) -> float:
    """Central differences with step halving and Richardson extrapolation."""
    offsets, weights = _STENCILS[order]
    table = []
    for k in range(levels):
        step = h / 2 ** k
        vals = np.array([func(x + o * step) for o in offsets])
        table.append([float(weights @ vals) / step ** order])
        for m in range(1, k + 1):
            fac = 4.0 ** m
            table[k].append((fac * table[k][m - 1] - table[k - 1][m - 1]) / (fac - 1))
    return table[-1][-1]


def gp_pmf_direct(y: np.ndarray, lam: float, theta: float) -> np.ndarray:
    """Textbook pmf evaluated term by term (zero past truncation)."""
    out = np.zeros(len(y))
    for k, v in enumerate(y):
        z = lam + theta * v
        if z <= 0:
            continue
        out[k] = math.exp(math.log(lam) + (v - 1) * math.log(z) - z - math.lgamma(v + 1))
    return out


def log_mgf_by_summation(lam: float, theta: float, u: float, y_max: int = 4000) -> float:
    y = np.arange(y_max + 1, dtype=float)
    z = lam + theta * y
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.where(z > 0, math.log(lam) + (y - 1) * np.log(np.where(z > 0, z, 1.0)) - z - gammaln(y + 1), -np.inf)
    return float(logsumexp(lp + u * y) - logsumexp(lp))


def ks_uniform_pvalue(u) -> float:
    from scipy import stats

    return float(stats.kstest(np.asarray(u), "uniform").pvalue)

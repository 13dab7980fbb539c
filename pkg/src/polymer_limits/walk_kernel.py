"""Simple-random-walk transition kernels on the parity lattice and their rescalings.

The walk starts at the origin and takes +/-1 steps, so a site x is reachable
at time n only when n and x have the same parity ("n <-> x").  All functions
are pure; the heavy users (dynamic programs, quadratures) call the vectorized
row helpers.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln


def same_parity(n, x) -> np.ndarray | bool:
    return (np.asarray(n) + np.asarray(x)) % 2 == 0


def log_walk_p(n, x):
    """log P(S_n = x), -inf off the parity cone.  Vectorized, stable to n ~ 1e6."""
    n = np.asarray(n, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    k = (n + x) // 2
    ok = same_parity(n, x) & (np.abs(x) <= n)
    kc = np.where(ok, k, 0)
    nc = np.where(ok, n, 0)
    out = gammaln(nc + 1) - gammaln(kc + 1) - gammaln(nc - kc + 1) - nc * np.log(2.0)
    return np.where(ok, out, -np.inf)


def walk_p(n: int, x: int) -> float:
    """P(S_n = x) = 2^-n C(n, (n+x)/2) on the parity cone, else 0."""
    if n < 0:
        raise ValueError("n must be >= 0")
    lp = log_walk_p(n, x)
    return float(np.exp(lp))


def walk_p_row(n: int) -> tuple[np.ndarray, np.ndarray]:
    """All reachable sites and probabilities at time n: x = -n, -n+2, ..., n."""
    x = np.arange(-n, n + 1, 2, dtype=np.int64)
    if n == 0:
        return x, np.ones(1)
    return x, np.exp(log_walk_p(n, x))


def walk_pk(times, sites) -> float:
    """Joint probability P(S_{i_1}=x_1, ..., S_{i_k}=x_k) for strictly increasing times.

    Factorizes over increments with (i_0, x_0) = (0, 0).
    """
    times = np.asarray(times, dtype=np.int64)
    sites = np.asarray(sites, dtype=np.int64)
    if times.shape != sites.shape:
        raise ValueError("times and sites must have matching length")
    if times.size == 0:
        return 1.0
    if np.any(np.diff(times) <= 0) or times[0] < 1:
        return 0.0
    dn = np.diff(np.concatenate(([0], times)))
    dx = np.diff(np.concatenate(([0], sites)))
    lp = log_walk_p(dn, dx)
    total = lp.sum()
    return float(np.exp(total)) if np.isfinite(total) else 0.0


def nearest_parity_int(x: float, i: int) -> int:
    """Closest integer to x with the parity of i; exact ties go to the smaller."""
    p = int(i) % 2
    lo = 2 * int(np.floor((x - p) / 2.0)) + p
    # lo <= x < lo + 2 and lo has the right parity
    if x - lo <= 1.0:
        return lo
    return lo + 2


def pbar_k(times, xs) -> float:
    """Piecewise-constant density on R^k extending the lattice kernel: 2^-k p_k(i, [x]_i)."""
    times = np.asarray(times, dtype=np.int64)
    xs = np.asarray(xs, dtype=float)
    if times.shape != xs.shape:
        raise ValueError("times and xs must have matching length")
    snapped = np.array([nearest_parity_int(v, int(i)) for v, i in zip(xs, times)],
                       dtype=np.int64)
    return 2.0 ** (-len(times)) * walk_pk(times, snapped)


def p_scaled(t, x, n: int) -> float:
    """Diffusively rescaled k-point density: pbar_k(floor(n t), sqrt(n) x) on ordered times.

    Returns 0 when floor(n t) is not a strictly increasing tuple in [1, n].
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    i = np.floor(n * t).astype(np.int64)
    if i.size and (i[0] < 1 or np.any(np.diff(i) <= 0) or i[-1] > n):
        return 0.0
    return pbar_k(i, np.sqrt(n) * x)


def heat_kernel(t, x):
    """Gaussian density P_t(x) of Brownian motion."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)

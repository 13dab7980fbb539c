"""Weighted U-statistics of the environment over distinct time rows.

The order-k statistic sums cell-averaged weights times environment values over
k pairwise-distinct rows and parity-compatible sites, with a 2^(k/2) parity
factor.  For tensor weights the distinct-row sum collapses to symmetric
functions of per-row sums, evaluated through Newton's identities (tensor
powers) or a small multidegree recursion (mixed tensors) in O(n k) / O(n k^s)
instead of O(n^k).  A direct enumerator over row tuples is kept as the oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .env_field import EnvironmentField, CovarianceModel
from .fractional_chaos import RectFn, TensorKernel, as_kernel
from .partition import chaos_level_sums


@dataclass(frozen=True)
class WalkDensity:
    """Marker weight: the rescaled k-point walk density n^(k/2) p^n_k."""

    order: int


@dataclass(frozen=True)
class UStatSpec:
    order: int
    weight: object  # RectFn | TensorKernel | WalkDensity
    n: int

    def __post_init__(self):
        if not 1 <= self.order <= self.n:
            raise ValueError("need 1 <= order <= n")
        if isinstance(self.weight, TensorKernel) and self.weight.order != self.order:
            raise ValueError("tensor kernel order must match the statistic order")
        if isinstance(self.weight, WalkDensity) and self.weight.order != self.order:
            raise ValueError("walk density order must match the statistic order")


def time_fraction(i: int, n: int, t0: float, t1: float) -> float:
    """Overlap fraction of the time cell ((i-1)/n, i/n] with [t0, t1]."""
    lo, hi = (i - 1) / n, i / n
    return max(0.0, (min(hi, t1) - max(lo, t0))) * n


def space_fraction(x: int, n: int, x0: float, x1: float) -> float:
    """Overlap fraction of the space cell ((x-1)/rn, (x+1)/rn] with [x0, x1]."""
    rn = math.sqrt(n)
    lo, hi = (x - 1) / rn, (x + 1) / rn
    return max(0.0, (min(hi, x1) - max(lo, x0))) * rn / 2.0


def f_bar(f, n: int, times, sites) -> float:
    """Exact cell average of a rectangle function (or tensor) on a lattice cell."""
    times = np.atleast_1d(np.asarray(times, dtype=np.int64))
    sites = np.atleast_1d(np.asarray(sites, dtype=np.int64))
    if isinstance(f, RectFn):
        if times.size != 1:
            raise ValueError("RectFn takes a single (i, x) cell")
        return (f.coeff * time_fraction(int(times[0]), n, f.t0, f.t1)
                * space_fraction(int(sites[0]), n, f.x0, f.x1))
    kern = as_kernel(f)
    if times.size != kern.order:
        raise ValueError("cell dimension must match kernel order")
    total = 0.0
    for w, factors in kern.terms:
        total += w * math.prod(
            f_bar(g, n, times[j: j + 1], sites[j: j + 1])
            for j, g in enumerate(factors))
    return total


def _rect_row_weights(g: RectFn, env: EnvironmentField, n: int) -> np.ndarray:
    """Spatial cell-average weights over the environment window (parity-blind)."""
    rn = math.sqrt(n)
    x_lo_needed = math.floor(rn * g.x0 - 1) + 1
    x_hi_needed = math.ceil(rn * g.x1 + 1) - 1
    if env.x_lo > x_lo_needed or env.x_hi < x_hi_needed:
        raise ValueError(
            f"environment window [{env.x_lo}, {env.x_hi}] does not cover the "
            f"weight support [{x_lo_needed}, {x_hi_needed}]")
    xs = np.arange(env.x_lo, env.x_hi + 1)
    lo = (xs - 1) / rn
    hi = (xs + 1) / rn
    w = np.clip(np.minimum(hi, g.x1) - np.maximum(lo, g.x0), 0.0, None) * rn / 2.0
    return g.coeff * w


def row_sums(env: EnvironmentField, g: RectFn, n: int) -> np.ndarray:
    """q_i = sum_x f_bar(g)(i, x) omega(i, x) over sites of the row's parity."""
    if env.n_time < n:
        raise ValueError("environment has fewer than n rows")
    w = _rect_row_weights(g, env, n)
    xs = np.arange(env.x_lo, env.x_hi + 1)
    q = np.empty(n)
    masks = [(xs % 2 == r) for r in (0, 1)]
    for i in range(1, n + 1):
        tf = time_fraction(i, n, g.t0, g.t1)
        if tf == 0.0:
            q[i - 1] = 0.0
            continue
        m = masks[i % 2]
        q[i - 1] = tf * np.dot(w[m], env.values[i - 1][m])
    return q


def _elementary_symmetric(q: np.ndarray, k: int) -> float:
    """e_k via Newton's identities from power sums."""
    p = [float(np.sum(q ** m)) for m in range(k + 1)]
    e = [1.0] + [0.0] * k
    for m in range(1, k + 1):
        acc = 0.0
        for j in range(1, m + 1):
            acc += (-1.0) ** (j - 1) * e[m - j] * p[j]
        e[m] = acc / m
    return e[k]


def _mixed_distinct_sum(qs: list[np.ndarray], counts: list[int]) -> float:
    """sum over ordered distinct row tuples of prod q^{(type)}, slot types fixed.

    Coefficient extraction from prod_i (1 + sum_j z_j q_i^{(j)}), multiplied by
    the multinomial repetition factor.
    """
    dims = tuple(c + 1 for c in counts)
    coef = np.zeros(dims)
    coef[(0,) * len(counts)] = 1.0
    n = qs[0].size
    for i in range(n):
        upd = coef.copy()
        for j, q in enumerate(qs):
            if q[i] == 0.0:
                continue
            shifted = np.zeros(dims)
            idx = [slice(None)] * len(counts)
            idx[j] = slice(1, None)
            src = [slice(None)] * len(counts)
            src[j] = slice(0, dims[j] - 1)
            shifted[tuple(idx)] = coef[tuple(src)]
            upd += q[i] * shifted
        coef = upd
    top = coef[tuple(c for c in counts)]
    return float(top * math.prod(math.factorial(c) for c in counts))


def ustat_eval(env: EnvironmentField, spec: UStatSpec) -> float:
    """Evaluate S_k; dispatches on the weight shape."""
    k, n = spec.order, spec.n
    pref = 2.0 ** (k / 2.0)
    if isinstance(spec.weight, WalkDensity):
        raw = chaos_level_sums(env, n, k)[k]
        return 2.0 ** (-k / 2.0) * n ** (k / 2.0) * raw
    if isinstance(spec.weight, RectFn):
        if k == 1:
            return pref * float(row_sums(env, spec.weight, n).sum())
        raise ValueError("order > 1 needs a TensorKernel weight")
    kern = as_kernel(spec.weight)
    total = 0.0
    for w, factors in kern.terms:
        distinct: list[RectFn] = []
        counts: list[int] = []
        for g in factors:
            if g in distinct:
                counts[distinct.index(g)] += 1
            else:
                distinct.append(g)
                counts.append(1)
        qs = [row_sums(env, g, n) for g in distinct]
        if len(distinct) == 1:
            val = math.factorial(k) * _elementary_symmetric(qs[0], k)
        else:
            val = _mixed_distinct_sum(qs, counts)
        total += w * val
    return pref * total


def ustat_direct(env: EnvironmentField, spec: UStatSpec) -> float:
    """O(n^k) oracle: explicit sum over ordered distinct row tuples."""
    k, n = spec.order, spec.n
    if isinstance(spec.weight, WalkDensity):
        return _walk_density_direct(env, spec)
    kern = as_kernel(spec.weight)
    total = 0.0
    for w, factors in kern.terms:
        qs = [row_sums(env, g, n) for g in factors]
        for rows in permutations(range(n), k):
            total += w * math.prod(qs[j][rows[j]] for j in range(k))
    return 2.0 ** (k / 2.0) * total


def _walk_density_direct(env: EnvironmentField, spec: UStatSpec) -> float:
    from itertools import combinations, product

    from .walk_kernel import walk_pk

    k, n = spec.order, spec.n
    total = 0.0
    for rows in combinations(range(1, n + 1), k):
        ranges = [range(-i, i + 1) for i in rows]
        for xs in product(*ranges):
            p = walk_pk(rows, xs)
            if p == 0.0:
                continue
            total += p * math.prod(env.value(i, x) for i, x in zip(rows, xs))
    return 2.0 ** (-k / 2.0) * n ** (k / 2.0) * total


def ustat_scaled(env: EnvironmentField, spec: UStatSpec, hurst: float) -> float:
    """n^(-(H+1)k/2) S_k: the diffusive scaling of the statistic."""
    return spec.n ** (-(hurst + 1) * spec.order / 2.0) * ustat_eval(env, spec)


# ---------------------------------------------------------------------------
# exact variances


def _row_weight_vectors(g: RectFn, n: int):
    """Parity-split spatial weight vectors and their site coordinates."""
    rn = math.sqrt(n)
    x_lo = math.floor(rn * g.x0 - 1) + 1
    x_hi = math.ceil(rn * g.x1 + 1) - 1
    xs = np.arange(x_lo, x_hi + 1)
    w = np.array([space_fraction(int(x), n, g.x0, g.x1) for x in xs]) * g.coeff
    out = {}
    for r in (0, 1):
        m = xs % 2 == r
        out[r] = (xs[m], w[m])
    return out


def _row_variance(g: RectFn, n: int, gamma: CovarianceModel) -> np.ndarray:
    """v_i = E[q_i^2] for each row (depends on the row parity and time fraction)."""
    vecs = _row_weight_vectors(g, n)
    quad = {}
    for r in (0, 1):
        xs, w = vecs[r]
        lag = np.abs(xs[:, None] - xs[None, :])
        quad[r] = float(w @ gamma(lag) @ w)
    tf = np.array([time_fraction(i, n, g.t0, g.t1) for i in range(1, n + 1)])
    par = np.array([i % 2 for i in range(1, n + 1)])
    return tf * tf * np.where(par == 0, quad[0], quad[1])


def _row_covariance(g1: RectFn, g2: RectFn, n: int,
                    gamma: CovarianceModel) -> np.ndarray:
    v1 = _row_weight_vectors(g1, n)
    v2 = _row_weight_vectors(g2, n)
    quad = {}
    for r in (0, 1):
        xs1, w1 = v1[r]
        xs2, w2 = v2[r]
        lag = np.abs(xs1[:, None] - xs2[None, :])
        quad[r] = float(w1 @ gamma(lag) @ w2)
    tf1 = np.array([time_fraction(i, n, g1.t0, g1.t1) for i in range(1, n + 1)])
    tf2 = np.array([time_fraction(i, n, g2.t0, g2.t1) for i in range(1, n + 1)])
    par = np.array([i % 2 for i in range(1, n + 1)])
    return tf1 * tf2 * np.where(par == 0, quad[0], quad[1])


def ustat_exact_variance(spec: UStatSpec, gamma: CovarianceModel) -> float:
    """Deterministic E[S_k^2] from the covariance table (k <= 2).

    Rows are independent and centered, so only row-pairings survive; the
    result needs second moments only and holds for any innovation law.
    """
    k, n = spec.order, spec.n
    if isinstance(spec.weight, WalkDensity):
        raise ValueError("exact variance implemented for rectangle weights")
    kern = as_kernel(spec.weight) if k > 1 else None
    if k == 1:
        g = spec.weight if isinstance(spec.weight, RectFn) else None
        if g is None:
            (w0, (f0,)), = as_kernel(spec.weight).terms
            g = f0.scaled(w0)
        return 2.0 * float(_row_variance(g, n, gamma).sum())
    if k != 2:
        raise ValueError("exact variance implemented for k in {1, 2}")
    total = 0.0
    for wa, (a1, a2) in kern.terms:
        for wb, (b1, b2) in kern.terms:
            total += wa * wb * _pair_term(a1, a2, b1, b2, n, gamma)
    return 4.0 * total


def _pair_term(a1, a2, b1, b2, n, gamma):
    """sum over ordered distinct (i, j), (k, l) of E[q_i^a1 q_j^a2 q_k^b1 q_l^b2].

    Rows are independent and centered, so only the two row-matchings
    (i=k, j=l) and (i=l, j=k) survive.
    """
    acc = 0.0
    for (c1, c2), (d1, d2) in (((a1, b1), (a2, b2)), ((a1, b2), (a2, b1))):
        u = _row_covariance(c1, c2, n, gamma)
        v = _row_covariance(d1, d2, n, gamma)
        acc += float(u.sum() * v.sum() - np.dot(u, v))
    return acc

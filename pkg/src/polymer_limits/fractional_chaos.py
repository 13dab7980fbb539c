"""Fractional-noise covariance calculus and Wiener chaos machinery.

The driving field is white in time and fractionally correlated in space with
covariance kernel K(u, v) = H(2H-1)|u - v|^(2H-2), 1/2 < H < 1.  Test
functions are rectangle indicators and their symmetric tensor combinations;
multiple integrals are evaluated exactly in distribution through Hermite
polynomials of orthonormalized Gaussian coordinates, so sampling carries no
discretization bias.

Second moments of the multiplicative-noise heat-equation chaos are reduced to
dimensionless time-simplex integrals:

    Theta_k(t, x; s, y) = P_{t-s}(x-y)^2 * beta^(2k) * (t-s)^(kH) * J_k(H),
    J_k(H) = int_{0<u_1<...<u_k<1} E[ prod_i K(w_i, 0) ] du,

where w is sqrt(2) times a standard Brownian bridge on [0,1] sampled at the
u_i (the difference of two independent pinned heat-kernel chains; the pinning
factors collapse into P_{t-s}(x-y)^2 exactly).  J_1 is closed form, J_2 is a
deterministic hypergeometric quadrature, higher orders are Monte Carlo.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.special import gamma as gamma_fn, hyp2f1

from ._quad import nodes as quad_nodes
from .walk_kernel import heat_kernel


def kernel_K(u: float, v: float, hurst: float) -> float:
    """Spatial covariance kernel H(2H-1)|u-v|^(2H-2); singular on the diagonal."""
    if u == v:
        raise ZeroDivisionError("covariance kernel is singular at u = v")
    return hurst * (2 * hurst - 1) * abs(u - v) ** (2 * hurst - 2)


@dataclass(frozen=True)
class RectFn:
    """coeff * 1_{[t0,t1] x [x0,x1]} on [0,1] x R."""

    t0: float
    t1: float
    x0: float
    x1: float
    coeff: float = 1.0

    def __post_init__(self):
        if self.t1 < self.t0 or self.x1 < self.x0:
            raise ValueError("rectangle intervals must be ordered")

    def is_zero(self) -> bool:
        return self.coeff == 0.0 or self.t1 == self.t0 or self.x1 == self.x0

    def scaled(self, c: float) -> "RectFn":
        return RectFn(self.t0, self.t1, self.x0, self.x1, self.coeff * c)

    def norm_H(self, hurst: float) -> float:
        return math.sqrt(max(inner_H(self, self, hurst), 0.0))

    def unit(self, hurst: float) -> "RectFn":
        return self.scaled(1.0 / self.norm_H(hurst))


def _increment_cov(a: float, b: float, c: float, d: float, hurst: float) -> float:
    """E[(B_b - B_a)(B_d - B_c)] for fBm: the closed form of the double K integral."""
    h2 = 2 * hurst
    return 0.5 * (abs(b - c) ** h2 + abs(a - d) ** h2
                  - abs(b - d) ** h2 - abs(a - c) ** h2)


def inner_H(f: RectFn, g: RectFn, hurst: float) -> float:
    """<f, g> in the kernel Hilbert space: |time overlap| x fBm increment covariance."""
    t_ov = min(f.t1, g.t1) - max(f.t0, g.t0)
    if t_ov <= 0:
        return 0.0
    return f.coeff * g.coeff * t_ov * _increment_cov(f.x0, f.x1, g.x0, g.x1, hurst)


def hardy_littlewood_functional(f: RectFn, hurst: float) -> float:
    """int_0^1 ( int |f|^(1/H) dx )^(2H) dt for a single rectangle."""
    return ((f.t1 - f.t0)
            * (abs(f.coeff) ** (1 / hurst) * (f.x1 - f.x0)) ** (2 * hurst))


def hermite(n: int, x):
    """Probabilists' Hermite polynomial H_n via the three-term recurrence."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for m in range(1, n):
        h, h_prev = x * h - m * h_prev, h
    return h


# ---------------------------------------------------------------------------
# symmetric tensor kernels


@dataclass(frozen=True)
class TensorKernel:
    """Linear combination of symmetrized elementary tensors of rectangle factors.

    Each term (coeff, factors) stands for coeff times the symmetrization of
    factors[0] (x) ... (x) factors[k-1]; the factor order inside a term is
    immaterial.
    """

    order: int
    terms: tuple[tuple[float, tuple[RectFn, ...]], ...]

    @classmethod
    def from_factors(cls, *factors: RectFn, coeff: float = 1.0) -> "TensorKernel":
        return cls(order=len(factors), terms=((coeff, tuple(factors)),))

    @classmethod
    def from_power(cls, f: RectFn, k: int, coeff: float = 1.0) -> "TensorKernel":
        return cls.from_factors(*([f] * k), coeff=coeff)

    def __add__(self, other: "TensorKernel") -> "TensorKernel":
        if other.order != self.order:
            raise ValueError("can only add kernels of equal order")
        return TensorKernel(self.order, self.terms + other.terms).simplify()

    def scaled(self, c: float) -> "TensorKernel":
        return TensorKernel(self.order,
                            tuple((c * w, fs) for w, fs in self.terms))

    def tensor(self, other: "TensorKernel") -> "TensorKernel":
        terms = tuple((wa * wb, fa + fb)
                      for wa, fa in self.terms for wb, fb in other.terms)
        return TensorKernel(self.order + other.order, terms).simplify()

    def simplify(self) -> "TensorKernel":
        merged: dict[tuple, float] = {}
        for w, fs in self.terms:
            key = tuple(sorted(fs, key=lambda r: (r.t0, r.t1, r.x0, r.x1, r.coeff)))
            merged[key] = merged.get(key, 0.0) + w
        terms = tuple((w, fs) for fs, w in merged.items() if w != 0.0)
        return TensorKernel(self.order, terms)

    def factor_set(self) -> list[RectFn]:
        seen: list[RectFn] = []
        for _, fs in self.terms:
            for f in fs:
                if f not in seen:
                    seen.append(f)
        return seen


def as_kernel(f) -> TensorKernel:
    if isinstance(f, TensorKernel):
        return f
    if isinstance(f, RectFn):
        return TensorKernel.from_factors(f)
    raise TypeError(f"cannot interpret {type(f).__name__} as a tensor kernel")


def kernel_inner(a, b, hurst: float) -> float:
    """<a, b> on symmetrized order-k tensors: the permanent-averaged factor pairing."""
    a, b = as_kernel(a), as_kernel(b)
    if a.order != b.order:
        raise ValueError("kernel orders differ")
    k = a.order
    if k == 0:
        return sum(w for w, _ in a.terms) * sum(w for w, _ in b.terms)
    total = 0.0
    fact = math.factorial(k)
    for wa, fa in a.terms:
        for wb, fb in b.terms:
            gram = np.array([[inner_H(x, y, hurst) for y in fb] for x in fa])
            perm = sum(math.prod(gram[i, p[i]] for i in range(k))
                       for p in permutations(range(k)))
            total += wa * wb * perm / fact
    return total


def kernel_norm_sq(a, hurst: float) -> float:
    return kernel_inner(a, a, hurst)


def contract(fa, fb, r: int, hurst: float) -> TensorKernel:
    """r-fold contraction of symmetrized tensors (order m + n - 2r result).

    Pairs r factor slots through the covariance inner product, averaging over
    which factors occupy the contracted slots; for a single repeated factor
    this reduces to f^(x)l (x)_1 f = ||f||^2 f^(x)(l-1).
    """
    fa, fb = as_kernel(fa), as_kernel(fb)
    if r < 0 or r > min(fa.order, fb.order):
        raise ValueError(f"contraction order {r} out of range")
    if r == 0:
        return fa.tensor(fb)
    out_terms: list[tuple[float, tuple[RectFn, ...]]] = []
    for wa, fs_a in fa.terms:
        for wb, fs_b in fb.terms:
            ka, kb = len(fs_a), len(fs_b)
            norm = (math.perm(ka, r) * math.perm(kb, r))
            for ia in permutations(range(ka), r):
                rest_a = tuple(f for j, f in enumerate(fs_a) if j not in ia)
                for ib in permutations(range(kb), r):
                    pair = math.prod(inner_H(fs_a[ia[t]], fs_b[ib[t]], hurst)
                                     for t in range(r))
                    rest_b = tuple(f for j, f in enumerate(fs_b) if j not in ib)
                    out_terms.append((wa * wb * pair / norm, rest_a + rest_b))
    return TensorKernel(fa.order + fb.order - 2 * r, tuple(out_terms)).simplify()


# ---------------------------------------------------------------------------
# Gaussian sampling of the field and its chaoses


class FracFieldSampler:
    """Joint sampler for W(f_i) over a rectangle basis, with Gram factorization."""

    def __init__(self, rects: list[RectFn], hurst: float, seed: int,
                 jitter: float = 1e-12):
        self.rects = list(rects)
        self.hurst = hurst
        self.seed = seed
        n = len(self.rects)
        self.gram = np.array([[inner_H(a, b, hurst) for b in self.rects]
                              for a in self.rects])
        self.factor, self.rank = _factor_gram(self.gram, jitter)
        self._rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, 0x57], dtype=np.uint64)))
        resid = np.linalg.norm(self.factor @ self.factor.T - self.gram)
        scale = max(np.linalg.norm(self.gram), 1e-300)
        if resid > 1e-8 * scale and n > 0:
            raise np.linalg.LinAlgError(
                f"Gram factorization residual {resid:.3e} exceeds tolerance")

    def sample_zeta(self, n_samples: int) -> np.ndarray:
        """Orthonormal Gaussian coordinates, shape (n_samples, rank)."""
        return self._rng.standard_normal((n_samples, self.rank))

    def index_of(self, f: RectFn) -> int:
        return self.rects.index(f)


def _factor_gram(gram: np.ndarray, jitter: float):
    n = gram.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0
    vals = np.linalg.eigvalsh(gram)
    top = max(float(vals.max()), 1e-300)
    if vals.min() < -1e-8 * top - 1e-10 * np.trace(gram) / n:
        raise np.linalg.LinAlgError(
            f"Gram matrix has negative eigenvalue {vals.min():.3e}")
    if vals.min() <= 1e-10 * top:
        # linearly dependent rectangles: reduced-rank orthogonal factorization
        warnings.warn("rectangle set is linearly dependent; reducing rank",
                      RuntimeWarning, stacklevel=3)
        vals, vecs = np.linalg.eigh(gram)
        keep = vals > 1e-12 * top
        factor = vecs[:, keep] * np.sqrt(np.maximum(vals[keep], 0.0))
        return factor, int(keep.sum())
    eps = jitter * np.trace(gram) / n
    for _ in range(3):
        try:
            chol = np.linalg.cholesky(gram + eps * np.eye(n))
            return chol, n
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise np.linalg.LinAlgError("Gram factorization failed after jitter "
                                "escalation")


def sample_field(sampler: FracFieldSampler, n_samples: int,
                 zeta: np.ndarray | None = None) -> np.ndarray:
    """I.i.d. draws of (W(f_1), ..., W(f_m)) with covariance = Gram matrix."""
    if zeta is None:
        zeta = sampler.sample_zeta(n_samples)
    return zeta @ sampler.factor.T


def multiple_integral_sample(kernel, sampler: FracFieldSampler,
                             n_samples: int,
                             zeta: np.ndarray | None = None) -> np.ndarray:
    """Samples of the order-k multiple integral of a symmetric tensor kernel.

    Rewrites each elementary tensor in the orthonormal coordinates of the
    sampler's Gram factor and evaluates the corresponding Wick monomials as
    products of Hermite polynomials, so E I_k = 0 and
    E I_k(f)^2 = k! ||f||^2 hold exactly in distribution.
    """
    kernel = as_kernel(kernel)
    if kernel.order < 1:
        raise ValueError("kernel order must be >= 1")
    if zeta is None:
        zeta = sampler.sample_zeta(n_samples)
    rank = sampler.rank
    poly: dict[tuple[int, ...], float] = {}
    zero = (0,) * rank
    for w, factors in kernel.terms:
        term_poly = {zero: w}
        for f in factors:
            row = sampler.factor[sampler.index_of(f)]
            nxt: dict[tuple[int, ...], float] = {}
            for deg, c in term_poly.items():
                for g in range(rank):
                    if row[g] == 0.0:
                        continue
                    d2 = list(deg)
                    d2[g] += 1
                    key = tuple(d2)
                    nxt[key] = nxt.get(key, 0.0) + c * row[g]
            term_poly = nxt
        for deg, c in term_poly.items():
            poly[deg] = poly.get(deg, 0.0) + c
    out = np.zeros(zeta.shape[0])
    max_deg = max((max(d) for d in poly), default=0)
    herm = [np.ones_like(zeta)]
    if max_deg >= 1:
        herm.append(zeta.copy())
    for m in range(1, max_deg):
        herm.append(zeta * herm[m] - m * herm[m - 1])
    for deg, c in poly.items():
        if c == 0.0:
            continue
        mono = np.ones(zeta.shape[0])
        for g, d in enumerate(deg):
            if d:
                mono *= herm[d][:, g]
        out += c * mono
    return out


def verify_product_formula(f_kernel, g: RectFn, sampler: FracFieldSampler,
                           n_samples: int = 20000) -> dict:
    """Monte Carlo residual of I_l(f) I_1(g) = I_{l+1}(f (x) g) + l I_{l-1}(f (x)_1 g).

    Returns the JSON-able report {identity, k, n_samples, residual_mean,
    residual_se, pass}; the identity holds pathwise, so the residual should
    sit at numerical round-off for any factor set.
    """
    f_kernel = as_kernel(f_kernel)
    l = f_kernel.order
    zeta = sampler.sample_zeta(n_samples)
    lhs = (multiple_integral_sample(f_kernel, sampler, n_samples, zeta=zeta)
           * multiple_integral_sample(as_kernel(g), sampler, n_samples, zeta=zeta))
    rhs = multiple_integral_sample(f_kernel.tensor(as_kernel(g)), sampler,
                                   n_samples, zeta=zeta)
    if l >= 1:
        lower = contract(f_kernel, as_kernel(g), 1, sampler.hurst)
        if lower.order == 0:
            rhs = rhs + l * sum(w for w, _ in lower.terms)
        elif lower.terms:
            rhs = rhs + l * multiple_integral_sample(lower, sampler, n_samples,
                                                     zeta=zeta)
    resid = lhs - rhs
    mean = float(resid.mean())
    se = float(resid.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    scale = max(float(np.abs(lhs).mean()), 1.0)
    ok = bool(abs(mean) <= max(3.0 * se, 1e-10 * scale)
              and float(np.abs(resid).max()) <= max(1e-9 * scale, 30.0 * se))
    return {"identity": "product-formula", "k": l, "n_samples": n_samples,
            "residual_mean": mean, "residual_se": se, "pass": ok}


# ---------------------------------------------------------------------------
# chaos second moments of the heat-equation solution


@dataclass(frozen=True)
class ChaosMoment:
    k: int
    estimate: float
    se: float
    n_samples: int


def abs_moment(a: float) -> float:
    """E|Z|^a for standard normal Z (a > -1)."""
    return 2.0 ** (a / 2) * gamma_fn((a + 1) / 2) / math.sqrt(math.pi)


def bivariate_abs_moment(a: float, r) -> np.ndarray:
    """E[|X|^a |Y|^a] for standard bivariate normal with correlation r."""
    r = np.asarray(r, dtype=float)
    coef = 2.0 ** a / math.pi * gamma_fn((a + 1) / 2) ** 2
    return coef * hyp2f1(-a / 2, -a / 2, 0.5, r * r)


def simplex_moment_exact(k: int, hurst: float) -> float:
    """Deterministic J_k for k <= 2 (closed form / hypergeometric quadrature)."""
    a = 2 * hurst - 2
    lam = hurst * (2 * hurst - 1)
    if k == 0:
        return 1.0
    if k == 1:
        beta_hh = gamma_fn(hurst) ** 2 / gamma_fn(2 * hurst)
        return lam * abs_moment(a) * 2.0 ** (hurst - 1) * beta_hh
    if k == 2:
        u2, w2 = quad_nodes(0.0, 1.0, refine=(0.0, 1.0), min_width=1e-9, order=24)
        total = 0.0
        for u, w in zip(u2, w2):
            u1, w1 = quad_nodes(0.0, u, refine=(0.0, u), min_width=1e-10, order=24)
            s1 = 2.0 * u1 * (1.0 - u1)
            s2 = 2.0 * u * (1.0 - u)
            r = 2.0 * u1 * (1.0 - u) / np.sqrt(s1 * s2)
            vals = (s1 ** (hurst - 1) * s2 ** (hurst - 1)
                    * bivariate_abs_moment(a, r))
            total += w * np.dot(w1, vals)
        return lam * lam * total
    raise ValueError("exact simplex moments implemented for k <= 2 only")


def simplex_moment_mc(k: int, hurst: float, n_mc: int, seed: int) -> tuple[float, float]:
    """Monte Carlo J_k: ordered uniform times, difference chain sampled as a bridge.

    The difference of the two pinned heat-kernel chains is sqrt(2) times a
    standard Brownian bridge; all endpoint kernel factors are already absorbed
    into the closed-form prefactor, so the weight is just the product of
    spatial kernel factors along the bridge.
    """
    lam = hurst * (2 * hurst - 1)
    a = 2 * hurst - 2
    rng = np.random.Generator(np.random.Philox(
        key=np.array([seed, 0x7e7a + k], dtype=np.uint64)))
    batch = min(n_mc, 1 << 19)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_mc:
        b = min(batch, n_mc - done)
        u = np.sort(rng.uniform(size=(b, k)), axis=1)
        w = np.empty((b, k))
        prev_u = np.zeros(b)
        prev_b = np.zeros(b)
        for j in range(k):
            uj = u[:, j]
            # Brownian bridge transition: mean shrinks toward 0 at time 1
            frac = np.where(prev_u < 1.0, (1.0 - uj) / (1.0 - prev_u), 0.0)
            var = np.maximum((uj - prev_u) * frac, 0.0)
            b_here = prev_b * frac + np.sqrt(var) * rng.standard_normal(b)
            w[:, j] = math.sqrt(2.0) * b_here
            prev_u, prev_b = uj, b_here
        vals = np.prod(lam * np.abs(w) ** a, axis=1) / math.factorial(k)
        total += vals.sum()
        total_sq += np.dot(vals, vals)
        done += b
    mean = total / n_mc
    var = max(total_sq / n_mc - mean * mean, 0.0)
    return mean, math.sqrt(var / n_mc)


def theta_k(k: int, t: float, x: float, s: float, y: float, beta: float,
            hurst: float, n_mc: int = 200_000, seed: int = 0,
            force: bool = False, exact: bool = True) -> ChaosMoment:
    """k-th chaos second moment of the four-parameter heat-equation solution.

    Theta_0 is the squared heat kernel; higher orders scale as
    beta^(2k) (t-s)^(kH) J_k times Theta_0.
    """
    if t <= s:
        raise ValueError("need t > s")
    if k > 6 and not force:
        raise ValueError("k > 6 refused: weight variance blows up (pass force=True)")
    base = float(heat_kernel(t - s, x - y)) ** 2
    if k == 0:
        return ChaosMoment(0, base, 0.0, 0)
    scale = base * beta ** (2 * k) * (t - s) ** (k * hurst)
    if exact and k <= 2:
        return ChaosMoment(k, scale * simplex_moment_exact(k, hurst), 0.0, 0)
    est, se = simplex_moment_mc(k, hurst, n_mc, seed)
    return ChaosMoment(k, scale * est, scale * se, n_mc)


def chaos_second_moment(t: float, x: float, s: float, y: float, beta: float,
                        hurst: float, k_max: int = 4, n_mc: int = 200_000,
                        seed: int = 0) -> dict:
    """E[u(t,x;s,y)^2] truncated at k_max chaoses, with SE and geometric tail bound."""
    if k_max > 6:
        raise ValueError("k_max <= 6")
    moments = [theta_k(k, t, x, s, y, beta, hurst, n_mc=n_mc, seed=seed)
               for k in range(k_max + 1)]
    vals = np.array([m.estimate for m in moments])
    if np.any(np.diff(np.cumsum(vals)) < -3 * max(m.se for m in moments)):
        raise FloatingPointError("partial sums decreased beyond Monte Carlo error")
    total = float(vals.sum())
    se = float(np.sqrt(sum(m.se ** 2 for m in moments)))
    tail = 0.0
    if k_max >= 2 and vals[k_max - 1] > 0:
        ratio = vals[k_max] / vals[k_max - 1]
        if 0 < ratio < 1:
            tail = float(vals[k_max] * ratio / (1 - ratio))
        else:
            tail = float("inf")
    return {"total": total, "se": se, "tail_estimate": tail,
            "terms": moments}

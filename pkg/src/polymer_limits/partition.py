"""Polymer partition functions: transfer-matrix surfaces, tilting, moment oracles.

The modified weight replaces e^x by 1 + x, turning the partition function into
a finite polynomial of the inverse temperature whose coefficients are walk-
weighted sums over the environment (the discrete chaos expansion).  All
surfaces are computed by the forward half-averaging recursion

    z(i, x) = weight(i, x) * (z(i-1, x-1) + z(i-1, x+1)) / 2,

anchored either at the origin (point-to-point: z(0, .) = 1_{x=0}, so the
beta = 0 surface is the walk kernel) or at a flat line (dual field:
z(0, .) = 1, so the beta = 0 surface is identically one).  The origin
point-to-line value is the endpoint sum of the point-to-point surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env_field import EnvironmentField, EnvParams, exact_gamma
from .walk_kernel import log_walk_p

MAX_LOG_WEIGHT = 50.0


@dataclass(frozen=True)
class PartitionParams:
    """Inverse temperature, horizon and scaling exponent (rho = H/2, derived)."""

    beta: float
    n: int
    hurst: float
    variant: str = "modified"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.5 < self.hurst < 1.0:
            raise ValueError("hurst must lie in (1/2, 1)")
        if self.variant not in ("modified", "exponential"):
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def rho(self) -> float:
        return self.hurst / 2.0

    @property
    def coupling(self) -> float:
        """Effective per-site coupling beta * n^(-rho)."""
        return self.beta * self.n ** (-self.rho)


@dataclass(frozen=True)
class PartitionSurface:
    """Dense partition surface z(i, x), i = 0..n, x = x_lo..x_hi.

    `log_scale[i]` holds the accumulated per-row normalization; the true value
    is values[i] * exp(log_scale[i]).  Point-to-point surfaces vanish off the
    parity cone; dual line surfaces are NaN where boundary effects reach.
    """

    params: PartitionParams
    kind: str
    normalization: str
    x_lo: int
    x_hi: int
    values: np.ndarray = field(repr=False)
    log_scale: np.ndarray = field(repr=False)

    def row(self, i: int) -> np.ndarray:
        return self.values[i] * math.exp(self.log_scale[i])

    def value(self, i: int, x: int) -> float:
        if not self.x_lo <= x <= self.x_hi:
            raise IndexError(f"x={x} outside surface window")
        return float(self.values[i, x - self.x_lo] * math.exp(self.log_scale[i]))

    def line_value(self, i: int | None = None) -> float:
        """Endpoint sum of the point-to-point surface: the origin point-to-line value."""
        if self.kind != "point_to_point":
            raise ValueError("line_value is defined for point-to-point surfaces")
        i = self.params.n if i is None else i
        return float(np.nansum(self.values[i]) * math.exp(self.log_scale[i]))


def _require_cone(env: EnvironmentField, n: int) -> None:
    if env.n_time < n or env.x_lo > -n or env.x_hi < n:
        raise ValueError(
            f"environment window [{env.x_lo}, {env.x_hi}] x {env.n_time} rows "
            f"does not cover the cone |x| <= {n}, rows 1..{n}")


def _half_step(prev: np.ndarray) -> np.ndarray:
    out = np.empty_like(prev)
    out[1:-1] = 0.5 * (prev[:-2] + prev[2:])
    out[0] = 0.5 * prev[1]
    out[-1] = 0.5 * prev[-2]
    return out


def _weights(row_omega: np.ndarray, params: PartitionParams) -> np.ndarray:
    b = params.coupling
    if params.variant == "modified":
        return 1.0 + b * row_omega
    logw = b * row_omega
    if np.max(np.abs(logw)) > MAX_LOG_WEIGHT:
        raise FloatingPointError(
            f"|log weight| exceeded {MAX_LOG_WEIGHT}; coupling too strong")
    return np.exp(logw)


def _sweep(omega: np.ndarray, params: PartitionParams, init: np.ndarray,
           normalize: bool):
    n = params.n
    values = np.empty((n + 1, init.size))
    log_scale = np.zeros(n + 1)
    values[0] = init
    cur = init.astype(float)
    cur_log = 0.0
    for i in range(1, n + 1):
        cur = _weights(omega[i - 1], params) * _half_step(cur)
        if normalize:
            m = float(np.nanmax(np.abs(cur)))
            if m > 0 and np.isfinite(m):
                cur = cur / m
                cur_log += math.log(m)
        values[i] = cur
        log_scale[i] = cur_log
    return values, log_scale


def _omega_window(env, n: int) -> tuple[np.ndarray, int, int]:
    if isinstance(env, EnvironmentField):
        _require_cone(env, n)
        lo, hi = -n, n
        sl = slice(lo - env.x_lo, hi - env.x_lo + 1)
        return env.values[:n, sl], lo, hi
    values, x_lo = env  # (ndarray rows 1..n, leftmost column)
    hi = x_lo + values.shape[1] - 1
    if values.shape[0] < n or x_lo > -n or hi < n:
        raise ValueError(f"field window [{x_lo}, {hi}] does not cover |x| <= {n}")
    sl = slice(-n - x_lo, n - x_lo + 1)
    return values[:n, sl], -n, n


def dp_modified_partition(env, params: PartitionParams,
                          kind: str = "point_to_point") -> PartitionSurface:
    """Forward transfer-matrix sweep of the 1+x weights; O(n^2).

    `env` is an EnvironmentField or a (values, x_lo) pair (for tilted fields).
    """
    if params.variant != "modified":
        raise ValueError("variant must be 'modified'")
    return _dp(env, params, kind, normalize=False)


def dp_exp_partition(env, params: PartitionParams,
                     kind: str = "point_to_point") -> PartitionSurface:
    """Same sweep with e^(b omega) weights and per-row max normalization."""
    if params.variant != "exponential":
        raise ValueError("variant must be 'exponential'")
    return _dp(env, params, kind, normalize=True)


def _dp(env, params: PartitionParams, kind: str, normalize: bool) -> PartitionSurface:
    omega, lo, hi = _omega_window(env, params.n)
    width = hi - lo + 1
    if kind == "point_to_point":
        init = np.zeros(width)
        init[-lo] = 1.0
    elif kind == "point_to_line":
        init = np.ones(width)
        omega = omega.copy()
    else:
        raise ValueError(f"unknown kind {kind!r}")
    values, log_scale = _sweep(omega, params, init, normalize)
    if kind == "point_to_line":
        # boundary columns lack a neighbour; mark everything they influenced
        for i in range(1, params.n + 1):
            values[i, :i][: min(i, width)] = np.nan
            values[i, width - i:] = np.nan
    return PartitionSurface(params=params, kind=kind,
                            normalization="per_row_max" if normalize else "raw",
                            x_lo=lo, x_hi=hi, values=values, log_scale=log_scale)


def normalized_exp_surface(env: EnvironmentField, params: PartitionParams,
                           kind: str = "point_to_point") -> PartitionSurface:
    """Exponential surface carrying e^(-i lambda(b)) per time level.

    With Gaussian innovations this equals the modified surface built from the
    tilted field, identically in the realization.
    """
    surf = dp_exp_partition(env, params, kind)
    lam = log_laplace(env.params, params.coupling)
    log_scale = surf.log_scale - lam * np.arange(params.n + 1)
    return PartitionSurface(params=params, kind=surf.kind,
                            normalization="exp_centered", x_lo=surf.x_lo,
                            x_hi=surf.x_hi, values=surf.values,
                            log_scale=log_scale)


# ---------------------------------------------------------------------------
# tilting


@dataclass(frozen=True)
class TiltedField:
    """Mean-zero transform (e^(b w - lambda(b)) - 1)/b of the environment."""

    source: EnvironmentField
    beta: float
    n: int
    coupling: float
    log_laplace_value: float
    values: np.ndarray = field(repr=False)

    def log_laplace(self, b: float) -> float:
        return log_laplace(self.source.params, b)

    def appell_coeff(self, j: int) -> float:
        """Orthogonal-expansion coefficient of the transform, unit-variance scale.

        The generating identity e^(b z - b^2/2) = sum_j b^j H_j(z)/j! gives
        coefficient b^(j-1)/j! on the j-th polynomial; the rank-one coefficient
        is 1 for every n.
        """
        if j < 1:
            raise ValueError("coefficients are defined for j >= 1")
        return self.coupling ** (j - 1) / math.factorial(j)

    def as_field(self) -> tuple[np.ndarray, int]:
        return self.values, self.source.x_lo


def log_laplace(env_params: EnvParams, b: float) -> float:
    """Log-Laplace transform of a single environment value at argument b."""
    if env_params.xi_dist != "gaussian":
        raise ValueError("closed-form log-Laplace requires Gaussian innovations")
    return 0.5 * b * b * exact_gamma(0, env_params)


def tilt_environment(env: EnvironmentField, beta: float, n: int) -> TiltedField:
    """Pointwise exponential tilt at coupling b = beta n^(-H/2)."""
    b = beta * n ** (-env.params.hurst / 2.0)
    lam = log_laplace(env.params, b)
    if b == 0.0:
        raise ValueError("tilt undefined at beta = 0")
    values = np.expm1(b * env.values - lam) / b
    values.setflags(write=False)
    return TiltedField(source=env, beta=beta, n=n, coupling=b,
                       log_laplace_value=lam, values=values)


def tilted_gamma(env_params: EnvParams, b: float, k: int) -> float:
    """Covariance of the tilted field at lag k: (e^(b^2 gamma(k)) - 1)/b^2."""
    return math.expm1(b * b * exact_gamma(k, env_params)) / (b * b)


# ---------------------------------------------------------------------------
# exact second-moment oracles over two independent walks


def two_walk_second_moment(n: int, beta: float, gamma: np.ndarray, hurst: float,
                           mode: str = "point_to_line", x: int = 0,
                           weight: str = "modified") -> float:
    """E[z_n^2] by dynamic programming over the difference walk.

    Expanding the product over two independent replicas row by row leaves one
    covariance factor per time level, a function of the difference walk
    d_i = S_i - S'_i (steps -2, 0, +2 with probabilities 1/4, 1/2, 1/4).  The
    point-to-point version additionally tracks the count of zero steps m,
    because conditionally on the difference path the common endpoint is
    reached like an m-step free walk.
    """
    if gamma.size < 2 * n + 1:
        raise ValueError(f"need gamma up to lag {2 * n}")
    b2 = (beta * n ** (-hurst / 2.0)) ** 2
    lags = np.abs(np.arange(-2 * n, 2 * n + 1, 2))
    if weight == "modified":
        w = 1.0 + b2 * gamma[lags]
    elif weight == "exponential":
        w = np.exp(b2 * gamma[lags])
    else:
        raise ValueError(f"unknown weight {weight!r}")
    size = 2 * n + 1  # states d/2 = -n..n
    if mode == "point_to_line":
        cur = np.zeros(size)
        cur[n] = 1.0
        for _ in range(n):
            nxt = 0.5 * cur
            nxt[1:] += 0.25 * cur[:-1]
            nxt[:-1] += 0.25 * cur[1:]
            cur = nxt * w
        return float(cur.sum())
    if mode != "point_to_point":
        raise ValueError(f"unknown mode {mode!r}")
    # state (d/2 + n, zero-step count m)
    cur = np.zeros((size, n + 1))
    cur[n, 0] = 1.0
    for _ in range(n):
        nxt = np.zeros_like(cur)
        nxt[:, 1:] = 0.5 * cur[:, :-1]
        nxt[1:, :] += 0.25 * cur[:-1, :]
        nxt[:-1, :] += 0.25 * cur[1:, :]
        cur = nxt * w[:, None]
    m = np.arange(n + 1)
    endp = np.exp(log_walk_p(m, np.full(n + 1, x)))
    return float(np.dot(cur[n], endp))


# ---------------------------------------------------------------------------
# chaos expansion of the modified partition function


def chaos_level_sums(env, n: int, k_max: int) -> list[float]:
    """Raw walk-weighted environment sums over ordered row tuples, orders 0..k_max.

    Level j of the marked transfer sweep carries every walk path with j marked
    rows (strictly increasing mark times), each mark contributing its
    environment value; cost O(k n^2).  Level 0 is 1 (empty product).
    """
    omega, lo, hi = _omega_window(env, n)
    width = hi - lo + 1
    k_max = min(k_max, n)
    levels = [np.zeros(width) for _ in range(k_max + 1)]
    levels[0][-lo] = 1.0
    for i in range(1, n + 1):
        propagated = [_half_step(lv) for lv in levels]
        row = omega[i - 1]
        levels[0] = propagated[0]
        for j in range(k_max, 0, -1):
            levels[j] = propagated[j] + row * propagated[j - 1]
    return [float(lv.sum()) for lv in levels]


def chaos_terms(env, params: PartitionParams, k_max: int) -> list[float]:
    """Terms of order beta^0..beta^k_max of the origin point-to-line expansion."""
    raw = chaos_level_sums(env, params.n, k_max)
    b = params.coupling
    return [b ** j * raw[j] for j in range(len(raw))]


def chaos_term(env, params: PartitionParams, k: int) -> float:
    """Single expansion term of order beta^k (0th term is 1 by convention)."""
    if k > params.n:
        return 0.0
    return chaos_terms(env, params, k)[k]


def modified_line_value(env, params: PartitionParams) -> float:
    """Origin point-to-line modified partition value (endpoint sum of the sweep)."""
    return dp_modified_partition(env, params, kind="point_to_point").line_value()

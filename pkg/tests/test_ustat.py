import math

import numpy as np
import pytest

from polymer_limits import env_field as ef
from polymer_limits import fractional_chaos as fc
from polymer_limits import ustat as us

H = 0.75


def test_spec_validation(params_small):
    g = fc.RectFn(0, 1, 0, 1)
    with pytest.raises(ValueError):
        us.UStatSpec(order=0, weight=g, n=4)
    with pytest.raises(ValueError):
        us.UStatSpec(order=2, weight=fc.TensorKernel.from_power(g, 3), n=8)
    with pytest.raises(ValueError):
        us.UStatSpec(order=2, weight=us.WalkDensity(1), n=8)


def test_f_bar_cell_averages():
    g = fc.RectFn(0.0, 1.0, 0.0, 1.0, coeff=1.7)
    n = 16
    # interior cell
    assert us.f_bar(g, n, [4], [2]) == pytest.approx(1.7, rel=1e-13)
    # fully outside
    assert us.f_bar(g, n, [4], [40]) == 0.0
    # boundary space cell overlaps half its width
    assert us.f_bar(g, n, [4], [0]) == pytest.approx(0.85, rel=1e-13)
    assert us.f_bar(g, n, [4], [4]) == pytest.approx(0.85, rel=1e-13)
    # tensor cell average multiplies factor averages
    kern = fc.TensorKernel.from_power(g, 2)
    assert us.f_bar(kern, n, [3, 5], [2, 0]) == pytest.approx(1.7 * 1.7 * 0.5,
                                                              rel=1e-12)


def test_k1_is_scaled_window_sum(params_small):
    n = 16
    env = ef.sample_environment(params_small, n, -6, 10, seed=21)
    g = fc.RectFn(0.0, 1.0, 0.0, 1.0)
    val = us.ustat_eval(env, us.UStatSpec(order=1, weight=g, n=n))
    direct = 0.0
    for i in range(1, n + 1):
        for x in range(env.x_lo, env.x_hi + 1):
            if (i + x) % 2 == 0:
                direct += us.f_bar(g, n, [i], [x]) * env.value(i, x)
    assert val == pytest.approx(math.sqrt(2.0) * direct, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_newton_path_equals_direct(params_small, k):
    g = fc.RectFn(0.05, 0.95, -1.0, 1.2, coeff=1.3)
    for n in (6, 9):
        if k > n:
            continue
        env = ef.sample_environment(params_small, n, -24, 24, seed=100 + n + k)
        spec = us.UStatSpec(order=k, weight=fc.TensorKernel.from_power(g, k),
                            n=n)
        fast = us.ustat_eval(env, spec)
        slow = us.ustat_direct(env, spec)
        assert fast == pytest.approx(slow, rel=1e-12, abs=1e-12)


def test_mixed_tensor_equals_direct(params_small):
    g1 = fc.RectFn(0.0, 1.0, -1.0, 0.5)
    g2 = fc.RectFn(0.2, 0.8, 0.0, 1.5, coeff=0.6)
    env = ef.sample_environment(params_small, 8, -24, 24, seed=55)
    kern = fc.TensorKernel.from_factors(g1, g1, g2)
    spec = us.UStatSpec(order=3, weight=kern, n=8)
    assert us.ustat_eval(env, spec) == pytest.approx(
        us.ustat_direct(env, spec), rel=1e-12)


def test_walk_density_weight(params_small):
    env = ef.sample_environment(params_small, 8, -8, 8, seed=7)
    for k in (1, 2, 3):
        spec = us.UStatSpec(order=k, weight=us.WalkDensity(k), n=8)
        assert us.ustat_eval(env, spec) == pytest.approx(
            us.ustat_direct(env, spec), rel=1e-12)


def test_linearity_in_weight(params_small):
    env = ef.sample_environment(params_small, 10, -16, 16, seed=9)
    g1 = fc.RectFn(0.0, 1.0, -1.0, 1.0)
    g2 = fc.RectFn(0.3, 0.9, 0.0, 2.0)
    k1 = fc.TensorKernel.from_power(g1, 2)
    k2 = fc.TensorKernel.from_factors(g1, g2)
    combo = k1.scaled(1.7) + k2.scaled(-0.4)
    a = us.ustat_eval(env, us.UStatSpec(order=2, weight=combo, n=10))
    b = (1.7 * us.ustat_eval(env, us.UStatSpec(order=2, weight=k1, n=10))
         - 0.4 * us.ustat_eval(env, us.UStatSpec(order=2, weight=k2, n=10)))
    assert a == pytest.approx(b, rel=1e-12)


def test_scaled_zero_environment(params_small):
    zeros = np.zeros((8, 17))
    zeros.setflags(write=False)
    env0 = ef.EnvironmentField(params=params_small, n_time=8, x_lo=-8, x_hi=8,
                               seed=0, values=zeros)
    g = fc.RectFn(0, 1, 0, 1)
    assert us.ustat_scaled(env0, us.UStatSpec(order=1, weight=g, n=8), H) == 0.0


def test_cross_order_orthogonality(params_small):
    g = fc.RectFn(0.0, 1.0, 0.0, 1.0)
    reps = 3000
    prods = np.empty(reps)
    for r in range(reps):
        env = ef.sample_environment(params_small, 12, -4, 8, seed=600 + r)
        s1 = us.ustat_eval(env, us.UStatSpec(order=1, weight=g, n=12))
        s2 = us.ustat_eval(env, us.UStatSpec(
            order=2, weight=fc.TensorKernel.from_power(g, 2), n=12))
        prods[r] = s1 * s2
    z = prods.mean() / (prods.std(ddof=1) / math.sqrt(reps))
    assert abs(z) <= 3.5


def test_exact_variance_iid_k1_brute_force():
    p = ef.EnvParams(hurst=0.75, delta=1.0, kernel_cutoff=0)
    cov = ef.covariance_model(p, 300)
    n = 64
    g = fc.RectFn(0.0, 1.0, 0.0, 1.0)
    spec = us.UStatSpec(order=1, weight=g, n=n)
    expect = 0.0
    for i in range(1, n + 1):
        for x in range(-2, 11):
            if (i + x) % 2 == 0:
                expect += 2.0 * us.f_bar(g, n, [i], [x]) ** 2
    assert us.ustat_exact_variance(spec, cov) == pytest.approx(expect,
                                                               rel=1e-12)


def test_exact_variance_vs_mc(params_small):
    cov = ef.covariance_model(params_small, 300)
    n = 32
    g = fc.RectFn(0.0, 1.0, -0.6, 1.0)
    for k, weight in ((1, g), (2, fc.TensorKernel.from_power(g, 2))):
        spec = us.UStatSpec(order=k, weight=weight, n=n)
        reps = 3000
        vals = np.empty(reps)
        for r in range(reps):
            env = ef.sample_environment(params_small, n, -8, 8, seed=900 + r)
            vals[r] = us.ustat_eval(env, spec)
        sq = vals ** 2
        z = ((sq.mean() - us.ustat_exact_variance(spec, cov))
             / (sq.std(ddof=1) / math.sqrt(reps)))
        assert abs(z) <= 3.5, f"k={k}: z={z:.2f}"


def test_k1_scaled_variance_approaches_half_norm():
    # the parity-thinned lattice limit carries half the continuum norm:
    # n^-(H+1) E[S_1^2] -> ||f||^2 / 2 for the 2^(1/2)-weighted statistic
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=100_000)
    cov = ef.covariance_model(p, 2 * 4096)
    g = fc.RectFn(0.0, 1.0, 0.0, 1.0)
    n = 4096
    spec = us.UStatSpec(order=1, weight=g, n=n)
    val = us.ustat_exact_variance(spec, cov) * n ** (-(1 + H))
    target = 0.5 * fc.inner_H(g, g, H)
    assert val == pytest.approx(target, rel=0.10)


def test_k1_cross_rectangle_covariance():
    # overlapping time, disjoint space: the cross-covariance reproduces the
    # fBm boundary combination (at half weight from the parity thinning)
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=100_000)
    n = 4096
    f1 = fc.RectFn(0.0, 0.75, 0.0, 1.0)
    f2 = fc.RectFn(0.25, 1.0, 1.5, 2.5)
    cov = ef.covariance_model(p, 3 * 4096)
    u = us._row_covariance(f1, f2, n, cov)
    cross = 2.0 * float(u.sum()) * n ** (-(1 + H))
    target = 0.5 * fc.inner_H(f1, f2, H)
    assert cross == pytest.approx(target, rel=0.10)


def test_variance_bound_monotone_constant():
    # E[S_k^2] <= C lambda^k n^((1+H)k) ||f||^2: the fitted C settles as n grows
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=20_000)
    cov = ef.covariance_model(p, 3000)
    g = fc.RectFn(0.0, 1.0, 0.0, 1.0)
    lam = p.lambda_target
    cs = []
    for n in (64, 256, 1024):
        spec = us.UStatSpec(order=1, weight=g, n=n)
        v = us.ustat_exact_variance(spec, cov)
        cs.append(v / (lam * n ** (1 + H) * fc.inner_H(g, g, H)))
    assert cs[-1] <= cs[0] * 1.5
    assert max(cs) < 5.0

import itertools
import math

import numpy as np
import pytest

from polymer_limits import env_field as ef
from polymer_limits import partition as pt
from polymer_limits import walk_kernel as wk


def brute_force_line_value(env, params):
    """Path-enumeration oracle for the origin point-to-line modified value."""
    n, b = params.n, params.coupling
    total = 0.0
    for steps in itertools.product((-1, 1), repeat=n):
        x, w = 0, 1.0
        for i, s in enumerate(steps, start=1):
            x += s
            w *= 1.0 + b * env.value(i, x)
        total += w * 2.0 ** (-n)
    return total


def test_params_validation():
    with pytest.raises(ValueError):
        pt.PartitionParams(beta=1.0, n=0, hurst=0.75)
    with pytest.raises(ValueError):
        pt.PartitionParams(beta=1.0, n=4, hurst=0.75, variant="sticky")
    p = pt.PartitionParams(beta=2.0, n=16, hurst=0.8)
    assert p.rho == pytest.approx(0.4)
    assert p.coupling == pytest.approx(2.0 * 16 ** -0.4)


def test_beta_zero_point_to_point_is_walk_kernel(env_small):
    params = pt.PartitionParams(beta=0.0, n=8, hurst=0.75)
    surf = pt.dp_modified_partition(env_small, params)
    for i in range(9):
        for x in range(-8, 9):
            assert surf.value(i, x) == pytest.approx(wk.walk_p(i, x), abs=1e-14)


def test_beta_zero_line_surface_is_one(env_small):
    params = pt.PartitionParams(beta=0.0, n=6, hurst=0.75)
    surf = pt.dp_modified_partition(env_small, params, kind="point_to_line")
    row = surf.row(6)
    valid = row[np.isfinite(row)]
    assert valid.size > 0
    assert np.allclose(valid, 1.0, atol=1e-14)


def test_dp_matches_path_enumeration(params_small):
    for seed in (1, 2, 3):
        env = ef.sample_environment(params_small, 7, -7, 7, seed=seed)
        params = pt.PartitionParams(beta=0.8, n=7, hurst=0.75)
        dp = pt.modified_line_value(env, params)
        brute = brute_force_line_value(env, params)
        assert dp == pytest.approx(brute, rel=1e-12)


def test_environment_window_error(params_small):
    env = ef.sample_environment(params_small, 4, -2, 2, seed=1)
    with pytest.raises(ValueError, match="cone"):
        pt.dp_modified_partition(env, pt.PartitionParams(beta=0.1, n=4,
                                                         hurst=0.75))


def test_line_value_mean_one(params_small):
    n, reps = 16, 2000
    params = pt.PartitionParams(beta=1.0, n=n, hurst=0.75)
    vals = np.empty(reps)
    for r in range(reps):
        env = ef.sample_environment(params_small, n, -n, n, seed=10_000 + r)
        vals[r] = pt.modified_line_value(env, params)
    z = (vals.mean() - 1.0) / (vals.std(ddof=1) / math.sqrt(reps))
    assert abs(z) <= 3.0


def test_exponential_matches_direct_enumeration(params_small):
    env = ef.sample_environment(params_small, 2, -2, 2, seed=8)
    params = pt.PartitionParams(beta=0.5, n=2, hurst=0.75,
                                variant="exponential")
    surf = pt.dp_exp_partition(env, params)
    b = params.coupling
    total = 0.0
    for steps in itertools.product((-1, 1), repeat=2):
        x1 = steps[0]
        x2 = steps[0] + steps[1]
        total += 0.25 * math.exp(b * (env.value(1, x1) + env.value(2, x2)))
    assert surf.line_value() == pytest.approx(total, rel=1e-12)


def test_exponential_beta_zero_equals_modified(env_small):
    pe = pt.PartitionParams(beta=0.0, n=6, hurst=0.75, variant="exponential")
    pm = pt.PartitionParams(beta=0.0, n=6, hurst=0.75)
    se = pt.dp_exp_partition(env_small, pe)
    sm = pt.dp_modified_partition(env_small, pm)
    for i in range(7):
        assert np.allclose(se.row(i), sm.row(i), atol=1e-14)


def test_exp_weight_guard(params_small):
    env = ef.sample_environment(params_small, 4, -4, 4, seed=2)
    big = pt.PartitionParams(beta=1e4, n=4, hurst=0.75, variant="exponential")
    with pytest.raises(FloatingPointError):
        pt.dp_exp_partition(env, big)


def test_tilt_identity_and_coefficients(params_small):
    n, beta = 24, 0.7
    env = ef.sample_environment(params_small, n, -n, n, seed=77)
    tilted = pt.tilt_environment(env, beta, n)
    se = pt.normalized_exp_surface(env, pt.PartitionParams(
        beta=beta, n=n, hurst=0.75, variant="exponential"))
    sm = pt.dp_modified_partition(tilted.as_field(), pt.PartitionParams(
        beta=beta, n=n, hurst=0.75))
    for i in range(n + 1):
        assert np.max(np.abs(se.row(i) - sm.row(i))) <= 1e-12
    # rank-one coefficient is 1 in the Gaussian case; next ones follow b^(j-1)/j!
    assert tilted.appell_coeff(1) == 1.0
    b = tilted.coupling
    assert tilted.appell_coeff(2) == pytest.approx(b / 2.0, rel=1e-14)
    assert tilted.appell_coeff(3) == pytest.approx(b * b / 6.0, rel=1e-14)
    with pytest.raises(ValueError):
        tilted.appell_coeff(0)


def test_tilt_constant_on_zero_field(params_small):
    env = ef.sample_environment(params_small, 3, -3, 3, seed=5)
    zeros = np.zeros_like(env.values)
    zeros.setflags(write=False)
    env0 = ef.EnvironmentField(params=env.params, n_time=3, x_lo=-3, x_hi=3,
                               seed=0, values=zeros)
    tilted = pt.tilt_environment(env0, 0.9, 3)
    b = tilted.coupling
    lam = tilted.log_laplace_value
    assert np.allclose(tilted.values, (math.exp(-lam) - 1.0) / b, rtol=1e-12)


def test_tilted_covariance_closed_form(params_small):
    beta, n = 0.9, 64
    b = beta * n ** (-0.375)
    reps = 3000
    prods = {1: [], 3: []}
    for r in range(reps):
        env = ef.sample_environment(params_small, 1, 0, 8, seed=40_000 + r)
        tilted = pt.tilt_environment(env, beta, n)
        row = tilted.values[0]
        for lag in prods:
            prods[lag].append(float(row[0] * row[lag]))
    for lag, vals in prods.items():
        vals = np.asarray(vals)
        target = pt.tilted_gamma(params_small, b, lag)
        z = (vals.mean() - target) / (vals.std(ddof=1) / math.sqrt(reps))
        assert abs(z) <= 3.5
        # the tilted covariance approaches the raw one at weak coupling
        assert target == pytest.approx(ef.exact_gamma(lag, params_small),
                                       rel=0.05)


def test_tilt_requires_gaussian(params_small):
    p = ef.EnvParams(hurst=0.75, delta=params_small.delta, kernel_cutoff=8,
                     xi_dist="rademacher")
    env = ef.sample_environment(p, 3, -3, 3, seed=1)
    with pytest.raises(ValueError, match="Gaussian"):
        pt.tilt_environment(env, 0.5, 3)


def test_two_walk_examples(params_small):
    gam = ef.gamma_table(params_small, 8)
    val = pt.two_walk_second_moment(1, 0.7, gam, 0.75)
    assert val == pytest.approx(1.0 + 0.49 * (gam[0] + gam[2]) / 2.0, rel=1e-13)
    assert pt.two_walk_second_moment(32, 0.0, ef.gamma_table(params_small, 64),
                                     0.75) == pytest.approx(1.0, abs=1e-12)


def test_two_walk_point_to_point_brute(params_small):
    gam = ef.gamma_table(params_small, 16)
    n, beta, x = 6, 0.8, 2
    b2 = (beta * n ** (-0.375)) ** 2
    for weight in ("modified", "exponential"):
        brute = 0.0
        for s1 in itertools.product((-1, 1), repeat=n):
            x1 = np.cumsum(s1)
            if x1[-1] != x:
                continue
            for s2 in itertools.product((-1, 1), repeat=n):
                x2 = np.cumsum(s2)
                if x2[-1] != x:
                    continue
                g = gam[np.abs(x1 - x2)]
                w = np.prod(1.0 + b2 * g) if weight == "modified" \
                    else math.exp(b2 * g.sum())
                brute += w * 4.0 ** (-n)
        dp = pt.two_walk_second_moment(n, beta, gam, 0.75,
                                       mode="point_to_point", x=x,
                                       weight=weight)
        assert dp == pytest.approx(brute, rel=1e-12)


def test_two_walk_needs_enough_lags(params_small):
    with pytest.raises(ValueError, match="lag"):
        pt.two_walk_second_moment(10, 1.0, ef.gamma_table(params_small, 4), 0.75)


def test_chaos_terms_expansion(env_small):
    params = pt.PartitionParams(beta=0.45, n=12, hurst=0.75)
    terms = pt.chaos_terms(env_small, params, 12)
    assert terms[0] == 1.0
    dp = pt.modified_line_value(env_small, params)
    assert sum(terms) == pytest.approx(dp, rel=1e-10)
    assert pt.chaos_term(env_small, params, 20) == 0.0


def test_chaos_term_k1_direct(env_small):
    params = pt.PartitionParams(beta=0.45, n=10, hurst=0.75)
    direct = 0.0
    for i in range(1, 11):
        for x in range(-i, i + 1):
            direct += env_small.value(i, x) * wk.walk_p(i, x)
    expect = params.coupling * direct
    assert pt.chaos_term(env_small, params, 1) == pytest.approx(expect,
                                                                rel=1e-12)

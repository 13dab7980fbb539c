import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import zeta

from polymer_limits import env_field as ef


def test_params_validation():
    with pytest.raises(ValueError):
        ef.EnvParams(hurst=0.4, delta=1.0)
    with pytest.raises(ValueError):
        ef.EnvParams(hurst=0.75, delta=-1.0)
    with pytest.raises(ValueError):
        ef.EnvParams(hurst=0.75, delta=1.0, xi_dist="cauchy")
    p = ef.EnvParams(hurst=0.75, delta=1.0)
    assert p.alpha == pytest.approx(0.75)
    assert p.lambda_target == pytest.approx(0.375)


def test_psi_coeff_values():
    p = ef.EnvParams(hurst=0.75, delta=1.0, kernel_cutoff=10)
    # origin default cancels the leading lattice-sum correction
    assert p.psi_origin == pytest.approx(-2.0 * zeta(0.75), rel=1e-12)
    assert ef.psi_coeff(0, p) == p.psi_origin
    assert ef.psi_coeff(-4, p) == pytest.approx(4.0 ** -0.75, rel=1e-13)
    assert ef.psi_coeff(4, p) == ef.psi_coeff(-4, p)
    assert ef.psi_coeff(11, p) == 0.0
    # explicit origin override restores the naive convention
    q = ef.EnvParams(hurst=0.75, delta=1.0, kernel_cutoff=10, psi0=1.0)
    assert ef.psi_coeff(0, q) == 1.0


def test_calibrate_delta_oracle_value():
    # frozen from the gamma-function closed form of the two-sided tail constant
    assert ef.calibrate_delta(0.75) == pytest.approx(0.14472187625540384,
                                                     rel=1e-12)
    with pytest.raises(ValueError):
        ef.calibrate_delta(1.2)
    # delta -> 0 as H -> 1/2+
    assert ef.calibrate_delta(0.5001) < 0.02


def test_calibrated_tail_constant_by_fit():
    # truncation bias scales like (k/M)^(1/2); keep k << M
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=200_000)
    lam = p.lambda_target
    for k in (1000, 2000):
        ratio = ef.exact_gamma(k, p) / (lam * k ** (1 - 2 * p.alpha))
        assert abs(ratio - 1.0) < 0.03


def test_exact_gamma_degenerate_and_symmetry():
    p = ef.EnvParams(hurst=0.75, delta=1.3, kernel_cutoff=0)
    assert ef.exact_gamma(0, p) == pytest.approx(1.3 ** 2, rel=1e-14)
    assert ef.exact_gamma(1, p) == 0.0
    q = ef.EnvParams.calibrated(0.75, kernel_cutoff=50)
    psi = ef.psi_vector(q)
    assert ef.exact_gamma(0, q) == pytest.approx(float(psi @ psi), rel=1e-14)


@given(st.integers(-80, 80))
@settings(max_examples=30, deadline=None)
def test_gamma_symmetric(k):
    p = ef.EnvParams.calibrated(0.8, kernel_cutoff=40)
    assert ef.exact_gamma(k, p) == ef.exact_gamma(-k, p)


def test_gamma_table_matches_pointwise():
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=3000)
    tab = ef.gamma_table(p, 500)
    for k in (0, 1, 7, 100, 499):
        assert tab[k] == pytest.approx(ef.exact_gamma(k, p), rel=1e-12)


def test_tail_slope():
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=10**6)
    slope = ef.tail_slope(p, 100, 10_000)
    assert abs(slope - (1 - 2 * p.alpha)) <= 0.05


def test_sampling_determinism_and_immutability(params_small):
    a = ef.sample_environment(params_small, 5, -8, 8, seed=77)
    b = ef.sample_environment(params_small, 5, -8, 8, seed=77)
    assert np.array_equal(a.values, b.values)
    c = ef.sample_environment(params_small, 5, -8, 8, seed=78)
    assert not np.array_equal(a.values, c.values)
    with pytest.raises(ValueError):
        a.values[0, 0] = 1.0


def test_sample_covariance_matches_exact(params_small):
    rows, width = 8000, 48
    env = ef.sample_environment(params_small, rows, 0, width - 1, seed=5)
    for lag in range(0, 11):
        prod = env.values[:, : width - lag] * env.values[:, lag:]
        per_row = prod.mean(axis=1)
        se = per_row.std(ddof=1) / math.sqrt(rows)
        z = (per_row.mean() - ef.exact_gamma(lag, params_small)) / se
        assert abs(z) <= 3.5, f"lag {lag}: z={z:.2f}"


def test_row_independence_and_stationarity(params_small):
    env = ef.sample_environment(params_small, 4000, 0, 39, seed=9)
    a, b = env.values[:-1], env.values[1:]
    cross = (a * b).mean(axis=1)
    z = cross.mean() / (cross.std(ddof=1) / math.sqrt(cross.shape[0]))
    assert abs(z) <= 3.5
    # stationarity: lag-2 covariance estimated at two distinct base columns
    for base in (3, 20):
        prod = env.values[:, base] * env.values[:, base + 2]
        se = prod.std(ddof=1) / math.sqrt(prod.size)
        z = (prod.mean() - ef.exact_gamma(2, params_small)) / se
        assert abs(z) <= 3.5


def test_degenerate_kernel_iid_field():
    p = ef.EnvParams(hurst=0.75, delta=1.0, kernel_cutoff=0)
    env = ef.sample_environment(p, 2000, 0, 19, seed=3)
    lag1 = (env.values[:, :-1] * env.values[:, 1:]).ravel()
    z = lag1.mean() / (lag1.std(ddof=1) / math.sqrt(lag1.size))
    assert abs(z) <= 3.0
    assert env.values.var() == pytest.approx(1.0, abs=0.05)


def test_rademacher_innovations():
    p = ef.EnvParams(hurst=0.75, delta=1.0, kernel_cutoff=0,
                     xi_dist="rademacher")
    env = ef.sample_environment(p, 50, 0, 9, seed=1)
    assert set(np.unique(env.values)) <= {-1.0, 1.0}


def test_memory_guard():
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=10**6)
    with pytest.raises(ef.ResourceError, match="bytes"):
        ef.sample_environment(p, 10**5, -10**4, 10**4, seed=1)


def test_spectral_density_flat_for_degenerate():
    p = ef.EnvParams(hurst=0.75, delta=1.4, kernel_cutoff=0)
    etas = np.linspace(-np.pi, np.pi, 7)
    dens = ef.spectral_density(etas, p)
    assert np.allclose(dens, 1.4 ** 2 / (2 * np.pi), rtol=1e-14)


def test_density_integrates_to_gamma0_and_inverts():
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=200)
    g0 = ef.exact_gamma(0, p)
    assert abs(ef.gamma_from_density(0, p) / g0 - 1.0) < 1e-6
    for k in (1, 5, 10):
        assert abs(ef.gamma_from_density(k, p)
                   - ef.exact_gamma(k, p)) < 1e-6


def test_limit_spectral_density():
    val = ef.limit_spectral_density(1.0, 0.75)
    d = 2.0 * math.gamma(0.5) * math.cos(0.25 * math.pi)
    assert val == pytest.approx(1.0 / d, rel=1e-12)
    assert val == pytest.approx(0.3989422804, rel=1e-9)
    assert ef.limit_spectral_density(-1.3, 0.75) == ef.limit_spectral_density(
        1.3, 0.75)
    with pytest.raises(ZeroDivisionError):
        ef.limit_spectral_density(0.0, 0.75)


def test_rescaled_spectrum_converges_to_tail_constant_times_limit():
    # pointwise limit of n^(a-1) g(eta/sqrt(n)) is lambda/D |eta|^(1-2H):
    # the ratio to the unit-constant limit density equals the tail constant
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=100_000)
    n = 1 << 16
    rescaled = n ** (p.alpha - 1.0) * float(ef.spectral_density(
        1.0 / math.sqrt(n), p))
    lam = ef.lambda_coefficient(p)
    ratio = rescaled / (lam * float(ef.limit_spectral_density(1.0, p.hurst)))
    assert abs(ratio - 1.0) < 0.10


def test_covariance_model_asymptote_and_call():
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=500)
    cov = ef.covariance_model(p, 100)
    assert cov(np.array([3, -3]))[0] == cov(np.array([3, -3]))[1]
    assert cov.lam == pytest.approx(p.lambda_target, rel=1e-12)
    assert cov(1000) == 0.0  # beyond the table


def test_dump_load_roundtrip(params_small):
    env = ef.sample_environment(params_small, 4, -5, 5, seed=123)
    buf = io.BytesIO()
    ef.dump_environment(env, buf)
    buf.seek(0)
    back = ef.load_environment(buf)
    assert np.array_equal(back.values, env.values)
    assert back.n_time == env.n_time and back.seed == env.seed
    assert back.params.hurst == env.params.hurst
    buf2 = io.BytesIO(b"NOTANENV")
    with pytest.raises(ValueError):
        ef.load_environment(buf2)


def test_gamma_csv_schema():
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=100)
    text = ef.gamma_csv(p, [0, 1, 10])
    lines = text.strip().splitlines()
    assert lines[0] == "k,gamma,asymptote,ratio"
    assert len(lines) == 4
    k, g, a, r = lines[2].split(",")
    assert int(k) == 1
    assert float(g) == pytest.approx(ef.exact_gamma(1, p), rel=1e-12)


def test_fft_matches_direct_convolution():
    p = ef.EnvParams.calibrated(0.75, kernel_cutoff=700)
    d = ef.sample_row(p, 11, 1, -30, 30, method="direct")
    f = ef.sample_row(p, 11, 1, -30, 30, method="fft")
    assert np.max(np.abs(d - f)) <= 1e-10 * np.max(np.abs(d))


def test_row_stream_matches_draw_innovations():
    s = ef.RowStream(4242, "gaussian")
    for row in (3, 1, 7):
        assert np.array_equal(s.draw(row, 64),
                              ef.draw_innovations(4242, row, 64, "gaussian"))

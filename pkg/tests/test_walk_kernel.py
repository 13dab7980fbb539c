import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polymer_limits import walk_kernel as wk


def test_walk_p_base_cases():
    assert wk.walk_p(0, 0) == 1.0
    assert wk.walk_p(2, 0) == pytest.approx(0.5, abs=1e-15)
    assert wk.walk_p(3, 2) == 0.0
    assert wk.walk_p(4, 6) == 0.0


@pytest.mark.parametrize("n", [10, 101, 1000, 10_000])
def test_walk_p_normalization(n):
    _, probs = wk.walk_p_row(n)
    assert abs(probs.sum() - 1.0) <= 1e-12


def test_chapman_kolmogorov():
    r = np.random.Generator(np.random.Philox(key=np.array([1, 2], dtype=np.uint64)))
    for _ in range(20):
        n = int(r.integers(4, 200))
        m = int(r.integers(1, n))
        x = int(r.integers(-n, n + 1))
        x += (n + x) % 2
        if abs(x) > n:
            x -= 2
        ys, p_m = wk.walk_p_row(m)
        conv = sum(pm * wk.walk_p(n - m, x - y) for y, pm in zip(ys, p_m))
        assert conv == pytest.approx(wk.walk_p(n, x), abs=1e-12)


def test_walk_pk_reduces_and_factorizes():
    assert wk.walk_pk([5], [1]) == pytest.approx(wk.walk_p(5, 1), abs=1e-15)
    assert wk.walk_pk([1, 2], [1, 0]) == pytest.approx(0.25, abs=1e-15)
    # product structure over nested blocks
    val = wk.walk_pk([2, 5, 9], [0, 3, 1])
    expect = wk.walk_p(2, 0) * wk.walk_p(3, 3) * wk.walk_p(4, -2)
    assert val == pytest.approx(expect, rel=1e-13)


def test_walk_pk_total_mass_by_enumeration():
    times = (2, 5, 9)
    total = 0.0
    for x1 in range(-2, 3):
        for x2 in range(-5, 6):
            for x3 in range(-9, 10):
                total += wk.walk_pk(times, (x1, x2, x3))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_walk_pk_rejects_bad_shapes():
    with pytest.raises(ValueError):
        wk.walk_pk([1, 2], [1])
    assert wk.walk_pk([2, 2], [0, 0]) == 0.0  # non-increasing times


def test_nearest_parity_int_examples():
    assert wk.nearest_parity_int(2.3, 4) == 2
    assert wk.nearest_parity_int(2.3, 5) == 3
    # exact tie between 2 and 4: smaller wins
    assert wk.nearest_parity_int(3.0, 4) == 2
    assert wk.nearest_parity_int(-3.0, 4) == -4
    assert wk.nearest_parity_int(2.0, 4) == 2


@given(st.floats(-1e6, 1e6), st.integers(0, 10**6))
def test_nearest_parity_int_properties(x, i):
    r = wk.nearest_parity_int(x, i)
    assert (r + i) % 2 == 0
    assert abs(x - r) <= 1.0 + 1e-9


def test_pbar_examples():
    assert wk.pbar_k([2], [0.3]) == pytest.approx(0.25, abs=1e-15)
    # density integrates to one: cells have width 2, one per parity site
    xs, probs = wk.walk_p_row(6)
    total = sum(2.0 * wk.pbar_k([6], [float(x)]) for x in xs)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_p_scaled_indicator_and_value():
    assert wk.p_scaled([0.5, 0.4], [0.0, 0.1], 100) == 0.0
    v = wk.p_scaled([0.5], [0.0], 100)
    assert v == pytest.approx(wk.pbar_k([50], [0.0]), abs=1e-15)


def test_local_clt():
    n = 10_000
    rn = math.sqrt(n)
    xs = np.arange(-4 * int(rn) // 2 * 2, 4 * int(rn) // 2 * 2 + 1, 2)
    worst = 0.0
    for x in xs:
        lhs = rn * 0.5 * wk.walk_p(n, int(x))
        rhs = float(wk.heat_kernel(1.0, x / rn))
        worst = max(worst, abs(lhs - rhs))
    assert worst <= 0.01

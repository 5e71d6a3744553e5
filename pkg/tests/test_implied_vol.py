import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msvou.errors import ArbitrageError
from msvou.implied_vol import bs_call, bs_vega, implied_vol, no_arbitrage_band


def test_round_trip_example():
    p = bs_call(1.0, 1.0, 1.0, 0.0, 0.0, 0.2)
    assert p == pytest.approx(0.0796557, abs=5e-8)
    assert implied_vol(0.0796557, 1.0, 1.0, 1.0, 0.0, 0.0) == pytest.approx(0.2, abs=1e-6)
    assert implied_vol(p, 1.0, 1.0, 1.0, 0.0, 0.0) == pytest.approx(0.2, abs=1e-12)


def test_scalar_in_scalar_out():
    v = implied_vol(0.08, 1.0, 1.0, 1.0, 0.0, 0.0)
    assert np.ndim(v) == 0


def test_lower_edge_gives_tiny_vol():
    S, K, T, rd, rf = 1.3249, 1.2, 0.5, 0.00676, 0.00604
    lower, _ = no_arbitrage_band(S, K, T, rd, rf)
    assert implied_vol(float(lower), S, K, T, rd, rf) < 1e-3


def test_ladder_monotone():
    S, K, T, rd, rf = 1.3249, 1.35, 0.75, 0.00676, 0.00604
    lower, upper = no_arbitrage_band(S, K, T, rd, rf)
    prices = np.linspace(float(lower) + 1e-4, float(upper) * 0.9, 25)
    vols = implied_vol(prices, S, K, T, rd, rf)
    assert np.all(np.diff(vols) > 0)


@pytest.mark.parametrize("price", [-0.01, 1.3249, 2.0])
def test_outside_band(price):
    with pytest.raises(ArbitrageError):
        implied_vol(price, 1.3249, 1.0, 0.5, 0.00676, 0.00604)


def test_vectorized_matches_scalar():
    K = np.array([0.9, 1.0, 1.1, 1.3])
    sig = np.array([0.05, 0.1, 0.3, 1.2])
    p = bs_call(1.0, K, 0.5, 0.01, 0.02, sig)
    vec = implied_vol(p, 1.0, K, 0.5, 0.01, 0.02)
    np.testing.assert_allclose(vec, [implied_vol(float(a), 1.0, k, 0.5, 0.01, 0.02) for a, k in zip(p, K)])
    np.testing.assert_allclose(vec, sig, rtol=1e-9)


def test_vega_matches_finite_difference():
    h = 1e-6
    fd = (bs_call(1.2, 1.1, 0.7, 0.01, 0.03, 0.25 + h) - bs_call(1.2, 1.1, 0.7, 0.01, 0.03, 0.25 - h)) / (2 * h)
    assert bs_vega(1.2, 1.1, 0.7, 0.01, 0.03, 0.25) == pytest.approx(fd, rel=1e-7)


def test_call_bounds_and_parity():
    S, K, T, rd, rf = 1.5333, 1.4, 1.0, 0.00676, 0.00344
    lower, upper = no_arbitrage_band(S, K, T, rd, rf)
    for s in (0.01, 0.2, 2.0):
        assert lower <= bs_call(S, K, T, rd, rf, s) < upper
    assert upper == pytest.approx(S * math.exp(-rf * T))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.05, 3.0), st.floats(0.02, 1.5), st.floats(-0.02, 0.05), st.floats(-0.02, 0.05))
def test_round_trip_property(K, T, sigma, rd, rf):
    p = float(bs_call(1.0, K, T, rd, rf, sigma))
    lower, upper = no_arbitrage_band(1.0, K, T, rd, rf)
    if p - lower < 1e-12 or upper - p < 1e-12:
        return
    iv = implied_vol(p, 1.0, K, T, rd, rf)
    assert abs(bs_call(1.0, K, T, rd, rf, iv) - p) < 1e-10

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msvou import fourier as F
from msvou import model
from msvou.errors import DampingError, DomainError
from msvou.implied_vol import bs_call
from msvou.ou_wishart import mgf1_closed, mgf2_closed, step_a_params


def call_price(p, asset, K, T, R=1.75, payoff=None, tol=1e-10):
    m = p.to_model()
    env = model.gaussian_envelope(m, T)[asset - 1, asset - 1]
    spot = p.spot1 if asset == 1 else p.spot2
    ev = lambda y: mgf1_closed(p, asset, np.asarray(y)[:, 0], T)
    payoff = payoff or F.transform_call(K)
    return F.price(ev, payoff, [R], [-math.log(spot)], T, p.r_dom, envelope=env, tol=tol)


def joint(p, T):
    return (lambda y: mgf2_closed(p, np.asarray(y), T)), model.gaussian_envelope(p.to_model(), T), \
        [-math.log(p.spot1), -math.log(p.spot2)]


class TestTransforms:
    def test_call_at_2i(self):
        assert F.transform_call(1.0)(2j) == pytest.approx(0.5)

    def test_call_strike_scaling(self, rng):
        K = 1.3249
        z = rng.normal(size=10) + 1j * (1.0 + rng.uniform(0.1, 2, 10))
        np.testing.assert_allclose(F.transform_call(K)(z), K ** (1 + 1j * z) * F.transform_call(1.0)(z),
                                   rtol=1e-13)

    def test_call_decay(self):
        u = np.array([1e2, 1e3, 1e4])
        v = np.abs(F.transform_call(1.0)(u + 1.75j))
        np.testing.assert_allclose(v * u ** 2, 1.0, rtol=1e-2)

    @pytest.mark.parametrize("K", [0.0, -1.0, math.inf])
    def test_bad_strike(self, K):
        for make in (F.transform_call, F.transform_spread_call, lambda k: F.transform_basket_put(k, 2)):
            with pytest.raises(DomainError):
                make(K)

    def test_basket_d1_reduces_to_call_formula(self, rng):
        K = 0.9
        z = rng.normal(size=(20, 1)) - 1j * rng.uniform(0.1, 3, (20, 1))
        np.testing.assert_allclose(F.transform_basket_put(K, 1)(z), F.transform_call(K)(z[:, 0]), rtol=1e-12)

    def test_basket_permutation_symmetry(self, rng):
        z = rng.normal(size=(10, 3)) - 1j * rng.uniform(0.1, 2, (10, 3))
        f = F.transform_basket_put(1.1, 3)
        np.testing.assert_allclose(f(z), f(z[:, [2, 0, 1]]), rtol=1e-12)

    def test_spread_region(self):
        f = F.transform_spread_call(0.1)
        assert f.damping_region([2.0, -0.5])
        assert not f.damping_region([1.2, -0.5])
        assert not f.damping_region([2.0, 0.5])

    def test_spread_finite_on_line(self):
        u = np.linspace(-50, 50, 101)
        z = np.stack([u + 2j, -u[::-1] - 0.5j], -1)
        assert np.all(np.isfinite(F.transform_spread_call(0.1)(z)))


class TestGaussianLimit:
    def test_example(self):
        p = step_a_params(lam=0.0, gamma1=0.0, Sigma0=np.array([[0.04, 0.0], [0.0, 0.04]]), a1=-1.0, a2=-1.0,
                          r_dom=0.01, r_for1=0.0, spot1=1.0)
        var = 0.04 * (1 - math.exp(-2.0)) / 2
        assert var == pytest.approx(0.017293, abs=1e-6)
        ref = bs_call(1.0, 1.0, 1.0, 0.01, 0.0, math.sqrt(var))
        assert call_price(p, 1, 1.0, 1.0).price == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("K", [0.8, 1.0, 1.3249, 1.6])
    @pytest.mark.parametrize("T", [0.1, 1.0, 3.0])
    def test_grid(self, K, T):
        p = step_a_params(lam=0.0, gamma1=0.0)
        a, s0 = p.a1, p.Sigma0[0, 0]
        var = s0 * (math.exp(2 * a * T) - 1) / (2 * a)
        ref = bs_call(p.spot1, K, T, p.r_dom, p.r_for1, math.sqrt(var / T))
        assert call_price(p, 1, K, T).price == pytest.approx(ref, rel=1e-6)


class TestVanilla:
    @pytest.mark.parametrize("asset", [1, 2])
    def test_put_call_parity(self, step_a, asset):
        T, K = 0.75, 1.4
        spot, rf = (step_a.spot1, step_a.r_for1) if asset == 1 else (step_a.spot2, step_a.r_for2)
        C = call_price(step_a, asset, K, T).price
        P = call_price(step_a, asset, K, T, R=-0.75, payoff=F.transform_put(K)).price
        assert C - P == pytest.approx(spot * math.exp(-rf * T) - K * math.exp(-step_a.r_dom * T), abs=1e-8)

    def test_basket_put_parity_d1(self, step_a):
        T, K = 0.5, 1.35
        P = call_price(step_a, 1, K, T, R=-0.75, payoff=F.transform_basket_put(K, 1)).price
        C = call_price(step_a, 1, K, T).price
        assert P == pytest.approx(C - step_a.spot1 * math.exp(-step_a.r_for1 * T)
                                  + K * math.exp(-step_a.r_dom * T), abs=1e-8)

    @pytest.mark.parametrize("R", [1.5, 1.75, 3.0])
    def test_damping_invariance(self, step_a, R):
        ref = call_price(step_a, 1, 1.30, 0.5, R=2.0).price
        assert abs(call_price(step_a, 1, 1.30, 0.5, R=R).price - ref) < 1e-8

    def test_monotone_and_bounded(self, step_a):
        K = np.linspace(0.9, 1.9, 11)
        v = np.array([call_price(step_a, 1, k, 1.0).price for k in K])
        assert np.all(np.diff(v) < 0)
        assert np.all(v >= 0) and np.all(v <= step_a.spot1)

    def test_forward_limit(self, step_a):
        T = 1.0
        v = call_price(step_a, 1, 1e-6, T, R=1.5).price
        assert v == pytest.approx(step_a.spot1 * math.exp(-step_a.r_for1 * T) - 1e-6 * math.exp(-step_a.r_dom * T),
                                  abs=1e-8)

    def test_result_fields(self, step_a):
        r = call_price(step_a, 1, 1.3, 0.5)
        assert math.isfinite(r.price) and r.quad_error >= 0 and r.evaluations > 0

    def test_damping_outside_payoff_region(self, step_a):
        with pytest.raises(DampingError):
            call_price(step_a, 1, 1.3, 0.5, R=0.5)

    def test_damping_outside_model_domain(self, step_a):
        with pytest.raises(DampingError):
            call_price(step_a, 1, 1.3, 0.5, R=200.0)

    def test_default_damping(self, step_a):
        ev = lambda y: mgf1_closed(step_a, 1, np.asarray(y)[:, 0], 0.5)
        assert F.default_call_damping(ev) == 1.75


class TestSpreads:
    def test_zero_strike_damping_invariance(self, step_a):
        ev, env, s = joint(step_a, 0.5)
        v = [F.price_zero_strike_spread(ev, R, *s, 0.5, step_a.r_dom, envelope=env).price for R in (1.5, 2.5, 5.0)]
        assert max(v) - min(v) < 1e-6

    def test_zero_strike_needs_R_above_one(self, step_a):
        ev, env, s = joint(step_a, 0.5)
        with pytest.raises(DampingError):
            F.price_zero_strike_spread(ev, 0.9, *s, 0.5, step_a.r_dom)

    def test_zero_strike_bounds(self, step_a):
        ev, env, s = joint(step_a, 1.0)
        v = F.price_zero_strike_spread(ev, 1.5, *s, 1.0, step_a.r_dom, envelope=env).price
        fwd1 = step_a.spot1 * math.exp(-step_a.r_for1)
        fwd2 = step_a.spot2 * math.exp(-step_a.r_for2)
        assert max(fwd1 - fwd2, 0.0) <= v <= fwd1

    def test_zero_strike_parity(self, step_a):
        # (S1 - S2)^+ - (S2 - S1)^+ = S1 - S2
        ev, env, s = joint(step_a, 1.0)
        swap = lambda y: ev(np.asarray(y)[:, ::-1])
        a = F.price_zero_strike_spread(ev, 1.5, *s, 1.0, step_a.r_dom, envelope=env).price
        b = F.price_zero_strike_spread(swap, 1.5, s[1], s[0], 1.0, step_a.r_dom, envelope=env[::-1, ::-1]).price
        fwd = step_a.spot1 * math.exp(-step_a.r_for1) - step_a.spot2 * math.exp(-step_a.r_for2)
        assert a - b == pytest.approx(fwd, abs=1e-9)

    @pytest.mark.slow
    def test_spread_call_damping_invariance(self, step_a):
        ev, env, s = joint(step_a, 0.5)
        v = [F.price(ev, F.transform_spread_call(0.05), R, s, 0.5, step_a.r_dom, envelope=env).price
             for R in ([2.0, -0.5], [1.8, -0.4], [2.5, -1.0])]
        assert max(v) - min(v) < 1e-6

    @pytest.mark.slow
    def test_spread_call_small_strike_continuity(self, step_a):
        ev, env, s = joint(step_a, 0.5)
        z = F.price_zero_strike_spread(ev, 1.5, *s, 0.5, step_a.r_dom, envelope=env).price
        v = F.price(ev, F.transform_spread_call(1e-8), [1.2, -0.1], s, 0.5, step_a.r_dom, envelope=env, tol=1e-6)
        assert abs(v.price - z) < 1e-4

    @pytest.mark.slow
    def test_spread_call_monotone_in_strike(self, step_a):
        ev, env, s = joint(step_a, 0.5)
        v = [F.price(ev, F.transform_spread_call(K), [2.0, -0.5], s, 0.5, step_a.r_dom, envelope=env,
                     tol=1e-8).price for K in (0.02, 0.05, 0.1)]
        assert v[0] > v[1] > v[2] > 0

    def test_spread_region_checked(self, step_a):
        ev, env, s = joint(step_a, 0.5)
        with pytest.raises(DampingError):
            F.price(ev, F.transform_spread_call(0.05), [1.2, -0.5], s, 0.5, step_a.r_dom)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.7, 2.0), st.floats(0.05, 2.0))
def test_call_within_model_free_bounds(K, T):
    p = step_a_params()
    v = call_price(p, 1, K, T).price
    lower = max(p.spot1 * math.exp(-p.r_for1 * T) - K * math.exp(-p.r_dom * T), 0.0)
    assert lower - 1e-9 <= v <= p.spot1 * math.exp(-p.r_for1 * T) + 1e-9

import math

import numpy as np
import pytest

from msvou import covswap
from msvou.levy import sample_jump
from msvou.montecarlo import MCConfig, sample_mean, simulate
from msvou.ou_wishart import OUW2Params, step_a_params


def random_params(rng):
    L = rng.normal(scale=0.1, size=(2, 2))
    M = rng.normal(scale=0.12, size=(2, 2))
    return OUW2Params(
        a1=-rng.uniform(0.5, 4.0), a2=-rng.uniform(0.5, 4.0),
        rho1=rng.uniform(-3, 3), rho2=rng.uniform(-3, 3),
        rho12=rng.uniform(-1, 1), rho21=rng.uniform(-1, 1),
        Theta=L @ L.T, Sigma0=M @ M.T + 0.005 * np.eye(2), lam=rng.uniform(0.2, 2.0),
        gamma1=rng.uniform(0, 0.05), gamma2=rng.uniform(0, 0.05),
        r_dom=0.01, r_for1=0.005, r_for2=0.0,
    )


class TestExpectations:
    def test_zero_horizon(self, step_a):
        np.testing.assert_allclose(covswap.expected_sigma(step_a, 0.0), step_a.Sigma0, atol=1e-15)
        np.testing.assert_allclose(covswap.expected_integrated_sigma(step_a, 0.0), 0.0, atol=1e-15)

    def test_no_driver(self, step_a):
        p = step_a.replace(lam=0.0, gamma1=0.0)
        T, a = 0.8, p.a1
        np.testing.assert_allclose(covswap.expected_sigma(p, T), p.Sigma0 * math.exp(2 * a * T), rtol=1e-13)
        K = covswap.expected_integrated_sigma(p, T)
        assert K[0, 1] == pytest.approx(p.Sigma0[0, 1] * (math.exp(2 * a * T) - 1) / (2 * a), rel=1e-13)

    def test_stationary_limit(self, step_a):
        # E Sigma_T -> -A^{-1}(E L_1)
        from msvou.levy import mean
        from msvou.matrix_core import sylvester_solve
        m = step_a.to_model()
        np.testing.assert_allclose(covswap.expected_sigma(step_a, 50.0), -sylvester_solve(m.A, mean(m.sub)),
                                   rtol=1e-12)


class TestSwapRate:
    def test_gaussian_example(self, step_a):
        p = step_a.replace(lam=0.0, gamma1=0.0)
        assert covswap.swap_rate(p, 1, 2, 1.0) == pytest.approx(0.0026947, abs=5e-8)
        assert covswap.swap_rate(p, 1, 2, 1.0) == pytest.approx((math.exp(-4.784) - 1) / -4.784 * 0.013, abs=1e-15)

    def test_decoupled_is_zero(self, step_a):
        p = step_a.replace(rho1=0.0, rho2=0.0, Theta=np.diag([0.011, 0.063]), Sigma0=np.diag([0.019, 0.017]))
        assert covswap.swap_rate(p, 1, 2, 2.0) == pytest.approx(0.0, abs=1e-17)

    @pytest.mark.parametrize("T", [0.1, 1.0, 5.0])
    def test_two_asset_closed_form(self, step_a, T):
        p = step_a.replace(gamma1=0.0)
        assert covswap.swap_rate(p, 1, 2, T) == pytest.approx(covswap.swap_rate_ouw2(p, T), rel=1e-12)
        q = p.replace(a2=-0.9)
        assert covswap.swap_rate(q, 1, 2, T) == pytest.approx(covswap.swap_rate_ouw2(q, T), rel=1e-12)

    def test_symmetric(self, step_a):
        assert covswap.swap_rate(step_a, 1, 2, 1.0) == covswap.swap_rate(step_a, 2, 1, 1.0)

    def test_variance_swaps_nonnegative(self, rng):
        for _ in range(20):
            p = random_params(rng)
            for T in (0.1, 1.0, 4.0):
                assert covswap.swap_rate(p, 1, 1, T) >= 0 and covswap.swap_rate(p, 2, 2, T) >= 0

    def test_linear_in_sigma0(self, step_a):
        T, c = 1.5, 1.7
        base = covswap.swap_rate(step_a.replace(Sigma0=np.eye(2) * 1e-300), 1, 2, T)
        r1 = covswap.swap_rate(step_a, 1, 2, T) - base
        r2 = covswap.swap_rate(step_a.replace(Sigma0=c * step_a.Sigma0), 1, 2, T) - base
        assert r2 == pytest.approx(c * r1, rel=1e-12)

    def test_jump_moment_by_sampling(self, rng):
        p = random_params(rng)
        m = p.to_model()
        X = sample_jump(m.sub, rng, 400_000)
        r = m.rho(X)
        vals = p.lam * r[:, :, None] * r[:, None, :]
        mean, se = sample_mean(vals)
        assert np.all(np.abs(mean - covswap.jump_leverage_moment(p)) <= 3.5 * se)

    def test_diagonal_leverage_moment(self, step_a):
        th, n = step_a.Theta, step_a.n
        ref = step_a.rho1 * step_a.rho2 * step_a.lam * n * (2 * th[0, 1] ** 2 + n * th[0, 0] * th[1, 1])
        assert covswap.jump_leverage_moment(step_a)[0, 1] == pytest.approx(ref, rel=1e-13)


class TestAgainstMonteCarlo:
    def test_step_a(self, step_a):
        r = simulate(step_a, 1.0, MCConfig(200_000, seed=21))
        m, se = sample_mean(r.realized_qcov)
        K = np.array([[covswap.swap_rate(step_a, i, j, 1.0) for j in (1, 2)] for i in (1, 2)])
        assert np.all(np.abs(m - K) <= 3 * se)

    @pytest.mark.parametrize("k", range(10))
    def test_random_sets(self, k):
        rng = np.random.default_rng(100 + k)
        p = random_params(rng)
        T = rng.uniform(0.3, 2.0)
        r = simulate(p, T, MCConfig(100_000, seed=k))
        m, se = sample_mean(r.realized_qcov[:, 0, 1])
        assert abs(m - covswap.swap_rate(p, 1, 2, T)) <= 3 * se


class TestCurve:
    def test_short_end(self, step_a):
        # K/T -> Sigma0^{12} + lam E[rho^1 rho^2]; the jump part does not vanish
        (_, v), = covswap.normalized_rate_curve(step_a, 1, 2, [1e-7])
        lim = step_a.Sigma0[0, 1] + covswap.jump_leverage_moment(step_a)[0, 1]
        assert v == pytest.approx(math.sqrt(lim), rel=1e-5)
        (_, v), = covswap.normalized_rate_curve(step_a.replace(rho1=0.0), 1, 2, [1e-7])
        assert v == pytest.approx(math.sqrt(step_a.Sigma0[0, 1]), rel=1e-5)

    def test_monotone_transition(self, step_a):
        grid = np.linspace(0.05, 10, 200)
        v = np.array([x for _, x in covswap.normalized_rate_curve(step_a, 1, 2, grid)])
        d = np.diff(v)
        assert np.all(d > 0) or np.all(d < 0)

    def test_flattens_with_slow_reversion(self, step_a):
        grid = [0.5, 1.0, 2.0]
        p = step_a.replace(a1=-1e-4, a2=-1e-4, lam=0.0, gamma1=0.0)
        v = [x for _, x in covswap.normalized_rate_curve(p, 1, 2, grid)]
        np.testing.assert_allclose(v, math.sqrt(step_a.Sigma0[0, 1]), rtol=1e-3)

    def test_negative_rate_signed(self, step_a):
        p = step_a.replace(Sigma0=np.array([[0.019, -0.013], [-0.013, 0.017]]), lam=0.0, gamma1=0.0)
        (_, v), = covswap.normalized_rate_curve(p, 1, 2, [1.0])
        assert v < 0

    def test_csv_round_trip(self, step_a, tmp_path):
        curve = covswap.normalized_rate_curve(step_a, 1, 2, np.linspace(0.1, 5, 50))
        covswap.write_curve_csv(curve, tmp_path / "c.csv")
        assert covswap.read_curve_csv(tmp_path / "c.csv") == curve

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from msvou.errors import NotPSDError, ShapeError, SingularOperatorError
from msvou.matrix_core import (
    MeanReversion,
    expm,
    expm_batch,
    is_psd,
    psd_sqrt,
    spectral_norm,
    sylvester_apply,
    sylvester_solve,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)


def stable_matrix(M):
    # shift the spectrum into the left half-plane so 0 is not in sigma(A) + sigma(A)
    M = np.asarray(M, float)
    shift = np.max(np.linalg.eigvals(M).real) + 0.5
    return M - shift * np.eye(M.shape[0])


def random_sym(rng, d):
    X = rng.normal(size=(d, d))
    return X + X.T


def power_series_expm(A, t, terms=40):
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ (A * t) / k
        out = out + term
    return out


class TestExpm:
    def test_zero_is_identity(self):
        np.testing.assert_allclose(expm(np.zeros((2, 2)) - 0.0, 1.0), np.eye(2))

    def test_diagonal(self):
        np.testing.assert_allclose(expm(np.diag([-1.0, -2.0]), 1.0), np.diag([math.exp(-1), math.exp(-2)]),
                                   rtol=1e-14)

    def test_power_series_oracle(self, rng):
        A = rng.normal(size=(2, 2))
        np.testing.assert_allclose(expm(A, 0.7), power_series_expm(A, 0.7), atol=1e-12)

    def test_defective_matrix(self):
        A = np.array([[-1.0, 1.0], [0.0, -1.0]])
        np.testing.assert_allclose(expm(A, 0.5), math.exp(-0.5) * np.array([[1.0, 0.5], [0.0, 1.0]]),
                                   atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, (3, 3), elements=finite), st.floats(0.0, 2.0))
    def test_inverse_property(self, M, t):
        np.testing.assert_allclose(expm(M, t) @ expm(M, -t), np.eye(3), atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, (2, 2), elements=finite), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_group_law(self, M, s, t):
        np.testing.assert_allclose(expm(M, s + t), expm(M, s) @ expm(M, t), atol=1e-9)

    def test_batch_matches_scalar(self, rng):
        A = rng.normal(size=(3, 3))
        ts = np.linspace(0, 1, 5)
        E = expm_batch(A, ts)
        for k, t in enumerate(ts):
            np.testing.assert_allclose(E[k], expm(A, t), atol=1e-12)


class TestSylvester:
    def test_minus_identity(self, rng):
        X = random_sym(rng, 3)
        np.testing.assert_allclose(sylvester_apply(-np.eye(3), X), -2 * X)

    def test_diagonal_apply(self):
        out = sylvester_apply(np.diag([-1.0, -2.0]), np.array([[2.0, 3.0], [3.0, 8.0]]))
        np.testing.assert_allclose(out, [[-4.0, -9.0], [-9.0, -32.0]])

    def test_diagonal_adjoint_equal(self, rng):
        A = np.diag([-1.0, -2.5])
        X = random_sym(rng, 2)
        np.testing.assert_allclose(sylvester_apply(A, X, adjoint=True), sylvester_apply(A, X))

    def test_diagonal_solve(self):
        out = sylvester_solve(np.diag([-1.0, -2.0]), np.array([[2.0, 3.0], [3.0, 8.0]]))
        np.testing.assert_allclose(out, [[-1.0, -1.0], [-1.0, -2.0]])

    def test_zero(self):
        np.testing.assert_array_equal(sylvester_solve(np.diag([-1.0, -2.0]), np.zeros((2, 2))), 0.0)

    def test_round_trip_many(self, rng):
        for _ in range(100):
            A = stable_matrix(rng.normal(size=(3, 3)))
            X = random_sym(rng, 3)
            np.testing.assert_allclose(sylvester_solve(A, sylvester_apply(A, X)), X, atol=1e-10)

    def test_complex_argument(self, rng):
        A = stable_matrix(rng.normal(size=(2, 2)))
        X = random_sym(rng, 2) + 1j * random_sym(rng, 2)
        np.testing.assert_allclose(sylvester_apply(A, sylvester_solve(A, X)), X, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, (2, 2), elements=finite), arrays(float, (2, 2), elements=finite),
           arrays(float, (2, 2), elements=finite))
    def test_adjoint_identity(self, M, X, Y):
        lhs = np.trace(sylvester_apply(M, X).T @ Y)
        rhs = np.trace(X.T @ sylvester_apply(M, Y, adjoint=True))
        assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_singular(self):
        with pytest.raises(SingularOperatorError):
            sylvester_solve(np.diag([1.0, -1.0]), np.eye(2))
        with pytest.raises(SingularOperatorError):
            MeanReversion(np.diag([1.0, -1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sylvester_apply(np.eye(2), np.eye(3))


class TestPSD:
    def test_identity(self):
        np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_rank_one(self):
        s = 0.02
        X = np.full((2, 2), s)
        R = psd_sqrt(X)
        np.testing.assert_allclose(R, math.sqrt(2 * s) / 2 * np.ones((2, 2)), atol=1e-15)
        np.testing.assert_allclose(R @ R, X, atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, (3, 3), elements=finite))
    def test_square_property(self, M):
        X = M @ M.T
        R = psd_sqrt(X)
        np.testing.assert_allclose(R, R.T)
        np.testing.assert_allclose(R @ R, X, atol=1e-9)
        assert is_psd(R)

    def test_rejects_negative(self):
        with pytest.raises(NotPSDError):
            psd_sqrt(np.diag([1.0, -0.1]))

    def test_clips_rounding_negatives(self):
        X = np.diag([1.0, -1e-13])
        np.testing.assert_allclose(psd_sqrt(X), np.diag([1.0, 0.0]))

    def test_spectral_norm(self):
        assert spectral_norm(np.array([[3.0, 0.0], [0.0, -4.0]])) == pytest.approx(4.0)

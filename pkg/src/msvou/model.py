"""General d-asset stochastic volatility model of OU type.

    dY_t     = (mu + beta(Sigma_t)) dt + Sigma_t^{1/2} dW_t + rho(dL_t)
    dSigma_t = (gamma_L + A Sigma_t + Sigma_t A^T) dt + dL_t

``L`` here is the driftless jump part of the subordinator; its drift
``gamma_L`` enters the covariance only, so the leverage term sees jumps only
(any rho(gamma_L) drift is absorbed in mu).

The moment generating function of Y_t is

    log E exp(y^T Y_t) = y^T (Y0 + mu t) + tr(Sigma0 H_y(t))
                         + tr(gamma_L int_0^t H_y) + int_0^t J(H_y(s) + rho*(y)) ds

with H_y(s) = e^{A^T s} X e^{A s} - X, X = (A^* )^{-1}(beta*(y) + y y^T / 2)
and J the jump cumulant.  The s-integral of J is done by adaptive
Gauss-Kronrod quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

from .errors import (
    MartingaleInfeasibleError,
    OutOfStripError,
    QuadratureError,
    ShapeError,
)
from .levy import SubordinatorSpec, wishart_log_mgf_jump
from .matrix_core import (
    MeanReversion,
    as_mean_reversion,
    check_psd,
    expm,
    expm_batch,
    spectral_norm,
    sylvester_inverse_norm,
    sylvester_solve,
    symmetrize,
)

QUAD_EPSABS = 1e-11
QUAD_MAX_EVALS = 2 ** 15
_GK21_POINTS = 21


@dataclass(frozen=True)
class LinOpToVec:
    """Linear map X -> R^d, out_i = sum_jk coeffs[i, j, k] X_jk.

    Only the action on symmetric X matters, so the adjoint is returned as a
    symmetric matrix.
    """

    coeffs: np.ndarray
    kind: str = "general"

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise ShapeError(f"coefficients must be d x d x d, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def diagonal(cls, c) -> "LinOpToVec":
        c = np.asarray(c, dtype=float)
        d = c.shape[0]
        coeffs = np.zeros((d, d, d))
        coeffs[np.arange(d), np.arange(d), np.arange(d)] = c
        return cls(coeffs, "diagonal")

    @classmethod
    def from_vec_matrix(cls, m) -> "LinOpToVec":
        """Build from a d x d^2 matrix acting on column-stacked vec(X)."""
        m = np.asarray(m, dtype=float)
        d = m.shape[0]
        if m.shape != (d, d * d):
            raise ShapeError(f"expected ({d}, {d * d}), got {m.shape}")
        # vec index k*d + j holds X[j, k]
        coeffs = np.swapaxes(m.reshape(d, d, d), 1, 2)
        return cls(coeffs, "general")

    @classmethod
    def zero(cls, d: int) -> "LinOpToVec":
        return cls(np.zeros((d, d, d)), "diagonal")

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def diag_coeffs(self) -> np.ndarray | None:
        d = self.dim
        diag = self.coeffs[np.arange(d), np.arange(d), np.arange(d)]
        mask = np.zeros_like(self.coeffs, dtype=bool)
        mask[np.arange(d), np.arange(d), np.arange(d)] = True
        return diag if not np.any(self.coeffs[~mask]) else None

    def __call__(self, X):
        return np.einsum("ijk,...jk->...i", self.coeffs, X)

    def adjoint(self, y):
        y = np.asarray(y)
        return symmetrize(np.einsum("...i,ijk->...jk", y, self.coeffs))

    def norm(self) -> float:
        """Norm of the adjoint, Euclidean -> Frobenius."""
        d = self.dim
        cols = symmetrize(self.coeffs).reshape(d, d * d)
        return float(np.linalg.norm(cols.T, 2)) if cols.any() else 0.0


def martingale_beta(d: int) -> LinOpToVec:
    """beta^i(X) = -X_ii / 2."""
    return LinOpToVec.diagonal(np.full(d, -0.5))


@dataclass(frozen=True)
class ModelParams:
    mu: np.ndarray
    A: MeanReversion
    beta: LinOpToVec
    rho: LinOpToVec
    Sigma0: np.ndarray
    sub: SubordinatorSpec
    Y0: np.ndarray | None = None
    _lyap_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        A = as_mean_reversion(self.A)
        d = A.dim
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        Y0 = np.zeros(d) if self.Y0 is None else np.asarray(self.Y0, dtype=float).reshape(-1)
        Sigma0 = check_psd(self.Sigma0, "Sigma0")
        dims = {mu.shape[0], Y0.shape[0], Sigma0.shape[0], self.beta.dim, self.rho.dim, self.sub.dim}
        if dims != {d}:
            raise ShapeError(f"inconsistent dimensions {sorted(dims)} (A is {d} x {d})")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Y0", Y0)
        object.__setattr__(self, "Sigma0", Sigma0)

    @property
    def d(self) -> int:
        return self.A.dim

    def replace(self, **changes) -> "ModelParams":
        kw = dict(mu=self.mu, A=self.A, beta=self.beta, rho=self.rho,
                  Sigma0=self.Sigma0, sub=self.sub, Y0=self.Y0)
        kw.update(changes)
        return ModelParams(**kw)


@dataclass(frozen=True)
class StripInfo:
    theta: float
    eps: float
    t: float
    norm: str = "Frobenius on matrices (spectral for ||A|| in the exponential bound)"


def _as_batch(y, d):
    y = np.asarray(y, dtype=complex)
    scalar = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape[-1] != d:
        raise ShapeError(f"argument must have trailing dimension {d}, got {y.shape}")
    return y.reshape(-1, d), scalar, y.shape[:-1]


def _x0(params: ModelParams, y):
    """(A^*)^{-1}(beta*(y) + y y^T / 2), batched over y."""
    core = params.beta.adjoint(y) + 0.5 * np.einsum("...i,...j->...ij", y, y)
    return sylvester_solve(params.A, core, adjoint=True)


def _sandwich(E, X):
    """E^T X E for E (..., d, d) broadcast against X."""
    return np.swapaxes(E, -1, -2) @ X @ E


def H(params: ModelParams, y, s):
    """H_y(s) = e^{A^T s} X e^{A s} - X; ``s`` scalar or 1-d array.

    Output shape is y.shape[:-1] + s.shape + (d, d).
    """
    y = np.asarray(y, dtype=complex)
    X = _x0(params, y)
    s = np.asarray(s, dtype=float)
    E = expm_batch(params.A, s)
    Xb = X.reshape(X.shape[:-2] + (1,) * s.ndim + X.shape[-2:])
    return _sandwich(E, Xb) - Xb


def _int_sandwich(params: ModelParams, X, t):
    """int_0^t e^{A^T s} X e^{A s} ds = (A^*)^{-1}(e^{A^T t} X e^{A t} - X)."""
    E = expm(params.A, t)
    return sylvester_solve(params.A, _sandwich(E, X) - X, adjoint=True)


def strip_radius(params: ModelParams, t: float) -> StripInfo:
    """Radius of the real-part ball on which the MGF is guaranteed analytic.

    Positive root of  c/2 x^2 + (||rho|| + c ||beta||) x - eps  with
    c = (e^{2||A|| t} + 1) ||A^{-1}||.
    """
    eps = params.sub.eps_moment
    if math.isinf(eps):
        return StripInfo(math.inf, eps, t)
    nA = spectral_norm(params.A.A)
    c = (math.exp(2.0 * nA * t) + 1.0) * sylvester_inverse_norm(params.A)
    b = params.rho.norm() / c + params.beta.norm()
    theta = -b + math.sqrt(b * b + 2.0 * eps / c)
    if theta <= 0.0 or not math.isfinite(theta):
        # cancellation when b dominates: use the conjugate root form
        theta = (2.0 * eps / c) / (b + math.sqrt(b * b + 2.0 * eps / c))
    return StripInfo(theta, eps, t)


def _real_argument_max(params: ModelParams, u, Zr, t, n_grid=65):
    """max over s of lambda_max(Theta^{1/2} S(s) Theta^{1/2}) where S(s) is
    the real part bound of the jump cumulant argument."""
    jumps = params.sub.jumps
    X = _x0(params, u.astype(float)).real
    base = X + (0.0 if Zr is None else Zr)
    s = np.linspace(0.0, t, n_grid)
    E = expm_batch(params.A, s)
    S = _sandwich(E[None], base[:, None]) - X[:, None] + params.rho.adjoint(u.real)[:, None]
    root = jumps.root
    M = symmetrize(root @ S @ root)
    return float(np.max(np.linalg.eigvalsh(M)[..., -1]))


def _check_domain(params: ModelParams, y, Z, t, domain):
    if domain == "none" or not params.sub.has_jumps:
        return
    u = y.real
    if domain == "theta":
        theta = strip_radius(params, t).theta
        norms = np.linalg.norm(u, axis=-1)
        if np.any(norms >= theta):
            raise OutOfStripError(
                f"||Re y|| = {norms.max():.6g} outside analyticity strip theta = {theta:.6g}"
            )
        if Z is None or not np.any(Z.real):
            return
    elif domain != "exact":
        raise ValueError(f"unknown domain mode {domain!r}")
    Zr = None if Z is None else Z.real
    top = _real_argument_max(params, u, Zr, t)
    if top >= 0.5:
        raise OutOfStripError(
            f"exponential moment of the driver fails along the path (max eigenvalue {top:.6g} >= 1/2)"
        )


def in_domain(params: ModelParams, y, t: float) -> bool:
    """True when exp(y^T Y_t) has a finite mean for the real vector(s) ``y``."""
    try:
        _check_domain(params, np.atleast_2d(np.asarray(y, dtype=complex)), None, t, "exact")
    except OutOfStripError:
        return False
    return True


def _jump_integral(params: ModelParams, y, Z, t, epsabs=QUAD_EPSABS):
    jumps = params.sub.jumps
    X = _x0(params, y)
    base = X if Z is None else X + Z
    lev = params.rho.adjoint(y)
    n = y.shape[0]

    def f(s):
        E = expm(params.A, s)
        W = _sandwich(E, base) - X + lev
        v = wishart_log_mgf_jump(jumps, W, check=False)
        return np.concatenate([v.real, v.imag])

    limit = max(1, QUAD_MAX_EVALS // _GK21_POINTS)
    res, err, info = quad_vec(f, 0.0, t, epsabs=epsabs, epsrel=1e-13, norm="max",
                              limit=limit, full_output=True)
    if not info.success:
        raise QuadratureError(f"jump integral did not converge (err {err:.3e}): {info.message}")
    return res[:n] + 1j * res[n:]


def _jump_integral_fixed(params: ModelParams, y, Z, t, nodes):
    """Same integral with a fixed Gauss-Legendre rule of ``nodes`` points."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * t * (x + 1.0)
    X = _x0(params, y)
    base = X if Z is None else X + Z
    E = expm_batch(params.A, s)
    W = _sandwich(E[None], base[:, None]) - X[:, None] + params.rho.adjoint(y)[:, None]
    v = wishart_log_mgf_jump(params.sub.jumps, W, check=False)
    return 0.5 * t * (v @ w)


def log_transform(params: ModelParams, y, Z=None, t: float = 1.0, domain: str = "exact",
                  quad_nodes: int | None = None):
    """log E exp(y^T Y_t + tr(Z Sigma_t)) for complex y (and symmetric Z).

    ``domain`` selects the admissibility gate: "theta" (the conservative
    analyticity strip), "exact" (driver moment condition checked along the
    s-path) or "none".  With ``quad_nodes`` the jump integral uses a fixed
    Gauss-Legendre rule instead of adaptive quadrature, which is much faster
    for large batches of arguments with a smooth integrand.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    d = params.d
    yb, scalar, shape = _as_batch(y, d)
    Zb = None
    if Z is not None:
        Zb = np.broadcast_to(np.asarray(Z, dtype=complex), (yb.shape[0], d, d))
        Zb = symmetrize(Zb)
    _check_domain(params, yb, Zb, t, domain)

    X = _x0(params, yb)
    E = expm(params.A, t)
    Ht = _sandwich(E, X) - X
    Hint = _int_sandwich(params, X, t) - t * X
    sig_arg = Ht if Zb is None else Ht + _sandwich(E, Zb)
    gam_arg = Hint if Zb is None else Hint + _int_sandwich(params, Zb, t)
    out = yb @ (params.Y0 + params.mu * t)
    out = out + np.einsum("ij,nji->n", params.Sigma0, sig_arg)
    out = out + np.einsum("ij,nji->n", params.sub.gamma, gam_arg)
    if params.sub.has_jumps and t > 0:
        if quad_nodes is None:
            out = out + _jump_integral(params, yb, Zb, t)
        else:
            out = out + _jump_integral_fixed(params, yb, Zb, t, quad_nodes)
    if scalar:
        return complex(out[0])
    return out.reshape(shape)


def mgf(params: ModelParams, y, t: float, domain: str = "theta"):
    """E exp(y^T Y_t), computed by quadrature over the jump cumulant.

    The default gate is the analyticity strip; pass ``domain="exact"`` to
    admit every argument whose real part keeps the driver's exponential
    moment finite along the path (needed for R > 1 dampings and the
    martingale point e_i).
    """
    return np.exp(log_transform(params, y, None, t, domain))


def joint_cf(params: ModelParams, y, z, t: float):
    """E exp(i y^T Y_t + i tr(z Sigma_t)) for real y and real symmetric z."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return np.exp(log_transform(params, 1j * y, 1j * z, t, domain="none"))


def marginal_mgf_quadrature(params: ModelParams, i: int, y, t: float, domain: str = "theta"):
    y = np.asarray(y, dtype=complex)
    arg = np.zeros(y.shape + (params.d,), dtype=complex)
    arg[..., i] = y
    return mgf(params, arg, t, domain)


def martingale_mu(params: ModelParams, r_dom: float, r_for=None) -> np.ndarray:
    """Drift making e^{-(r_dom - r_for,i) t} S^i_t martingales.

    mu_i = (r_dom - r_for,i) - lam (det(I - 2 rho*(e_i) Theta)^{-n/2} - 1).
    """
    d = params.d
    r_for = np.zeros(d) if r_for is None else np.broadcast_to(np.asarray(r_for, float), (d,))
    beta = params.beta.coeffs
    if not np.allclose(beta, martingale_beta(d).coeffs):
        raise MartingaleInfeasibleError("martingale pricing needs beta^i(X) = -X_ii / 2")
    mu = r_dom - np.asarray(r_for, dtype=float)
    if not params.sub.has_jumps:
        return mu
    jumps = params.sub.jumps
    comp = np.empty(d)
    for i in range(d):
        Zi = params.rho.adjoint(np.eye(d)[i])
        top = np.linalg.eigvalsh(symmetrize(jumps.root @ Zi @ jumps.root))[-1]
        if top >= 0.5:
            raise MartingaleInfeasibleError(
                f"asset {i + 1}: exp(rho^{i + 1}(X)) is not integrable under the jump law"
            )
        comp[i] = wishart_log_mgf_jump(jumps, Zi, check=False).real
    return mu - comp


def gaussian_envelope(params: ModelParams, t: float) -> np.ndarray:
    """PSD matrix M with |Phi(R + iw)| <= Phi(R) exp(-w^T M w / 2).

    M is the integrated covariance without jumps:
    int_0^t e^{As} Sigma0 e^{A^T s} ds + int_0^t int_0^s e^{Ar} gamma e^{A^T r} dr ds.
    """
    A = params.A
    E = expm(A, t)
    s0 = sylvester_solve(A, E @ params.Sigma0 @ E.T - params.Sigma0)
    g = params.sub.gamma
    inner = sylvester_solve(A, E @ g @ E.T - g)
    sg = sylvester_solve(A, inner - t * g)
    return symmetrize(s0 + sg)

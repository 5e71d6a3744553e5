"""Fourier-inversion pricing of European payoffs.

For a payoff f of X = Y_T - s (s = -log of the initial prices) with Fourier
transform f^(z) = int e^{i<z,x>} f(x) dx and a damping vector R,

    price = e^{-<R,s> - rT} / (2 pi)^d  int e^{-i<u,s>} Phi(R + iu) f^(iR - u) du,

where Phi is the moment generating function of Y_T.  The integrand at -u is
the complex conjugate of the one at u, so only half of the domain is
integrated.

``mgf_eval`` arguments are callables taking a complex array of shape (N, d)
and returning the N values of Phi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import loggamma

from .errors import DampingError, DomainError, MSVOUError, QuadratureError

DAMPING_MARGIN = 1e-3
DEFAULT_TOL = 1e-10

MGFEval = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PayoffTransform:
    dim: int
    fhat: Callable[[np.ndarray], np.ndarray]
    damping_region: Callable[[np.ndarray], bool]
    description: str = ""

    def __call__(self, z):
        return self.fhat(z)


@dataclass(frozen=True)
class PriceResult:
    price: float
    quad_error: float
    evaluations: int


def _check_strike(K):
    if not (K > 0 and math.isfinite(K)):
        raise DomainError(f"strike must be positive, got {K}")


def transform_call(K: float) -> PayoffTransform:
    """Call on e^x: f^(z) = K^{1+iz} / (iz (1 + iz)), Im z > 1."""
    _check_strike(K)
    logK = math.log(K)

    def fhat(z):
        z = np.asarray(z, dtype=complex)
        iz = 1j * z
        return np.exp((1.0 + iz) * logK) / (iz * (1.0 + iz))

    def region(R):
        R = np.atleast_1d(np.asarray(R, dtype=float))
        return bool(R.shape == (1,) and R[0] > 1.0)

    return PayoffTransform(1, fhat, region, f"call K={K}")


def transform_put(K: float) -> PayoffTransform:
    """Put on e^x: same formula as the call with Im z < 0."""
    _check_strike(K)
    call = transform_call(K)

    def region(R):
        R = np.atleast_1d(np.asarray(R, dtype=float))
        return bool(R.shape == (1,) and R[0] < 0.0)

    return PayoffTransform(1, call.fhat, region, f"put K={K}")


def transform_basket_put(K: float, d: int) -> PayoffTransform:
    """(K - sum e^{x_j})^+ : K^{1+i sum z} prod Gamma(i z_j) / Gamma(2 + i sum z), Im z_j < 0."""
    _check_strike(K)
    logK = math.log(K)

    def fhat(z):
        z = np.asarray(z, dtype=complex)
        iz = 1j * z
        s = iz.sum(axis=-1)
        return np.exp((1.0 + s) * logK + loggamma(iz).sum(axis=-1) - loggamma(2.0 + s))

    def region(R):
        R = np.atleast_1d(np.asarray(R, dtype=float))
        return bool(R.shape == (d,) and np.all(R < -DAMPING_MARGIN))

    return PayoffTransform(d, fhat, region, f"basket put K={K}, d={d}")


def transform_spread_call(K: float) -> PayoffTransform:
    """(e^{x1} - e^{x2} - K)^+ with Im z1 > 1, Im z2 < 0, Im(z1 + z2) > 1."""
    _check_strike(K)
    logK = math.log(K)

    def fhat(z):
        z = np.asarray(z, dtype=complex)
        iz1, iz2 = 1j * z[..., 0], 1j * z[..., 1]
        lg = loggamma(iz2) + loggamma(-iz1 - iz2 - 1.0) - loggamma(-iz1 - 1.0)
        return np.exp((1.0 + iz1 + iz2) * logK + lg) / (iz1 * (1.0 + iz1))

    def region(R):
        R = np.atleast_1d(np.asarray(R, dtype=float))
        return bool(R.shape == (2,) and R[0] > 1.0 and R[1] < 0.0 and R[0] + R[1] > 1.0)

    return PayoffTransform(2, fhat, region, f"spread call K={K}")


def _mgf_at(mgf_eval: MGFEval, R):
    """Phi(R), raising DampingError when R lies outside the model domain."""
    try:
        v = np.asarray(mgf_eval(np.asarray(R, dtype=complex).reshape(1, -1))).reshape(-1)[0]
    except MSVOUError as exc:
        raise DampingError(f"damping R={R} outside the model domain: {exc}") from exc
    if not (np.isfinite(v) and v.real > 0):
        raise DampingError(f"moment generating function not finite at R={R}")
    return float(v.real)


def _truncation(phi_R, fbound, m, tol):
    """Radius beyond which the Gaussian envelope is below 0.01 * tol."""
    if m <= 0.0:
        return 200.0
    c = phi_R * max(fbound, 1e-300) / (0.01 * tol)
    if c <= 1.0:
        return 1.0
    return math.sqrt(2.0 * math.log(c) / m)


def price(mgf_eval: MGFEval, payoff: PayoffTransform, R, s, T: float, r_dom: float,
          envelope=None, tol: float = DEFAULT_TOL, U: float | None = None,
          max_doublings: int = 8) -> PriceResult:
    """Price a European payoff by Fourier inversion.

    ``envelope`` is the PSD matrix M of the Gaussian decay bound
    |Phi(R + iu)| <= Phi(R) exp(-u^T M u / 2); it sets the truncation box.
    Without it the box starts at U = 50 and is doubled until the tail
    contribution falls below ``tol``.
    """
    R = np.atleast_1d(np.asarray(R, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    d = payoff.dim
    if R.shape != (d,) or s.shape != (d,):
        raise DampingError(f"R and s must have length {d}")
    if not payoff.damping_region(R):
        raise DampingError(f"R={R.tolist()} outside the payoff's damping region")
    phi_R = _mgf_at(mgf_eval, R)
    fbound = float(np.abs(np.asarray(payoff(1j * R))).reshape(-1)[0])
    if U is None:
        if envelope is not None:
            m = float(np.linalg.eigvalsh(np.atleast_2d(envelope))[0])
            U = min(_truncation(phi_R, fbound, m, tol), 1e4)
        else:
            U = 50.0
    pref = math.exp(-float(R @ s) - r_dom * T) / (2.0 * math.pi) ** d
    if d == 1:
        return _price_1d(mgf_eval, payoff, R, s, pref, U, tol, max_doublings)
    if d == 2:
        return _price_2d(mgf_eval, payoff, R, s, pref, U, tol, max_doublings)
    raise DampingError("pricing implemented for d = 1 and d = 2")


def _integrand_1d(mgf_eval, fhat, R, s):
    def f(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y = (R[0] + 1j * u)[:, None]
        v = np.exp(-1j * u * s[0]) * np.asarray(mgf_eval(y)).reshape(-1) * fhat(1j * R[0] - u)
        return 2.0 * v.real
    return f


def _quad(f, lo, hi, tol):
    calls = [0]

    def g(x):
        calls[0] += 1
        return float(f(x)[0])

    val, err, info = integrate.quad(g, lo, hi, epsabs=0.1 * tol, epsrel=1e-12,
                                    limit=500, full_output=True)[:3]
    return val, err, calls[0]


def _half_line(f, pref, U, tol, max_doublings):
    """pref * int_0^inf f, truncated at U and extended by doubling."""
    total, err, evals = 0.0, 0.0, 0
    # Gauss-Kronrod works best with a few breakpoints near the origin
    edges = [0.0] + [e for e in (1.0, 5.0, 20.0) if e < U] + [U]
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e, n = _quad(f, lo, hi, tol / pref / len(edges))
        total, err, evals = total + v, err + e, evals + n
    for _ in range(max_doublings):
        tail, e, n = _quad(f, U, 2.0 * U, tol / pref)
        total, err, evals = total + tail, err + e, evals + n
        U *= 2.0
        if abs(tail) * pref < tol:
            break
    else:
        raise QuadratureError(f"tail beyond U={U} did not fall below tol={tol}")
    return PriceResult(pref * total, pref * err, evals)


def _price_1d(mgf_eval, payoff, R, s, pref, U, tol, max_doublings):
    f = _integrand_1d(mgf_eval, payoff.fhat, R, s)
    return _half_line(f, pref, U, tol, max_doublings)


_GL16 = np.polynomial.legendre.leggauss(16)
_GL8 = np.polynomial.legendre.leggauss(8)


def _rect_rule(F, rects, rule):
    """Tensor Gauss-Legendre estimate on each rectangle [a1,b1] x [a2,b2]."""
    x, w = rule
    a1, b1, a2, b2 = rects.T
    h1, h2 = 0.5 * (b1 - a1), 0.5 * (b2 - a2)
    m1, m2 = 0.5 * (a1 + b1), 0.5 * (a2 + b2)
    n = x.size
    X1 = m1[:, None, None] + h1[:, None, None] * x[None, :, None]
    X2 = m2[:, None, None] + h2[:, None, None] * x[None, None, :]
    u = np.stack(np.broadcast_arrays(X1, X2), axis=-1).reshape(-1, 2)
    vals = F(u).reshape(-1, n, n)
    return (h1 * h2) * np.einsum("i,j,kij->k", w, w, vals)


def _split(rects):
    a1, b1, a2, b2 = rects.T
    c1, c2 = 0.5 * (a1 + b1), 0.5 * (a2 + b2)
    return np.concatenate([
        np.stack([a1, c1, a2, c2], 1), np.stack([c1, b1, a2, c2], 1),
        np.stack([a1, c1, c2, b2], 1), np.stack([c1, b1, c2, b2], 1),
    ])


def _rect_estimates(F, rects):
    n = rects.shape[0]
    coarse = _rect_rule(F, rects, _GL16)
    fine = _rect_rule(F, _split(rects), _GL8).reshape(4, n).sum(axis=0)
    return fine, np.abs(coarse - fine), n * 512


def _adaptive_cubature(F, rects, tol, max_evals=8_000_000):
    """Globally adaptive 2-d cubature.

    Each rectangle is integrated with a 16 x 16 rule and, split in four,
    with 8 x 8 rules; the difference is its error estimate.  Each round the
    rectangles carrying half of the total error estimate are split.
    """
    est, err, evals = _rect_estimates(F, rects)
    while err.sum() >= tol:
        if evals > max_evals:
            raise QuadratureError(
                f"2-d cubature exceeded {max_evals} evaluations (error {err.sum():.3e})"
            )
        order = np.argsort(err)[::-1]
        cum = np.cumsum(err[order])
        n_ref = int(np.searchsorted(cum, 0.5 * cum[-1])) + 1
        refine, keep = order[:n_ref], order[n_ref:]
        children = _split(rects[refine])
        c_est, c_err, n = _rect_estimates(F, children)
        evals += n
        rects = np.concatenate([rects[keep], children])
        est = np.concatenate([est[keep], c_est])
        err = np.concatenate([err[keep], c_err])
    return float(est.sum()), float(err.sum()), evals


def _graded_edges(U):
    edges = [0.0]
    e = 0.5
    while e < U:
        edges.append(e)
        e *= 2.0
    edges.append(U)
    return np.array(edges)


def _price_2d(mgf_eval, payoff, R, s, pref, U, tol, max_doublings):
    fhat = payoff.fhat

    def F(u):
        y = R[None, :] + 1j * u
        v = np.exp(-1j * (u @ s)) * np.asarray(mgf_eval(y)).reshape(-1) * fhat(1j * R[None, :] - u)
        return 2.0 * v.real

    e1 = _graded_edges(U)
    e2 = np.concatenate([-e1[:0:-1], e1])
    g1, g2 = np.meshgrid(np.arange(e1.size - 1), np.arange(e2.size - 1), indexing="ij")
    rects = np.stack([e1[g1.ravel()], e1[g1.ravel() + 1], e2[g2.ravel()], e2[g2.ravel() + 1]], 1)
    val, err, evals = _adaptive_cubature(F, rects, tol / pref)
    return PriceResult(pref * val, pref * err, evals)


def price_zero_strike_spread(mgf2_eval: MGFEval, R: float, s1: float, s2: float,
                             T: float, r_dom: float, envelope=None,
                             tol: float = DEFAULT_TOL, max_doublings: int = 8) -> PriceResult:
    """Price of (S1_T - S2_T)^+ with S_i = e^{Y_i - s_i}, for a damping R > 1.

    price = e^{R(s2 - s1) - s2 - rT} / (2 pi)
            int e^{iu(s2 - s1)} Phi(R + iu, 1 - R - iu) / ((R + iu)(R + iu - 1)) du
    """
    if not R > 1.0:
        raise DampingError(f"zero-strike spread needs R > 1, got {R}")
    phi_R = _mgf_at(mgf2_eval, [R, 1.0 - R])
    m = 0.0
    if envelope is not None:
        M = np.asarray(envelope, dtype=float)
        m = float(M[0, 0] - 2.0 * M[0, 1] + M[1, 1])
    fbound = 1.0 / (R * (R - 1.0))
    U = min(_truncation(phi_R, fbound, m, tol), 1e4) if m > 0 else 50.0
    ds = s2 - s1

    def f(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        z = R + 1j * u
        y = np.stack([z, 1.0 - z], axis=-1)
        v = np.exp(1j * u * ds) * np.asarray(mgf2_eval(y)).reshape(-1) / (z * (z - 1.0))
        return 2.0 * v.real

    pref = math.exp(R * ds - s2 - r_dom * T) / (2.0 * math.pi)
    return _half_line(f, pref, U, tol, max_doublings)


def default_call_damping(mgf_eval: MGFEval, preferred: float = 1.75) -> float:
    """Largest of ``preferred`` or the midpoint between 1 and the model's
    domain edge, whichever is admissible."""
    R = preferred
    for _ in range(40):
        try:
            _mgf_at(mgf_eval, [R])
            return R
        except DampingError:
            R = 1.0 + 0.5 * (R - 1.0)
    raise DampingError("no admissible damping R > 1 for this model")

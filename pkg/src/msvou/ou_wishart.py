"""Two-asset OU-Wishart specification with closed-form transforms.

A = diag(a1, a2), gamma_L = diag(gamma1, gamma2), beta^i(X) = -X_ii / 2 and
the leverage operator

    rho^1(X) = rho1 X11 + rho12 X12,    rho^2(X) = rho21 X12 + rho2 X22.

Jumps arrive at rate ``lam`` and are W_2(n, Theta).  When a1 == a2 == a and
n == 2 the jump integral int_0^t ds / q(e^{2as}) is elementary, with

    q(x) = b0 + b1 x + b2 x^2 = det(I - 2 (H_y(s) + rho*(y)) Theta),  x = e^{2as}.

It is evaluated here through the roots of q; on the real segment x in
[1, e^{2at}] the principal logarithm of (x - r) / (1 - r) is continuous
unless a root lies on the segment, so no phase tracking is needed.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, fields
from functools import cached_property

import numpy as np

from .errors import (
    BranchError,
    DegenerateCoefficientError,
    MartingaleInfeasibleError,
    NotPSDError,
    WrongBranchError,
)
from .levy import SubordinatorSpec, WishartJumpSpec
from .matrix_core import check_psd, symmetrize
from .model import LinOpToVec, ModelParams, martingale_beta
from . import model as _model


@dataclass(frozen=True)
class OUW2Params:
    a1: float
    a2: float
    rho1: float
    rho2: float
    Theta: np.ndarray
    Sigma0: np.ndarray
    lam: float
    gamma1: float = 0.0
    gamma2: float = 0.0
    rho12: float = 0.0
    rho21: float = 0.0
    n: float = 2.0
    r_dom: float = 0.0
    r_for1: float = 0.0
    r_for2: float = 0.0
    mu1: float | None = None
    mu2: float | None = None
    spot1: float = 1.0
    spot2: float = 1.0

    def __post_init__(self):
        for name in ("a1", "a2"):
            v = float(getattr(self, name))
            if not v < 0.0:
                raise ValueError(f"mean reversion must be negative: {name} = {v}")
        for name in ("gamma1", "gamma2"):
            if not float(getattr(self, name)) >= 0.0:
                raise ValueError(f"{name} must be >= 0")
        if not float(self.lam) >= 0.0:
            raise ValueError("lam must be >= 0")
        if not (self.spot1 > 0.0 and self.spot2 > 0.0):
            raise ValueError("spots must be positive")
        theta = check_psd(np.asarray(self.Theta, dtype=float).reshape(2, 2), "Theta")
        sigma0 = check_psd(np.asarray(self.Sigma0, dtype=float).reshape(2, 2), "Sigma0")
        if np.linalg.eigvalsh(sigma0)[0] <= 0.0:
            raise NotPSDError("Sigma0 must be positive definite")
        object.__setattr__(self, "Theta", theta)
        object.__setattr__(self, "Sigma0", sigma0)
        if not self.n > 1:
            raise ValueError("degrees of freedom must exceed 1")

    @property
    def equal_reversion(self) -> bool:
        return self.a1 == self.a2

    @property
    def rho_op(self) -> LinOpToVec:
        c = np.zeros((2, 2, 2))
        c[0, 0, 0] = self.rho1
        c[0, 1, 0] = self.rho12
        c[1, 0, 1] = self.rho21
        c[1, 1, 1] = self.rho2
        return LinOpToVec(c, "diagonal" if self.rho12 == self.rho21 == 0 else "general")

    @cached_property
    def subordinator(self) -> SubordinatorSpec:
        jumps = WishartJumpSpec(self.lam, self.n, self.Theta) if self.lam > 0 else None
        return SubordinatorSpec(np.diag([self.gamma1, self.gamma2]), jumps)

    def drifts(self) -> np.ndarray:
        if self.mu1 is not None and self.mu2 is not None:
            return np.array([self.mu1, self.mu2], dtype=float)
        return np.array(self._martingale_drifts)

    @cached_property
    def _martingale_drifts(self):
        return fx_drifts(self)

    def to_model(self) -> ModelParams:
        return ModelParams(
            mu=self.drifts(),
            A=np.diag([self.a1, self.a2]),
            beta=martingale_beta(2),
            rho=self.rho_op,
            Sigma0=self.Sigma0,
            sub=self.subordinator,
        )

    def replace(self, **changes) -> "OUW2Params":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return OUW2Params(**kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _lev_sym(p: OUW2Params, y):
    """Symmetric part of rho*(y)."""
    y1, y2 = y
    off = 0.5 * (p.rho12 * y1 + p.rho21 * y2)
    return np.array([[p.rho1 * y1, off], [off, p.rho2 * y2]], dtype=complex)


def _quad_form(y):
    y1, y2 = y
    return np.array([[y1 * y1 - y1, y1 * y2], [y1 * y2, y2 * y2 - y2]], dtype=complex)


@dataclass(frozen=True)
class MGFCoefficients:
    b0: complex
    b1: complex
    b2: complex
    Delta: complex
    B: np.ndarray
    C: np.ndarray

    def q(self, x):
        return self.b0 + self.b1 * x + self.b2 * x * x


def _coeff_arrays(p: OUW2Params, y):
    """b0, b1, b2 for a batch of arguments y of shape (N, 2)."""
    a = p.a1
    y1, y2 = y[:, 0], y[:, 1]
    Q = np.empty(y.shape[:1] + (2, 2), dtype=complex)
    Q[:, 0, 0] = y1 * y1 - y1
    Q[:, 0, 1] = Q[:, 1, 0] = y1 * y2
    Q[:, 1, 1] = y2 * y2 - y2
    L = np.empty_like(Q)
    L[:, 0, 0] = p.rho1 * y1
    L[:, 0, 1] = L[:, 1, 0] = 0.5 * (p.rho12 * y1 + p.rho21 * y2)
    L[:, 1, 1] = p.rho2 * y2
    B = Q @ p.Theta / (4.0 * a)
    C = L @ p.Theta
    det = lambda M: M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    tr = lambda M: M[:, 0, 0] + M[:, 1, 1]
    detB, trB = det(B), tr(B)
    D = B - C
    b2 = 4.0 * detB
    b1 = -8.0 * detB + 4.0 * trB * tr(C) - 4.0 * tr(B @ C) - 2.0 * trB
    b0 = 1.0 + 4.0 * det(D) + 2.0 * tr(D)
    return b0, b1, b2, B, C


def coefficients(p: OUW2Params, y) -> MGFCoefficients:
    """Coefficients of det(I - 2 (e^{2as} - 1) B - 2 C) as a quadratic in e^{2as}.

    The leverage matrix enters through its symmetric part; this is what the
    Wishart determinant formula requires and coincides with the plain
    rho*(y) whenever rho12 = rho21 = 0.
    """
    if not p.equal_reversion:
        raise WrongBranchError("closed form needs a1 == a2")
    y = np.asarray(y, dtype=complex).reshape(1, 2)
    b0, b1, b2, B, C = _coeff_arrays(p, y)
    b0, b1, b2 = complex(b0[0]), complex(b1[0]), complex(b2[0])
    Delta = cmath.sqrt(4.0 * b0 * b2 - b1 * b1)
    return MGFCoefficients(b0, b1, b2, Delta, B[0], C[0])


def _g(r, X):
    """Log((X - r) / (1 - r)) along the real segment between 1 and X."""
    lo, hi = min(1.0, X), max(1.0, X)
    on_path = (np.abs(r.imag) <= 1e-14 * np.maximum(1.0, np.abs(r))) & (r.real >= lo) & (r.real <= hi)
    if np.any(on_path):
        raise BranchError("root of q on the integration path")
    return np.log((X - r) / (1.0 - r))


def _atanh_div(delta, u, v):
    """(atanh(delta/u) - atanh(delta/v)) / delta, stable for small delta."""
    w1, w2 = delta / u, delta / v
    small = np.maximum(np.abs(w1), np.abs(w2)) < 1e-3
    series = sum(delta ** (2 * k) * (u ** -(2 * k + 1) - v ** -(2 * k + 1)) / (2 * k + 1)
                 for k in range(6))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (np.arctanh(w1) - np.arctanh(w2)) / delta
    return np.where(small, series, direct)


def _J(b0, b1, b2, X: float):
    """J = int_1^X (b2 x + b1) / q(x) dx, batched.

    Partial fractions over the roots r1, r2 of q give
    J = (r1 g(r2) - r2 g(r1)) / (r1 - r2).  Nearly coincident roots use the
    equivalent split (g1 + g2)/2 - m (g1 - g2)/(r1 - r2) with m the root
    midpoint and the divided difference expanded in atanh form.
    """
    b0, b1, b2 = (np.atleast_1d(np.asarray(v, dtype=complex)) for v in (b0, b1, b2))
    if np.any(b0 == 0):
        raise DegenerateCoefficientError("b0 = 0: closed form undefined")
    scale = np.maximum(np.maximum(np.abs(b0), np.abs(b1)), np.abs(b2))
    out = np.zeros(b0.shape, dtype=complex)
    lin = np.abs(b2) <= 1e-15 * scale
    zero = lin & (np.abs(b1) <= 1e-15 * scale)
    one = lin & ~zero
    if np.any(one):
        out[one] = _g(-b0[one] / b1[one], X)
    quad = ~lin
    if np.any(quad):
        c0, c1, c2 = b0[quad], b1[quad], b2[quad]
        disc = np.sqrt(c1 * c1 - 4.0 * c0 * c2)
        sign = np.where((np.conj(c1) * disc).real >= 0, 1.0, -1.0)
        qq = -0.5 * (c1 + sign * disc)
        r1 = qq / c2
        r2 = c0 / qq
        m = 0.5 * (r1 + r2)
        delta = 0.5 * (r1 - r2)
        lo, hi = min(1.0, X), max(1.0, X)
        gap = np.abs(m - np.clip(m.real, lo, hi))
        near = (gap > 0) & (np.abs(delta) < 0.25 * gap)
        res = np.empty(c0.shape, dtype=complex)
        far = ~near
        if np.any(far):
            g1, g2 = _g(r1[far], X), _g(r2[far], X)
            res[far] = (r1[far] * g2 - r2[far] * g1) / (r1[far] - r2[far])
        if np.any(near):
            mn, dn = m[near], delta[near]
            u, v = 1.0 - mn, X - mn
            sym = _g(mn, X) + 0.5 * (np.log(1 - (dn / v) ** 2) - np.log(1 - (dn / u) ** 2))
            res[near] = sym - mn * _atanh_div(dn, u, v)
        out[quad] = res
    return out


def _jump_term(b0, b1, b2, lam: float, a: float, t: float):
    """lam * int_0^t ds / q(e^{2as}) - lam t."""
    if lam == 0.0 or t == 0.0:
        return 0.0
    X = math.exp(2.0 * a * t)
    J = _J(b0, b1, b2, X)
    return lam * (t / b0 - J / (2.0 * a * b0)) - lam * t


def _check_n(p: OUW2Params):
    if p.n != 2:
        warnings.warn("closed form holds for n = 2 only; using quadrature", RuntimeWarning, stacklevel=3)
        return False
    return True


def _finish(out, scalar, shape, log):
    out = out.reshape(shape)
    if not log:
        out = np.exp(out)
    return complex(out) if scalar else out


def mgf2_closed(p: OUW2Params, y, t: float, log: bool = False):
    """Joint MGF E exp(y1 Y1_t + y2 Y2_t) for a1 == a2 (Y0 = 0).

    ``y`` has shape (2,) or (..., 2); set ``log`` for the log-MGF.
    """
    if not p.equal_reversion:
        raise WrongBranchError("closed form needs a1 == a2")
    y = np.asarray(y, dtype=complex)
    scalar = y.ndim == 1
    shape = y.shape[:-1]
    yb = y.reshape(-1, 2)
    if not _check_n(p):
        out = _model.log_transform(p.to_model(), yb, None, t, domain="exact")
        return _finish(np.asarray(out), scalar, shape, log)
    a = p.a1
    mu = p.drifts()
    y1, y2 = yb[:, 0], yb[:, 1]
    q11, q12, q22 = y1 * y1 - y1, y1 * y2, y2 * y2 - y2
    e = math.exp(2.0 * a * t)
    S = p.Sigma0
    out = yb @ mu * t
    out = out + (e - 1.0) / (4.0 * a) * (S[0, 0] * q11 + 2.0 * S[0, 1] * q12 + S[1, 1] * q22)
    out = out + (p.gamma1 * q11 + p.gamma2 * q22) / (4.0 * a) * ((e - 1.0) / (2.0 * a) - t)
    if p.lam > 0.0:
        b0, b1, b2, _, _ = _coeff_arrays(p, yb)
        out = out + _jump_term(b0, b1, b2, p.lam, a, t)
    return _finish(out, scalar, shape, log)


def _marginal_coefficients(p: OUW2Params, asset: int, y):
    if asset == 1:
        a, th_ii, th_jj, rii, rij = p.a1, p.Theta[0, 0], p.Theta[1, 1], p.rho1, p.rho12
    else:
        a, th_ii, th_jj, rii, rij = p.a2, p.Theta[1, 1], p.Theta[0, 0], p.rho2, p.rho21
    th12 = p.Theta[0, 1]
    det_theta = th_ii * th_jj - th12 * th12
    k = (y * y - y) / (2.0 * a)
    b0 = 1.0 + (k - 2.0 * rii * y) * th_ii - 2.0 * rij * y * th12 - rij * rij * y * y * det_theta
    b1 = -k * th_ii
    return a, b0, b1


def mgf1_closed(p: OUW2Params, asset: int, y, t: float, log: bool = False):
    """Marginal MGF E exp(y Y^asset_t); valid for any a1, a2.  ``y`` may be an array."""
    if asset not in (1, 2):
        raise ValueError("asset must be 1 or 2")
    y = np.asarray(y, dtype=complex)
    scalar = y.ndim == 0
    shape = y.shape
    yb = y.reshape(-1)
    i = asset - 1
    if p.n != 2:
        _check_n(p)
        arg = np.zeros(yb.shape + (2,), dtype=complex)
        arg[:, i] = yb
        out = _model.log_transform(p.to_model(), arg, None, t, domain="exact")
        return _finish(np.asarray(out), scalar, shape, log)
    a, b0, b1 = _marginal_coefficients(p, asset, yb)
    mu = p.drifts()[i]
    gam = (p.gamma1, p.gamma2)[i]
    e = math.exp(2.0 * a * t)
    k = yb * yb - yb
    out = yb * mu * t + (e - 1.0) / (4.0 * a) * k * p.Sigma0[i, i]
    out = out + k * gam / (4.0 * a) * ((e - 1.0) / (2.0 * a) - t)
    if p.lam > 0.0:
        out = out + _jump_term(b0, b1, np.zeros_like(b0), p.lam, a, t)
    return _finish(out, scalar, shape, log)


def fx_drifts(p: OUW2Params) -> tuple[float, float]:
    """Risk-neutral drifts of the two log exchange rates.

    mu_i = r_dom - r_for,i - lam (1 / D_i - 1) with
    D_1 = 1 - 2 rho1 Theta11 - 2 rho12 Theta12 - rho12^2 det(Theta)
    and symmetrically for asset 2.
    """
    det_theta = float(np.linalg.det(p.Theta))
    th = p.Theta
    D1 = 1.0 - 2.0 * p.rho1 * th[0, 0] - 2.0 * p.rho12 * th[0, 1] - p.rho12 ** 2 * det_theta
    D2 = 1.0 - 2.0 * p.rho2 * th[1, 1] - 2.0 * p.rho21 * th[0, 1] - p.rho21 ** 2 * det_theta
    out = []
    for i, (D, rf) in enumerate(((D1, p.r_for1), (D2, p.r_for2))):
        comp = 0.0
        if p.lam > 0.0:
            Z = _lev_sym(p, np.eye(2)[i]).real
            root = p.subordinator.jumps.root
            if np.linalg.eigvalsh(symmetrize(root @ Z @ root))[-1] >= 0.5 or D <= 0.0:
                raise MartingaleInfeasibleError(
                    f"asset {i + 1}: leverage too strong for a finite exponential moment"
                )
            comp = p.lam * (D ** (-0.5 * p.n) - 1.0)
        out.append(p.r_dom - rf - comp)
    return out[0], out[1]


# Reference forms with arctan / rational terms, kept for cross-checks.

def jump_term_arctan(co: MGFCoefficients, lam: float, a: float, t: float) -> complex:
    """Jump term via the arctan expression (Delta != 0), principal branches."""
    X = math.exp(2.0 * a * t)
    b0, b1, b2, D = co.b0, co.b1, co.b2, co.Delta
    br = (b1 / D) * (cmath.atan((2 * b2 + b1) / D) - cmath.atan((2 * b2 * X + b1) / D))
    br += 0.5 * cmath.log((b0 + b1 + b2) / (b2 * X * X + b1 * X + b0))
    return lam / (2.0 * a * b0) * br + lam * t / b0 - lam * t


def jump_term_double_root(co: MGFCoefficients, lam: float, a: float, t: float) -> complex:
    """Jump term when Delta == 0."""
    X = math.exp(2.0 * a * t)
    b0, b1, b2 = co.b0, co.b1, co.b2
    br = b1 / (2 * b2 * X + b1) - b1 / (2 * b2 + b1)
    br += 0.5 * cmath.log((b0 + b1 + b2) / (b2 * X * X + b1 * X + b0))
    return lam / (2.0 * a * b0) * br + lam * t / b0 - lam * t


def step_a_params(**overrides) -> OUW2Params:
    """Parameter set used throughout the examples (equal mean reversion)."""
    kw = dict(
        a1=-2.392, a2=-2.392, rho1=-3.741, rho2=-0.494, lam=0.774,
        Theta=np.array([[0.011, 0.022], [0.022, 0.063]]),
        Sigma0=np.array([[0.019, 0.013], [0.013, 0.017]]),
        gamma1=0.027, gamma2=0.0, n=2.0,
        r_dom=0.00676, r_for1=0.00604, r_for2=0.00344,
        spot1=1.3249, spot2=1.5333,
    )
    kw.update(overrides)
    return OUW2Params(**kw)


def initial_params(**overrides) -> OUW2Params:
    """Default starting point for calibration."""
    kw = dict(
        a1=-2.5, a2=-2.5, rho1=-3.0, rho2=-0.5, lam=0.8,
        Theta=np.array([[0.010, 0.010], [0.010, 0.030]]),
        Sigma0=np.array([[0.020, 0.010], [0.010, 0.015]]),
        gamma1=0.020, gamma2=0.011, n=2.0,
        r_dom=0.00676, r_for1=0.00604, r_for2=0.00344,
        spot1=1.3249, spot2=1.5333,
    )
    kw.update(overrides)
    return OUW2Params(**kw)


def closed_form_check(p: OUW2Params, t: float, n_points: int = 200, seed: int = 0,
                      imag_scale: float = 10.0):
    """Max relative gap between the closed-form and quadrature joint MGFs.

    Arguments are drawn with real parts uniform in the ball of radius
    0.9 theta (the analyticity strip) and imaginary parts uniform in
    [-imag_scale, imag_scale]^2.  Returns (max relative error, y array).
    """
    m = p.to_model()
    theta = _model.strip_radius(m, t).theta
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal((n_points, 2))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = 0.9 * theta * np.sqrt(rng.uniform(size=(n_points, 1)))
    y = radius * direction + 1j * rng.uniform(-imag_scale, imag_scale, (n_points, 2))
    closed = mgf2_closed(p, y, t)
    quad = _model.mgf(m, y, t, domain="theta")
    return float(np.max(np.abs(closed - quad) / np.abs(quad))), y

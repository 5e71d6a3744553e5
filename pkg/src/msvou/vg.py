"""Benchmark Variance Gamma models.

Model 1: two Brownian motions with drift subordinated by a common Gamma
process.  Model 2: two independent VG processes run on a common integrated
Gamma-OU clock Z_t = int_0^t z_s ds, dz = 2 alpha z ds + dN_{-2 alpha s},
z_0 = 1, N compound Poisson with intensity vartheta and Exp(xi) jumps.
Both are normalized so that e^{-(r_dom - r_for,i) t} S^i is a martingale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfStripError
from .levy import rng_stream


@dataclass(frozen=True)
class BenchmarkVGParams:
    theta1: float
    theta2: float
    sigma1: float
    sigma2: float
    nu1: float
    nu2: float | None = None
    vartheta: float | None = None
    alpha: float | None = None
    xi: float | None = None
    r_dom: float = 0.0
    r_for1: float = 0.0
    r_for2: float = 0.0

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0 and self.nu1 > 0):
            raise ValueError("sigma and nu must be positive")
        if self.is_time_changed:
            if not (self.nu2 > 0 and self.alpha < 0 and self.xi > 0 and self.vartheta > 0):
                raise ValueError("need nu2 > 0, alpha < 0, xi > 0, vartheta > 0")

    @property
    def is_time_changed(self) -> bool:
        return self.alpha is not None

    @property
    def nu(self) -> float:
        return self.nu1

    @property
    def carry(self) -> np.ndarray:
        return np.array([self.r_dom - self.r_for1, self.r_dom - self.r_for2])


def _y(y1, y2):
    y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=complex), np.asarray(y2, dtype=complex))
    return y1, y2


def vg_log_mgf(p: BenchmarkVGParams, y1, y2, t: float):
    y1, y2 = _y(y1, y2)
    nu = p.nu
    w = np.array([math.log(1 - p.theta1 * nu - 0.5 * p.sigma1 ** 2 * nu),
                  math.log(1 - p.theta2 * nu - 0.5 * p.sigma2 ** 2 * nu)]) / nu
    base = 1 - nu * (y1 * p.theta1 + 0.5 * y1 * y1 * p.sigma1 ** 2
                     + y2 * p.theta2 + 0.5 * y2 * y2 * p.sigma2 ** 2)
    if np.any(base.real <= 0):
        raise OutOfStripError("argument outside the VG moment region")
    c = p.carry
    return (y1 * (c[0] + w[0]) + y2 * (c[1] + w[1])) * t - t / nu * np.log(base)


def vg_mgf(p: BenchmarkVGParams, y1, y2, t: float):
    """Risk-neutral joint MGF of the common-subordinator VG model."""
    out = np.exp(vg_log_mgf(p, y1, y2, t))
    return complex(out) if out.ndim == 0 else out


def _log_phi_x(y, theta, sigma, nu):
    base = 1 - y * theta * nu - 0.5 * sigma ** 2 * y * y * nu
    if np.any(base.real <= 0):
        raise OutOfStripError("argument outside the VG moment region")
    return -np.log(base) / nu


def gamma_ou_log_mgf(p: BenchmarkVGParams, y, t: float):
    """log E exp(y Z_t) for the integrated Gamma-OU clock with z_0 = 1."""
    a, xi, vt = p.alpha, p.xi, p.vartheta
    y = np.asarray(y, dtype=complex)
    e = math.exp(2 * a * t) - 1.0
    den = e * y - 2 * a * xi
    if np.any(den.real <= 0):
        raise OutOfStripError("argument outside the moment region of the activity clock")
    return y * e / (2 * a) + 2 * a * vt * (t * y + xi * np.log(den / (-2 * a * xi))) / (y + 2 * a * xi)


def _vgou_raw(p, y1, y2, t):
    arg = _log_phi_x(y1, p.theta1, p.sigma1, p.nu1) + _log_phi_x(y2, p.theta2, p.sigma2, p.nu2)
    return gamma_ou_log_mgf(p, arg, t)


def vgou_log_mgf(p: BenchmarkVGParams, y1, y2, t: float):
    y1, y2 = _y(y1, y2)
    n1 = _vgou_raw(p, 1.0, 0.0, t).real
    n2 = _vgou_raw(p, 0.0, 1.0, t).real
    c = p.carry
    return _vgou_raw(p, y1, y2, t) - y1 * n1 - y2 * n2 + (y1 * c[0] + y2 * c[1]) * t


def vgou_mgf(p: BenchmarkVGParams, y1, y2, t: float):
    """Risk-neutral joint MGF of two VG processes on a common Gamma-OU clock."""
    out = np.exp(vgou_log_mgf(p, y1, y2, t))
    return complex(out) if out.ndim == 0 else out


def simulate_vg(p: BenchmarkVGParams, t: float, n: int, seed: int = 0) -> np.ndarray:
    """Terminal log-price increments (n, 2) of the common-subordinator model."""
    rng = rng_stream(seed, 0)
    nu = p.nu
    G = rng.gamma(t / nu, nu, n)
    Z = rng.standard_normal((n, 2))
    w = np.array([math.log(1 - p.theta1 * nu - 0.5 * p.sigma1 ** 2 * nu),
                  math.log(1 - p.theta2 * nu - 0.5 * p.sigma2 ** 2 * nu)]) / nu
    drift = (p.carry + w) * t
    th = np.array([p.theta1, p.theta2])
    sg = np.array([p.sigma1, p.sigma2])
    return drift + G[:, None] * th + np.sqrt(G)[:, None] * sg * Z


def simulate_clock(p: BenchmarkVGParams, t: float, n: int, rng) -> np.ndarray:
    """Exact draws of Z_t = int_0^t z_s ds."""
    a = p.alpha
    counts = rng.poisson(-2 * a * p.vartheta * t, n)
    total = int(counts.sum())
    tau = rng.uniform(0.0, t, total)
    J = rng.exponential(1.0 / p.xi, total)
    owner = np.repeat(np.arange(n), counts)
    Z = np.full(n, (math.exp(2 * a * t) - 1.0) / (2 * a))
    np.add.at(Z, owner, J * np.expm1(2 * a * (t - tau)) / (2 * a))
    return Z


def simulate_vgou(p: BenchmarkVGParams, t: float, n: int, seed: int = 0) -> np.ndarray:
    """Terminal log-price increments (n, 2) of the time-changed model."""
    rng = rng_stream(seed, 0)
    Z = simulate_clock(p, t, n, rng)
    out = np.empty((n, 2))
    c = p.carry
    for i, (th, sg, nu) in enumerate(((p.theta1, p.sigma1, p.nu1), (p.theta2, p.sigma2, p.nu2))):
        G = rng.gamma(Z / nu, nu)
        out[:, i] = th * G + sg * np.sqrt(G) * rng.standard_normal(n)
    norm = np.array([_vgou_raw(p, 1.0, 0.0, t).real, _vgou_raw(p, 0.0, 1.0, t).real])
    return out + c * t - norm


def table2_vg(**kw) -> BenchmarkVGParams:
    return BenchmarkVGParams(theta1=-0.360, theta2=-0.327, sigma1=0.090, sigma2=0.093, nu1=0.106, **kw)


def table2_vgou(**kw) -> BenchmarkVGParams:
    return BenchmarkVGParams(theta1=-1.470, theta2=-2.190, sigma1=0.001, sigma2=0.050,
                             nu1=0.022, nu2=0.001, vartheta=0.468, alpha=-42.140, xi=1.747, **kw)

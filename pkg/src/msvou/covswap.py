"""Closed-form covariance swap rates.

With the Sylvester operator A(X) = AX + XA^T,

    E Sigma_T   = e^{AT} Sigma0 e^{A^T T} + e^{AT} A^{-1}(E L_1) e^{A^T T} - A^{-1}(E L_1)
    E Sigma_T^+ = A^{-1}(E Sigma_T - T E L_1 - Sigma0)
    E [Y^i, Y^j]_T = (E Sigma_T^+)^{ij} + T lam E[rho^i(X) rho^j(X)],

the last expectation taken under the Wishart jump law.
"""
from __future__ import annotations

import csv
import math

import numpy as np

from .levy import mean as driver_mean, wishart_second_moments
from .matrix_core import expm, sylvester_solve, symmetrize
from .model import ModelParams


def _model(params) -> ModelParams:
    return params.to_model() if hasattr(params, "to_model") else params


def expected_sigma(params, T: float) -> np.ndarray:
    p = _model(params)
    E = expm(p.A, T)
    inv = sylvester_solve(p.A, driver_mean(p.sub))
    return symmetrize(E @ (p.Sigma0 + inv) @ E.T - inv)


def expected_integrated_sigma(params, T: float) -> np.ndarray:
    p = _model(params)
    EL = driver_mean(p.sub)
    return symmetrize(sylvester_solve(p.A, expected_sigma(p, T) - T * EL - p.Sigma0))


def jump_leverage_moment(params) -> np.ndarray:
    """lam * E[rho^i(X) rho^j(X)] for X ~ W_d(n, Theta), as a d x d matrix."""
    p = _model(params)
    sub = p.sub
    d = p.d
    if not sub.has_jumps:
        return np.zeros((d, d))
    raw = wishart_second_moments(sub.jumps.n, sub.jumps.theta)
    C = p.rho.coeffs
    return sub.jumps.lam * np.einsum("iab,jcd,abcd->ij", C, C, raw)


def swap_rate(params, i: int, j: int, T: float) -> float:
    """Fair covariance swap rate E [Y^i, Y^j]_T (assets indexed from 1)."""
    p = _model(params)
    K = expected_integrated_sigma(p, T) + T * jump_leverage_moment(p)
    return float(K[i - 1, j - 1])


def swap_rate_ouw2(params, T: float) -> float:
    """Two-asset closed form for i=1, j=2 with diagonal leverage and gamma_L = 0."""
    a = params.a1 + params.a2
    lam, n, th = params.lam, params.n, params.Theta
    first = ((math.exp(a * T) - 1.0) * (params.Sigma0[0, 1] + lam * n * th[0, 1] / a) - T * lam * n * th[0, 1]) / a
    return first + T * params.rho1 * params.rho2 * lam * n * (2.0 * th[0, 1] ** 2 + n * th[0, 0] * th[1, 1])


def normalized_rate_curve(params, i: int, j: int, T_grid):
    """(T, sqrt(K/T)) pairs; negative rates give -sqrt(|K|/T)."""
    out = []
    for T in T_grid:
        K = swap_rate(params, i, j, float(T))
        out.append((float(T), math.copysign(math.sqrt(abs(K) / T), K)))
    return out


def write_curve_csv(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "normalized_rate"])
        for T, v in curve:
            w.writerow([repr(T), repr(v)])


def read_curve_csv(path):
    with open(path, newline="") as fh:
        return [(float(r["T"]), float(r["normalized_rate"])) for r in csv.DictReader(fh)]

"""Garman-Kohlhagen (two-rate Black-Scholes) prices and implied volatility."""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .errors import ArbitrageError

SIGMA_LO = 1e-6
SIGMA_HI = 5.0


def bs_call(S0, K, T, r_dom, r_for, sigma):
    S0, K, T, sigma = (np.asarray(v, dtype=float) for v in (S0, K, T, sigma))
    fwd_disc = S0 * np.exp(-r_for * T)
    k_disc = K * np.exp(-r_dom * T)
    sq = sigma * np.sqrt(T)
    d1 = (np.log(fwd_disc / k_disc) + 0.5 * sq * sq) / sq
    return fwd_disc * ndtr(d1) - k_disc * ndtr(d1 - sq)


def bs_vega(S0, K, T, r_dom, r_for, sigma):
    S0, K, T, sigma = (np.asarray(v, dtype=float) for v in (S0, K, T, sigma))
    fwd_disc = S0 * np.exp(-r_for * T)
    sq = sigma * np.sqrt(T)
    d1 = (np.log(fwd_disc / (K * np.exp(-r_dom * T))) + 0.5 * sq * sq) / sq
    return fwd_disc * np.sqrt(T) * np.exp(-0.5 * d1 * d1) / np.sqrt(2.0 * np.pi)


def no_arbitrage_band(S0, K, T, r_dom, r_for):
    fwd_disc = np.asarray(S0, float) * np.exp(-np.asarray(r_for, float) * T)
    lower = np.maximum(fwd_disc - np.asarray(K, float) * np.exp(-np.asarray(r_dom, float) * T), 0.0)
    return lower, fwd_disc


def implied_vol(price, S0, K, T, r_dom, r_for, tol: float = 1e-12, max_iter: int = 100):
    """Volatility reproducing ``price``; vectorized over all inputs.

    Newton steps are accepted only while they stay inside the current
    bracket, otherwise the bracket is bisected.
    """
    price, S0, K, T, r_dom, r_for = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (price, S0, K, T, r_dom, r_for)))
    scalar = price.ndim == 0
    price, S0, K, T, r_dom, r_for = (np.atleast_1d(v).astype(float) for v in (price, S0, K, T, r_dom, r_for))
    lower, upper = no_arbitrage_band(S0, K, T, r_dom, r_for)
    slack = 1e-14 * np.maximum(upper, 1.0)
    bad = ~((price >= lower - slack) & (price < upper))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ArbitrageError(
            f"price {price[i]:.6g} outside no-arbitrage band ({lower[i]:.6g}, {upper[i]:.6g})"
        )
    lo = np.full(price.shape, SIGMA_LO)
    hi = np.full(price.shape, SIGMA_HI)
    f_lo = bs_call(S0, K, T, r_dom, r_for, lo) - price
    f_hi = bs_call(S0, K, T, r_dom, r_for, hi) - price
    at_lo = f_lo >= 0
    at_hi = f_hi <= 0
    sigma = np.clip(np.sqrt(2.0 * np.abs(np.log(S0 * np.exp((r_dom - r_for) * T) / K)) / T) + 0.1, lo, hi)
    done = at_lo | at_hi
    for _ in range(max_iter):
        if np.all(done):
            break
        f = bs_call(S0, K, T, r_dom, r_for, sigma) - price
        conv = np.abs(f) <= tol * np.maximum(price, 1e-300) + 1e-15
        done |= conv
        hi = np.where(f > 0, sigma, hi)
        lo = np.where(f <= 0, sigma, lo)
        v = bs_vega(S0, K, T, r_dom, r_for, sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = sigma - f / v
        ok = np.isfinite(step) & (step > lo) & (step < hi)
        new = np.where(ok, step, 0.5 * (lo + hi))
        sigma = np.where(done, sigma, new)
        done |= (hi - lo) <= 1e-15 * hi
    sigma = np.where(at_lo, SIGMA_LO, np.where(at_hi, SIGMA_HI, sigma))
    return float(sigma[0]) if scalar else sigma

"""Calibration of the two-asset OU-Wishart FX model to vanilla quotes.

Quotes on the two dollar pairs are calls on S^1 = $/EUR and S^2 = $/GBP.
A call on the cross rate EUR/GBP with strike K pays, in dollars,
(S^1_T - K S^2_T)^+, a zero-strike spread option, so its pound price is the
dollar spread price with initial values (spot, K) for spot = S^1_0 / S^2_0.

The objective is the root mean squared difference of Black-Scholes implied
volatilities.  Inside the optimizer prices come from a fixed-node
Gauss-Legendre rule on graded panels, with the moment generating function
evaluated once per (pair, maturity) and shared by all strikes.
"""
from __future__ import annotations

import csv
import math
import time
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import fourier
from . import model as _model
from .config import OptionQuote, fmt
from .errors import ArbitrageError, CalibrationFailure, DampingError, MSVOUError
from .implied_vol import bs_call, implied_vol, no_arbitrage_band
from .ou_wishart import OUW2Params, mgf1_closed, mgf2_closed

__all__ = [
    "OptionQuote", "CalibConfig", "price_quote", "CalibrationResult", "PAIRS", "model_price", "fast_prices",
    "evaluate", "rmse", "calibrate", "synthetic_quotes", "screen_quotes", "write_report",
    "read_report",
]

PAIRS = {"EURUSD": 1, "GBPUSD": 2, "EURGBP": 0}
CALL_DAMPING = 1.75
SPREAD_DAMPING = 1.5
FAST_TOL = 1e-11
GL_PANEL = np.polynomial.legendre.leggauss(32)
JUMP_NODES = 64

SCALAR_BOUNDS = {
    "lam": (1e-6, 10.0), "a1": (-50.0, -0.01), "a2": (-50.0, -0.01),
    "rho1": (-20.0, 20.0), "rho2": (-20.0, 20.0), "rho12": (-20.0, 20.0), "rho21": (-20.0, 20.0),
    "gamma1": (0.0, 5.0), "gamma2": (0.0, 5.0),
}
# Cholesky factors: Theta = L L^T (PSD), Sigma0 = L L^T with a positive diagonal (PD)
CHOL_BOUNDS = {
    "Theta": ((0.0, 1.0), (-1.0, 1.0), (0.0, 1.0)),
    "Sigma0": ((1e-4, 2.0), (-2.0, 2.0), (1e-4, 2.0)),
}


def _pair_index(pair: str) -> int:
    try:
        return PAIRS[pair.upper()]
    except KeyError:
        raise ValueError(f"unknown pair {pair!r}; expected one of {sorted(PAIRS)}") from None


# Pricing -----------------------------------------------------------------

def _mgf_eval(p: OUW2Params, idx: int, T: float, quad_nodes=None):
    """Callable (N, d) -> (N,) for the marginal (idx 1, 2) or joint (idx 0) MGF."""
    if idx:
        return lambda y: mgf1_closed(p, idx, np.asarray(y)[:, 0], T)
    if p.equal_reversion and p.n == 2:
        return lambda y: mgf2_closed(p, np.asarray(y), T)
    m = p.to_model()
    return lambda y: np.exp(_model.log_transform(m, np.asarray(y), None, T, domain="none",
                                                 quad_nodes=quad_nodes))


def _damping(m, idx: int, T: float, preferred: float) -> float:
    R = preferred
    for _ in range(40):
        y = [R, 0.0] if idx == 1 else [0.0, R] if idx == 2 else [R, 1.0 - R]
        if _model.in_domain(m, y, T):
            return R
        R = 1.0 + 0.5 * (R - 1.0)
    raise DampingError("no admissible damping for this model and maturity")


def price_quote(params: OUW2Params, quote: OptionQuote,
                tol: float = fourier.DEFAULT_TOL) -> fourier.PriceResult:
    """Adaptive Fourier price of a call quote, in the quote's domestic currency.

    Direct pairs are calls on the marginal; the cross pair is the dollar
    zero-strike spread with initial values (spot, K) on a unit pound.
    """
    idx = _pair_index(quote.pair)
    T = quote.T
    m = params.to_model()
    env = _model.gaussian_envelope(m, T)
    mgf_eval = _mgf_eval(params, idx, T)
    if idx:
        R = _damping(m, idx, T, CALL_DAMPING)
        return fourier.price(mgf_eval, fourier.transform_call(quote.K), [R], [-math.log(quote.spot)],
                             T, params.r_dom, envelope=env[idx - 1, idx - 1], tol=tol)
    R = _damping(m, 0, T, SPREAD_DAMPING)
    return fourier.price_zero_strike_spread(mgf_eval, R, -math.log(quote.spot), -math.log(quote.K),
                                            T, params.r_dom, envelope=env, tol=tol)


def model_price(params: OUW2Params, quote: OptionQuote, tol: float = fourier.DEFAULT_TOL) -> float:
    """Model price of a call quote, in units of the quote's domestic currency."""
    return price_quote(params, quote, tol).price


def _panel_nodes(U: float):
    edges = [0.0]
    e = 0.5
    while e < U:
        edges.append(e)
        e *= 2.0
    edges.append(max(U, e))
    edges = np.asarray(edges)
    x, w = GL_PANEL
    a, b = edges[:-1, None], edges[1:, None]
    u = 0.5 * (a + b) + 0.5 * (b - a) * x[None, :]
    return u.ravel(), (0.5 * (b - a) * w[None, :]).ravel()


def _group_prices(params, m, env, idx, T, spot, strikes):
    """Prices of calls with common (pair, T, spot) on a fixed node set."""
    strikes = np.asarray(strikes, dtype=float)
    quad_nodes = None if idx or (params.equal_reversion and params.n == 2) else JUMP_NODES
    mgf_eval = _mgf_eval(params, idx, T, quad_nodes)
    if idx:
        R = _damping(m, idx, T, CALL_DAMPING)
        Rv = np.array([R, 0.0])
        mvar = env[idx - 1, idx - 1]
    else:
        R = _damping(m, 0, T, SPREAD_DAMPING)
        Rv = np.array([R, 1.0 - R])
        mvar = env[0, 0] - 2.0 * env[0, 1] + env[1, 1]
    phi_R = float(np.real(mgf_eval(Rv[None, :] if not idx else np.array([[R]]))[0]))
    if not (math.isfinite(phi_R) and phi_R > 0):
        raise DampingError("moment generating function not finite at the damping point")
    kmax = strikes.max() / spot
    fbound = max(kmax, 1.0 / kmax) ** abs(1.0 - R) / (R * (R - 1.0))
    U = min(fourier._truncation(phi_R, fbound, mvar, FAST_TOL), 1e4)
    u, w = _panel_nodes(U)
    z = R + 1j * u
    if idx:
        phi = mgf_eval(z[:, None])
        # (e^x - K)^+ with x = log S_T: K^{1-z} / (z (z - 1)), shifted by log spot
        logK = np.log(strikes)[:, None]
        g = np.exp((1.0 - z[None, :]) * logK + z[None, :] * math.log(spot)) / (z * (z - 1.0))
        vals = (g * phi[None, :]).real @ w
        return math.exp(-params.r_dom * T) / math.pi * vals
    phi = mgf_eval(np.stack([z, 1.0 - z], axis=-1))
    ds = math.log(spot) - np.log(strikes)[:, None]
    g = np.exp(z[None, :] * ds) / (z * (z - 1.0))
    vals = (g * phi[None, :]).real @ w
    return strikes * math.exp(-params.r_dom * T) / math.pi * vals


def fast_prices(params: OUW2Params, quotes) -> np.ndarray:
    """Model prices of all quotes, grouped by (pair, maturity, spot)."""
    m = params.to_model()
    groups = defaultdict(list)
    for k, q in enumerate(quotes):
        groups[(_pair_index(q.pair), q.T, q.spot)].append(k)
    out = np.empty(len(quotes))
    envs = {}
    for (idx, T, spot), ks in groups.items():
        if T not in envs:
            envs[T] = _model.gaussian_envelope(m, T)
        out[ks] = _group_prices(params, m, envs[T], idx, T, spot, [quotes[k].K for k in ks])
    return out


# Objective ---------------------------------------------------------------

def market_vols(quotes) -> np.ndarray:
    q = quotes
    return implied_vol(np.array([x.mid for x in q]), np.array([x.spot for x in q]),
                       np.array([x.K for x in q]), np.array([x.T for x in q]),
                       np.array([x.r_dom for x in q]), np.array([x.r_for for x in q]))


@dataclass
class Evaluation:
    rmse: float
    per_pair: dict
    model_iv: np.ndarray | None
    error: str | None = None


def evaluate(params: OUW2Params, quotes, market_iv=None) -> Evaluation:
    """Implied-volatility RMSE; any pricing or inversion failure gives +inf."""
    market_iv = market_vols(quotes) if market_iv is None else np.asarray(market_iv)
    try:
        prices = fast_prices(params, quotes)
        if not np.all(np.isfinite(prices)):
            raise DampingError("non-finite model price")
        iv = implied_vol(prices, np.array([q.spot for q in quotes]), np.array([q.K for q in quotes]),
                         np.array([q.T for q in quotes]), np.array([q.r_dom for q in quotes]),
                         np.array([q.r_for for q in quotes]))
    except (MSVOUError, ValueError, ArithmeticError, FloatingPointError) as exc:
        return Evaluation(math.inf, {}, None, f"{type(exc).__name__}: {exc}")
    err2 = (iv - market_iv) ** 2
    per_pair = {}
    pairs = np.array([q.pair.upper() for q in quotes])
    for name in dict.fromkeys(pairs):
        per_pair[name] = float(np.sqrt(err2[pairs == name].mean()))
    return Evaluation(float(np.sqrt(err2.mean())), per_pair, iv)


def rmse(params: OUW2Params, quotes, market_iv=None) -> float:
    return evaluate(params, quotes, market_iv).rmse


# Parameterization --------------------------------------------------------

VARIANT_SCALARS = {
    "A": ("lam", "a", "rho1", "rho2", "gamma1", "gamma2"),
    "B": ("lam", "a", "rho1", "rho2", "rho12", "rho21", "gamma1", "gamma2"),
    "C": ("lam", "a1", "a2", "rho1", "rho2", "gamma1", "gamma2"),
    "D": ("lam", "a1", "a2", "rho1", "rho2", "rho12", "rho21", "gamma1", "gamma2"),
}


def _chol(M):
    L = np.linalg.cholesky(M + 1e-300 * np.eye(2)) if np.linalg.eigvalsh(M)[0] > 0 else None
    if L is None:
        # PSD but singular: factor by hand
        l11 = math.sqrt(max(M[0, 0], 0.0))
        l21 = M[0, 1] / l11 if l11 > 0 else 0.0
        l22 = math.sqrt(max(M[1, 1] - l21 * l21, 0.0))
        L = np.array([[l11, 0.0], [l21, l22]])
    return L[0, 0], L[1, 0], L[1, 1]


def _from_chol(l11, l21, l22):
    L = np.array([[l11, 0.0], [l21, l22]])
    return L @ L.T


@dataclass
class CalibConfig:
    """Variant, starting point, bounds and budget of a calibration run.

    ``fixed`` holds coordinate names: scalar parameter names (``a`` is the
    common mean reversion of variants A and B) or ``Theta`` / ``Sigma0`` for
    a whole matrix.  ``bounds`` overrides the default box for scalars.
    """
    variant: str = "A"
    initial: OUW2Params | None = None
    bounds: dict = field(default_factory=dict)
    fixed: frozenset = frozenset()
    max_evals: int = 5000
    tol_obj: float = 1e-7
    seed: int = 0
    max_restarts: int = 10

    def __post_init__(self):
        self.variant = self.variant.upper()
        if self.variant not in VARIANT_SCALARS:
            raise ValueError("variant must be A, B, C or D")
        self.fixed = frozenset(self.fixed)
        if self.max_evals < 1:
            raise ValueError("max_evals must be positive")

    def constrain(self, p: OUW2Params) -> OUW2Params:
        """Project a parameter record onto the variant's equality constraints."""
        kw = {}
        if self.variant in ("A", "B") and p.a1 != p.a2:
            a = 0.5 * (p.a1 + p.a2)
            kw.update(a1=a, a2=a)
        if self.variant in ("A", "C"):
            kw.update(rho12=0.0, rho21=0.0)
        return p.replace(**kw) if kw else p


class _Coords:
    """Maps free optimizer coordinates to a parameter record."""

    def __init__(self, cfg: CalibConfig, base: OUW2Params):
        self.base = base
        self.names = []
        lo, hi, x0 = [], [], []
        for name in VARIANT_SCALARS[cfg.variant]:
            if name in cfg.fixed:
                continue
            v = base.a1 if name == "a" else getattr(base, name)
            b = cfg.bounds.get(name, SCALAR_BOUNDS["a1" if name == "a" else name])
            self.names.append(name)
            lo.append(b[0]), hi.append(b[1]), x0.append(float(v))
        for mat in ("Theta", "Sigma0"):
            if mat in cfg.fixed:
                continue
            for j, (v, b) in enumerate(zip(_chol(getattr(base, mat)), CHOL_BOUNDS[mat])):
                self.names.append(f"{mat}.L{('11', '21', '22')[j]}")
                lo.append(b[0]), hi.append(b[1]), x0.append(v)
        self.lo, self.hi = np.array(lo), np.array(hi)
        self.x0 = np.clip(np.array(x0), self.lo, self.hi)

    def params(self, x) -> OUW2Params:
        kw, chol = {}, {}
        for name, v in zip(self.names, x):
            if name == "a":
                kw["a1"] = kw["a2"] = float(v)
            elif "." in name:
                mat, _, _ = name.partition(".")
                chol.setdefault(mat, []).append(float(v))
            else:
                kw[name] = float(v)
        for mat, ls in chol.items():
            kw[mat] = _from_chol(*ls)
        # drifts follow from the martingale condition at every point
        kw.update(mu1=None, mu2=None)
        return self.base.replace(**kw)


@dataclass
class CalibrationResult:
    params: OUW2Params
    rmse: float
    per_pair: dict
    evaluations: int
    wall_clock: float
    variant: str
    initial_rmse: float
    trace: list
    quotes_used: int
    model_iv: np.ndarray | None = None
    market_iv: np.ndarray | None = None

    def summary(self) -> str:
        pairs = ", ".join(f"{k} {v:.6f}" for k, v in self.per_pair.items())
        return (f"variant {self.variant}: RMSE {self.rmse:.6g} (initial {self.initial_rmse:.6g}); "
                f"per pair: {pairs}; {self.evaluations} evaluations in {self.wall_clock:.1f} s")


def screen_quotes(quotes):
    """Drop quotes whose mid violates the no-arbitrage band, with a warning."""
    kept = []
    for q in quotes:
        _pair_index(q.pair)
        lo, hi = no_arbitrage_band(q.spot, q.K, q.T, q.r_dom, q.r_for)
        if lo <= q.mid < hi:
            kept.append(q)
        else:
            warnings.warn(f"dropping {q.pair} T={q.T} K={q.K}: mid {q.mid} outside no-arbitrage band",
                          RuntimeWarning, stacklevel=2)
    return kept


class _Stop(Exception):
    """Budget spent or target objective reached."""


def calibrate(config: CalibConfig, quotes) -> CalibrationResult:
    """Minimize the implied-volatility RMSE with bounded Nelder-Mead and restarts.

    The run stops once the RMSE falls below ``config.tol_obj`` or after
    ``config.max_evals`` objective evaluations.  Each restart begins from the best point so far with a fresh simplex whose
    edge signs are drawn from ``config.seed``; restarts stop when one fails
    to improve by ``tol_obj`` or the evaluation budget is spent.
    """
    start = time.perf_counter()
    quotes = screen_quotes(quotes)
    if not quotes:
        raise CalibrationFailure("no usable quotes")
    market_iv = market_vols(quotes)
    base = config.constrain(config.initial if config.initial is not None else _default_initial())
    coords = _Coords(config, base)
    trace = []
    evals = [0]
    best = {"f": math.inf, "x": coords.x0.copy()}

    def objective(x):
        if evals[0] >= config.max_evals or best["f"] < config.tol_obj:
            raise _Stop
        evals[0] += 1
        xc = np.clip(x, coords.lo, coords.hi)
        try:
            p = coords.params(xc)
        except (MSVOUError, ValueError, ArithmeticError) as exc:
            trace.append((evals[0], math.inf, f"{type(exc).__name__}: {exc}"))
            return math.inf
        ev = evaluate(p, quotes, market_iv)
        if ev.error is not None:
            trace.append((evals[0], math.inf, ev.error))
        if ev.rmse < best["f"]:
            best.update(f=ev.rmse, x=xc.copy())
            trace.append((evals[0], ev.rmse, None))
        return ev.rmse

    try:
        f0 = objective(coords.x0)
    except _Stop:
        f0 = math.inf
    if not math.isfinite(f0):
        raise CalibrationFailure("initial point is infeasible: " + str(trace[-1][2]), trace)
    rng = np.random.default_rng(config.seed)
    k = coords.x0.size
    if k:
        scale = 0.1
        for _ in range(config.max_restarts + 1):
            if evals[0] >= config.max_evals:
                break
            f_before = best["f"]
            x0 = best["x"]
            step = scale * np.where(np.abs(x0) > 1e-3, np.abs(x0), 0.01 * (coords.hi - coords.lo))
            sign = rng.choice([-1.0, 1.0], size=k)
            simplex = np.vstack([x0, x0 + np.diag(sign * step)])
            # keep the simplex inside the box by reflecting offending vertices
            bad = (simplex < coords.lo) | (simplex > coords.hi)
            simplex = np.where(bad, np.vstack([x0, x0 - np.diag(sign * step)]), simplex)
            simplex = np.clip(simplex, coords.lo, coords.hi)
            try:
                minimize(objective, x0, method="Nelder-Mead",
                         bounds=list(zip(coords.lo, coords.hi)),
                         options=dict(initial_simplex=simplex, maxfev=config.max_evals - evals[0],
                                      fatol=0.1 * config.tol_obj, xatol=1e-9, adaptive=k > 4))
            except _Stop:
                break
            if f_before - best["f"] < config.tol_obj or best["f"] < config.tol_obj:
                break
            scale *= 0.5
    params = coords.params(best["x"])
    ev = evaluate(params, quotes, market_iv)
    return CalibrationResult(params, ev.rmse, ev.per_pair, evals[0], time.perf_counter() - start,
                             config.variant, f0, trace, len(quotes), ev.model_iv, market_iv)


def _default_initial() -> OUW2Params:
    from .ou_wishart import initial_params
    return initial_params()


# Synthetic data and reports ---------------------------------------------

DEFAULT_MATURITIES = (0.1, 0.25, 0.5, 0.75, 1.0)


def synthetic_quotes(params: OUW2Params, maturities=DEFAULT_MATURITIES, n_strikes: int = 20,
                     width: float = 1.8, half_spread: float = 0.0) -> list[OptionQuote]:
    """Call quotes on the three pairs priced by the model itself.

    Strikes are spaced evenly in standardized log-moneyness over
    [-width, width] around the forward, using sqrt(Sigma0) as a volatility
    scale.  ``half_spread`` is relative to the mid.
    """
    S = params.Sigma0
    spots = {"EURUSD": params.spot1, "GBPUSD": params.spot2, "EURGBP": params.spot1 / params.spot2}
    rates = {"EURUSD": (params.r_dom, params.r_for1), "GBPUSD": (params.r_dom, params.r_for2),
             "EURGBP": (params.r_for2, params.r_for1)}
    vols = {"EURUSD": math.sqrt(S[0, 0]), "GBPUSD": math.sqrt(S[1, 1]),
            "EURGBP": math.sqrt(S[0, 0] - 2 * S[0, 1] + S[1, 1])}
    draft = []
    for pair in PAIRS:
        spot, (rd, rf) = spots[pair], rates[pair]
        for T in maturities:
            F = spot * math.exp((rd - rf) * T)
            for k in np.linspace(-width, width, n_strikes):
                K = float(fmt(F * math.exp(k * vols[pair] * math.sqrt(T))))
                draft.append(OptionQuote(pair, float(T), K, 0.0, 0.0, spot, rd, rf))
    prices = fast_prices(params, draft)
    return [OptionQuote(q.pair, q.T, q.K, float(v * (1 - half_spread)), float(v * (1 + half_spread)),
                        q.spot, q.r_dom, q.r_for) for q, v in zip(draft, prices)]


REPORT_HEADER = ("pair", "T", "K", "market_iv", "model_iv", "abs_err")


def write_report(result: CalibrationResult, quotes, path) -> None:
    quotes = screen_quotes(quotes)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for q, mk, md in zip(quotes, result.market_iv, result.model_iv):
            w.writerow([q.pair, fmt(q.T), fmt(q.K), repr(float(mk)), repr(float(md)),
                        repr(float(abs(md - mk)))])


def read_report(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: (r[k] if k == "pair" else float(r[k])) for k in REPORT_HEADER}
                for r in csv.DictReader(fh)]

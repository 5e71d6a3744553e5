"""Exact Monte Carlo simulation of (Y, Sigma).

Between jumps the covariance follows the deterministic linear ODE
dSigma = (A Sigma + Sigma A^T + gamma_L) dt, solved exactly in the eigenbasis
of A together with its time integral.  Conditional on the covariance path,
the log-price increment over an interval is Gaussian with covariance equal
to that integral, so paths are exact in law at jump times and at T.

Randomness is drawn per block of paths from a Philox stream keyed by
(seed, block index); results do not depend on the number of threads.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedSamplingError
from .levy import rng_stream
from .model import ModelParams

try:  # compiled kernel, falls back to numpy
    from ._mc_kernel import propagate as _propagate_c
except ImportError:  # pragma: no cover - depends on the build
    _propagate_c = None
from ._mc_kernel_py import chol_clip, propagate as _propagate_py

BACKEND = "cython" if _propagate_c is not None else "numpy"
BLOCK_SIZE = 8192


@dataclass(frozen=True)
class MCConfig:
    n_paths: int
    seed: int = 0
    antithetic: bool = False
    t_grid: tuple | None = None
    threads: int = 1
    backend: str | None = None

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise ValueError("n_paths must be >= 1")


@dataclass(frozen=True)
class PathRecord:
    jump_times: np.ndarray
    Y_T: np.ndarray
    Sigma_T: np.ndarray
    Sigma_plus_T: np.ndarray
    realized_qcov: np.ndarray


@dataclass
class MCResult:
    """Terminal values for all simulated paths (row p is path p)."""

    T: float
    Y_T: np.ndarray
    Sigma_T: np.ndarray
    Sigma_plus_T: np.ndarray
    L_T: np.ndarray
    jump_qcov: np.ndarray
    n_jumps: np.ndarray
    jump_times: np.ndarray
    jump_offsets: np.ndarray
    antithetic: bool

    @property
    def n_paths(self) -> int:
        return self.Y_T.shape[0]

    @property
    def realized_qcov(self) -> np.ndarray:
        return self.Sigma_plus_T + self.jump_qcov

    def path(self, p: int) -> PathRecord:
        lo, hi = self.jump_offsets[p], self.jump_offsets[p] + self.n_jumps[p]
        return PathRecord(self.jump_times[lo:hi], self.Y_T[p], self.Sigma_T[p],
                          self.Sigma_plus_T[p], self.realized_qcov[p])

    def __iter__(self):
        return (self.path(p) for p in range(self.n_paths))

    def __len__(self):
        return self.n_paths


def realized_qcov(path: PathRecord | MCResult) -> np.ndarray:
    """[Y^i, Y^j]_T = (Sigma_T^+)^{ij} + sum over jumps of rho^i(dL) rho^j(dL)."""
    return path.realized_qcov


def _basis(params: ModelParams):
    A = params.A
    if A.is_diagonal:
        d = A.dim
        return np.diag(A.A).copy(), np.eye(d), np.eye(d)
    if not A.real_spectrum or A.eigvecs_inv is None:
        raise UnsupportedSamplingError("simulation needs A with a real, well-conditioned eigenbasis")
    return A.eigvals.real.copy(), np.ascontiguousarray(A.eigvecs.real), A.eigvecs_inv.real


def _prepare(params: ModelParams):
    sub = params.sub
    if sub.has_jumps and not float(sub.jumps.n).is_integer():
        raise UnsupportedSamplingError(f"sampling needs integer degrees of freedom, got n={sub.jumps.n}")
    D, V, Vinv = _basis(params)
    return dict(
        D=D, V=V, Vinv=Vinv,
        S0t=np.ascontiguousarray(Vinv @ params.Sigma0 @ Vinv.T),
        gamt=np.ascontiguousarray(Vinv @ params.sub.gamma @ Vinv.T),
        mu=np.ascontiguousarray(params.mu, dtype=float),
        beta=np.ascontiguousarray(params.beta.coeffs),
        Y0=np.ascontiguousarray(params.Y0, dtype=float),
    )


def _draw_block(params: ModelParams, T: float, n: int, stream):
    """Jump counts, sorted jump times, jump matrices and Gaussian normals."""
    d = params.d
    sub = params.sub
    lam = sub.jumps.lam if sub.has_jumps else 0.0
    counts = stream.poisson(lam * T, n).astype(np.int64)
    total = int(counts.sum())
    times = stream.uniform(0.0, T, total)
    owner = np.repeat(np.arange(n), counts)
    times = times[np.lexsort((times, owner))]
    if total:
        G = params.sub.jumps.root @ stream.standard_normal((total, d, int(sub.jumps.n)))
        dL = G @ np.swapaxes(G, 1, 2)
    else:
        dL = np.zeros((0, d, d))
    gauss = stream.standard_normal((n + total, d))
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    return counts, offsets, times, dL, gauss


def _run_block(params, T, prep, n_base, block, seed, antithetic, backend):
    stream = rng_stream(seed, block)
    counts, offsets, times, dL, gauss = _draw_block(params, T, n_base, stream)
    rhoL = np.ascontiguousarray(params.rho(dL)) if dL.size else np.zeros((0, params.d))
    Vinv = prep["Vinv"]
    dLt = np.ascontiguousarray(Vinv @ dL @ Vinv.T) if dL.size else np.zeros((0, params.d, params.d))
    kern = _propagate_c if backend == "cython" else _propagate_py
    args = (prep["D"], prep["V"], prep["S0t"], prep["gamt"], prep["mu"], prep["beta"], prep["Y0"])
    signs = (1.0, -1.0) if antithetic else (1.0,)
    outs = []
    for sgn in signs:
        outs.append(kern(counts, offsets, times, dLt, rhoL, gauss, sgn, float(T), *args))
    # jump bookkeeping shared by antithetic partners
    owner = np.repeat(np.arange(n_base), counts)
    jq = np.zeros((n_base, params.d, params.d))
    lsum = np.zeros((n_base, params.d, params.d))
    if owner.size:
        np.add.at(jq, owner, np.einsum("ni,nj->nij", rhoL, rhoL))
        np.add.at(lsum, owner, dL)
    V = prep["V"]
    res = []
    for Y, St, Splus in outs:
        res.append((np.asarray(Y), V @ np.asarray(St) @ V.T, np.asarray(Splus), jq, lsum, counts, times))
    if antithetic:
        # interleave partners: path 2k and 2k+1 share jumps
        merged = []
        for a, b in zip(res[0], res[1]):
            if a is times:
                merged.append(times)
                continue
            merged.append(np.stack([a, b], axis=1).reshape((-1,) + np.shape(a)[1:]))
        return tuple(merged), counts
    return res[0], counts


def simulate(params, T: float, config: MCConfig) -> MCResult:
    """Simulate ``config.n_paths`` exact paths to horizon T."""
    if hasattr(params, "to_model"):
        params = params.to_model()
    backend = config.backend or BACKEND
    if backend == "cython" and _propagate_c is None:
        raise RuntimeError("compiled kernel is not available")
    prep = _prepare(params)
    n_total = int(config.n_paths)
    per = 2 if config.antithetic else 1
    n_base_total = -(-n_total // per)
    blocks = [(b, min(BLOCK_SIZE, n_base_total - b * BLOCK_SIZE))
              for b in range(-(-n_base_total // BLOCK_SIZE))]

    def work(job):
        b, n = job
        return _run_block(params, T, prep, n, b, config.seed, config.antithetic, backend)

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as ex:
            results = list(ex.map(work, blocks))
    else:
        results = [work(j) for j in blocks]

    Y, S, Sp, JQ, LS, NJ, JT, JO = [], [], [], [], [], [], [], []
    gam = params.sub.gamma
    offset = 0
    for (Yb, Sb, Spb, jqb, lsb, counts, times), base_counts in results:
        Y.append(Yb)
        S.append(Sb)
        Sp.append(Spb)
        JQ.append(jqb)
        LS.append(lsb + gam * T)
        NJ.append(counts)
        # jump times are per base path; partners reuse them
        base_off = np.concatenate([[0], np.cumsum(base_counts)[:-1]]) + offset
        JO.append(np.repeat(base_off, per))
        JT.append(times)
        offset += times.size
    cat = lambda xs: np.concatenate(xs)[:n_total]
    return MCResult(
        T=float(T), Y_T=cat(Y), Sigma_T=cat(S), Sigma_plus_T=cat(Sp), L_T=cat(LS),
        jump_qcov=cat(JQ), n_jumps=cat(NJ), jump_times=np.concatenate(JT),
        jump_offsets=cat(JO), antithetic=config.antithetic,
    )


def sample_mean(values: np.ndarray, antithetic: bool = False):
    """Sample mean and standard error; antithetic partners are averaged first."""
    v = np.asarray(values, dtype=float)
    if antithetic:
        m = v.shape[0] // 2 * 2
        v = 0.5 * (v[:m:2] + v[1:m:2])
    n = v.shape[0]
    mean = v.mean(axis=0)
    se = v.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def mc_price(paths: MCResult, payoff, r_dom: float, T: float | None = None):
    """Discounted mean and standard error of payoff(Y_T)."""
    T = paths.T if T is None else T
    vals = np.broadcast_to(np.asarray(payoff(paths.Y_T), dtype=float), (paths.n_paths,))
    mean, se = sample_mean(vals, paths.antithetic)
    disc = math.exp(-r_dom * T)
    return float(disc * mean), float(disc * se)


def _grid_path(params: ModelParams, prep, T, grid, stream):
    """One path observed on ``grid`` (includes 0 and T)."""
    d = params.d
    sub = params.sub
    lam = sub.jumps.lam if sub.has_jumps else 0.0
    n = int(stream.poisson(lam * T))
    jt = np.sort(stream.uniform(0.0, T, n))
    if n:
        G = sub.jumps.root @ stream.standard_normal((n, d, int(sub.jumps.n)))
        dL = G @ np.swapaxes(G, 1, 2)
    events = sorted([(t, 1, i) for i, t in enumerate(jt)] + [(t, 0, i) for i, t in enumerate(grid)])
    gauss = stream.standard_normal((len(events) + 1, d))
    D, V, Vinv = prep["D"], prep["V"], prep["Vinv"]
    c = D[:, None] + D[None, :]
    gamt = prep["gamt"]
    St = prep["S0t"].copy()
    Y = prep["Y0"].copy()
    prev = 0.0
    out_Y = np.empty((len(grid), d))
    out_S = np.empty((len(grid), d, d))
    for k, (t, kind, i) in enumerate(events):
        dt = t - prev
        if dt > 0:
            em1 = np.expm1(c * dt)
            It = St * (em1 / c) + gamt * ((em1 / c - dt) / c)
            St = St + em1 * (St + gamt / c)
            I = V @ It @ V.T
            I = 0.5 * (I + I.T)
            L = chol_clip(I[None])[0]
            Y = Y + params.mu * dt + params.beta(I) + L @ gauss[k]
        if kind == 1:
            St = St + Vinv @ dL[i] @ Vinv.T
            Y = Y + params.rho(dL[i])
        else:
            out_Y[i] = Y
            out_S[i] = V @ St @ V.T
        prev = t
    return out_Y, out_S


def dump_paths(params, T: float, config: MCConfig, path_csv, n_dump: int | None = None):
    """Write ``path,time,Y1..Yd,Sigma11..Sigmadd`` rows on config.t_grid."""
    if hasattr(params, "to_model"):
        params = params.to_model()
    prep = _prepare(params)
    grid = np.asarray(config.t_grid if config.t_grid is not None else np.linspace(0.0, T, 101), float)
    if np.any(grid < 0) or np.any(grid > T):
        raise ValueError("t_grid must lie in [0, T]")
    d = params.d
    n_dump = config.n_paths if n_dump is None else n_dump
    header = ["path", "time"] + [f"Y{i + 1}" for i in range(d)]
    header += [f"Sigma{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    own = isinstance(path_csv, str) or hasattr(path_csv, "__fspath__")
    fh = open(path_csv, "w", newline="") if own else path_csv
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for p in range(n_dump):
            Yg, Sg = _grid_path(params, prep, T, grid, rng_stream(config.seed, p))
            for t, y, s in zip(grid, Yg, Sg):
                w.writerow([p, repr(float(t))] + [repr(float(v)) for v in y] + [repr(float(v)) for v in s.ravel()])
    finally:
        if own:
            fh.close()


def read_paths_csv(path):
    """Read a path dump back as {path index: (times, Y, Sigma)} arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    d = sum(1 for h in header if h.startswith("Y"))
    out = {}
    for p in np.unique(body[:, 0]).astype(int):
        b = body[body[:, 0] == p]
        out[int(p)] = (b[:, 1], b[:, 2:2 + d], b[:, 2 + d:].reshape(-1, d, d))
    return out

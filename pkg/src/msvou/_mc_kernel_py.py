"""Pure numpy fallback for the path-propagation kernel.

Paths are processed interval by interval, vectorized over all paths that
still have an interval left.  Arithmetic mirrors the compiled kernel so the
two backends agree to rounding.
"""
from __future__ import annotations

import numpy as np


def chol_clip(C):
    """Pivot-free Cholesky of a batch of PSD matrices, clipping tiny negative
    pivots to zero (their column is then set to zero)."""
    n, d, _ = C.shape
    L = np.zeros_like(C)
    for j in range(d):
        s = C[:, j, j].copy()
        for k in range(j):
            s -= L[:, j, k] * L[:, j, k]
        pos = s > 0.0
        piv = np.where(pos, np.sqrt(np.where(pos, s, 1.0)), 0.0)
        L[:, j, j] = piv
        for i in range(j + 1, d):
            t = C[:, i, j].copy()
            for k in range(j):
                t -= L[:, i, k] * L[:, j, k]
            L[:, i, j] = np.where(pos, t / np.where(pos, piv, 1.0), 0.0)
    return L


def propagate(counts, offsets, times, dLt, rhoL, gauss, sign, T,
              D, V, S0t, gamt, mu, beta, Y0):
    """Propagate a block of paths through their inter-jump intervals.

    counts[p] jumps occur on path p at the sorted times
    times[offsets[p] : offsets[p] + counts[p]].  Gaussian normals for path p
    are the rows offsets[p] + p ... offsets[p] + p + counts[p] of ``gauss``.
    Everything in the eigenbasis of A carries a ``t`` suffix.

    Returns Y_T, Sigma_T (eigenbasis) and the integrated covariance.
    """
    B = counts.shape[0]
    d = D.shape[0]
    c = D[:, None] + D[None, :]
    Y = np.broadcast_to(Y0, (B, d)).copy()
    St = np.broadcast_to(S0t, (B, d, d)).copy()
    Splus = np.zeros((B, d, d))
    prev = np.zeros(B)
    grow = offsets + np.arange(B)
    tt = np.append(times, T)
    for k in range(int(counts.max(initial=0)) + 1):
        act = np.nonzero(counts >= k)[0]
        last = counts[act] == k
        jidx = offsets[act] + k
        t_end = np.where(last, T, tt[np.minimum(jidx, tt.size - 1)])
        dt = t_end - prev[act]
        em1 = np.expm1(c[None] * dt[:, None, None])
        S = St[act]
        It = S * (em1 / c) + gamt * ((em1 / c - dt[:, None, None]) / c)
        St[act] = S + em1 * (S + gamt / c)
        I = V @ It @ V.T
        I = 0.5 * (I + np.swapaxes(I, 1, 2))
        Splus[act] += I
        mean = mu[None, :] * dt[:, None] + np.einsum("ijk,njk->ni", beta, I)
        L = chol_clip(I)
        z = gauss[grow[act] + k]
        Lz = np.zeros((act.size, d))
        for i in range(d):
            for l in range(i + 1):
                Lz[:, i] += L[:, i, l] * z[:, l]
        Y[act] += mean + sign * Lz
        jumping = act[~last]
        if jumping.size:
            jj = offsets[jumping] + k
            St[jumping] += dLt[jj]
            Y[jumping] += rhoL[jj]
        prev[act] = t_end
    return Y, St, Splus

# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled path-propagation kernel (same contract as _mc_kernel_py.propagate)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport expm1, sqrt

cnp.import_array()


cdef void _chol_clip(double[:, ::1] C, double[:, ::1] L, int d) noexcept nogil:
    cdef int i, j, k
    cdef double s, t, piv
    for i in range(d):
        for j in range(d):
            L[i, j] = 0.0
    for j in range(d):
        s = C[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s > 0.0:
            piv = sqrt(s)
        else:
            piv = 0.0
        L[j, j] = piv
        for i in range(j + 1, d):
            t = C[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            if s > 0.0:
                L[i, j] = t / piv
            else:
                L[i, j] = 0.0


def propagate(long[::1] counts, long[::1] offsets, double[::1] times,
              double[:, :, ::1] dLt, double[:, ::1] rhoL, double[:, ::1] gauss,
              double sign, double T, double[::1] D, double[:, ::1] V,
              double[:, ::1] S0t, double[:, ::1] gamt, double[::1] mu,
              double[:, :, ::1] beta, double[::1] Y0):
    cdef Py_ssize_t B = counts.shape[0]
    cdef int d = D.shape[0]
    Y_arr = np.empty((B, d))
    St_arr = np.empty((B, d, d))
    Sp_arr = np.zeros((B, d, d))
    cdef double[:, ::1] Y = Y_arr
    cdef double[:, :, ::1] St = St_arr
    cdef double[:, :, ::1] Splus = Sp_arr
    cdef double[:, ::1] c = np.add.outer(np.asarray(D), np.asarray(D))
    cdef double[:, ::1] It = np.empty((d, d))
    cdef double[:, ::1] tmp = np.empty((d, d))
    cdef double[:, ::1] I = np.empty((d, d))
    cdef double[:, ::1] L = np.empty((d, d))
    cdef double[::1] Lz = np.empty(d)
    cdef double[::1] mean = np.empty(d)
    cdef Py_ssize_t p, row, j
    cdef long k, n
    cdef int a, b, m, l
    cdef double prev, t_end, dt, em1, s, Iv

    with nogil:
        for p in range(B):
            for a in range(d):
                Y[p, a] = Y0[a]
                for b in range(d):
                    St[p, a, b] = S0t[a, b]
            prev = 0.0
            n = counts[p]
            row = offsets[p] + p
            for k in range(n + 1):
                if k == n:
                    t_end = T
                else:
                    t_end = times[offsets[p] + k]
                dt = t_end - prev
                for a in range(d):
                    for b in range(d):
                        em1 = expm1(c[a, b] * dt)
                        s = St[p, a, b]
                        It[a, b] = s * (em1 / c[a, b]) + gamt[a, b] * ((em1 / c[a, b] - dt) / c[a, b])
                        St[p, a, b] = s + em1 * (s + gamt[a, b] / c[a, b])
                # back to the original basis
                for a in range(d):
                    for b in range(d):
                        s = 0.0
                        for m in range(d):
                            s = s + V[a, m] * It[m, b]
                        tmp[a, b] = s
                for a in range(d):
                    for b in range(d):
                        s = 0.0
                        for m in range(d):
                            s = s + tmp[a, m] * V[b, m]
                        I[a, b] = s
                for a in range(d):
                    for b in range(a + 1, d):
                        Iv = 0.5 * (I[a, b] + I[b, a])
                        I[a, b] = Iv
                        I[b, a] = Iv
                for a in range(d):
                    for b in range(d):
                        Splus[p, a, b] += I[a, b]
                for a in range(d):
                    s = 0.0
                    for b in range(d):
                        for m in range(d):
                            s = s + beta[a, b, m] * I[b, m]
                    mean[a] = mu[a] * dt + s
                _chol_clip(I, L, d)
                for a in range(d):
                    s = 0.0
                    for l in range(a + 1):
                        s = s + L[a, l] * gauss[row + k, l]
                    Lz[a] = s
                for a in range(d):
                    Y[p, a] += mean[a] + sign * Lz[a]
                if k < n:
                    j = offsets[p] + k
                    for a in range(d):
                        for b in range(d):
                            St[p, a, b] += dLt[j, a, b]
                        Y[p, a] += rhoL[j, a]
                prev = t_end
    return Y_arr, St_arr, Sp_arr

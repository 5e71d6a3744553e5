"""Small dense matrix utilities.

Everything here works on plain numpy arrays.  Matrices are tiny (d is 2 to
5) so robustness wins over speed: the Sylvester operator is inverted through
its explicit d^2 x d^2 Kronecker representation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NotPSDError, NumericError, ShapeError, SingularOperatorError

TOL_PSD = 1e-10  # relative to the spectral norm
TOL_SPEC = 1e-12
TOL_NUM = 1e-10

# eigenvector condition number above which expm switches to Pade
_MAX_EIGVEC_COND = 1e8


@dataclass(frozen=True)
class MeanReversion:
    """Mean-reversion matrix A with cached spectral data.

    The operator X -> AX + XA^T is invertible iff no two eigenvalues of A
    sum to zero.  With ``strict`` (the default) that is checked at
    construction; otherwise only the inverse operations check it.
    """

    A: np.ndarray
    strict: bool = True
    singular: bool = field(init=False, repr=False)
    eigvals: np.ndarray = field(init=False, repr=False)
    eigvecs: np.ndarray = field(init=False, repr=False)
    eigvecs_inv: np.ndarray | None = field(init=False, repr=False)
    _kron: np.ndarray = field(init=False, repr=False)
    _kron_adj: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"A must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise NumericError("A has non-finite entries")
        w, V = np.linalg.eig(A)
        sums = w[:, None] + w[None, :]
        scale = max(1.0, float(np.max(np.abs(w))))
        singular = bool(np.min(np.abs(sums)) <= TOL_SPEC * scale)
        if singular and self.strict:
            _raise_singular()
        Vinv = None
        if np.linalg.cond(V) < _MAX_EIGVEC_COND:
            Vinv = np.linalg.inv(V)
        d = A.shape[0]
        eye = np.eye(d)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "singular", singular)
        object.__setattr__(self, "eigvals", w)
        object.__setattr__(self, "eigvecs", V)
        object.__setattr__(self, "eigvecs_inv", Vinv)
        # column-major vec: vec(AX + XA^T) = (I kron A + A kron I) vec(X)
        object.__setattr__(self, "_kron", np.kron(eye, A) + np.kron(A, eye))
        object.__setattr__(self, "_kron_adj", np.kron(eye, A.T) + np.kron(A.T, eye))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.A == np.diag(np.diag(self.A))))

    @property
    def real_spectrum(self) -> bool:
        return bool(np.all(np.abs(self.eigvals.imag) == 0.0))

    def kron(self, adjoint: bool = False) -> np.ndarray:
        if self.singular:
            _raise_singular()
        return self._kron_adj if adjoint else self._kron


def _raise_singular():
    raise SingularOperatorError("0 in sigma(A)+sigma(A): operator X -> AX + XA^T is singular")


def as_mean_reversion(A, strict: bool = True) -> MeanReversion:
    return A if isinstance(A, MeanReversion) else MeanReversion(np.asarray(A), strict)


def expm(A, t: float) -> np.ndarray:
    """Return e^{At}."""
    mr = as_mean_reversion(A, strict=False)
    if not np.isfinite(t):
        raise NumericError(f"t must be finite, got {t}")
    if mr.is_diagonal:
        out = np.diag(np.exp(np.diag(mr.A) * t))
    elif mr.eigvecs_inv is not None:
        V = mr.eigvecs
        out = (V * np.exp(mr.eigvals * t)) @ mr.eigvecs_inv
        out = out.real if np.iscomplexobj(out) else out
    else:
        out = scipy.linalg.expm(mr.A * t)
    if not np.all(np.isfinite(out)):
        raise NumericError("matrix exponential overflowed")
    return out


def expm_batch(A, ts) -> np.ndarray:
    """e^{At} for an array of times; result has shape ts.shape + (d, d)."""
    mr = as_mean_reversion(A, strict=False)
    ts = np.asarray(ts, dtype=float)
    if mr.is_diagonal:
        e = np.exp(ts[..., None] * np.diag(mr.A))
        out = e[..., :, None] * np.eye(mr.dim)
    elif mr.eigvecs_inv is not None:
        e = np.exp(ts[..., None] * mr.eigvals)
        out = (mr.eigvecs * e[..., None, :]) @ mr.eigvecs_inv
        out = out.real if np.iscomplexobj(out) else out
    else:
        out = np.stack([scipy.linalg.expm(mr.A * t) for t in ts.ravel()])
        out = out.reshape(ts.shape + (mr.dim, mr.dim))
    return out


def _check_square(X, d):
    if X.shape[-2:] != (d, d):
        raise ShapeError(f"expected trailing shape ({d}, {d}), got {X.shape}")


def sylvester_apply(A, X, adjoint: bool = False) -> np.ndarray:
    """AX + XA^T, or A^T X + XA when ``adjoint`` is set.  Broadcasts over X."""
    mr = as_mean_reversion(A, strict=False)
    X = np.asarray(X)
    _check_square(X, mr.dim)
    M = mr.A.T if adjoint else mr.A
    return M @ X + X @ M.T


def sylvester_solve(A, Y, adjoint: bool = False) -> np.ndarray:
    """Solve AX + XA^T = Y (or the adjoint equation) for X.

    Uses the Kronecker form on vec(X); Y may carry leading batch axes and may
    be complex.
    """
    mr = as_mean_reversion(A)
    Y = np.asarray(Y)
    d = mr.dim
    _check_square(Y, d)
    batch = Y.shape[:-2]
    # column-major vec == row-major vec of the transpose
    rhs = np.swapaxes(Y, -1, -2).reshape(batch + (d * d,))
    K = mr.kron(adjoint)
    sol = np.linalg.solve(K, rhs.reshape(-1, d * d).T).T
    return np.swapaxes(sol.reshape(batch + (d, d)), -1, -2)


def sylvester_inverse_norm(A) -> float:
    """Operator norm of X -> (AX + XA^T)^{-1} w.r.t. the Frobenius norm."""
    mr = as_mean_reversion(A)
    s = np.linalg.svd(mr.kron(), compute_uv=False)
    return float(1.0 / s[-1])


def symmetrize(X) -> np.ndarray:
    X = np.asarray(X)
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def is_symmetric(X, tol: float = TOL_NUM) -> bool:
    X = np.asarray(X)
    return bool(np.all(np.abs(X - np.swapaxes(X, -1, -2)) <= tol * max(1.0, np.max(np.abs(X)))))


def psd_tol(X) -> float:
    return TOL_PSD * max(float(np.linalg.norm(X, 2)), 1.0)


def is_psd(X, tol: float | None = None) -> bool:
    X = np.asarray(X, dtype=float)
    if not is_symmetric(X):
        return False
    tol = psd_tol(X) if tol is None else tol
    return bool(np.linalg.eigvalsh(X).min() >= -tol)


def check_psd(X, name: str = "matrix") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {X.shape}")
    if not is_symmetric(X):
        raise NotPSDError(f"{name} is not symmetric")
    lo = np.linalg.eigvalsh(X).min()
    if lo < -psd_tol(X):
        raise NotPSDError(f"{name} has negative eigenvalue {lo:.3e}")
    return symmetrize(X)


def psd_sqrt(X) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues within tolerance of 0 are clipped."""
    X = np.asarray(X, dtype=float)
    if not is_symmetric(X):
        raise NotPSDError("input is not symmetric")
    w, V = np.linalg.eigh(symmetrize(X))
    if w.min() < -psd_tol(X):
        raise NotPSDError(f"negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    return symmetrize((V * np.sqrt(w)) @ V.T)


def spectral_norm(X) -> float:
    return float(np.linalg.norm(np.asarray(X), 2))

"""Matrix subordinators: drift plus compound-Poisson Wishart jumps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BranchError,
    OutOfStripError,
    ShapeError,
    UnsupportedSamplingError,
)
from .matrix_core import check_psd, psd_sqrt, spectral_norm, symmetrize


def rng_stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, index)."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class WishartJumpSpec:
    """Jumps arrive at rate ``lam`` and are W_d(n, theta) distributed."""

    lam: float
    n: float
    theta: np.ndarray
    root: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        theta = check_psd(self.theta, "Theta")
        d = theta.shape[0]
        if not self.lam >= 0.0 or not math.isfinite(self.lam):
            raise ValueError(f"jump intensity must be >= 0, got {self.lam}")
        if not self.n > d - 1:
            raise ValueError(f"degrees of freedom must exceed d-1={d - 1}, got {self.n}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "root", psd_sqrt(theta))

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class SubordinatorSpec:
    """Matrix subordinator L_t = gamma * t + compound Poisson Wishart jumps.

    ``jumps`` may be None for a pure-drift driver.
    """

    gamma: np.ndarray
    jumps: WishartJumpSpec | None = None

    def __post_init__(self):
        gamma = check_psd(self.gamma, "gamma_L")
        if self.jumps is not None and self.jumps.dim != gamma.shape[0]:
            raise ShapeError("gamma_L and Theta dimensions differ")
        object.__setattr__(self, "gamma", gamma)

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    @property
    def has_jumps(self) -> bool:
        return self.jumps is not None and self.jumps.lam > 0.0

    @property
    def eps_moment(self) -> float:
        """Radius of the exponential-moment region, 1 / (2 ||Theta||)."""
        if not self.has_jumps:
            return math.inf
        nrm = spectral_norm(self.jumps.theta)
        return math.inf if nrm == 0.0 else 1.0 / (2.0 * nrm)


def _power_det(Mx, n):
    """det(Mx)^{-n/2} for Mx = I - 2 Theta^{1/2} Z Theta^{1/2}.

    Integer n/2 needs no branch.  Otherwise the power is taken eigenvalue by
    eigenvalue: inside the moment region every eigenvalue has positive real
    part, so principal powers of the factors give the continuous branch.
    """
    half = 0.5 * n
    if float(half).is_integer():
        det = np.linalg.det(Mx)
        if np.any(det == 0):
            raise BranchError("det(I - 2 Z Theta) vanished")
        return det ** (-int(half))
    ev = np.linalg.eigvals(Mx)
    if np.any((ev.imag == 0) & (ev.real <= 0)):
        raise BranchError("det(I - 2 Z Theta) factor on the branch cut (-inf, 0]")
    return np.exp(-half * np.sum(np.log(ev), axis=-1))


def wishart_log_mgf_jump(jumps: WishartJumpSpec, Z, check: bool = True):
    """lam * (E exp tr(Z M) - 1) for M ~ W_d(n, Theta); batched over Z.

    Only the symmetric part of Z matters since M is symmetric; the
    determinant formula is valid for symmetric arguments only.
    """
    Zs = symmetrize(np.asarray(Z, dtype=complex))
    if check:
        _check_strip(Zs, jumps.theta)
    root = jumps.root
    Mx = np.eye(jumps.dim) - 2.0 * (root @ Zs @ root)
    return jumps.lam * (_power_det(Mx, jumps.n) - 1.0)


def _check_strip(Zs, theta):
    nrm = spectral_norm(theta)
    if nrm == 0.0:
        return
    re = Zs.real
    norms = np.linalg.norm(re.reshape((-1,) + re.shape[-2:]), 2, axis=(-2, -1))
    if np.any(norms >= 1.0 / (2.0 * nrm)):
        raise OutOfStripError(
            f"||Re Z|| = {norms.max():.6g} >= moment radius {1.0 / (2.0 * nrm):.6g}"
        )


def cumulant(spec: SubordinatorSpec, Z):
    """Cumulant transform log E exp tr(Z L_1) = tr(gamma Z) + jump part.

    ``Z`` may carry leading batch axes.
    """
    Z = np.asarray(Z, dtype=complex)
    if Z.shape[-2:] != (spec.dim, spec.dim):
        raise ShapeError(f"Z must end in ({spec.dim}, {spec.dim}), got {Z.shape}")
    drift = np.einsum("ij,...ji->...", spec.gamma, Z)
    if not spec.has_jumps:
        return drift
    return drift + wishart_log_mgf_jump(spec.jumps, Z)


def mean(spec: SubordinatorSpec) -> np.ndarray:
    """E[L_1] = gamma + lam * n * Theta."""
    if spec.jumps is None:
        return spec.gamma.copy()
    j = spec.jumps
    return spec.gamma + j.lam * j.n * j.theta


def wishart_second_moments(n: float, theta) -> np.ndarray:
    """E[M_ab M_cd] for M ~ W_d(n, Theta), as a d x d x d x d tensor."""
    T = np.asarray(theta, dtype=float)
    return (
        n * (np.einsum("ac,bd->abcd", T, T) + np.einsum("ad,bc->abcd", T, T))
        + n * n * np.einsum("ab,cd->abcd", T, T)
    )


@dataclass(frozen=True)
class JumpMoments:
    """Second-order moments of one Wishart jump.

    ``cov`` is the full covariance tensor Cov(M_ab, M_cd) and ``raw`` holds
    E[M_ab M_cd].  For d = 2 the three pairwise covariances are exposed by
    name (these equal 4 Theta11 Theta12 etc. when n = 2).
    """

    cov: np.ndarray
    raw: np.ndarray

    @property
    def cov_11_12(self) -> float:
        return float(self.cov[0, 0, 0, 1])

    @property
    def cov_22_12(self) -> float:
        return float(self.cov[1, 1, 0, 1])

    @property
    def cov_11_22(self) -> float:
        return float(self.cov[0, 0, 1, 1])

    def diag_raw(self, i: int, j: int) -> float:
        """E[M_ii M_jj] = n (2 Theta_ij^2 + n Theta_ii Theta_jj)."""
        return float(self.raw[i, i, j, j])


def jump_moments(spec: SubordinatorSpec | WishartJumpSpec) -> JumpMoments:
    jumps = spec.jumps if isinstance(spec, SubordinatorSpec) else spec
    if jumps is None:
        raise ValueError("driver has no jump component")
    T = jumps.theta
    n = jumps.n
    cov = n * (np.einsum("ac,bd->abcd", T, T) + np.einsum("ad,bc->abcd", T, T))
    return JumpMoments(cov=cov, raw=wishart_second_moments(n, T))


def sample_wishart(jumps: WishartJumpSpec, rng: np.random.Generator, size=None):
    """Draw Theta^{1/2} X X^T Theta^{1/2} with X a d x n standard normal matrix."""
    n = jumps.n
    if not float(n).is_integer():
        raise UnsupportedSamplingError(
            f"sampling needs integer degrees of freedom, got n={n}"
        )
    d = jumps.dim
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    root = jumps.root
    X = rng.standard_normal(shape + (d, int(n)))
    G = root @ X
    return G @ np.swapaxes(G, -1, -2)


def sample_jump(spec: SubordinatorSpec, rng: np.random.Generator, size=None):
    if spec.jumps is None:
        raise UnsupportedSamplingError("driver has no jump component to sample")
    return sample_wishart(spec.jumps, rng, size)

"""Least-squares and biased GFS reconstruction with closed-form MSE."""

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import LengthMismatch, RankDeficient
from .spectral import LowPassFilter, SpectralBasis

logger = logging.getLogger(__name__)

# Singular values of C V_K below this make the sampled basis rank deficient
RANK_TOL = 1e-10

# Eigenvalues of Psi below this leave the LS error undefined
PSI_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ObservedSamples:
    """Noisy samples y_S = x_S + n_S on an ordered node set."""

    sample_set: Tuple[int, ...]
    values: np.ndarray = field(repr=False)
    noise_variance: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "sample_set", tuple(int(s) for s in self.sample_set))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.sample_set),):
            raise LengthMismatch(f"{self.values.size} values for {len(self.sample_set)} samples")


@dataclass(frozen=True, eq=False)
class Reconstruction:
    signal: np.ndarray = field(repr=False)
    method: Literal["ls", "gfs-biased"]
    beta: Optional[float] = None


def select_beta(filt: LowPassFilter, M: int) -> float:
    """
    beta = (1/K) * sum of the M smallest diagonal entries of T.

    This lower-bounds tr(T_S) / K over every |S| = M. Ties at the cut go to
    the smaller node index.
    """
    n = filt.n
    if not 1 <= M <= n:
        raise ValueError(f"sample size M={M} outside 1..{n}")
    diag = np.diag(filt.matrix)
    order = np.lexsort((np.arange(n), diag))
    return float(diag[order[:M]].sum() / filt.bandwidth)


def _sampled_rows(basis: SpectralBasis, K: int, S: Sequence[int]) -> np.ndarray:
    if not 1 <= K <= basis.n:
        raise ValueError(f"bandwidth K={K} outside 1..{basis.n}")
    return basis.band(K)[np.asarray(S, dtype=int)]


def ls_reconstruct(basis: SpectralBasis, K: int, obs: ObservedSamples) -> Reconstruction:
    """
    x = V_K (C V_K)^+ y_S.

    Raises:
        RankDeficient: C V_K has numerical rank below K
    """
    A = _sampled_rows(basis, K, obs.sample_set)
    if A.shape[0] < K:
        raise RankDeficient(f"{A.shape[0]} samples cannot determine {K} coefficients")
    sigma = scipy.linalg.svdvals(A)
    rank = int(np.sum(sigma > RANK_TOL))
    if rank < K:
        raise RankDeficient(f"sampled basis has rank {rank} < {K}")
    coeffs, *_ = scipy.linalg.lstsq(A, obs.values)
    return Reconstruction(signal=basis.band(K) @ coeffs, method="ls")


def gfs_reconstruct(
    filt: LowPassFilter,
    beta: float,
    obs: ObservedSamples,
    g_inverse: Optional[np.ndarray] = None,
    mu: Optional[float] = None,
) -> Reconstruction:
    """
    Biased estimate x = T[:, S] (T_S + beta I)^-1 y_S.

    When ``beta`` equals the sampling shift ``mu`` and the sampler's inverse
    of G_S is passed as ``g_inverse`` (same ordering as ``obs.sample_set``),
    that inverse is reused instead of a new Cholesky solve.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    idx = np.asarray(obs.sample_set, dtype=int)
    T = filt.matrix

    if g_inverse is not None and mu is not None and np.isclose(beta, mu, rtol=1e-12, atol=0.0):
        z = g_inverse @ obs.values
    else:
        H = T[np.ix_(idx, idx)] + beta * np.eye(idx.size)
        z = scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), obs.values)

    return Reconstruction(signal=T[:, idx] @ z, method="gfs-biased", beta=float(beta))


def _psi_eigen(basis: SpectralBasis, K: int, S: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    A = _sampled_rows(basis, K, S)
    return scipy.linalg.eigh(A.T @ A)


def gfs_bias_variance(
    basis: SpectralBasis,
    K: int,
    S: Sequence[int],
    beta: float,
    coeffs: np.ndarray,
    noise_variance: float,
) -> Tuple[float, float]:
    """
    (bias^2, variance) of the biased estimator for an ideal filter.

    bias^2 = sum (1 + s_i/beta)^-2 (u_i^T c)^2 and
    variance = w^2 sum s_i / (s_i + beta)^2 over eigenpairs (s_i, u_i) of Psi.
    """
    if not basis.is_exact:
        raise ValueError("closed-form MSE needs an exact basis")
    if not beta > 0:
        raise ValueError("beta must be positive")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (K,):
        raise LengthMismatch(f"{coeffs.size} coefficients for bandwidth {K}")

    sigma, U = _psi_eigen(basis, K, S)
    sigma = np.clip(sigma, 0.0, None)
    projections = U.T @ coeffs
    bias2 = float(np.sum(projections**2 / (1.0 + sigma / beta) ** 2))
    variance = float(noise_variance * np.sum(sigma / (sigma + beta) ** 2))
    return bias2, variance


def theoretical_mse_gfs(
    basis: SpectralBasis,
    K: int,
    S: Sequence[int],
    beta: float,
    coeffs: np.ndarray,
    noise_variance: float,
) -> float:
    """
    Closed-form E||x_hat - x||^2 of gfs_reconstruct with the ideal filter.

    Raises:
        RankDeficient: Psi has an eigenvalue <= 1e-12
    """
    if not basis.is_exact:
        raise ValueError("closed-form MSE needs an exact basis")
    sigma, _ = _psi_eigen(basis, K, S)
    if sigma[0] <= PSI_TOL:
        raise RankDeficient(f"smallest eigenvalue of Psi is {sigma[0]:.3e}")
    bias2, variance = gfs_bias_variance(basis, K, S, beta, coeffs, noise_variance)
    return bias2 + variance


def theoretical_mse_ls(basis: SpectralBasis, K: int, S: Sequence[int], noise_variance: float) -> float:
    """w^2 sum 1 / s_i."""
    sigma, _ = _psi_eigen(basis, K, S)
    if sigma[0] <= PSI_TOL:
        raise RankDeficient(f"smallest eigenvalue of Psi is {sigma[0]:.3e}")
    return float(noise_variance * np.sum(1.0 / sigma))


def empirical_mse(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Summed squared error ||estimate - truth||^2."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise LengthMismatch(f"shapes {truth.shape} and {estimate.shape} differ")
    return float(np.sum((estimate - truth) ** 2))

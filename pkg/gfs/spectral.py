"""Exact and Givens-factored (FGFT) graph Fourier bases and ideal low-pass filters."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
import scipy.linalg

from . import config
from .errors import ConvergenceFailure, OracleCapExceeded
from .graphs import LaplacianView

logger = logging.getLogger(__name__)

BasisKind = Literal["exact", "fgft"]


@dataclass(frozen=True)
class GivensRotation:
    """
    Plane rotation S with S[p,p] = S[q,q] = c, S[p,q] = s, S[q,p] = -s.
    """

    p: int
    q: int
    c: float
    s: float

    def __post_init__(self):
        if not self.p < self.q:
            raise ValueError("rotation needs p < q")
        if abs(self.c * self.c + self.s * self.s - 1.0) > 1e-12:
            raise ValueError("rotation is not orthonormal")

    def apply_columns(self, X: np.ndarray):
        """X <- X S, in place."""
        xp = X[:, self.p].copy()
        xq = X[:, self.q]
        X[:, self.p] = self.c * xp - self.s * xq
        X[:, self.q] = self.s * xp + self.c * xq

    def conjugate(self, X: np.ndarray):
        """X <- S X S^T, in place."""
        p, q, c, s = self.p, self.q, self.c, self.s
        rp = X[p, :].copy()
        rq = X[q, :].copy()
        X[p, :] = c * rp + s * rq
        X[q, :] = -s * rp + c * rq
        cp = X[:, p].copy()
        cq = X[:, q].copy()
        X[:, p] = c * cp + s * cq
        X[:, q] = -s * cp + c * cq


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """
    Orthonormal (approximate) eigenbasis with ascending eigenvalues.

    For FGFT bases ``vectors`` equals S_1...S_J with columns permuted by
    ``permutation`` so that ``values`` ascend.
    """

    vectors: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    kind: BasisKind
    rotations: Tuple[GivensRotation, ...] = ()
    permutation: Optional[np.ndarray] = field(default=None, repr=False)
    energy_history: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def is_exact(self) -> bool:
        return self.kind == "exact"

    @property
    def rotation_count(self) -> int:
        return len(self.rotations)

    def band(self, K: int) -> np.ndarray:
        """First K columns (the K lowest graph frequencies)."""
        return self.vectors[:, :K]


@dataclass(frozen=True, eq=False)
class LowPassFilter:
    """Ideal low-pass projector T = V_K V_K^T (exact or FGFT)."""

    matrix: np.ndarray = field(repr=False)
    bandwidth: int
    source_kind: BasisKind

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def shifted(self, mu: float) -> np.ndarray:
        """G = T + mu I."""
        G = self.matrix.copy()
        G[np.diag_indices_from(G)] += mu
        return G


def rotation_budget(n: int, factor: float) -> int:
    """Number of Givens rotations J = factor * N * ln N."""
    if n < 2:
        return 0
    return int(round(factor * n * math.log(n)))


def off_diagonal_energy(A: np.ndarray) -> float:
    """Squared Frobenius norm of the off-diagonal part of A."""
    return max(float(np.sum(A * A) - np.sum(np.diag(A) ** 2)), 0.0)


def _orient(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of every column made positive (first one on ties)
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def exact_eigendecompose(L: LaplacianView, oracle_cap: Optional[int] = None) -> SpectralBasis:
    """
    Full symmetric eigendecomposition L = V diag(lambda) V^T, lambda ascending.

    Raises:
        OracleCapExceeded: graph larger than the oracle cap
        ConvergenceFailure: the eigensolver did not converge
    """
    cap = config.ORACLE_CAP if oracle_cap is None else oracle_cap
    if L.n > cap:
        raise OracleCapExceeded(f"N={L.n} exceeds oracle cap {cap}")
    try:
        values, vectors = scipy.linalg.eigh(L.matrix)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ConvergenceFailure(str(e)) from e
    return SpectralBasis(vectors=_orient(vectors), values=values, kind="exact")


def _jacobi_rotation(A: np.ndarray, p: int, q: int) -> Tuple[GivensRotation, float]:
    app, aqq, apq = A[p, p], A[q, q], A[p, q]
    tau = (aqq - app) / (2.0 * apq)
    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.hypot(1.0, tau))
    c = 1.0 / math.sqrt(1.0 + t * t)
    return GivensRotation(p, q, c, t * c), t


def _rotate_working(A: np.ndarray, rot: GivensRotation, t: float):
    # A <- S^T A S; the (p, q) entry is annihilated
    p, q, c, s = rot.p, rot.q, rot.c, rot.s
    app, aqq, apq = A[p, p], A[q, q], A[p, q]
    ap = A[:, p].copy()
    aq = A[:, q].copy()
    A[:, p] = c * ap - s * aq
    A[:, q] = s * ap + c * aq
    rp = A[p, :].copy()
    rq = A[q, :].copy()
    A[p, :] = c * rp - s * rq
    A[q, :] = s * rp + c * rq
    A[p, p] = app - t * apq
    A[q, q] = aqq + t * apq
    A[p, q] = 0.0
    A[q, p] = 0.0


class _PivotIndex:
    """Row-wise maxima of |A| above the diagonal, smallest column on ties."""

    def __init__(self, A: np.ndarray):
        self.A = A
        n = A.shape[0]
        self.best = np.full(n, -1.0)
        self.arg = np.full(n, -1, dtype=np.int64)
        for r in range(n - 1):
            self._recompute(r)

    def _recompute(self, r: int):
        seg = np.abs(self.A[r, r + 1:])
        if seg.size == 0:
            return
        k = int(np.argmax(seg))
        self.best[r] = seg[k]
        self.arg[r] = r + 1 + k

    def _merge(self, rows: np.ndarray, col: int):
        if rows.size == 0:
            return
        vals = np.abs(self.A[rows, col])
        cur = self.best[rows]
        better = (vals > cur) | ((vals == cur) & (col < self.arg[rows]))
        self.best[rows[better]] = vals[better]
        self.arg[rows[better]] = col

    def pivot(self) -> Tuple[int, int, float]:
        p = int(np.argmax(self.best))
        return p, int(self.arg[p]), float(self.best[p])

    def update(self, p: int, q: int):
        above_p = np.arange(p)
        between = np.arange(p + 1, q)
        # Rows whose current maximum sat in a rotated column need a full rescan
        stale = np.concatenate([
            above_p[(self.arg[:p] == p) | (self.arg[:p] == q)],
            between[self.arg[p + 1:q] == q],
        ])
        self._merge(above_p, p)
        self._merge(above_p, q)
        self._merge(between, q)
        for r in stale:
            self._recompute(r)
        self._recompute(p)
        self._recompute(q)


def truncated_jacobi(L: LaplacianView, J: int) -> SpectralBasis:
    """
    Approximate eigenbasis from J greedy classical Jacobi rotations.

    Every step annihilates the largest off-diagonal entry of the working
    matrix (lexicographically smallest (p, q) on ties). Stops early once the
    working matrix is diagonal.
    """
    if J < 0:
        raise ValueError("rotation count must be >= 0")

    A = np.array(L.matrix, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    rotations: List[GivensRotation] = []
    energy = off_diagonal_energy(A)
    history = [energy]

    if n > 1 and J > 0:
        index = _PivotIndex(A)
        for step in range(J):
            p, q, magnitude = index.pivot()
            if magnitude == 0.0:
                logger.debug("truncated jacobi: diagonal after %d of %d rotations", step, J)
                break
            apq = A[p, q]
            rot, t = _jacobi_rotation(A, p, q)
            _rotate_working(A, rot, t)
            rot.apply_columns(V)
            rotations.append(rot)
            energy = max(energy - 2.0 * apq * apq, 0.0)
            history.append(energy)
            index.update(p, q)

    diag = np.diag(A).copy()
    order = np.argsort(diag, kind="stable")
    return SpectralBasis(
        vectors=V[:, order],
        values=diag[order],
        kind="fgft",
        rotations=tuple(rotations),
        permutation=order,
        energy_history=np.asarray(history),
    )


def lp_filter(basis: SpectralBasis, K: int, use_rotations: bool = False) -> LowPassFilter:
    """
    Ideal low-pass filter on the K lowest frequencies of ``basis``.

    With ``use_rotations`` an FGFT filter is built as S_1...S_J B S_J^T...S_1^T
    by applying the stored rotations to the 0/1 selector B.
    """
    if not 1 <= K <= basis.n:
        raise ValueError(f"bandwidth K={K} outside 1..{basis.n}")

    if use_rotations:
        if basis.kind != "fgft" or basis.permutation is None:
            raise ValueError("rotation path needs an FGFT basis")
        T = np.zeros((basis.n, basis.n))
        selected = basis.permutation[:K]
        T[selected, selected] = 1.0
        for rot in reversed(basis.rotations):
            rot.conjugate(T)
    else:
        Vk = basis.band(K)
        T = Vk @ Vk.T

    T = 0.5 * (T + T.T)
    T.setflags(write=False)
    return LowPassFilter(matrix=T, bandwidth=K, source_kind=basis.kind)


def fgft_error(L: LaplacianView, basis: SpectralBasis, K: int, oracle_cap: Optional[int] = None) -> float:
    """Relative error ||T - T_basis||_F / ||T||_F against the exact filter."""
    exact = exact_eigendecompose(L, oracle_cap=oracle_cap)
    T = lp_filter(exact, K).matrix
    approx = lp_filter(basis, K).matrix
    return float(np.linalg.norm(T - approx) / np.linalg.norm(T))

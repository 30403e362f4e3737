"""GFS greedy sampling on the shifted graph-filter submatrix, with exact oracles."""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, List, Literal, Optional, Sequence

import numpy as np
import scipy.linalg

from . import config
from .config import parse_shift
from .errors import InfeasibleAvailability, InvalidShift, NonPositiveSchur, SingularSubmatrix
from .spectral import LowPassFilter, SpectralBasis

if TYPE_CHECKING:
    from .dynamic import ExchangeReport

logger = logging.getLogger(__name__)

# Schur complements at or below this are treated as rank-deficient extensions
SCHUR_TOL = 1e-14

# Relative score gap under which two candidates count as tied
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ShiftPolicy:
    """How the shift mu of G = T + mu I is chosen."""

    variant: Literal["condition_number", "fixed", "diagonal_average"]
    value: Optional[float] = None

    @classmethod
    def condition_number(cls, kappa0: float) -> "ShiftPolicy":
        return cls("condition_number", kappa0)

    @classmethod
    def fixed(cls, mu: float) -> "ShiftPolicy":
        return cls("fixed", mu)

    @classmethod
    def diagonal_average(cls) -> "ShiftPolicy":
        return cls("diagonal_average")

    @classmethod
    def parse(cls, text: str) -> "ShiftPolicy":
        """Parse ``kappa:<k0>``, ``fixed:<mu>`` or ``beta``."""
        variant, value = parse_shift(text)
        return cls(variant, value)


def resolve_mu(policy: ShiftPolicy, filt: LowPassFilter, M: int) -> float:
    """
    Resolve a shift policy to a concrete mu.

    condition_number gives 1 / (kappa0 - 1), the smallest mu keeping
    cond(G_S) <= kappa0 for every S.

    Raises:
        InvalidShift: resolved mu outside (0, 1)
    """
    if policy.variant == "condition_number":
        kappa0 = policy.value
        if kappa0 is None or kappa0 <= 1:
            raise InvalidShift(f"condition number bound must exceed 1, got {kappa0}")
        mu = 1.0 / (kappa0 - 1.0)
    elif policy.variant == "fixed":
        mu = policy.value
    else:
        # Imported here: reconstruction owns the diagonal-average rule
        from .reconstruction import select_beta

        mu = select_beta(filt, M)

    if mu is None or not 0.0 < mu < 1.0:
        raise InvalidShift(f"shift mu={mu} outside (0, 1)")
    return float(mu)


def _spd_inverse(A: np.ndarray) -> np.ndarray:
    try:
        factor = scipy.linalg.cho_factor(A)
    except np.linalg.LinAlgError as e:
        raise SingularSubmatrix(str(e)) from e
    inv = scipy.linalg.cho_solve(factor, np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)


@dataclass(eq=False)
class GfsState:
    """Current sample set S and the maintained inverse of G_S."""

    sample_set: List[int]
    g_inverse: np.ndarray = field(repr=False)
    mu: float
    bandwidth: int
    history: List[float] = field(default_factory=list)
    last_exchange: Optional["ExchangeReport"] = None

    @property
    def objective(self) -> float:
        """tr(G_S^-1)."""
        return float(np.trace(self.g_inverse))

    @property
    def a_optimal(self) -> float:
        """Shifted A-optimal value g(S) = tr(G_S^-1) - (|S| - K) / mu."""
        return self.objective - (len(self.sample_set) - self.bandwidth) / self.mu

    def submatrix(self, G: np.ndarray) -> np.ndarray:
        idx = np.asarray(self.sample_set)
        return G[np.ix_(idx, idx)]

    def residual(self, G: np.ndarray) -> float:
        """||G_S G_S^-1 - I||_F."""
        m = len(self.sample_set)
        return float(np.linalg.norm(self.submatrix(G) @ self.g_inverse - np.eye(m)))

    def refresh(self, G: np.ndarray):
        """Rebuild the inverse from scratch."""
        self.g_inverse = _spd_inverse(self.submatrix(G))

    def copy(self) -> "GfsState":
        return GfsState(
            sample_set=list(self.sample_set),
            g_inverse=self.g_inverse.copy(),
            mu=self.mu,
            bandwidth=self.bandwidth,
            history=list(self.history),
        )


def verify_inverse(state: GfsState, G: np.ndarray, where: str = "update"):
    """Rebuild the maintained inverse if it drifted past 1e-6 * |S|."""
    m = len(state.sample_set)
    residual = state.residual(G)
    if residual > 1e-6 * m:
        logger.warning("inverse drift after %s: residual=%.3e |S|=%d, rebuilding", where, residual, m)
        state.refresh(G)


def objective(filt: LowPassFilter, mu: float, S: Sequence[int]) -> float:
    """tr((T_S + mu I)^-1) by direct factorization."""
    if len(S) == 0:
        raise ValueError("sample set must be non-empty")
    if not 0.0 < mu < 1.0:
        raise InvalidShift(f"shift mu={mu} outside (0, 1)")
    idx = np.asarray(S)
    G_S = filt.matrix[np.ix_(idx, idx)] + mu * np.eye(len(idx))
    return float(np.trace(_spd_inverse(G_S)))


def block_inverse_extend(g_inv: np.ndarray, g_i: np.ndarray, G_ii: float) -> np.ndarray:
    """
    Inverse of [[G_S, g_i], [g_i^T, G_ii]] from G_S^-1 via the Schur complement.

    Raises:
        NonPositiveSchur: h = G_ii - g_i^T G_S^-1 g_i <= 1e-14
    """
    a = g_inv @ g_i
    h = float(G_ii - g_i @ a)
    if h <= SCHUR_TOL:
        raise NonPositiveSchur(f"Schur complement {h:.3e}")
    m = g_inv.shape[0]
    out = np.empty((m + 1, m + 1))
    out[:m, :m] = g_inv + np.outer(a, a) / h
    out[:m, m] = -a / h
    out[m, :m] = -a / h
    out[m, m] = 1.0 / h
    return out


def _argmin_tie(scores: np.ndarray, nodes: np.ndarray) -> int:
    """Position of the minimum score; near-equal scores resolve to the smallest node."""
    best = np.min(scores)
    tied = np.flatnonzero(scores <= best + TIE_RTOL * max(1.0, abs(best)))
    return int(tied[np.argmin(nodes[tied])])


def _available_mask(n: int, available, M: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool) if available is None else np.array(available, dtype=bool)
    if mask.shape != (n,):
        raise ValueError("availability mask must have one entry per node")
    if not 1 <= M <= n:
        raise ValueError(f"sample budget M={M} outside 1..{n}")
    if int(mask.sum()) < M:
        raise InfeasibleAvailability(f"{int(mask.sum())} available nodes < budget {M}")
    return mask


def gfs_sample(
    filt: LowPassFilter,
    mu: float,
    M: int,
    available: Optional[np.ndarray] = None,
    verify: Optional[bool] = None,
    refresh_every: Optional[int] = None,
    callback: Optional[Callable[[GfsState], None]] = None,
) -> GfsState:
    """
    Greedy GFS sampling.

    Starts from argmax_i G_ii, then repeatedly adds the node minimizing
    tr(G_{S+i}^-1) = tr(G_S^-1) + (1 + ||G_S^-1 g_i||^2) / h, scoring every
    candidate from the stored inverse. Only the winner's extended inverse is
    materialized.

    Args:
        filt: low-pass filter T (exact or FGFT)
        mu: shift in (0, 1)
        M: sample budget
        available: optional boolean mask restricting the candidates
        verify: re-check the maintained inverse after every step
            (defaults to GFS_DEBUG)
        refresh_every: rebuild period for the inverse (defaults to GFS_REFRESH_EVERY)
        callback: called with the state after every accepted node

    Returns:
        Final GfsState
    """
    if not 0.0 < mu < 1.0:
        raise InvalidShift(f"shift mu={mu} outside (0, 1)")
    verify = config.DEBUG_CHECKS if verify is None else verify
    refresh_every = config.REFRESH_EVERY if refresh_every is None else refresh_every

    n = filt.n
    mask = _available_mask(n, available, M)
    G = filt.shifted(mu)
    diag = np.diag(G)

    cand = np.flatnonzero(mask)
    first_scores = -diag[cand]
    u = int(cand[_argmin_tie(first_scores, cand)])
    state = GfsState(
        sample_set=[u],
        g_inverse=np.array([[1.0 / diag[u]]]),
        mu=mu,
        bandwidth=filt.bandwidth,
    )
    state.history.append(state.objective)
    mask[u] = False
    if callback:
        callback(state)

    while len(state.sample_set) < M:
        cand = np.flatnonzero(mask)
        idx = np.asarray(state.sample_set)
        Gc = G[np.ix_(idx, cand)]
        A = state.g_inverse @ Gc
        h = diag[cand] - np.einsum("ij,ij->j", Gc, A)
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = state.objective + (1.0 + np.einsum("ij,ij->j", A, A)) / h
        bad = h <= SCHUR_TOL
        if bad.any():
            logger.debug("skipping %d candidates with non-positive Schur complement", int(bad.sum()))
            scores[bad] = np.inf
        if not np.isfinite(scores).any():
            raise NonPositiveSchur(f"no candidate extends a sample set of size {len(idx)}")

        k = _argmin_tie(scores, cand)
        u = int(cand[k])
        state.g_inverse = block_inverse_extend(state.g_inverse, Gc[:, k], diag[u])
        state.sample_set.append(u)
        mask[u] = False

        if refresh_every and len(state.sample_set) % refresh_every == 0:
            state.refresh(G)
        elif verify:
            verify_inverse(state, G, "greedy step")

        state.history.append(state.objective)
        if callback:
            callback(state)

    return state


def a_optimal_value(basis: SpectralBasis, K: int, mu: float, S: Sequence[int]) -> float:
    """g(S) = tr[(C V_K)^T C V_K + mu I]^-1."""
    Vk = basis.band(K)
    rows = Vk[np.asarray(S, dtype=int)] if len(S) else np.zeros((0, K))
    return float(np.trace(np.linalg.inv(rows.T @ rows + mu * np.eye(K))))


def naive_a_optimal_greedy(
    basis: SpectralBasis,
    K: int,
    mu: float,
    M: int,
    available: Optional[np.ndarray] = None,
) -> List[int]:
    """
    Reference greedy minimizer of g(S) with one explicit K x K inverse per candidate.
    """
    n = basis.n
    mask = _available_mask(n, available, M)
    Vk = basis.band(K)
    Z = mu * np.eye(K)
    selected: List[int] = []

    for _ in range(M):
        cand = np.flatnonzero(mask)
        scores = np.array([
            np.trace(np.linalg.inv(Z + np.outer(Vk[i], Vk[i]))) for i in cand
        ])
        u = int(cand[_argmin_tie(scores, cand)])
        Z = Z + np.outer(Vk[u], Vk[u])
        selected.append(u)
        mask[u] = False

    return selected


def random_sample(n: int, M: int, seed: int, rng_algorithm: str = "PCG64") -> List[int]:
    """Uniform sample of M distinct nodes, sorted; deterministic in seed."""
    if not 0 <= M <= n:
        raise ValueError(f"sample budget M={M} outside 0..{n}")
    rng = config.make_rng(seed, rng_algorithm)
    return sorted(int(i) for i in rng.choice(n, size=M, replace=False))


def supermodularity_bound(mu: float) -> float:
    """alpha = mu^3 (mu + 2) / (mu + 1)^4."""
    if not 0.0 < mu <= 1.0:
        raise ValueError("mu must be in (0, 1]")
    return mu**3 * (mu + 2.0) / (mu + 1.0) ** 4


def greedy_guarantee(mu: float) -> float:
    """Greedy sub-optimality factor e^-alpha."""
    return math.exp(-supermodularity_bound(mu))


def condition_number(G_S: np.ndarray) -> float:
    values = scipy.linalg.eigvalsh(G_S)
    return float(values[-1] / values[0])

"""Time-varying node availability, GFS-NE node exchange and initial-set screening."""

import bisect
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from . import config
from .errors import DegenerateUpdate, InfeasibleAvailability, SingularSubmatrix
from .graphs import LaplacianView
from .sampler import GfsState, _argmin_tie, _spd_inverse, verify_inverse

logger = logging.getLogger(__name__)

# Sherman-Morrison denominators at or below this fall back to a direct inverse
DENOM_TOL = 1e-12

# Relative decrease a phase-2 swap must achieve to be accepted
SWAP_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class AvailabilityProcess:
    """
    i.i.d. two-state availability: every node flips state with probability
    ``eps`` per step. ``current`` is the mask z^t at step ``t``.
    """

    p0: float
    eps: float
    seed: int
    current: np.ndarray = field(repr=False)
    t: int = 0
    rng: str = "PCG64"

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0 or not 0.0 <= self.eps <= 1.0:
            raise ValueError("p0 and eps must be in [0, 1]")

    @property
    def n(self) -> int:
        return self.current.shape[0]

    @classmethod
    def initial(cls, n: int, p0: float, eps: float, seed: int, rng: str = "PCG64") -> "AvailabilityProcess":
        """Start with exactly round(p0 * n) available nodes chosen uniformly."""
        if not 0.0 <= p0 <= 1.0:
            raise ValueError("p0 must be in [0, 1]")
        gen = config.make_rng([seed, 0], rng)
        mask = np.zeros(n, dtype=bool)
        mask[gen.choice(n, size=int(round(p0 * n)), replace=False)] = True
        return cls(p0=p0, eps=eps, seed=seed, current=mask, rng=rng)

    def available(self) -> np.ndarray:
        return np.flatnonzero(self.current)


def evolve_availability(proc: AvailabilityProcess) -> AvailabilityProcess:
    """Next step of the process; deterministic in (seed, t)."""
    gen = config.make_rng([proc.seed, proc.t + 1], proc.rng)
    flips = gen.random(proc.n) < proc.eps
    return replace(proc, current=proc.current ^ flips, t=proc.t + 1)


@dataclass(frozen=True)
class ExchangeSets:
    """
    sa: selected and available (P), su: selected and unavailable (U),
    ua: unselected and available (Q), h_set: phase-2 candidates (H).
    """

    sa: Tuple[int, ...]
    su: Tuple[int, ...]
    ua: Tuple[int, ...]
    h_set: Tuple[int, ...]


def exchange_sets(S: Sequence[int], avail: np.ndarray) -> ExchangeSets:
    avail = np.asarray(avail, dtype=bool)
    selected = set(int(s) for s in S)
    sa = tuple(int(s) for s in S if avail[s])
    su = tuple(sorted(int(s) for s in S if not avail[s]))
    ua = tuple(int(k) for k in np.flatnonzero(avail) if int(k) not in selected)
    return ExchangeSets(sa=sa, su=su, ua=ua, h_set=ua)


@dataclass(frozen=True)
class ExchangeConfig:
    k0: int = 50

    def __post_init__(self):
        if self.k0 < 0:
            raise ValueError("k0 must be >= 0")


@dataclass
class ExchangeReport:
    """What one gfs_ne call changed."""

    replacements: List[Tuple[int, int]] = field(default_factory=list)
    phase1_traces: List[float] = field(default_factory=list)
    phase2_traces: List[float] = field(default_factory=list)
    swaps: List[Tuple[int, int]] = field(default_factory=list)
    fallbacks: int = 0

    @property
    def accepted_swaps(self) -> int:
        return len(self.swaps)


def _exchange_vectors(S: Sequence[int], i: int, j: int, k: int, G: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(S)
    p = G[idx, k] - G[idx, j]
    p[i] = G[k, k] - G[j, j]
    q = p.copy()
    q[i] = 0.0
    return p, q


def sm_rank1_exchange(g_inv: np.ndarray, S: Sequence[int], j: int, k: int, G: np.ndarray) -> np.ndarray:
    """
    Inverse of G for the set S with j replaced by k at j's position.

    G_{S~} = G_S + e_i p^T + q e_i^T, so two Sherman-Morrison steps give
    F^-1 = (G_S + e_i p^T)^-1 first and then G_{S~}^-1.

    Raises:
        DegenerateUpdate: a denominator is within 1e-12 of zero
    """
    S = list(S)
    if j not in S:
        raise ValueError(f"node {j} is not in the sample set")
    if k in S:
        raise ValueError(f"node {k} is already in the sample set")
    i = S.index(j)
    p, q = _exchange_vectors(S, i, j, k, G)

    u = g_inv[:, i]
    d1 = 1.0 + p @ u
    if abs(d1) <= DENOM_TOL:
        raise DegenerateUpdate(f"first denominator {d1:.3e}")
    F_inv = g_inv - np.outer(u, p @ g_inv) / d1

    x = F_inv @ q
    d2 = 1.0 + x[i]
    if abs(d2) <= DENOM_TOL:
        raise DegenerateUpdate(f"second denominator {d2:.3e}")
    out = F_inv - np.outer(x, F_inv[i, :]) / d2
    return 0.5 * (out + out.T)


def _direct_trace(G: np.ndarray, S: Sequence[int]) -> float:
    idx = np.asarray(S)
    try:
        return float(np.trace(_spd_inverse(G[np.ix_(idx, idx)])))
    except SingularSubmatrix:
        return math.inf


def _exchange_traces(
    g_inv: np.ndarray, S: Sequence[int], i: int, candidates: np.ndarray, G: np.ndarray,
) -> Tuple[np.ndarray, int]:
    """
    tr(G_{S~}^-1) for replacing position i by every candidate, from traces of
    the two rank-1 updates. Returns the scores and the number of candidates
    that needed a direct solve.
    """
    idx = np.asarray(S)
    j = int(idx[i])
    P = G[np.ix_(idx, candidates)] - G[idx, j][:, None]
    P[i, :] = G[candidates, candidates] - G[j, j]
    Q = P.copy()
    Q[i, :] = 0.0

    u = g_inv[:, i]
    W = g_inv @ P
    d1 = 1.0 + u @ P
    with np.errstate(divide="ignore", invalid="ignore"):
        tr_F = np.trace(g_inv) - (u @ W) / d1
        X = g_inv @ Q - np.outer(u, np.einsum("ij,ij->j", W, Q)) / d1
        Y = g_inv[i, :][:, None] - u[i] * W / d1
        d2 = 1.0 + X[i, :]
        scores = tr_F - np.einsum("ij,ij->j", X, Y) / d2

    degenerate = (np.abs(d1) <= DENOM_TOL) | (np.abs(d2) <= DENOM_TOL) | ~np.isfinite(scores)
    for c in np.flatnonzero(degenerate):
        trial = list(S)
        trial[i] = int(candidates[c])
        scores[c] = _direct_trace(G, trial)
    if degenerate.any():
        logger.debug("%d exchange candidates scored by direct solve", int(degenerate.sum()))
    return scores, int(degenerate.sum())


def _apply_exchange(state: GfsState, i: int, k: int, G: np.ndarray, report: ExchangeReport):
    j = state.sample_set[i]
    try:
        state.g_inverse = sm_rank1_exchange(state.g_inverse, state.sample_set, j, k, G)
        state.sample_set[i] = k
    except DegenerateUpdate as e:
        logger.debug("exchange %d -> %d: %s, rebuilding inverse", j, k, e)
        report.fallbacks += 1
        state.sample_set[i] = k
        state.refresh(G)


def gfs_ne(
    state: GfsState,
    G: np.ndarray,
    avail: np.ndarray,
    cfg: ExchangeConfig,
    verify: Optional[bool] = None,
) -> GfsState:
    """
    GFS-NE node exchange for one availability step.

    Phase 1 replaces every unavailable sample (ascending node index) by the
    available unselected node giving the smallest trace. Phase 2 scans sample
    positions in order and, per position, takes the first candidate in H
    (ascending) that strictly decreases the trace, until ``cfg.k0`` swaps
    were accepted. If every sample is still available nothing changes.

    Args:
        state: sampling state from the previous step (not modified)
        G: shifted filter T + mu I
        avail: availability mask for the new step
        cfg: exchange settings

    Returns:
        New GfsState with ``last_exchange`` describing the changes

    Raises:
        InfeasibleAvailability: fewer available nodes than samples
    """
    verify = config.DEBUG_CHECKS if verify is None else verify
    avail = np.asarray(avail, dtype=bool)
    M = len(state.sample_set)
    if int(avail.sum()) < M:
        raise InfeasibleAvailability(f"{int(avail.sum())} available nodes < sample size {M}")

    new = state.copy()
    report = ExchangeReport()
    new.last_exchange = report
    sets = exchange_sets(new.sample_set, avail)
    if not sets.su:
        return new

    # Phase 1
    Q = list(sets.ua)
    for j in sets.su:
        i = new.sample_set.index(j)
        cand = np.asarray(Q)
        scores, fallbacks = _exchange_traces(new.g_inverse, new.sample_set, i, cand, G)
        report.fallbacks += fallbacks
        k = int(cand[_argmin_tie(scores, cand)])
        _apply_exchange(new, i, k, G, report)
        Q.remove(k)
        if verify:
            verify_inverse(new, G, "phase-1 replacement")
        report.replacements.append((j, k))
        report.phase1_traces.append(new.objective)
        new.history.append(new.objective)

    # Phase 2 over a frozen position list
    H = list(Q)
    current = new.objective
    report.phase2_traces.append(current)
    for i in range(M):
        if report.accepted_swaps >= cfg.k0 or not H:
            break
        cand = np.asarray(H)
        scores, fallbacks = _exchange_traces(new.g_inverse, new.sample_set, i, cand, G)
        report.fallbacks += fallbacks
        improving = np.flatnonzero(scores < current - SWAP_RTOL * max(1.0, abs(current)))
        if improving.size == 0:
            continue
        k = int(cand[improving[0]])
        j = new.sample_set[i]
        _apply_exchange(new, i, k, G, report)
        if verify:
            verify_inverse(new, G, "phase-2 swap")
        H.remove(k)
        bisect.insort(H, j)
        current = new.objective
        report.swaps.append((j, k))
        report.phase2_traces.append(current)
        new.history.append(current)

    logger.debug(
        "gfs-ne: %d replacements, %d swaps, trace %.6g",
        len(report.replacements), report.accepted_swaps, new.objective,
    )
    return new


def cutoff_frequency(L: LaplacianView, S: Sequence[int], k: int) -> float:
    """
    Spectral-proxy cutoff Omega_k(S) = lambda_min(((L^T)^k L^k)_{S^c})^(1/2k).

    Computed as sigma_min(L^k[:, S^c])^(1/k) on L scaled to unit spectral
    radius. Returns inf when S covers every node.
    """
    return _cutoff(_ScaledPower.build(L, k), S)


@dataclass(frozen=True, eq=False)
class _ScaledPower:
    """(L / lambda_max)^k with the scale, shared across cutoff evaluations."""

    n: int
    power: Optional[np.ndarray]
    lam_max: float
    k: int

    @classmethod
    def build(cls, L: LaplacianView, k: int) -> "_ScaledPower":
        if k < 1:
            raise ValueError("proxy order k must be >= 1")
        n = L.n
        lam_max = float(scipy.linalg.eigvalsh(L.matrix, subset_by_index=[n - 1, n - 1])[0])
        if lam_max <= 0.0:
            return cls(n, None, 0.0, k)
        return cls(n, np.linalg.matrix_power(L.matrix / lam_max, k), lam_max, k)


def _cutoff(sp: _ScaledPower, S: Sequence[int]) -> float:
    mask = np.ones(sp.n, dtype=bool)
    mask[np.asarray(list(S), dtype=int)] = False
    complement = np.flatnonzero(mask)
    if complement.size == 0:
        return math.inf
    if sp.power is None:
        return 0.0
    sigma = scipy.linalg.svdvals(sp.power[:, complement])[-1]
    return float(sp.lam_max * sigma ** (1.0 / sp.k))


@dataclass(frozen=True)
class ScreenResult:
    good: bool
    threshold: float
    value: float


def screen_initial_set(
    L: LaplacianView,
    avail: np.ndarray,
    k: int,
    calib_draws: int,
    quantile_rank: int,
    seed: int,
    rng: str = "PCG64",
) -> ScreenResult:
    """
    Decide whether an availability set is good enough to sample from.

    ``calib_draws`` random sets of the same size are ranked by cutoff
    frequency; the set is Good when its own cutoff exceeds the
    ``quantile_rank``-th smallest of them.
    """
    if not 1 <= quantile_rank <= calib_draws:
        raise ValueError("need 1 <= quantile_rank <= calib_draws")
    avail = np.asarray(avail, dtype=bool)
    members = np.flatnonzero(avail)
    gen = config.make_rng(seed, rng)
    sp = _ScaledPower.build(L, k)

    draws = sorted(
        _cutoff(sp, gen.choice(L.n, size=members.size, replace=False))
        for _ in range(calib_draws)
    )
    threshold = draws[quantile_rank - 1]
    value = _cutoff(sp, members)
    good = math.isinf(value) or value > threshold
    return ScreenResult(good=good, threshold=threshold, value=value)


def write_availability_trace(masks: Sequence[np.ndarray], path: str | os.PathLike):
    """Write masks as ``t,node,state`` rows (state 1 = available)."""
    rows = [
        (t, node, int(state))
        for t, mask in enumerate(masks)
        for node, state in enumerate(np.asarray(mask, dtype=bool))
    ]
    frame = pd.DataFrame(rows, columns=["t", "node", "state"])
    frame.to_csv(path, index=False, lineterminator="\n")


def read_availability_trace(path: str | os.PathLike) -> List[np.ndarray]:
    frame = pd.read_csv(path)
    if list(frame.columns) != ["t", "node", "state"]:
        raise ValueError("availability trace header must be t,node,state")
    if frame.empty:
        return []
    n = int(frame["node"].max()) + 1
    steps = int(frame["t"].max()) + 1
    masks = np.zeros((steps, n), dtype=bool)
    masks[frame["t"].to_numpy(), frame["node"].to_numpy()] = frame["state"].to_numpy() != 0
    return list(masks)

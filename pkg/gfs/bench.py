"""Benchmark harness: signals, noise, static and dynamic sweeps, CSV records."""

import asyncio
import hashlib
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator

from . import config
from .config import ExperimentConfig, GraphSpec, parse_beta
from .dynamic import (
    AvailabilityProcess,
    ExchangeConfig,
    evolve_availability,
    gfs_ne,
    screen_initial_set,
)
from .errors import ConfigError, GfsError
from .graphs import (
    Graph,
    LaplacianView,
    build_laplacian,
    gen_community_graph,
    gen_cube_graph,
    gen_sensor_graph,
    load_edge_list,
)
from .monitoring import record_trial
from .reconstruction import (
    ObservedSamples,
    empirical_mse,
    gfs_reconstruct,
    ls_reconstruct,
    select_beta,
)
from .sampler import (
    GfsState,
    ShiftPolicy,
    gfs_sample,
    naive_a_optimal_greedy,
    objective,
    resolve_mu,
)
from .spectral import (
    LowPassFilter,
    SpectralBasis,
    exact_eigendecompose,
    lp_filter,
    rotation_budget,
    truncated_jacobi,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "method", "reconstructor", "M", "snr_db", "t", "trial",
    "mse_sum", "mse_mean", "objective", "wall_time_ms", "seed",
]


@dataclass(frozen=True)
class SignalModel:
    """Bandlimited signal with i.i.d. Normal(coeff_mean, coeff_std^2) GFT coefficients."""

    bandwidth: int
    coeff_mean: float = 1.0
    coeff_std: float = 0.5

    def __post_init__(self):
        if self.bandwidth < 1:
            raise ValueError("bandwidth must be >= 1")
        if self.coeff_std < 0:
            raise ValueError("coeff_std must be >= 0")


class ExperimentRecord(BaseModel):
    """One CSV row."""

    method: str
    reconstructor: str
    M: int
    snr_db: float
    t: int = -1
    trial: int
    mse_sum: float
    mse_mean: float
    objective: float
    wall_time_ms: float
    seed: int

    @field_validator("mse_sum", "mse_mean")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("mse must be >= 0")
        return value

    @property
    def failed(self) -> bool:
        return math.isnan(self.mse_sum)


def trial_seed(master: int, *parts) -> int:
    """
    Stable seed for one job, e.g. ``trial_seed(master, method, M, snr_db, trial)``.

    BLAKE2b 64-bit digest of the parts, masked to 63 bits so it fits a signed
    64-bit column.
    """
    payload = "|".join([str(master)] + [repr(p) if isinstance(p, float) else str(p) for p in parts])
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & ((1 << 63) - 1)


def build_graph(spec: GraphSpec) -> Graph:
    if spec.family == "sensor":
        return gen_sensor_graph(spec.n, spec.radius, spec.seed)
    if spec.family == "community":
        return gen_community_graph(spec.n, spec.communities, spec.p_in, spec.p_out, spec.seed)
    if spec.family == "cube":
        return gen_cube_graph(spec.side, spec.dims)
    if not spec.path:
        raise ConfigError("graph = edgelist needs graph_path")
    return load_edge_list(spec.path)


def generate_signal(basis: SpectralBasis, model: SignalModel, seed: int, rng: str = "PCG64") -> np.ndarray:
    """x = V_K c with c_i ~ Normal(coeff_mean, coeff_std^2)."""
    gen = config.make_rng(seed, rng)
    coeffs = gen.normal(model.coeff_mean, model.coeff_std, size=model.bandwidth)
    return basis.band(model.bandwidth) @ coeffs


def signal_power(x: np.ndarray) -> float:
    """Per-node average power ||x||^2 / N."""
    return float(np.sum(x * x) / x.size)


def add_noise(
    x_S: np.ndarray, snr_db: float, power: float, seed: int, rng: str = "PCG64",
) -> Tuple[np.ndarray, float]:
    """
    Add white Gaussian noise of variance power * 10^(-snr_db / 10).

    Returns:
        (noisy samples, noise variance); snr_db = inf leaves samples unchanged
    """
    if not power > 0:
        raise ValueError("signal power must be positive")
    x_S = np.asarray(x_S, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return x_S.copy(), 0.0
    variance = power * 10.0 ** (-snr_db / 10.0)
    gen = config.make_rng(seed, rng)
    return x_S + gen.normal(0.0, math.sqrt(variance), size=x_S.shape), variance


@dataclass(frozen=True, eq=False)
class BenchContext:
    """Graph artifacts computed once per run and shared read-only by every job."""

    graph: Graph
    laplacian: LaplacianView
    exact: SpectralBasis
    sampling: SpectralBasis
    filt: LowPassFilter
    mus: Dict[int, float] = field(default_factory=dict)


def prepare_context(cfg: ExperimentConfig) -> BenchContext:
    graph = build_graph(cfg.graph)
    L = build_laplacian(graph)
    exact = exact_eigendecompose(L)
    if cfg.basis == "exact":
        sampling = exact
    else:
        J = rotation_budget(graph.n, cfg.rotation_factor)
        sampling = truncated_jacobi(L, J)
        logger.info("fgft basis: N=%d J=%d", graph.n, sampling.rotation_count)
    if cfg.bandwidth > graph.n:
        raise ConfigError(f"bandwidth {cfg.bandwidth} exceeds graph size {graph.n}")
    if max(cfg.sample_sizes) > graph.n:
        raise ConfigError(f"sample size {max(cfg.sample_sizes)} exceeds graph size {graph.n}")

    filt = lp_filter(sampling, cfg.bandwidth)
    policy = ShiftPolicy.parse(cfg.shift)
    mus = {M: resolve_mu(policy, filt, M) for M in cfg.sample_sizes}
    return BenchContext(graph=graph, laplacian=L, exact=exact, sampling=sampling, filt=filt, mus=mus)


def _resolve_beta(cfg: ExperimentConfig, ctx: BenchContext, M: int) -> float:
    variant, value = parse_beta(cfg.beta)
    if variant == "eq28":
        return select_beta(ctx.filt, M)
    if variant == "shift":
        return ctx.mus[M]
    return value


def _error_record(method, reconstructor, M, snr_db, t, trial, seed, elapsed_ms: float) -> ExperimentRecord:
    return ExperimentRecord(
        method=method, reconstructor=reconstructor, M=M, snr_db=snr_db, t=t,
        trial=trial, mse_sum=math.nan, mse_mean=math.nan, objective=math.nan,
        wall_time_ms=elapsed_ms, seed=seed,
    )


def _reconstruct_records(
    cfg: ExperimentConfig,
    ctx: BenchContext,
    method: str,
    M: int,
    snr_db: float,
    t: int,
    trial: int,
    seed: int,
    S: Sequence[int],
    x: np.ndarray,
    noise_seed: int,
    obj: float,
    started: float,
    state: Optional[GfsState] = None,
) -> List[ExperimentRecord]:
    y, variance = add_noise(x[np.asarray(S)], snr_db, signal_power(x), noise_seed, cfg.rng)
    obs = ObservedSamples(tuple(S), y, variance)
    records = []
    for name in cfg.reconstructors:
        try:
            if name == "ls":
                estimate = ls_reconstruct(ctx.exact, cfg.bandwidth, obs)
            else:
                beta = _resolve_beta(cfg, ctx, M)
                reuse = state.g_inverse if state is not None else None
                estimate = gfs_reconstruct(ctx.filt, beta, obs, g_inverse=reuse, mu=ctx.mus[M])
            mse = empirical_mse(x, estimate.signal)
            records.append(ExperimentRecord(
                method=method, reconstructor=name, M=M, snr_db=snr_db, t=t, trial=trial,
                mse_sum=mse, mse_mean=mse / x.size, objective=obj,
                wall_time_ms=(time.perf_counter() - started) * 1000.0, seed=seed,
            ))
        except (GfsError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning("%s/%s M=%d snr=%s t=%d trial=%d failed: %s: %s", method, name, M, snr_db, t, trial, type(e).__name__, e)
            records.append(_error_record(method, name, M, snr_db, t, trial, seed,
                                         (time.perf_counter() - started) * 1000.0))
    return records


def _sample_static(
    cfg: ExperimentConfig, ctx: BenchContext, method: str, M: int, seed: int,
) -> Tuple[List[int], Optional[GfsState]]:
    mu = ctx.mus[M]
    if method == "gfs":
        state = gfs_sample(ctx.filt, mu, M)
        return state.sample_set, state
    if method == "oracle-greedy":
        return naive_a_optimal_greedy(ctx.sampling, cfg.bandwidth, mu, M), None
    gen = config.make_rng(seed, cfg.rng)
    return sorted(int(i) for i in gen.choice(ctx.graph.n, size=M, replace=False)), None


def _static_trial(
    cfg: ExperimentConfig,
    ctx: BenchContext,
    plans: Dict[Tuple[str, int], Tuple[List[int], Optional[GfsState], float]],
    method: str,
    M: int,
    snr_db: float,
    trial: int,
) -> List[ExperimentRecord]:
    seed = trial_seed(cfg.seed, method, M, snr_db, trial)
    started = time.perf_counter()
    try:
        if (method, M) in plans:
            S, state, sampling_ms = plans[(method, M)]
            started -= sampling_ms / 1000.0
        else:
            S, state = _sample_static(cfg, ctx, method, M, seed)
        model = SignalModel(cfg.bandwidth, cfg.coeff_mean, cfg.coeff_std)
        x = generate_signal(ctx.exact, model, trial_seed(cfg.seed, "signal", M, snr_db, trial), cfg.rng)
        obj = state.objective if state is not None else objective(ctx.filt, ctx.mus[M], S)
        records = _reconstruct_records(
            cfg, ctx, method, M, snr_db, -1, trial, seed, S, x,
            trial_seed(cfg.seed, "noise", M, snr_db, trial), obj, started, state,
        )
    except (GfsError, ValueError, np.linalg.LinAlgError) as e:
        logger.warning("%s M=%d snr=%s trial=%d failed: %s: %s", method, M, snr_db, trial, type(e).__name__, e)
        elapsed = (time.perf_counter() - started) * 1000.0
        records = [_error_record(method, name, M, snr_db, -1, trial, seed, elapsed) for name in cfg.reconstructors]

    record_trial(method, (time.perf_counter() - started) * 1000.0, not any(r.failed for r in records))
    return records


def _deterministic_plans(cfg: ExperimentConfig, ctx: BenchContext):
    # gfs and oracle-greedy pick the same set for every trial
    plans = {}
    for method in cfg.methods:
        if method not in ("gfs", "oracle-greedy"):
            continue
        for M in cfg.sample_sizes:
            started = time.perf_counter()
            try:
                S, state = _sample_static(cfg, ctx, method, M, 0)
            except (GfsError, ValueError, np.linalg.LinAlgError) as e:
                logger.warning("%s sampling M=%d failed: %s", method, M, e)
                continue
            plans[(method, M)] = (S, state, (time.perf_counter() - started) * 1000.0)
    return plans


async def _gather_jobs(jobs: List[Callable[[], List[ExperimentRecord]]], workers: int) -> List[ExperimentRecord]:
    semaphore = asyncio.Semaphore(workers)

    async def run(job):
        async with semaphore:
            return await asyncio.to_thread(job)

    results = await asyncio.gather(*(run(job) for job in jobs))
    return sort_records([record for batch in results for record in batch])


async def run_static_async(cfg: ExperimentConfig, workers: Optional[int] = None) -> List[ExperimentRecord]:
    """Static sweep over (method, M, snr, trial) on a worker pool."""
    if cfg.dynamic is not None:
        raise ConfigError("static runs take no dynamic block")
    if "gfs-ne" in cfg.methods:
        raise ConfigError("gfs-ne needs a dynamic block")

    ctx = await asyncio.to_thread(prepare_context, cfg)
    plans = await asyncio.to_thread(_deterministic_plans, cfg, ctx)
    jobs = [
        (lambda m=method, M=M, s=snr, tr=trial: _static_trial(cfg, ctx, plans, m, M, s, tr))
        for method in cfg.methods
        for M in cfg.sample_sizes
        for snr in cfg.snr_db
        for trial in range(cfg.trials)
    ]
    records = await _gather_jobs(jobs, workers or cfg.workers)
    logger.info("static bench: %d records, %d failed", len(records), sum(r.failed for r in records))
    return records


def run_static(cfg: ExperimentConfig, workers: Optional[int] = None) -> List[ExperimentRecord]:
    return asyncio.run(run_static_async(cfg, workers))


def initial_availability(cfg: ExperimentConfig, ctx: BenchContext, seed: int) -> AvailabilityProcess:
    """Draw the initial availability, resampling sets screened as bad."""
    dyn = cfg.dynamic
    proc = None
    for attempt in range(dyn.screen_retries):
        attempt_seed = trial_seed(seed, "initial", attempt)
        proc = AvailabilityProcess.initial(ctx.graph.n, dyn.p0, dyn.eps, attempt_seed, cfg.rng)
        screen = screen_initial_set(
            ctx.laplacian, proc.current, dyn.screen_order, dyn.screen_draws,
            dyn.screen_rank, attempt_seed, cfg.rng,
        )
        if screen.good:
            return proc
        logger.info(
            "initial availability %d is bad (cutoff %.4g <= %.4g), resampling",
            attempt, screen.value, screen.threshold,
        )
    logger.warning("no good initial availability after %d draws, keeping the last", dyn.screen_retries)
    return proc


def _dynamic_trial(cfg: ExperimentConfig, ctx: BenchContext, M: int, snr_db: float, trial: int) -> List[ExperimentRecord]:
    dyn = cfg.dynamic
    mu = ctx.mus[M]
    G = ctx.filt.shifted(mu)
    exchange = ExchangeConfig(dyn.k0)
    seeds = {method: trial_seed(cfg.seed, method, M, snr_db, trial) for method in cfg.methods}

    model = SignalModel(cfg.bandwidth, cfg.coeff_mean, cfg.coeff_std)
    x = generate_signal(ctx.exact, model, trial_seed(cfg.seed, "signal", M, snr_db, trial), cfg.rng)
    proc = initial_availability(cfg, ctx, trial_seed(cfg.seed, "availability", M, trial))

    states: Dict[str, Optional[GfsState]] = {}
    records: List[ExperimentRecord] = []
    for t in range(dyn.steps):
        if t > 0:
            proc = evolve_availability(proc)
        avail = proc.current
        for method in cfg.methods:
            seed = seeds[method]
            started = time.perf_counter()
            try:
                state = None
                if method == "gfs-ne" and states.get(method) is not None:
                    state = gfs_ne(states[method], G, avail, exchange)
                elif method in ("gfs", "gfs-ne"):
                    state = gfs_sample(ctx.filt, mu, M, available=avail)
                if state is not None:
                    states[method] = state
                    S, obj = state.sample_set, state.objective
                elif method == "oracle-greedy":
                    S = naive_a_optimal_greedy(ctx.sampling, cfg.bandwidth, mu, M, available=avail)
                    obj = objective(ctx.filt, mu, S)
                else:
                    gen = config.make_rng([seed, t], cfg.rng)
                    S = sorted(int(i) for i in gen.choice(np.flatnonzero(avail), size=M, replace=False))
                    obj = objective(ctx.filt, mu, S)
                batch = _reconstruct_records(
                    cfg, ctx, method, M, snr_db, t, trial, seed, S, x,
                    trial_seed(cfg.seed, "noise", M, snr_db, trial, t), obj, started, state,
                )
            except (GfsError, ValueError, np.linalg.LinAlgError) as e:
                logger.warning("%s M=%d t=%d trial=%d failed: %s: %s", method, M, t, trial, type(e).__name__, e)
                elapsed = (time.perf_counter() - started) * 1000.0
                batch = [_error_record(method, name, M, snr_db, t, trial, seed, elapsed) for name in cfg.reconstructors]
            record_trial(method, (time.perf_counter() - started) * 1000.0, not any(r.failed for r in batch))
            records.extend(batch)
    return records


async def run_dynamic_async(cfg: ExperimentConfig, workers: Optional[int] = None) -> List[ExperimentRecord]:
    """Dynamic sweep: one sequential time loop per (M, snr, trial) job."""
    if cfg.dynamic is None:
        raise ConfigError("dynamic runs need a dynamic block")

    ctx = await asyncio.to_thread(prepare_context, cfg)
    jobs = [
        (lambda M=M, s=snr, tr=trial: _dynamic_trial(cfg, ctx, M, s, tr))
        for M in cfg.sample_sizes
        for snr in cfg.snr_db
        for trial in range(cfg.trials)
    ]
    records = await _gather_jobs(jobs, workers or cfg.workers)
    logger.info("dynamic bench: %d records, %d failed", len(records), sum(r.failed for r in records))
    return records


def run_dynamic(cfg: ExperimentConfig, workers: Optional[int] = None) -> List[ExperimentRecord]:
    return asyncio.run(run_dynamic_async(cfg, workers))


def sort_records(records: Sequence[ExperimentRecord]) -> List[ExperimentRecord]:
    return sorted(records, key=lambda r: (r.method, r.M, r.snr_db, r.t, r.trial, r.reconstructor))


def records_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    rows = [r.model_dump() for r in sort_records(records)]
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def emit_csv(records: Sequence[ExperimentRecord], path: str | os.PathLike):
    """Write records sorted by method, M, snr_db, t, trial with 12 significant digits."""
    records_frame(records).to_csv(
        path, index=False, float_format="%.12g", lineterminator="\n", na_rep="nan",
    )


def load_records_csv(path: str | os.PathLike) -> List[ExperimentRecord]:
    frame = pd.read_csv(path, dtype={"method": str, "reconstructor": str})
    if list(frame.columns) != CSV_COLUMNS:
        raise ValueError(f"unexpected header {list(frame.columns)}")
    return [ExperimentRecord(**row) for row in frame.to_dict("records")]


def summarize_records(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    """Mean, std and 95% confidence half-width of the MSE per configuration."""
    frame = records_frame([r for r in records if not r.failed])
    keys = ["method", "reconstructor", "M", "snr_db"]
    if frame.empty:
        return pd.DataFrame(columns=keys + ["trials", "mse_mean", "mse_std", "ci95", "objective"])
    summary = (
        frame.groupby(keys)
        .agg(
            trials=("mse_sum", "size"),
            mse_mean=("mse_sum", "mean"),
            mse_std=("mse_sum", "std"),
            objective=("objective", "mean"),
        )
        .reset_index()
    )
    summary["ci95"] = 1.96 * summary["mse_std"].fillna(0.0) / np.sqrt(summary["trials"])
    return summary


def compare_shifts(cfg: ExperimentConfig, shifts: Sequence[str], workers: Optional[int] = None) -> pd.DataFrame:
    """Run the same static sweep under several shift policies and summarize side by side."""
    frames = []
    for shift in shifts:
        run_cfg = cfg.model_copy(update={"shift": shift})
        summary = summarize_records(run_static(run_cfg, workers))
        summary.insert(0, "shift", shift)
        frames.append(summary)
    return pd.concat(frames, ignore_index=True)

"""Command-line interface for GFS sampling, reconstruction and benchmarks."""

import argparse
import asyncio
import logging
import sys
import uuid
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from . import config, storage
from .bench import (
    ExperimentRecord,
    build_graph,
    emit_csv,
    run_dynamic,
    run_static,
    summarize_records,
)
from .config import GraphSpec, load_experiment_config, parse_beta
from .database import init_db, make_engine, make_session_factory
from .errors import ConfigError, GfsError
from .graphs import build_laplacian, load_edge_list, write_edge_list
from .monitoring import get_stats
from .reconstruction import ObservedSamples, gfs_reconstruct, ls_reconstruct, select_beta
from .sampler import ShiftPolicy, gfs_sample, naive_a_optimal_greedy, random_sample, resolve_mu
from .spectral import (
    exact_eigendecompose,
    fgft_error,
    lp_filter,
    rotation_budget,
    truncated_jacobi,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _sampling_basis(L, basis: str, rotation_factor: float):
    if basis == "exact":
        return exact_eigendecompose(L)
    return truncated_jacobi(L, rotation_budget(L.n, rotation_factor))


def read_sample_file(path: str) -> List[int]:
    """One node index per line."""
    return [int(v) for v in np.loadtxt(path, dtype=np.int64, ndmin=1, comments="#")]


def write_sample_file(sample: Sequence[int], path: str):
    Path(path).write_text("".join(f"{i}\n" for i in sample), encoding="utf-8")


def cmd_gen_graph(args: argparse.Namespace) -> int:
    spec = GraphSpec(
        family=args.family, n=args.n, radius=args.radius, communities=args.communities,
        p_in=args.p_in, p_out=args.p_out, side=args.side, dims=args.dims, seed=args.seed,
    )
    g = build_graph(spec)
    write_edge_list(g, args.out)
    logger.info("wrote %s graph: N=%d, %d edges -> %s", args.family, g.n, len(g.edges), args.out)
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    L = build_laplacian(load_edge_list(args.graph))
    basis = _sampling_basis(L, args.basis, args.rotation_factor)
    filt = lp_filter(basis, args.bandwidth)

    if args.method == "random":
        sample = random_sample(L.n, args.samples, args.seed)
    else:
        try:
            policy = ShiftPolicy.parse(args.shift)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        mu = resolve_mu(policy, filt, args.samples)
        if args.method == "gfs":
            state = gfs_sample(filt, mu, args.samples)
            sample = state.sample_set
            logger.info("gfs: mu=%.6g objective=%.6g", mu, state.objective)
        else:
            sample = naive_a_optimal_greedy(basis, args.bandwidth, mu, args.samples)

    write_sample_file(sample, args.out)
    return EXIT_OK


def cmd_reconstruct(args: argparse.Namespace) -> int:
    L = build_laplacian(load_edge_list(args.graph))
    sample = read_sample_file(args.samples)
    values = np.loadtxt(args.values, dtype=float, ndmin=1, comments="#")
    obs = ObservedSamples(tuple(sample), values)

    if args.method == "ls":
        estimate = ls_reconstruct(exact_eigendecompose(L), args.bandwidth, obs)
    else:
        basis = _sampling_basis(L, args.basis, args.rotation_factor)
        filt = lp_filter(basis, args.bandwidth)
        try:
            variant, value = parse_beta(args.beta)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if variant == "shift":
            raise ConfigError("reconstruct takes beta = eq28 or fixed:<beta>")
        beta = select_beta(filt, len(sample)) if variant == "eq28" else value
        estimate = gfs_reconstruct(filt, beta, obs)

    frame = pd.DataFrame({"node": np.arange(L.n), "value": estimate.signal})
    frame.to_csv(args.out, index=False, float_format="%.12g", lineterminator="\n")
    return EXIT_OK


def cmd_fgft_error(args: argparse.Namespace) -> int:
    L = build_laplacian(load_edge_list(args.graph))
    J = rotation_budget(L.n, args.rotation_factor)
    basis = truncated_jacobi(L, J)
    error = fgft_error(L, basis, args.bandwidth)
    print(f"N={L.n} K={args.bandwidth} J={basis.rotation_count} error={error:.12g}")
    return EXIT_OK


async def persist_records(url: str, kind: str, cfg_dump: dict, records: Sequence[ExperimentRecord]) -> str:
    """Store a run and its records; returns the run id."""
    engine = make_engine(url)
    try:
        await init_db(engine)
        SessionLocal = make_session_factory(engine)
        async with SessionLocal() as session:
            run_id = str(uuid.uuid4())
            await storage.create_run(session, run_id, kind, cfg_dump)
            await storage.add_records(session, run_id, records)
            return run_id
    finally:
        await engine.dispose()


def _bench(args: argparse.Namespace, kind: str) -> int:
    cfg = load_experiment_config(args.config)
    runner = run_static if kind == "static" else run_dynamic
    records = runner(cfg, args.workers)
    emit_csv(records, args.out)
    logger.info("wrote %d records to %s", len(records), args.out)

    if args.summary:
        print(summarize_records(records).to_string(index=False))
    logger.info("trial stats: %s", get_stats()["global"])

    if args.db:
        run_id = asyncio.run(persist_records(args.db, kind, cfg.model_dump(mode="json"), records))
        logger.info("stored run %s in %s", run_id, args.db)
    return EXIT_OK


def cmd_static_bench(args: argparse.Namespace) -> int:
    return _bench(args, "static")


def cmd_dynamic_bench(args: argparse.Namespace) -> int:
    return _bench(args, "dynamic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfs",
        description="Greedy A-optimal graph sampling, reconstruction and benchmarks.",
    )
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="Logging level (default: GFS_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p_gen = subparsers.add_parser("gen-graph", help="Generate a synthetic graph as an edge list")
    p_gen.add_argument("--family", choices=("sensor", "community", "cube"), default="community")
    p_gen.add_argument("--n", type=int, default=500, help="Node count (sensor, community)")
    p_gen.add_argument("--radius", type=float, default=0.1, help="Sensor link radius")
    p_gen.add_argument("--communities", type=int, default=15)
    p_gen.add_argument("--p-in", type=float, default=0.2)
    p_gen.add_argument("--p-out", type=float, default=0.005)
    p_gen.add_argument("--side", type=int, default=10, help="Cube side length")
    p_gen.add_argument("--dims", type=int, default=3, help="Cube dimension")
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen_graph)

    def add_filter_args(p):
        p.add_argument("--graph", required=True, help="Edge-list file")
        p.add_argument("-K", "--bandwidth", type=int, required=True)
        p.add_argument("--basis", choices=("fgft", "exact"), default="fgft")
        p.add_argument("--rotation-factor", type=float, default=6.0, help="J = factor * N * ln N")

    p_sample = subparsers.add_parser("sample", help="Select a sample set")
    add_filter_args(p_sample)
    p_sample.add_argument("-M", "--samples", type=int, required=True)
    p_sample.add_argument("--method", choices=("gfs", "oracle-greedy", "random"), default="gfs")
    p_sample.add_argument("--shift", default="kappa:100", help="kappa:<k0> | fixed:<mu> | beta")
    p_sample.add_argument("--seed", type=int, default=0, help="Seed for random sampling")
    p_sample.add_argument("--out", required=True)
    p_sample.set_defaults(func=cmd_sample)

    p_rec = subparsers.add_parser("reconstruct", help="Reconstruct a signal from samples")
    add_filter_args(p_rec)
    p_rec.add_argument("--samples", required=True, help="Sample file, one node per line")
    p_rec.add_argument("--values", required=True, help="Sample values, one per line")
    p_rec.add_argument("--method", choices=("ls", "gfs-biased"), default="gfs-biased")
    p_rec.add_argument("--beta", default="eq28", help="eq28 | fixed:<beta>")
    p_rec.add_argument("--out", required=True)
    p_rec.set_defaults(func=cmd_reconstruct)

    for name, func, help_text in (
        ("static-bench", cmd_static_bench, "Run a static sample-size / SNR sweep"),
        ("dynamic-bench", cmd_dynamic_bench, "Run a time-varying availability sweep"),
    ):
        p_bench = subparsers.add_parser(name, help=help_text)
        p_bench.add_argument("config", help="Flat key = value config file")
        p_bench.add_argument("--out", required=True, help="Records CSV")
        p_bench.add_argument("--workers", type=int, default=None)
        p_bench.add_argument("--db", default=None, help=f"Store the run in a database (e.g. {config.DATABASE_URL})")
        p_bench.add_argument("--summary", action="store_true", help="Print per-configuration MSE summary")
        p_bench.set_defaults(func=func)

    p_fgft = subparsers.add_parser("fgft-error", help="Relative filter error of the FGFT basis")
    p_fgft.add_argument("--graph", required=True)
    p_fgft.add_argument("-K", "--bandwidth", type=int, required=True)
    p_fgft.add_argument("--rotation-factor", type=float, default=6.0)
    p_fgft.set_defaults(func=cmd_fgft_error)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except (ConfigError, ValidationError) as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (GfsError, ValueError, OSError, np.linalg.LinAlgError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

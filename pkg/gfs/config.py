"""Configuration for GFS sampling and the benchmark harness."""

import os
import re
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

load_dotenv()

# Largest graph accepted by the exact eigendecomposition oracle
ORACLE_CAP = int(os.getenv("GFS_ORACLE_CAP", "2048"))

# Reseeds a random generator may try before giving up on connectivity
CONNECTIVITY_RETRIES = int(os.getenv("GFS_CONNECTIVITY_RETRIES", "50"))

# Greedy sampling rebuilds its maintained inverse every this many accepted nodes
REFRESH_EVERY = int(os.getenv("GFS_REFRESH_EVERY", "64"))

# Re-verify every incremental inverse update against a direct inverse
DEBUG_CHECKS = os.getenv("GFS_DEBUG", "0") == "1"

WORKERS = int(os.getenv("GFS_WORKERS", "4"))

LOG_LEVEL = os.getenv("GFS_LOG_LEVEL", "INFO")

# Bench results database (only used with --db)
DATABASE_URL = os.getenv("DATABASE_URL", "sqlite+aiosqlite:///./data/bench.db")

RNG_ALGORITHMS = ("PCG64", "PCG64DXSM", "Philox", "SFC64", "MT19937")

METHODS = ("gfs", "gfs-ne", "random", "oracle-greedy")
RECONSTRUCTORS = ("ls", "gfs-biased")


def parse_shift(text: str) -> Tuple[str, Optional[float]]:
    """
    Parse a shift policy string.

    Accepted forms are ``kappa:<k0>``, ``fixed:<mu>`` and ``beta``.

    Returns:
        (variant, value) with variant one of condition_number, fixed, diagonal_average
    """
    text = text.strip().lower()
    if text == "beta":
        return "diagonal_average", None
    match = re.fullmatch(r"(kappa|fixed):\s*(\S+)", text)
    if not match:
        raise ValueError(f"invalid shift policy {text!r}")
    value = float(match.group(2))
    return ("condition_number" if match.group(1) == "kappa" else "fixed"), value


def parse_beta(text: str) -> Tuple[str, Optional[float]]:
    """Parse a beta policy string: ``eq28``, ``shift`` or ``fixed:<beta>``."""
    text = text.strip().lower()
    if text in ("eq28", "shift"):
        return text, None
    match = re.fullmatch(r"fixed:\s*(\S+)", text)
    if not match:
        raise ValueError(f"invalid beta policy {text!r}")
    value = float(match.group(1))
    if value <= 0:
        raise ValueError("fixed beta must be positive")
    return "fixed", value


class GraphSpec(BaseModel):
    """Which graph a bench run builds."""
    model_config = ConfigDict(extra="forbid")

    family: Literal["sensor", "community", "cube", "edgelist"] = "community"
    n: int = Field(500, ge=2)
    radius: float = Field(0.1, gt=0)
    communities: int = Field(15, ge=1)
    p_in: float = Field(0.2, ge=0, le=1)
    p_out: float = Field(0.005, ge=0, le=1)
    side: int = Field(10, ge=2)
    dims: int = Field(3, ge=1, le=3)
    path: Optional[str] = None
    seed: int = 1


class DynamicSpec(BaseModel):
    """Availability process and node-exchange settings for dynamic runs."""
    model_config = ConfigDict(extra="forbid")

    p0: float = Field(0.8, ge=0, le=1)
    eps: float = Field(0.02, ge=0, le=1)
    k0: int = Field(50, ge=0)
    steps: int = Field(20, ge=1)
    screen_order: int = Field(10, ge=1)
    screen_draws: int = Field(50, ge=1)
    screen_rank: int = Field(5, ge=1)
    screen_retries: int = Field(20, ge=1)


class ExperimentConfig(BaseModel):
    """Full description of one benchmark sweep."""
    model_config = ConfigDict(extra="forbid")

    graph: GraphSpec = Field(default_factory=GraphSpec)
    bandwidth: int = Field(50, ge=1)
    sample_sizes: List[int] = Field(min_length=1)
    snr_db: List[float] = Field(min_length=1)
    trials: int = Field(10, ge=1)
    seed: int = 0
    rng: str = "PCG64"
    shift: str = "kappa:100"
    beta: str = "eq28"
    basis: Literal["fgft", "exact"] = "fgft"
    rotation_factor: float = Field(6.0, ge=0)
    methods: List[Literal["gfs", "gfs-ne", "random", "oracle-greedy"]] = Field(min_length=1)
    reconstructors: List[Literal["ls", "gfs-biased"]] = Field(min_length=1)
    workers: int = Field(WORKERS, ge=1)
    coeff_mean: float = 1.0
    coeff_std: float = Field(0.5, ge=0)
    dynamic: Optional[DynamicSpec] = None

    @field_validator("sample_sizes")
    @classmethod
    def _positive_sizes(cls, value: List[int]) -> List[int]:
        if any(m < 1 for m in value):
            raise ValueError("sample sizes must be >= 1")
        return value

    @field_validator("rng")
    @classmethod
    def _known_rng(cls, value: str) -> str:
        if value not in RNG_ALGORITHMS:
            raise ValueError(f"unknown rng {value!r}, expected one of {RNG_ALGORITHMS}")
        return value

    @field_validator("shift")
    @classmethod
    def _valid_shift(cls, value: str) -> str:
        variant, number = parse_shift(value)
        if variant == "condition_number":
            if number <= 1:
                raise ValueError(f"condition number bound must exceed 1, got {number}")
            number = 1.0 / (number - 1.0)
        # diagonal_average depends on the filter and is checked at run time
        if number is not None and not 0.0 < number < 1.0:
            raise ValueError(f"shift mu={number} outside (0, 1)")
        return value

    @field_validator("beta")
    @classmethod
    def _valid_beta(cls, value: str) -> str:
        parse_beta(value)
        return value


# Flat config keys -> (section, field)
_GRAPH_KEYS = {
    "graph": "family",
    "graph_n": "n",
    "graph_radius": "radius",
    "graph_communities": "communities",
    "graph_p_in": "p_in",
    "graph_p_out": "p_out",
    "graph_side": "side",
    "graph_dims": "dims",
    "graph_path": "path",
    "graph_seed": "seed",
}
_DYNAMIC_KEYS = {
    "dynamic_p0": "p0",
    "dynamic_eps": "eps",
    "dynamic_k0": "k0",
    "dynamic_steps": "steps",
    "screen_order": "screen_order",
    "screen_draws": "screen_draws",
    "screen_rank": "screen_rank",
    "screen_retries": "screen_retries",
}
_LIST_KEYS = ("sample_sizes", "snr_db", "methods", "reconstructors")
_TOP_KEYS = (
    "bandwidth", "sample_sizes", "snr_db", "trials", "seed", "rng", "shift", "beta",
    "basis", "rotation_factor", "methods", "reconstructors", "workers",
    "coeff_mean", "coeff_std",
)


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` format into an ExperimentConfig."""
    top: dict = {}
    graph: dict = {}
    dynamic: dict = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _GRAPH_KEYS:
            graph[_GRAPH_KEYS[key]] = value
        elif key in _DYNAMIC_KEYS:
            dynamic[_DYNAMIC_KEYS[key]] = value
        elif key in _TOP_KEYS:
            if key in _LIST_KEYS:
                items = [item.strip() for item in value.split(",") if item.strip()]
                if key == "snr_db":
                    try:
                        items = [float(item) for item in items]
                    except ValueError as e:
                        raise ConfigError(f"line {lineno}: {e}") from e
                top[key] = items
            else:
                top[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    top["graph"] = graph
    if dynamic:
        top["dynamic"] = dynamic
    try:
        return ExperimentConfig.model_validate(top)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def load_experiment_config(path: str | os.PathLike) -> ExperimentConfig:
    """Load an experiment config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_experiment_config(text)


def _format_value(value) -> str:
    if isinstance(value, list):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_experiment_config(cfg: ExperimentConfig, path: str | os.PathLike):
    """Write a config back in the flat key/value format."""
    lines = []
    graph = cfg.graph.model_dump()
    for key, field in _GRAPH_KEYS.items():
        if graph[field] is not None:
            lines.append(f"{key} = {_format_value(graph[field])}")
    for key in _TOP_KEYS:
        lines.append(f"{key} = {_format_value(getattr(cfg, key))}")
    if cfg.dynamic is not None:
        dynamic = cfg.dynamic.model_dump()
        for key, field in _DYNAMIC_KEYS.items():
            lines.append(f"{key} = {_format_value(dynamic[field])}")

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_rng(seed, algorithm: str = "PCG64"):
    """numpy Generator over the named bit generator; ``seed`` may be an int or a sequence of ints."""
    if algorithm not in RNG_ALGORITHMS:
        raise ConfigError(f"unknown rng {algorithm!r}, expected one of {RNG_ALGORITHMS}")
    return np.random.Generator(getattr(np.random, algorithm)(seed))

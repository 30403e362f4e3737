"""Graphs, Laplacians, synthetic graph families and edge-list I/O."""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Tuple

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import config
from .errors import DuplicateEdge, GenerationFailed, GraphError, ParseError, SelfLoop

logger = logging.getLogger(__name__)

Edge = Tuple[int, int, float]


@dataclass(frozen=True)
class Graph:
    """Weighted undirected graph on nodes 0..n-1."""

    n: int
    edges: Tuple[Edge, ...]

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        seen = set()
        normalized = []
        for i, j, w in self.edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise SelfLoop(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) outside 0..{self.n - 1}")
            if not w > 0 or not math.isfinite(w):
                raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise DuplicateEdge(f"duplicate edge {key}")
            seen.add(key)
            normalized.append((i, j, w))
        object.__setattr__(self, "edges", tuple(normalized))

    @property
    def edge_pairs(self) -> frozenset:
        return frozenset((min(i, j), max(i, j)) for i, j, _ in self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric weight matrix W."""
        W = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            W[i, j] = w
            W[j, i] = w
        return W

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        if not self.edges:
            return False
        rows = [i for i, _, _ in self.edges]
        cols = [j for _, j, _ in self.edges]
        A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        count, _ = connected_components(A, directed=False)
        return count == 1

    def to_networkx(self) -> nx.Graph:
        G = nx.Graph()
        G.add_nodes_from(range(self.n))
        G.add_weighted_edges_from(self.edges)
        return G

    @classmethod
    def from_networkx(cls, G: nx.Graph, weight: str = "weight") -> "Graph":
        """Build from a networkx graph; nodes are relabelled 0..n-1 in sorted order."""
        G = nx.convert_node_labels_to_integers(G, ordering="sorted")
        edges = sorted(
            (min(u, v), max(u, v), float(data.get(weight, 1.0)))
            for u, v, data in G.edges(data=True)
        )
        return cls(G.number_of_nodes(), tuple(edges))


@dataclass(frozen=True, eq=False)
class LaplacianView:
    """Dense combinatorial Laplacian L = D - W with its degree vector."""

    matrix: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def build_laplacian(g: Graph) -> LaplacianView:
    """L = D - W, constructed symmetric."""
    W = g.adjacency()
    d = W.sum(axis=1)
    L = np.diag(d) - W
    L.setflags(write=False)
    d.setflags(write=False)
    return LaplacianView(matrix=L, degrees=d)


def _attempt_seeds(seed: int) -> Iterable[int]:
    # First attempt uses the seed itself, reseeds are derived from it
    yield seed
    rng = np.random.default_rng(seed)
    for _ in range(config.CONNECTIVITY_RETRIES - 1):
        yield int(rng.integers(0, 2**63 - 1))


def gen_sensor_graph(n: int, radius: float, seed: int) -> Graph:
    """
    Random sensor network in the unit square.

    Nodes closer than ``radius`` are linked with Gaussian kernel weight
    exp(-d^2 / (2 theta^2)), theta = radius / 2.

    Raises:
        GenerationFailed: no connected placement within the retry cap
    """
    if n < 2:
        raise ValueError("sensor graph needs n >= 2")
    if not 0 < radius <= math.sqrt(2):
        raise ValueError("radius must be in (0, sqrt(2)]")

    theta = radius / 2
    for attempt, attempt_seed in enumerate(_attempt_seeds(seed)):
        rng = np.random.default_rng(attempt_seed)
        pos = rng.random((n, 2))
        pairs = cKDTree(pos).query_pairs(radius, output_type="ndarray")
        if len(pairs):
            pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        dist2 = np.sum((pos[pairs[:, 0]] - pos[pairs[:, 1]]) ** 2, axis=1) if len(pairs) else np.empty(0)
        weights = np.exp(-dist2 / (2 * theta**2))
        g = Graph(n, tuple((int(i), int(j), float(w)) for (i, j), w in zip(pairs, weights)))
        if g.is_connected():
            return g
        logger.debug("sensor graph attempt %d disconnected (n=%d, radius=%g)", attempt, n, radius)

    logger.warning("sensor graph generation failed: n=%d radius=%g seed=%d", n, radius, seed)
    raise GenerationFailed(f"no connected sensor graph after {config.CONNECTIVITY_RETRIES} attempts")


def gen_community_graph(n: int, communities: int, p_in: float, p_out: float, seed: int) -> Graph:
    """
    Stochastic block model with near-equal community sizes and unit weights.

    Raises:
        GenerationFailed: no connected draw within the retry cap
    """
    if communities < 1 or communities > n:
        raise ValueError("communities must be in 1..n")
    if not 0 <= p_out < p_in <= 1:
        raise ValueError("need 0 <= p_out < p_in <= 1")

    sizes = [n // communities + (1 if c < n % communities else 0) for c in range(communities)]
    probs = [[p_in if a == b else p_out for b in range(communities)] for a in range(communities)]

    for attempt, attempt_seed in enumerate(_attempt_seeds(seed)):
        G = nx.stochastic_block_model(sizes, probs, seed=attempt_seed, sparse=True)
        g = Graph.from_networkx(G)
        if g.is_connected():
            return g
        logger.debug("community graph attempt %d disconnected", attempt)

    logger.warning("community graph generation failed: n=%d communities=%d seed=%d", n, communities, seed)
    raise GenerationFailed(f"no connected community graph after {config.CONNECTIVITY_RETRIES} attempts")


def gen_cube_graph(side: int, dims: int) -> Graph:
    """Regular lattice with side**dims nodes and unit nearest-neighbour edges."""
    if side < 2:
        raise ValueError("side must be >= 2")
    if dims not in (1, 2, 3):
        raise ValueError("dims must be 1, 2 or 3")
    return Graph.from_networkx(nx.grid_graph(dim=[side] * dims))


def load_edge_list(path: str | os.PathLike) -> Graph:
    """
    Read a ``<i> <j> <w>`` edge list (0-based, '#' comments).

    Raises:
        ParseError, DuplicateEdge, SelfLoop
    """
    edges = []
    seen = set()
    n = 0
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8").strip()
            except UnicodeDecodeError as e:
                raise ParseError(lineno, "invalid UTF-8") from e
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(lineno, f"expected 3 fields, got {len(parts)}")
            try:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as e:
                raise ParseError(lineno, str(e)) from e
            if i < 0 or j < 0:
                raise ParseError(lineno, "negative node index")
            if not w > 0 or not math.isfinite(w):
                raise ParseError(lineno, f"weight must be positive, got {w}")
            if i == j:
                raise SelfLoop(f"line {lineno}: self-loop on node {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise DuplicateEdge(f"line {lineno}: duplicate edge {key}")
            seen.add(key)
            edges.append((i, j, w))
            n = max(n, i + 1, j + 1)

    if n == 0:
        raise ParseError(0, "edge list is empty")
    return Graph(n, tuple(edges))


def write_edge_list(g: Graph, path: str | os.PathLike):
    """Write a graph in the edge-list format read by load_edge_list."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# nodes: {g.n}\n")
        for i, j, w in g.edges:
            f.write(f"{i} {j} {w!r}\n")

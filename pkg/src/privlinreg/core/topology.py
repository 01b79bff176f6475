"""Communication graph and consensus weights for the simulated network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Tuple, Union

import networkx as nx
import numpy as np

from .errors import DisconnectedGraph, InvalidEdge, InvalidParameter, ShapeMismatch

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-12

Edge = Tuple[int, int]


@dataclass(frozen=True)
class NetworkGraph:
    """Connected undirected graph over nodes 1..k.

    Edges are stored as sorted pairs ``(i, j)`` with ``i < j``. The
    neighbor set of a node includes the node itself.
    """

    node_count: int
    edges: FrozenSet[Edge]
    _graph: nx.Graph = field(repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        graph = nx.Graph()
        graph.add_nodes_from(range(1, self.node_count + 1))
        graph.add_edges_from(self.edges)
        object.__setattr__(self, "_graph", graph)

    @property
    def k(self) -> int:
        return self.node_count

    def nodes(self) -> range:
        return range(1, self.node_count + 1)

    def degree(self, node: int) -> int:
        return self._graph.degree[node]

    def neighbors(self, node: int) -> List[int]:
        """Return N_i, ascending and including ``node``."""
        return sorted([node, *self._graph.neighbors(node)])

    def has_edge(self, i: int, j: int) -> bool:
        return self._graph.has_edge(i, j)

    def to_networkx(self) -> nx.Graph:
        return self._graph.copy()


def _normalize_edge(k: int, pair: Iterable[int]) -> Edge:
    i, j = (int(v) for v in pair)
    if i == j:
        raise InvalidEdge(f"Self-loop on node {i}")
    for v in (i, j):
        if not 1 <= v <= k:
            raise InvalidEdge(f"Edge endpoint {v} outside 1..{k}")
    return (i, j) if i < j else (j, i)


def build_graph(k: int, edges: Iterable[Iterable[int]]) -> NetworkGraph:
    """Validate ``edges`` over ``k`` nodes and return a connected graph."""
    if k < 1:
        raise InvalidParameter(f"Node count must be at least 1, got {k}")

    normalized = frozenset(_normalize_edge(k, pair) for pair in edges)
    graph = NetworkGraph(node_count=k, edges=normalized)

    if not nx.is_connected(graph._graph):
        components = nx.number_connected_components(graph._graph)
        raise DisconnectedGraph(f"Graph over {k} nodes has {components} components")

    logger.debug(f"Built graph with {k} nodes and {len(normalized)} edges")
    return graph


def path_graph(k: int) -> NetworkGraph:
    return build_graph(k, [(i, i + 1) for i in range(1, k)])


def ring_graph(k: int) -> NetworkGraph:
    if k <= 2:
        return path_graph(k)
    return build_graph(k, [(i, i % k + 1) for i in range(1, k + 1)])


def complete_graph(k: int) -> NetworkGraph:
    return build_graph(k, [(i, j) for i in range(1, k + 1) for j in range(i + 1, k + 1)])


def erdos_renyi_graph(
    k: int, probability: float, seed: int, max_attempts: int = 1000
) -> NetworkGraph:
    """Draw G(k, p) graphs until one is connected.

    Attempt ``a`` uses networkx seed ``seed + a`` so the result depends only
    on the arguments.
    """
    if not 0.0 < probability <= 1.0:
        raise InvalidParameter(f"Edge probability must be in (0, 1], got {probability}")

    for attempt in range(max_attempts):
        candidate = nx.gnp_random_graph(k, probability, seed=seed + attempt)
        if k == 1 or nx.is_connected(candidate):
            logger.debug(f"Connected G({k}, {probability}) found after {attempt + 1} draws")
            return build_graph(k, [(i + 1, j + 1) for i, j in candidate.edges()])

    raise DisconnectedGraph(
        f"No connected G({k}, {probability}) graph in {max_attempts} attempts"
    )


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Consensus weights w_ij stored as a read-only k x k array."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ShapeMismatch(f"Weight matrix must be square, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def weight(self, i: int, j: int) -> float:
        return float(self.entries[i - 1, j - 1])


def metropolis_weights(graph: NetworkGraph) -> WeightMatrix:
    """Metropolis-Hastings weights: w_ij = 1 / (1 + max(deg_i, deg_j))."""
    k = graph.k
    entries = np.zeros((k, k))
    for i, j in sorted(graph.edges):
        w = 1.0 / (1 + max(graph.degree(i), graph.degree(j)))
        entries[i - 1, j - 1] = w
        entries[j - 1, i - 1] = w

    for i in graph.nodes():
        off_diagonal = 0.0
        for j in graph.neighbors(i):
            if j != i:
                off_diagonal += entries[i - 1, j - 1]
        entries[i - 1, i - 1] = 1.0 - off_diagonal

    return WeightMatrix(entries)


@dataclass(frozen=True)
class WeightValidation:
    """Outcome of :func:`validate_weights`; empty ``violations`` means pass."""

    violations: Tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def validate_weights(weights: WeightMatrix, graph: NetworkGraph) -> WeightValidation:
    """List every WeightMatrix invariant that ``weights`` violates on ``graph``."""
    if weights.k != graph.k:
        raise ShapeMismatch(f"Weight matrix is {weights.k}x{weights.k}, graph has {graph.k} nodes")

    violations = []
    w = weights.entries
    for i in graph.nodes():
        neighbors = set(graph.neighbors(i))
        for j in graph.nodes():
            value = w[i - 1, j - 1]
            if j in neighbors and not value > 0:
                violations.append(f"support: w_{i}{j} must be positive, got {value!r}")
            elif j not in neighbors and value != 0:
                violations.append(f"support: w_{i}{j} must be zero, got {value!r}")
            if j > i and value != w[j - 1, i - 1]:
                violations.append(f"asymmetry: w_{i}{j}={value!r} but w_{j}{i}={w[j - 1, i - 1]!r}")
        deviation = abs(w[i - 1].sum() - 1.0)
        if deviation > ROW_SUM_TOLERANCE:
            violations.append(f"row-sum: row {i} deviates from 1 by {deviation:.3e}")

    return WeightValidation(tuple(violations))


def spectral_norm_of_weights(weights: WeightMatrix) -> float:
    """Largest singular value of W; equals 1 for symmetric stochastic weights."""
    return float(np.linalg.norm(weights.entries, 2))


def read_graph(path: Union[str, Path]) -> NetworkGraph:
    """Parse the plain-text graph format: ``k`` then one ``i j`` line per edge."""
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise InvalidParameter(f"Graph file {path} is empty")

    k = int(lines[0])
    edges = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise InvalidEdge(f"Malformed edge line in {path}: {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return build_graph(k, edges)


def format_graph(graph: NetworkGraph) -> str:
    lines = [str(graph.k)]
    lines.extend(f"{i} {j}" for i, j in sorted(graph.edges))
    return "\n".join(lines) + "\n"

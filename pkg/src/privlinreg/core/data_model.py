"""Decentralized regression datasets, the least-squares oracle and adjacency."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import (
    BoundViolation,
    DimensionMismatch,
    InsufficientRows,
    InvalidParameter,
    NotAdjacent,
    RankDeficient,
    ShapeMismatch,
)
from .randomness import RngStream

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
# Relative slack when checking norms against certified bounds.
BOUND_TOLERANCE = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def spectral_norm(matrix: np.ndarray) -> float:
    """Largest singular value of ``matrix``."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0.0
    return float(scipy.linalg.svdvals(matrix)[0])


@dataclass(frozen=True, eq=False)
class LocalDataset:
    """Node i's private design matrix X_i (n_i x m) and labels y_i."""

    design: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        design = _frozen(self.design)
        labels = _frozen(self.labels)
        if design.ndim != 2 or design.shape[0] < 1 or design.shape[1] < 1:
            raise ShapeMismatch(f"Design must be a non-empty matrix, got shape {design.shape}")
        if labels.shape != (design.shape[0],):
            raise ShapeMismatch(
                f"Labels of shape {labels.shape} do not match {design.shape[0]} design rows"
            )
        if not (np.all(np.isfinite(design)) and np.all(np.isfinite(labels))):
            raise InvalidParameter("Local dataset entries must be finite")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.design.shape[0]

    @property
    def features(self) -> int:
        return self.design.shape[1]

    def loss(self, beta: np.ndarray) -> float:
        residual = self.design @ np.asarray(beta, dtype=float) - self.labels
        return 0.5 * float(residual @ residual)

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        """X_i^T (X_i beta - y_i), broadcasting over leading axes of ``beta``."""
        residual = np.asarray(beta, dtype=float) @ self.design.T - self.labels
        return residual @ self.design

    def equals(self, other: "LocalDataset") -> bool:
        return np.array_equal(self.design, other.design) and np.array_equal(
            self.labels, other.labels
        )


@dataclass(frozen=True, eq=False)
class NetworkDataset:
    """One LocalDataset per node, node ids 1..k in list order."""

    locals: Tuple[LocalDataset, ...]

    def __post_init__(self) -> None:
        locals_ = tuple(self.locals)
        if not locals_:
            raise InvalidParameter("A network dataset needs at least one node")
        widths = {local.features for local in locals_}
        if len(widths) != 1:
            raise ShapeMismatch(f"Local datasets disagree on feature count: {sorted(widths)}")
        object.__setattr__(self, "locals", locals_)

    @property
    def k(self) -> int:
        return len(self.locals)

    @property
    def m(self) -> int:
        return self.locals[0].features

    @property
    def n(self) -> int:
        return sum(local.rows for local in self.locals)

    @property
    def n_max(self) -> int:
        return max(local.rows for local in self.locals)

    @property
    def offsets(self) -> List[int]:
        """Row offset of each node inside the stacked design, plus the total."""
        return [0, *np.cumsum([local.rows for local in self.locals]).tolist()]

    def local(self, node: int) -> LocalDataset:
        if not 1 <= node <= self.k:
            raise InvalidParameter(f"Node {node} outside 1..{self.k}")
        return self.locals[node - 1]

    def equals(self, other: "NetworkDataset") -> bool:
        return self.k == other.k and all(
            a.equals(b) for a, b in zip(self.locals, other.locals)
        )


@dataclass(frozen=True)
class AdjacencyParams:
    """Sensitivity bounds: ||X_i|| <= delta_x and ||y_i|| <= delta_y."""

    delta_x: float
    delta_y: float

    def __post_init__(self) -> None:
        if self.delta_x < 0 or self.delta_y < 0:
            raise InvalidParameter(
                f"Adjacency bounds must be nonnegative, got ({self.delta_x}, {self.delta_y})"
            )

    def certifies(self, local: LocalDataset) -> bool:
        return (
            spectral_norm(local.design) <= self.delta_x * (1 + BOUND_TOLERANCE)
            and float(np.linalg.norm(local.labels)) <= self.delta_y * (1 + BOUND_TOLERANCE)
        )


def generate_synthetic(
    k: int,
    per_node_rows: Sequence[int],
    m: int,
    ground_truth: np.ndarray,
    label_noise_scale: float,
    seed: int,
    design_norm_cap: Optional[float] = None,
) -> NetworkDataset:
    """Draw a Gaussian regression dataset split over ``k`` nodes.

    Design entries are standard normal; when ``design_norm_cap`` is given
    every X_i is rescaled to exactly that spectral norm. Labels are
    X_i @ ground_truth plus N(0, label_noise_scale^2) noise. Node i draws
    from the streams ``(seed, i, "design")`` and ``(seed, i, "label-noise")``.
    """
    if len(per_node_rows) != k:
        raise ShapeMismatch(f"Expected {k} row counts, got {len(per_node_rows)}")
    if any(rows < 1 for rows in per_node_rows):
        raise InvalidParameter(f"Every node needs at least one row: {list(per_node_rows)}")
    if label_noise_scale < 0:
        raise InvalidParameter(f"Label noise scale must be nonnegative, got {label_noise_scale}")
    ground_truth = np.asarray(ground_truth, dtype=float)
    if ground_truth.shape != (m,):
        raise DimensionMismatch(f"Ground truth has shape {ground_truth.shape}, expected ({m},)")
    if sum(per_node_rows) < m:
        raise InsufficientRows(f"{sum(per_node_rows)} rows cannot identify {m} features")

    locals_ = []
    for node, rows in enumerate(per_node_rows, start=1):
        design = RngStream(seed, node, "design").standard_normal((rows, m))
        if design_norm_cap is not None:
            norm = spectral_norm(design)
            if norm > 0:
                design = design * (design_norm_cap / norm)
        noise = RngStream(seed, node, "label-noise").standard_normal(rows)
        labels = design @ ground_truth + label_noise_scale * noise
        locals_.append(LocalDataset(design, labels))

    dataset = NetworkDataset(tuple(locals_))
    logger.debug(f"Generated dataset with k={k}, n={dataset.n}, m={m} from seed {seed}")
    return dataset


def stack(dataset: NetworkDataset) -> Tuple[np.ndarray, np.ndarray]:
    """Row-concatenate all nodes in id order: X = [X_1; ...; X_k]."""
    design = np.vstack([local.design for local in dataset.locals])
    labels = np.concatenate([local.labels for local in dataset.locals])
    return design, labels


def split(design: np.ndarray, labels: np.ndarray, offsets: Sequence[int]) -> NetworkDataset:
    """Inverse of :func:`stack` given the offsets recorded on the dataset."""
    bounds = list(zip(offsets[:-1], offsets[1:]))
    return NetworkDataset(
        tuple(LocalDataset(design[lo:hi], labels[lo:hi]) for lo, hi in bounds)
    )


def closed_form_solution(design: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """beta* = (X^T X)^{-1} X^T y via an SVD-based least-squares solve."""
    design = np.asarray(design, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if design.ndim != 2 or labels.shape != (design.shape[0],):
        raise ShapeMismatch(f"Design {design.shape} and labels {labels.shape} are incompatible")

    singular_values = scipy.linalg.svdvals(design)
    if (
        design.shape[0] < design.shape[1]
        or singular_values[-1] <= RANK_TOLERANCE * singular_values[0]
    ):
        raise RankDeficient(
            f"Design of shape {design.shape} is rank deficient "
            f"(singular values {singular_values.tolist()})"
        )

    solution, *_ = scipy.linalg.lstsq(design, labels, lapack_driver="gelsd")
    return solution


def local_gradient(local: LocalDataset, beta: np.ndarray) -> np.ndarray:
    """Gradient of L_i(beta) = 0.5 * ||X_i beta - y_i||^2."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (local.features,):
        raise DimensionMismatch(f"beta has shape {beta.shape}, expected ({local.features},)")
    return local.gradient(beta)


def local_optimum(local: LocalDataset) -> np.ndarray:
    return closed_form_solution(local.design, local.labels)


def adjacency_params(dataset: NetworkDataset) -> AdjacencyParams:
    """Tightest (delta_X, delta_y) certifying every node of ``dataset``."""
    return AdjacencyParams(
        delta_x=max(spectral_norm(local.design) for local in dataset.locals),
        delta_y=max(float(np.linalg.norm(local.labels)) for local in dataset.locals),
    )


def make_adjacent(
    dataset: NetworkDataset,
    node: int,
    new_local: LocalDataset,
    bounds: AdjacencyParams,
) -> NetworkDataset:
    """Replace node ``node``'s data, keeping the pair (delta_X, delta_y)-adjacent."""
    old_local = dataset.local(node)
    if new_local.design.shape != old_local.design.shape:
        raise ShapeMismatch(
            f"Replacement design {new_local.design.shape} differs from "
            f"{old_local.design.shape} at node {node}"
        )
    for label, local in (("original", old_local), ("replacement", new_local)):
        if not bounds.certifies(local):
            raise BoundViolation(
                f"{label} data at node {node} exceeds bounds "
                f"(||X||={spectral_norm(local.design):.6g}, "
                f"||y||={np.linalg.norm(local.labels):.6g}, "
                f"delta_X={bounds.delta_x:.6g}, delta_y={bounds.delta_y:.6g})"
            )

    locals_ = list(dataset.locals)
    locals_[node - 1] = new_local
    return NetworkDataset(tuple(locals_))


def differing_nodes(first: NetworkDataset, second: NetworkDataset) -> List[int]:
    """Ids of nodes whose local data differ; shapes must agree."""
    if first.k != second.k:
        raise ShapeMismatch(f"Datasets have {first.k} and {second.k} nodes")
    for node, (a, b) in enumerate(zip(first.locals, second.locals), start=1):
        if a.design.shape != b.design.shape:
            raise ShapeMismatch(f"Node {node} has shapes {a.design.shape} and {b.design.shape}")
    return [
        node
        for node, (a, b) in enumerate(zip(first.locals, second.locals), start=1)
        if not a.equals(b)
    ]


def check_adjacent(
    first: NetworkDataset, second: NetworkDataset, bounds: Optional[AdjacencyParams] = None
) -> Optional[int]:
    """Return the differing node (``None`` if equal) or raise NotAdjacent."""
    nodes = differing_nodes(first, second)
    if len(nodes) > 1:
        raise NotAdjacent(f"Datasets differ at nodes {nodes}")
    if not nodes:
        return None
    node = nodes[0]
    if bounds is not None and not (
        bounds.certifies(first.local(node)) and bounds.certifies(second.local(node))
    ):
        raise NotAdjacent(f"Node {node} data exceed the adjacency bounds {bounds}")
    return node


def format_dataset(dataset: NetworkDataset) -> str:
    """Serialize to the plain-text format with shortest round-trip decimals."""
    lines = [f"{dataset.k} {dataset.m}"]
    for node, local in enumerate(dataset.locals, start=1):
        lines.append(f"node {node} {local.rows}")
        for row, label in zip(local.design, local.labels):
            lines.append(" ".join(repr(float(v)) for v in (*row, label)))
    return "\n".join(lines) + "\n"


def read_dataset(path: Union[str, Path]) -> NetworkDataset:
    lines = [
        line.strip()
        for line in Path(path).read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise InvalidParameter(f"Dataset file {path} is empty")

    k, m = (int(v) for v in lines[0].split())
    cursor = 1
    locals_ = []
    for expected in range(1, k + 1):
        if cursor >= len(lines):
            raise ShapeMismatch(f"Dataset file {path} ends before the block of node {expected}")
        tag, node, rows = lines[cursor].split()
        if tag != "node" or int(node) != expected:
            raise ShapeMismatch(f"Expected 'node {expected} <rows>', got {lines[cursor]!r}")
        body = lines[cursor + 1 : cursor + 1 + int(rows)]
        block = np.array([[float(v) for v in line.split()] for line in body])
        if block.shape != (int(rows), m + 1):
            raise ShapeMismatch(
                f"Node {expected} block has shape {block.shape}, expected ({rows}, {m + 1})"
            )
        locals_.append(LocalDataset(block[:, :m], block[:, m]))
        cursor += 1 + int(rows)
    if cursor < len(lines):
        raise ShapeMismatch(
            f"Dataset file {path} has {len(lines) - cursor} lines after the last node block"
        )

    logger.debug(f"Read dataset with {k} nodes from {path}")
    return NetworkDataset(tuple(locals_))


def perturbed_local(
    local: LocalDataset, spec: str, bounds: AdjacencyParams, seed: int = 0
) -> LocalDataset:
    """Build a replacement local dataset from a perturbation spec.

    Specs: ``identity``, ``negate-labels``, ``negate-design``,
    ``scale-labels:<factor>`` and ``resample:<seed>``. The last draws a
    standard normal design and labels of the same shape, rescaled to the
    bounds exactly.
    """
    kind, _, argument = spec.strip().lower().partition(":")
    if kind == "identity":
        return local
    if kind == "negate-labels":
        return LocalDataset(local.design, -local.labels)
    if kind == "negate-design":
        return LocalDataset(-local.design, local.labels)
    if kind == "scale-labels":
        return LocalDataset(local.design, float(argument) * local.labels)
    if kind == "resample":
        stream = RngStream(int(argument or seed), 0, "resample")
        design = stream.standard_normal(local.design.shape)
        labels = stream.standard_normal(local.rows)
        design *= bounds.delta_x / spectral_norm(design)
        labels *= bounds.delta_y / np.linalg.norm(labels)
        return LocalDataset(design, labels)
    raise InvalidParameter(f"Unknown perturbation {spec!r}")

"""Synchronous simulation of the private and baseline regression dynamics."""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .data_model import LocalDataset, NetworkDataset
from .errors import (
    InvalidParameter,
    NonFiniteState,
    RegimeWarning,
    ShapeMismatch,
    TransportViolation,
)
from .projection import OmegaBall, project
from .randomness import RngStream, sample_laplace_vector
from .schedules import ScheduleParams, alpha, check_regime, noise_scale
from .topology import NetworkGraph, WeightMatrix, validate_weights

logger = logging.getLogger(__name__)

KINDS = ("published", "internal", "projected")


@dataclass(frozen=True, eq=False)
class NodeState:
    node: int
    estimate: np.ndarray
    round: int


@dataclass(frozen=True, eq=False)
class RoundMessage:
    sender: int
    round: int
    payload: np.ndarray


class Mailbox:
    """In-process transport keyed by (sender, round).

    Receivers may only read payloads of their neighbors; every read is
    appended to ``access_log`` as ``(receiver, sender, round)``.
    """

    def __init__(self, graph: NetworkGraph):
        self.graph = graph
        self._messages: Dict[Tuple[int, int], RoundMessage] = {}
        self.access_log: List[Tuple[int, int, int]] = []

    @property
    def message_count(self) -> int:
        return len(self._messages)

    def publish(self, message: RoundMessage) -> None:
        key = (message.sender, message.round)
        if key in self._messages:
            raise TransportViolation(
                f"Node {message.sender} already published in round {message.round}"
            )
        payload = np.array(message.payload, dtype=float)
        if not np.all(np.isfinite(payload)):
            raise NonFiniteState(
                message.round,
                f"Node {message.sender} published a non-finite payload in round {message.round}",
            )
        payload.setflags(write=False)
        self._messages[key] = RoundMessage(message.sender, message.round, payload)

    def receive(self, receiver: int, sender: int, round: int) -> np.ndarray:
        if sender != receiver and not self.graph.has_edge(receiver, sender):
            raise TransportViolation(f"Node {receiver} has no edge to node {sender}")
        try:
            message = self._messages[(sender, round)]
        except KeyError:
            raise TransportViolation(f"Node {sender} has not published round {round}") from None
        self.access_log.append((receiver, sender, round))
        return message.payload

    def collect(self, receiver: int, round: int) -> Dict[int, np.ndarray]:
        """Payloads of N_receiver for ``round``, in ascending sender id."""
        return {j: self.receive(receiver, j, round) for j in self.graph.neighbors(receiver)}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded run, stored round-major: ``published[t, i - 1]``.

    ``internal`` holds one more round than ``published`` (the state after
    the last update). ``noise`` is the draw added in each round.
    """

    published: np.ndarray
    internal: np.ndarray
    projected: np.ndarray
    noise: np.ndarray
    seed: int
    params_hash: str
    private: bool
    zero_noise: bool
    message_count: int = 0

    @property
    def rounds(self) -> int:
        return self.published.shape[0]

    @property
    def k(self) -> int:
        return self.published.shape[1]

    @property
    def m(self) -> int:
        return self.published.shape[2]

    def node_state(self, node: int, t: int) -> NodeState:
        return NodeState(node=node, estimate=self.internal[t, node - 1], round=t)

    def messages(self, t: int) -> List[RoundMessage]:
        return [
            RoundMessage(sender=i + 1, round=t, payload=self.published[t, i])
            for i in range(self.k)
        ]

    def to_frame(self) -> pd.DataFrame:
        """Rows ordered by (round, node, kind); round T carries the final internal state."""
        records = []
        arrays = {kind: getattr(self, kind) for kind in KINDS}
        for t in range(self.rounds + 1):
            for i in range(self.k):
                for kind in KINDS:
                    values = arrays[kind]
                    if t < values.shape[0]:
                        records.append((t, i + 1, kind, *values[t, i]))
        columns = ["round", "node", "kind", *(f"coord_{c}" for c in range(self.m))]
        return pd.DataFrame.from_records(records, columns=columns)


def _weight_support(weights: WeightMatrix) -> List[List[int]]:
    return [
        [j + 1 for j in range(weights.k) if weights.entries[i, j] != 0] for i in range(weights.k)
    ]


def _node_update(
    node: int,
    payloads: Dict[int, np.ndarray],
    weights: WeightMatrix,
    local: LocalDataset,
    step: float,
    region: Optional[OmegaBall],
) -> np.ndarray:
    """sum_j w_ij P(payload_j) - step * grad L_i(P(payload_i)), j ascending."""
    projected = {
        j: payload if region is None else project(region, payload)
        for j, payload in payloads.items()
    }
    total = None
    for j in sorted(projected):
        term = weights.entries[node - 1, j - 1] * projected[j]
        total = term if total is None else total + term
    return total - step * local.gradient(projected[node])


def replay_transition_mean(
    dataset: NetworkDataset,
    weights: WeightMatrix,
    region: Optional[OmegaBall],
    params: ScheduleParams,
    published_round: np.ndarray,
    t: int,
) -> np.ndarray:
    """Noise-free mean of beta~(t + 1) given the published round ``t``.

    ``published_round`` has shape (..., k, m); leading axes are batched.
    Neighbor sets come from the support of ``weights``.
    """
    published_round = np.asarray(published_round, dtype=float)
    if published_round.shape[-2:] != (dataset.k, dataset.m) or weights.k != dataset.k:
        raise ShapeMismatch(
            f"Published round of shape {published_round.shape} does not match "
            f"k={dataset.k}, m={dataset.m}, weights {weights.k}x{weights.k}"
        )

    step = alpha(t, params)
    support = _weight_support(weights)
    means = []
    for node in range(1, dataset.k + 1):
        payloads = {j: published_round[..., j - 1, :] for j in support[node - 1]}
        means.append(_node_update(node, payloads, weights, dataset.local(node), step, region))
    return np.stack(means, axis=-2)


def config_fingerprint(
    dataset: NetworkDataset,
    weights: WeightMatrix,
    params: ScheduleParams,
    region: Optional[OmegaBall],
    rounds: int,
    init: np.ndarray,
    private: bool,
    zero_noise: bool,
) -> str:
    """SHA-256 over everything except the seed that determines a trajectory."""
    digest = hashlib.sha256()
    for local in dataset.locals:
        digest.update(np.ascontiguousarray(local.design).tobytes())
        digest.update(np.ascontiguousarray(local.labels).tobytes())
    digest.update(np.ascontiguousarray(weights.entries).tobytes())
    digest.update(repr(params).encode())
    if region is not None:
        digest.update(region.center.tobytes())
        digest.update(repr(region.radius).encode())
    digest.update(np.ascontiguousarray(init, dtype=float).tobytes())
    digest.update(f"{rounds}:{private}:{zero_noise}".encode())
    return digest.hexdigest()


def _check_shapes(
    dataset: NetworkDataset,
    graph: NetworkGraph,
    weights: WeightMatrix,
    region: Optional[OmegaBall],
    rounds: int,
    init: np.ndarray,
) -> np.ndarray:
    if rounds < 1:
        raise InvalidParameter(f"Rounds must be at least 1, got {rounds}")
    if not dataset.k == graph.k == weights.k:
        raise ShapeMismatch(
            f"Dataset has {dataset.k} nodes, graph {graph.k}, weights {weights.k}"
        )
    if region is not None and region.dim != dataset.m:
        raise ShapeMismatch(f"Omega lives in R^{region.dim}, data in R^{dataset.m}")
    init = np.array(init, dtype=float)
    if init.shape != (dataset.k, dataset.m):
        raise ShapeMismatch(
            f"Initial states have shape {init.shape}, expected ({dataset.k}, {dataset.m})"
        )
    verdict = validate_weights(weights, graph)
    if not verdict.passed:
        raise InvalidParameter(f"Weights violate consensus invariants: {verdict.violations[0]}")
    return init


def _simulate(
    dataset: NetworkDataset,
    graph: NetworkGraph,
    weights: WeightMatrix,
    params: ScheduleParams,
    region: Optional[OmegaBall],
    rounds: int,
    init: np.ndarray,
    seed: int,
    add_noise: bool,
    mailbox: Optional[Mailbox],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    k, m = dataset.k, dataset.m
    mailbox = mailbox if mailbox is not None else Mailbox(graph)
    streams = [RngStream(seed, node, "noise") for node in graph.nodes()] if add_noise else []

    internal = np.zeros((rounds + 1, k, m))
    published = np.zeros((rounds, k, m))
    projected = np.zeros((rounds, k, m))
    noise = np.zeros((rounds, k, m))
    internal[0] = init

    for t in range(rounds):
        scale = noise_scale(t, params)
        for node in graph.nodes():
            if add_noise:
                noise[t, node - 1] = sample_laplace_vector(m, scale, streams[node - 1])
                published[t, node - 1] = internal[t, node - 1] + noise[t, node - 1]
            else:
                published[t, node - 1] = internal[t, node - 1]
            try:
                mailbox.publish(RoundMessage(node, t, published[t, node - 1]))
            except NonFiniteState:
                raise NonFiniteState(t) from None

        # Barrier: every round-t payload is published before any update.
        step = alpha(t, params)
        for node in graph.nodes():
            payloads = mailbox.collect(node, t)
            internal[t + 1, node - 1] = _node_update(
                node, payloads, weights, dataset.local(node), step, region
            )
            own = payloads[node]
            projected[t, node - 1] = own if region is None else project(region, own)

        if not np.all(np.isfinite(internal[t + 1])):
            raise NonFiniteState(t)
        if t % 500 == 0:
            logger.debug(f"Round {t}/{rounds} done")

    return published, internal, projected, noise, mailbox.message_count


def run_private(
    dataset: NetworkDataset,
    graph: NetworkGraph,
    weights: WeightMatrix,
    params: ScheduleParams,
    region: OmegaBall,
    rounds: int,
    init: np.ndarray,
    seed: int,
    zero_noise: bool = False,
    mailbox: Optional[Mailbox] = None,
) -> Trajectory:
    """Run the noisy, projected dynamics for ``rounds`` rounds.

    Node i draws its round-t noise from the stream ``(seed, i, "noise")``.
    ``zero_noise`` publishes the true states instead (no draw is consumed).
    """
    init = _check_shapes(dataset, graph, weights, region, rounds, init)
    verdict = check_regime(params)
    if not verdict.closed_form_valid:
        failures = ", ".join(verdict.failures())
        message = f"Schedule outside the closed-form privacy regime: {failures}"
        logger.warning(message)
        warnings.warn(message, RegimeWarning, stacklevel=2)

    logger.debug(f"Private run: k={dataset.k}, m={dataset.m}, T={rounds}, seed={seed}")
    published, internal, projected, noise, count = _simulate(
        dataset, graph, weights, params, region, rounds, init, seed, not zero_noise, mailbox
    )
    return Trajectory(
        published=published,
        internal=internal,
        projected=projected,
        noise=noise,
        seed=seed,
        params_hash=config_fingerprint(
            dataset, weights, params, region, rounds, init, private=True, zero_noise=zero_noise
        ),
        private=True,
        zero_noise=zero_noise,
        message_count=count,
    )


def run_baseline(
    dataset: NetworkDataset,
    graph: NetworkGraph,
    weights: WeightMatrix,
    params: ScheduleParams,
    rounds: int,
    init: np.ndarray,
    mailbox: Optional[Mailbox] = None,
) -> Trajectory:
    """Run the noise-free, unprojected consensus gradient dynamics."""
    init = _check_shapes(dataset, graph, weights, None, rounds, init)
    logger.debug(f"Baseline run: k={dataset.k}, m={dataset.m}, T={rounds}")
    published, internal, projected, noise, count = _simulate(
        dataset, graph, weights, params, None, rounds, init, 0, False, mailbox
    )
    return Trajectory(
        published=published,
        internal=internal,
        projected=projected,
        noise=noise,
        seed=0,
        params_hash=config_fingerprint(
            dataset, weights, params, None, rounds, init, private=False, zero_noise=True
        ),
        private=False,
        zero_noise=True,
        message_count=count,
    )


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything but the seed needed to reproduce a run."""

    dataset: NetworkDataset
    graph: NetworkGraph
    weights: WeightMatrix
    params: ScheduleParams
    region: OmegaBall
    rounds: int
    init: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.init is None:
            object.__setattr__(self, "init", np.zeros((self.dataset.k, self.dataset.m)))

    def replace(self, **changes) -> "Scenario":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return Scenario(**values)

    def run(self, seed: int, private: bool = True, zero_noise: bool = False) -> Trajectory:
        if not private:
            return run_baseline(
                self.dataset, self.graph, self.weights, self.params, self.rounds, self.init
            )
        return run_private(
            self.dataset,
            self.graph,
            self.weights,
            self.params,
            self.region,
            self.rounds,
            self.init,
            seed,
            zero_noise=zero_noise,
        )

"""The constraint set Omega and the Euclidean projection onto it."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data_model import NetworkDataset, local_optimum
from .errors import (
    ContainmentUnverified,
    DimensionMismatch,
    InvalidParameter,
    RankDeficient,
)

logger = logging.getLogger(__name__)

# Shrunk points land this far inside the sphere (relative to the radius) so a
# second projection returns them unchanged.
BOUNDARY_SLACK = 1e-13


@dataclass(frozen=True, eq=False)
class OmegaBall:
    """Closed Euclidean ball; ``radius`` may be ``inf`` to disable projection."""

    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        center = np.array(self.center, dtype=float)
        if center.ndim != 1 or center.size < 1 or not np.all(np.isfinite(center)):
            raise InvalidParameter(f"Center must be a finite vector, got {self.center!r}")
        if not self.radius > 0:
            raise InvalidParameter(f"Radius must be positive, got {self.radius}")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def centered(cls, m: int, radius: float) -> "OmegaBall":
        return cls(np.zeros(m), radius)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def b_omega(self) -> float:
        """Certified sup of ||beta|| over the ball."""
        return float(np.linalg.norm(self.center)) + self.radius

    def contains(self, beta: np.ndarray, tolerance: float = 0.0) -> bool:
        distance = float(np.linalg.norm(np.asarray(beta, dtype=float) - self.center))
        return distance <= self.radius + tolerance


def project(region: OmegaBall, beta: np.ndarray) -> np.ndarray:
    """Nearest point of ``region`` to ``beta`` (vectorized over leading axes)."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1:] != (region.dim,):
        raise DimensionMismatch(f"beta has shape {beta.shape}, expected trailing ({region.dim},)")

    offset = beta - region.center
    distance = np.linalg.norm(offset, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrunk = region.center + region.radius * (1 - BOUNDARY_SLACK) * (offset / distance)
    return np.where(distance <= region.radius, beta, shrunk)


def suggest_omega(dataset: NetworkDataset, slack: float = 1.0) -> OmegaBall:
    """Zero-centered ball of radius ``slack * max_i ||beta*_i||``.

    Every local optimum lies inside; the global optimum usually does too
    but is not guaranteed to (see :func:`check_containment`).
    """
    if slack < 1:
        raise InvalidParameter(f"Slack must be at least 1, got {slack}")

    norms = []
    for node, local in enumerate(dataset.locals, start=1):
        try:
            norms.append(float(np.linalg.norm(local_optimum(local))))
        except RankDeficient as exc:
            raise RankDeficient(f"Node {node}: {exc}") from exc

    radius = slack * max(norms)
    if radius == 0:
        radius = math.ulp(1.0)
    logger.info(f"Suggested Omega radius {radius:.6g} from {len(norms)} local optima")
    return OmegaBall.centered(dataset.m, radius)


def check_containment(
    region: OmegaBall, beta_star: np.ndarray, tolerance: float = 1e-12
) -> bool:
    """Warn with ContainmentUnverified when ``beta_star`` is outside ``region``."""
    if region.contains(beta_star, tolerance):
        return True
    distance = float(np.linalg.norm(np.asarray(beta_star) - region.center))
    message = (
        f"Optimal estimate at distance {distance:.6g} lies outside Omega "
        f"(radius {region.radius:.6g}); projection will bias the iterates"
    )
    logger.warning(message)
    warnings.warn(message, ContainmentUnverified, stacklevel=2)
    return False


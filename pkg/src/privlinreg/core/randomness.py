"""Seeded Laplace noise and its log-density.

Every random draw in privlinreg comes from a Philox4x64-10 counter-based
bit generator (``numpy.random.Philox``). A stream is identified by the
master seed, a node id and a purpose tag; its 128-bit Philox key is the
first 16 bytes (little endian) of

    SHA-256("privlinreg:<seed>:<node>:<purpose>")

and its counter starts at zero. Uniforms are built from raw 64-bit words as
``((word >> 11) + 0.5) / 2**53``, which lies strictly inside (0, 1).
Laplace variates come from their inverse CDF and standard normals from
``scipy.special.ndtri``; numpy's own samplers are never used. Laplace draws are
bit-exact for a given (seed, node, purpose) on any platform whose ``log1p``
is correctly rounded.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .errors import InvalidParameter, NonPositiveScale

_TWO_POW_MINUS_53 = 2.0**-53


def derive_key(seed: int, node: int, purpose: str) -> int:
    """128-bit Philox key for the stream ``(seed, node, purpose)``."""
    digest = hashlib.sha256(f"privlinreg:{int(seed)}:{int(node)}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


@dataclass
class RngStream:
    """Independent uniform stream keyed by ``(seed, node, purpose)``.

    The stream is stateful: consecutive calls continue where the previous
    one stopped. Two streams created with the same triple produce the same
    sequence.
    """

    seed: int
    node: int
    purpose: str
    _bit_generator: np.random.Philox = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not -(2**63) <= int(self.seed) < 2**64:
            raise InvalidParameter(f"Seed must fit in 64 bits, got {self.seed}")
        self._bit_generator = np.random.Philox(key=derive_key(self.seed, self.node, self.purpose))

    def uniforms(self, size: int) -> np.ndarray:
        """``size`` doubles in the open interval (0, 1)."""
        words = self._bit_generator.random_raw(size)
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_MINUS_53

    def standard_normal(self, shape) -> np.ndarray:
        """Standard normals of ``shape`` by inverse CDF of the uniform stream."""
        size = int(np.prod(shape))
        return scipy.special.ndtri(self.uniforms(size)).reshape(shape)


def _check_scale(scale: float) -> float:
    scale = float(scale)
    if not (scale > 0 and math.isfinite(scale)):
        raise NonPositiveScale(f"Laplace scale must be positive and finite, got {scale}")
    return scale


def sample_laplace_vector(dim: int, scale: float, stream: RngStream) -> np.ndarray:
    """Draw ``dim`` i.i.d. Laplace(0, scale) values by inverse CDF."""
    scale = _check_scale(scale)
    if dim < 1:
        raise InvalidParameter(f"Dimension must be at least 1, got {dim}")

    centered = stream.uniforms(dim) - 0.5
    return -scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))


def laplace_log_density(x: np.ndarray, scale: float) -> float:
    """Log of the product Laplace(0, scale) density at every entry of ``x``."""
    scale = _check_scale(scale)
    x = np.asarray(x, dtype=float)
    return float(np.sum(-math.log(2.0 * scale) - np.abs(x) / scale))

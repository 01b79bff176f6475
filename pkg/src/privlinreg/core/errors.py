"""Exception and warning types raised across privlinreg."""

from typing import Optional


class PrivLinRegError(Exception):
    """Base class for every error raised by privlinreg."""


class InvalidEdge(PrivLinRegError, ValueError):
    """Edge endpoint out of range or a self-loop."""


class DisconnectedGraph(PrivLinRegError, ValueError):
    """Some node is unreachable from node 1."""


class InvalidParameter(PrivLinRegError, ValueError):
    """A scalar parameter is outside its admissible range."""


class ShapeMismatch(PrivLinRegError, ValueError):
    """Array shapes are inconsistent with each other."""


class DimensionMismatch(ShapeMismatch):
    """A vector does not have the feature dimension m."""


class InsufficientRows(PrivLinRegError, ValueError):
    """Fewer stacked rows than features."""


class RankDeficient(PrivLinRegError, ArithmeticError):
    """A design matrix does not have full column rank."""


class BoundViolation(PrivLinRegError, ValueError):
    """A local dataset exceeds its (delta_X, delta_y) bounds."""


class NonPositiveScale(PrivLinRegError, ValueError):
    """A Laplace scale that is zero, negative or not finite."""


class RegimeViolation(PrivLinRegError, ValueError):
    """Schedule parameters fall outside the closed-form budget regime."""


class NonFiniteState(PrivLinRegError, ArithmeticError):
    """An estimate overflowed to inf or nan."""

    def __init__(self, round: int, message: Optional[str] = None):
        self.round = round
        super().__init__(message or f"Non-finite state produced in round {round}")


class TransportViolation(PrivLinRegError, RuntimeError):
    """A node read a payload it has no edge to."""


class NotAdjacent(PrivLinRegError, ValueError):
    """Two datasets do not differ at (at most) a single bounded node."""


class ConfigMismatch(PrivLinRegError, ValueError):
    """Trajectories handed to one audit were recorded under different configs."""


class NonAuditable(PrivLinRegError, ValueError):
    """The trajectory has no noise density to evaluate."""


class InsufficientTrials(PrivLinRegError, ValueError):
    """Too few Monte Carlo samples for the requested confidence."""


class EmptyWindow(PrivLinRegError, ValueError):
    """A fit or test window selects no rounds."""


class ConfigError(PrivLinRegError, ValueError):
    """Malformed or incomplete experiment configuration."""


class OutputExists(PrivLinRegError, FileExistsError):
    """An output file already exists and overwriting was not requested."""


class RegimeWarning(UserWarning):
    """Schedule parameters void the closed-form privacy guarantee."""


class ContainmentUnverified(UserWarning):
    """The optimal estimate is not inside the suggested region."""

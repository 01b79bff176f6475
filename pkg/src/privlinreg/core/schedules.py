"""Step-size and noise schedules and the closed-form privacy budget.

Both schedules are power laws, alpha(t) = c_alpha / (t + d_alpha)^e_alpha and
v(t) = c_v / (t + d_v)^e_v. Releasing beta~(t + 1) costs at most

    eps_step(t) = K * alpha(t) / v(t + 1),
    K = 4 * delta_X * sqrt(m * n_M) * (delta_X * B_Omega * sqrt(k * m) + delta_y)

and the closed-form T-step budget is K * (c_alpha / c_v) * T. The closed form
only bounds the per-step sum when 1 < d_v + 1 <= d_alpha and e_v <= e_alpha,
so both numbers are always reported.
"""

from __future__ import annotations

import logging
import math
import numbers
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.special

from .data_model import NetworkDataset, adjacency_params
from .errors import InvalidParameter, RegimeViolation
from .projection import OmegaBall

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScheduleParams:
    c_alpha: float
    d_alpha: float
    e_alpha: float
    c_v: float
    d_v: float
    e_v: float

    def __post_init__(self) -> None:
        for name in ("c_alpha", "d_alpha", "e_alpha", "c_v", "d_v", "e_v"):
            value = getattr(self, name)
            real = isinstance(value, numbers.Real) and not isinstance(value, bool)
            if not (real and math.isfinite(value) and value > 0):
                raise InvalidParameter(f"{name} must be a positive finite number, got {value!r}")

    def replace(self, **changes: float) -> "ScheduleParams":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return ScheduleParams(**values)


@dataclass(frozen=True)
class BudgetInputs:
    rounds: int
    m: int
    k: int
    n_max: int
    delta_x: float
    delta_y: float
    b_omega: float

    def __post_init__(self) -> None:
        for name in ("rounds", "m", "k", "n_max"):
            value = getattr(self, name)
            if value < 1:
                raise InvalidParameter(f"{name} must be a positive integer, got {value}")
        if self.delta_x < 0 or self.delta_y < 0:
            raise InvalidParameter("Sensitivity bounds must be nonnegative")
        if not self.b_omega > 0:
            raise InvalidParameter(f"B_Omega must be positive, got {self.b_omega}")

    @classmethod
    def from_dataset(
        cls, dataset: NetworkDataset, region: OmegaBall, rounds: int
    ) -> "BudgetInputs":
        """Budget inputs certified by ``dataset`` and the region ``region``."""
        bounds = adjacency_params(dataset)
        return cls(
            rounds=rounds,
            m=dataset.m,
            k=dataset.k,
            n_max=dataset.n_max,
            delta_x=bounds.delta_x,
            delta_y=bounds.delta_y,
            b_omega=region.b_omega,
        )

    def replace(self, **changes) -> "BudgetInputs":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return BudgetInputs(**values)


def alpha(t, params: ScheduleParams):
    """Step size c_alpha / (t + d_alpha)^e_alpha; accepts scalars or arrays."""
    return params.c_alpha / np.power(np.add(t, params.d_alpha, dtype=float), params.e_alpha)


def noise_scale(t, params: ScheduleParams):
    """Laplace scale c_v / (t + d_v)^e_v; accepts scalars or arrays."""
    return params.c_v / np.power(np.add(t, params.d_v, dtype=float), params.e_v)


@dataclass(frozen=True)
class RegimeVerdict:
    offset_ok: bool
    exponent_ok: bool
    summable: bool

    @property
    def closed_form_valid(self) -> bool:
        return self.offset_ok and self.exponent_ok

    def failures(self) -> Tuple[str, ...]:
        failures = []
        if not self.offset_ok:
            failures.append("offset: requires 1 < d_v + 1 <= d_alpha")
        if not self.exponent_ok:
            failures.append("exponent: requires e_v <= e_alpha")
        if not self.summable:
            failures.append("summability: requires e_alpha - e_v > 1")
        return tuple(failures)


def check_regime(params: ScheduleParams) -> RegimeVerdict:
    return RegimeVerdict(
        offset_ok=1 < params.d_v + 1 <= params.d_alpha,
        exponent_ok=params.e_v <= params.e_alpha,
        summable=params.e_alpha - params.e_v > 1,
    )


def sensitivity_factor(inputs: BudgetInputs) -> float:
    """K = 4 delta_X sqrt(m n_M) (delta_X B_Omega sqrt(k m) + delta_y)."""
    if inputs.delta_x == 0:
        return 0.0
    return (
        4.0
        * inputs.delta_x
        * math.sqrt(inputs.m * inputs.n_max)
        * (inputs.delta_x * inputs.b_omega * math.sqrt(inputs.k * inputs.m) + inputs.delta_y)
    )


def per_step_loss_bound(t, params: ScheduleParams, inputs: BudgetInputs):
    """Privacy loss bound for the release produced by round ``t``."""
    return sensitivity_factor(inputs) * alpha(t, params) / noise_scale(np.add(t, 1), params)


def per_step_sum(params: ScheduleParams, inputs: BudgetInputs) -> float:
    rounds = np.arange(inputs.rounds)
    return float(np.sum(per_step_loss_bound(rounds, params, inputs)))


def privacy_budget(params: ScheduleParams, inputs: BudgetInputs, force: bool = False) -> float:
    """Closed-form T-step budget.

    Raises RegimeViolation outside the closed-form regime unless ``force``.
    """
    verdict = check_regime(params)
    if not verdict.closed_form_valid:
        message = "; ".join(f for f in verdict.failures() if not f.startswith("summability"))
        if not force:
            raise RegimeViolation(f"Closed-form budget does not apply: {message}")
        logger.warning(f"Reporting closed-form budget outside its regime: {message}")
    return sensitivity_factor(inputs) * params.c_alpha / params.c_v * inputs.rounds


def asymptotic_privacy_budget(params: ScheduleParams, inputs: BudgetInputs) -> float:
    """Finite budget for T -> infinity, or ``inf`` when none is guaranteed.

    Within the regime alpha(t)/v(t+1) <= (c_alpha/c_v) (t + d_alpha)^(e_v - e_alpha),
    whose sum over t >= 0 is a Hurwitz zeta value.
    """
    verdict = check_regime(params)
    factor = sensitivity_factor(inputs)
    if factor == 0:
        return 0.0
    if not (verdict.closed_form_valid and verdict.summable):
        return math.inf
    zeta = scipy.special.zeta(params.e_alpha - params.e_v, params.d_alpha)
    return float(factor * params.c_alpha / params.c_v * zeta)


@dataclass(frozen=True)
class BudgetSummary:
    epsilon_formula: Optional[float]
    epsilon_sum: float
    epsilon_limit: float
    regime: RegimeVerdict


def regime_summary(
    params: ScheduleParams, inputs: BudgetInputs, force: bool = False
) -> BudgetSummary:
    """Closed form (``None`` outside the regime unless forced), sum and limit."""
    regime = check_regime(params)
    formula = None
    if regime.closed_form_valid or force:
        formula = privacy_budget(params, inputs, force=force)
    return BudgetSummary(
        epsilon_formula=formula,
        epsilon_sum=per_step_sum(params, inputs),
        epsilon_limit=asymptotic_privacy_budget(params, inputs),
        regime=regime,
    )

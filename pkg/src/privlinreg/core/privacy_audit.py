"""Realized privacy loss of recorded trajectories and Monte Carlo DP checks.

The audit replays each published transition under the original dataset and
under its adjacent twin. Because the noise is Laplace, the log-likelihood
ratio of the observed release beta~(t + 1) is available in closed form,
so no second simulation is needed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .data_model import NetworkDataset, check_adjacent
from .engine import Scenario, Trajectory, replay_transition_mean
from .errors import (
    ConfigMismatch,
    InsufficientTrials,
    NonAuditable,
    ShapeMismatch,
)
from .projection import OmegaBall
from .randomness import RngStream, laplace_log_density, sample_laplace_vector
from .schedules import (
    BudgetInputs,
    ScheduleParams,
    check_regime,
    noise_scale,
    per_step_loss_bound,
    per_step_sum,
    privacy_budget,
)
from .topology import NetworkGraph, WeightMatrix

logger = logging.getLogger(__name__)

VERDICT_TOLERANCE = 1e-9
MIN_CELL_COUNT = 25
MIN_MONTE_CARLO_TRIALS = 10_000


def _check_trajectory(trajectory: Trajectory, dataset: NetworkDataset) -> None:
    if trajectory.zero_noise or not trajectory.private:
        raise NonAuditable("Trajectory carries no Laplace noise, so its density is degenerate")
    if (trajectory.k, trajectory.m) != (dataset.k, dataset.m):
        raise ShapeMismatch(
            f"Trajectory is over k={trajectory.k}, m={trajectory.m}; "
            f"dataset k={dataset.k}, m={dataset.m}"
        )


def realized_privacy_loss(
    trajectory: Trajectory,
    dataset: NetworkDataset,
    adjacent: NetworkDataset,
    weights: WeightMatrix,
    region: OmegaBall,
    params: ScheduleParams,
) -> np.ndarray:
    """Per-release privacy loss magnitudes, length T.

    Entry 0 (the data-independent initial release) is zero. Entry t >= 1 is
    |log p(beta~(t) | D) - log p(beta~(t) | D')| for the transition from the
    published round t - 1.
    """
    _check_trajectory(trajectory, dataset)
    check_adjacent(dataset, adjacent)

    losses = np.zeros(trajectory.rounds)
    for t in range(trajectory.rounds - 1):
        observed = trajectory.published[t + 1]
        mean = replay_transition_mean(dataset, weights, region, params, trajectory.published[t], t)
        mean_adjacent = replay_transition_mean(
            adjacent, weights, region, params, trajectory.published[t], t
        )
        scale = noise_scale(t + 1, params)
        losses[t + 1] = abs(
            laplace_log_density(observed - mean, scale)
            - laplace_log_density(observed - mean_adjacent, scale)
        )
    return losses


def release_bounds(params: ScheduleParams, inputs: BudgetInputs) -> np.ndarray:
    """Bound for each release: 0 for release 0, eps_step(t - 1) for release t."""
    bounds = np.zeros(inputs.rounds)
    if inputs.rounds > 1:
        bounds[1:] = per_step_loss_bound(np.arange(inputs.rounds - 1), params, inputs)
    return bounds


@dataclass(frozen=True, eq=False)
class PrivacyAuditReport:
    per_step_realized: np.ndarray
    per_step_bound: np.ndarray
    total_realized: float
    budget_formula: float
    budget_sum: float
    step_verdicts: np.ndarray
    passed: bool
    regime_violation: bool
    trials: int

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": np.arange(self.per_step_realized.size),
                "realized_max": self.per_step_realized,
                "bound": self.per_step_bound,
                "margin": self.per_step_bound - self.per_step_realized,
            }
        )

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "epsilon_formula": self.budget_formula,
                    "epsilon_sum": self.budget_sum,
                    "total_realized": self.total_realized,
                    "verdict": self.verdict,
                }
            ]
        )


def audit(
    trials: Sequence[Trajectory],
    dataset: NetworkDataset,
    adjacent: NetworkDataset,
    weights: WeightMatrix,
    region: OmegaBall,
    params: ScheduleParams,
    inputs: BudgetInputs,
) -> PrivacyAuditReport:
    """Aggregate realized losses over ``trials`` and compare with the budgets.

    Outside the closed-form regime the report is flagged and the total is
    compared against the per-step sum only.
    """
    if not trials:
        raise NonAuditable("No trajectories to audit")
    hashes = {trajectory.params_hash for trajectory in trials}
    if len(hashes) != 1:
        raise ConfigMismatch(f"Trajectories come from {len(hashes)} different configurations")
    if trials[0].rounds != inputs.rounds:
        raise ConfigMismatch(
            f"Trajectories have {trials[0].rounds} rounds, budget assumes {inputs.rounds}"
        )
    check_adjacent(dataset, adjacent)

    realized = np.zeros(inputs.rounds)
    for index, trajectory in enumerate(trials):
        losses = realized_privacy_loss(trajectory, dataset, adjacent, weights, region, params)
        np.maximum(realized, losses, out=realized)
        if (index + 1) % 100 == 0:
            logger.debug(f"Audited {index + 1}/{len(trials)} trajectories")

    regime_violation = not check_regime(params).closed_form_valid
    bounds = release_bounds(params, inputs)
    budget_formula = privacy_budget(params, inputs, force=True)
    budget_sum = per_step_sum(params, inputs)
    total = float(realized.sum())

    step_verdicts = realized <= bounds + VERDICT_TOLERANCE
    target = budget_sum if regime_violation else min(budget_formula, budget_sum)
    passed = bool(step_verdicts.all()) and total <= target + VERDICT_TOLERANCE

    report = PrivacyAuditReport(
        per_step_realized=realized,
        per_step_bound=bounds,
        total_realized=total,
        budget_formula=budget_formula,
        budget_sum=budget_sum,
        step_verdicts=step_verdicts,
        passed=passed,
        regime_violation=regime_violation,
        trials=len(trials),
    )
    logger.info(
        f"Audit over {len(trials)} trajectories: total realized {total:.6g}, "
        f"epsilon formula {budget_formula:.6g}, sum {budget_sum:.6g}, verdict {report.verdict}"
    )
    return report


@dataclass(frozen=True)
class GradientSensitivity:
    """Realized l1 sensitivities of an adjacent pair next to their bounds."""

    node: Optional[int]
    hessian_l1: float
    cross_l1: float
    hessian_bound: float
    cross_bound: float

    @property
    def within_bounds(self) -> bool:
        return (
            self.hessian_l1 <= self.hessian_bound * (1 + VERDICT_TOLERANCE)
            and self.cross_l1 <= self.cross_bound * (1 + VERDICT_TOLERANCE)
        )


def gradient_sensitivity(
    dataset: NetworkDataset, adjacent: NetworkDataset, inputs: BudgetInputs
) -> GradientSensitivity:
    """||X^T X - X'^T X'||_1 and ||X^T y - X'^T y'||_1 at the differing node."""
    node = check_adjacent(dataset, adjacent)
    hessian_bound = 4 * inputs.delta_x**2 * math.sqrt(inputs.m * inputs.n_max)
    cross_bound = 4 * inputs.delta_x * inputs.delta_y * math.sqrt(inputs.m * inputs.n_max)
    if node is None:
        return GradientSensitivity(None, 0.0, 0.0, hessian_bound, cross_bound)

    a, b = dataset.local(node), adjacent.local(node)
    hessian_gap = a.design.T @ a.design - b.design.T @ b.design
    cross_gap = a.design.T @ a.labels - b.design.T @ b.labels
    return GradientSensitivity(
        node=node,
        hessian_l1=float(np.linalg.norm(hessian_gap, 1)),
        cross_l1=float(np.linalg.norm(cross_gap, 1)),
        hessian_bound=hessian_bound,
        cross_bound=cross_bound,
    )


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    """Histogram ratio table of the first data-dependent release."""

    table: pd.DataFrame
    max_ratio: float
    max_ratio_lower: float
    epsilon_step: float
    confidence: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_ratio_lower <= math.exp(self.epsilon_step)


def _wilson_interval(counts: np.ndarray, total: int, level: float):
    intervals = [
        stats.binomtest(int(count), total).proportion_ci(confidence_level=level, method="wilson")
        for count in counts
    ]
    return (
        np.array([interval.low for interval in intervals]),
        np.array([interval.high for interval in intervals]),
    )


def _first_release(
    scenario: Scenario, dataset: NetworkDataset, trials: int, seed: int, tag: str
) -> np.ndarray:
    """Sample beta~(1) ``trials`` times, shape (trials, k, m)."""
    k, m = dataset.k, dataset.m
    params = scenario.params
    initial = scenario.init + sample_laplace_vector(
        trials * k * m, noise_scale(0, params), RngStream(seed, 0, f"mc-{tag}-initial")
    ).reshape(trials, k, m)
    mean = replay_transition_mean(dataset, scenario.weights, scenario.region, params, initial, 0)
    noise = sample_laplace_vector(
        trials * k * m, noise_scale(1, params), RngStream(seed, 0, f"mc-{tag}-release")
    ).reshape(trials, k, m)
    return mean + noise


def monte_carlo_dp_check(
    dataset: NetworkDataset,
    adjacent: NetworkDataset,
    graph: NetworkGraph,
    weights: WeightMatrix,
    params: ScheduleParams,
    region: OmegaBall,
    inputs: BudgetInputs,
    trials: int,
    bins: int,
    seed: int = 0,
    init: Optional[np.ndarray] = None,
    confidence: float = 0.99,
    tail_mass: float = 0.005,
) -> MonteCarloReport:
    """Empirical event-probability ratios of the first data-dependent release.

    Each coordinate marginal is histogrammed into ``bins`` equal-width cells
    spanning the central range shared by both samples (``tail_mass`` cut
    from each side). Ratios are guarded by Bonferroni-corrected Wilson
    intervals; ``max_ratio_lower`` is the largest ratio still supported at
    ``confidence`` and is compared with exp(eps_step(0)).
    """
    if trials < MIN_MONTE_CARLO_TRIALS:
        raise InsufficientTrials(f"Need at least {MIN_MONTE_CARLO_TRIALS} trials, got {trials}")
    check_adjacent(dataset, adjacent)
    scenario = Scenario(dataset, graph, weights, params, region, rounds=1, init=init)

    samples = _first_release(scenario, dataset, trials, seed, "original")
    samples_adjacent = _first_release(scenario, adjacent, trials, seed, "adjacent")

    coordinates = dataset.k * dataset.m
    flat = samples.reshape(trials, coordinates)
    flat_adjacent = samples_adjacent.reshape(trials, coordinates)
    # Bonferroni over both samples of every cell
    level = 1 - (1 - confidence) / (2 * bins * coordinates)

    rows: List[dict] = []
    for c in range(coordinates):
        lo = max(np.quantile(flat[:, c], tail_mass), np.quantile(flat_adjacent[:, c], tail_mass))
        hi = min(
            np.quantile(flat[:, c], 1 - tail_mass), np.quantile(flat_adjacent[:, c], 1 - tail_mass)
        )
        if not lo < hi:
            raise InsufficientTrials(
                f"Coordinate {c}: the central ranges of the two samples do not overlap "
                f"([{lo:.4g}, {hi:.4g}] is empty), so no cell has samples from both"
            )
        edges = np.linspace(lo, hi, bins + 1)
        counts, _ = np.histogram(flat[:, c], bins=edges)
        counts_adjacent, _ = np.histogram(flat_adjacent[:, c], bins=edges)
        sparse = min(counts.min(), counts_adjacent.min())
        if sparse < MIN_CELL_COUNT:
            raise InsufficientTrials(
                f"Coordinate {c} has a cell with {sparse} samples (< {MIN_CELL_COUNT}); "
                f"increase trials or reduce bins"
            )
        lower, upper = _wilson_interval(counts, trials, level)
        lower_adj, upper_adj = _wilson_interval(counts_adjacent, trials, level)
        ratio = np.maximum(counts / counts_adjacent, counts_adjacent / counts)
        ratio_lower = np.maximum(lower / upper_adj, lower_adj / upper)
        for cell in range(bins):
            rows.append(
                {
                    "coordinate": c,
                    "cell": cell,
                    "left": edges[cell],
                    "right": edges[cell + 1],
                    "count": int(counts[cell]),
                    "count_adjacent": int(counts_adjacent[cell]),
                    "ratio": float(ratio[cell]),
                    "ratio_lower": float(ratio_lower[cell]),
                }
            )

    table = pd.DataFrame(rows)
    epsilon_step = float(per_step_loss_bound(0, params, inputs))
    report = MonteCarloReport(
        table=table,
        max_ratio=float(table["ratio"].max()),
        max_ratio_lower=float(table["ratio_lower"].max()),
        epsilon_step=epsilon_step,
        confidence=confidence,
        trials=trials,
    )
    logger.info(
        f"Monte Carlo check: max ratio {report.max_ratio:.4f} "
        f"(lower bound {report.max_ratio_lower:.4f}) vs exp(eps)={math.exp(epsilon_step):.4f}"
    )
    return report

"""Error series, trial averages and growth-envelope checks."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent import futures
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .data_model import NetworkDataset
from .engine import Scenario, Trajectory
from .errors import EmptyWindow, InvalidParameter, ShapeMismatch
from .schedules import BudgetInputs, regime_summary
from .topology import WeightMatrix

logger = logging.getLogger(__name__)

Window = Tuple[int, int]


@dataclass(frozen=True, eq=False)
class ErrorSeries:
    """Summed node error per round, optionally averaged over trials."""

    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    trials: int = 1

    @property
    def rounds(self) -> np.ndarray:
        return np.arange(self.values.size)

    def scaled(self, factor: float) -> "ErrorSeries":
        stderr = None if self.stderr is None else self.stderr * factor
        return ErrorSeries(self.values * factor, stderr, self.trials)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"round": self.rounds, "value": self.values})
        if self.stderr is not None:
            frame["stderr"] = self.stderr
        return frame


def per_node_errors(trajectory: Trajectory, beta_star: np.ndarray) -> np.ndarray:
    """||published[t, i] - beta*|| as a (T, k) array."""
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.shape != (trajectory.m,):
        raise ShapeMismatch(f"beta* has shape {beta_star.shape}, expected ({trajectory.m},)")
    return np.linalg.norm(trajectory.published - beta_star, axis=-1)


def error_trajectory(trajectory: Trajectory, beta_star: np.ndarray) -> ErrorSeries:
    return ErrorSeries(per_node_errors(trajectory, beta_star).sum(axis=1))


def run_trials(
    scenario: Scenario,
    seeds: Sequence[int],
    private: bool = True,
    zero_noise: bool = False,
    workers: int = 1,
) -> List[Trajectory]:
    """One trajectory per seed, in seed order."""

    def one_trial(seed: int) -> Trajectory:
        return scenario.run(seed, private=private, zero_noise=zero_noise)

    if workers > 1:
        with futures.ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one_trial, seeds))
    return [one_trial(seed) for seed in seeds]


def mean_error(trajectories: Sequence[Trajectory], beta_star: np.ndarray) -> ErrorSeries:
    """Pointwise mean of the error series with its standard error."""
    if not trajectories:
        raise InvalidParameter("Need at least one trajectory")
    stacked = np.vstack([error_trajectory(traj, beta_star).values for traj in trajectories])
    trials = stacked.shape[0]
    if trials > 1:
        stderr = stacked.std(axis=0, ddof=1) / math.sqrt(trials)
    else:
        stderr = np.zeros(stacked.shape[1])
    logger.debug(f"Averaged {trials} trials of {stacked.shape[1]} rounds")
    return ErrorSeries(stacked.mean(axis=0), stderr, trials)


def mean_error_over_trials(
    scenario: Scenario,
    trials: int,
    seeds: Sequence[int],
    beta_star: np.ndarray,
    private: bool = True,
    zero_noise: bool = False,
    workers: int = 1,
) -> ErrorSeries:
    """Pointwise mean of ``trials`` error series, one per seed (in order)."""
    if trials < 1:
        raise InvalidParameter(f"Need at least one trial, got {trials}")
    if len(seeds) < trials:
        raise InvalidParameter(f"{trials} trials need as many seeds, got {len(seeds)}")
    trajectories = run_trials(scenario, list(seeds[:trials]), private, zero_noise, workers)
    return mean_error(trajectories, beta_star)


def envelope(t: np.ndarray, e_alpha: float) -> np.ndarray:
    """g(t) = t when e_alpha == 1, else exp(t^(1 - e_alpha))."""
    t = np.asarray(t, dtype=float)
    if e_alpha == 1:
        return t
    return np.exp(np.power(t, 1.0 - e_alpha))


@dataclass(frozen=True)
class EnvelopeVerdict:
    passed: bool
    constant: float
    worst_ratio: float
    failing_rounds: Tuple[int, ...]


def _window_rounds(window: Window, length: int, name: str) -> np.ndarray:
    start, stop = window
    if start < 1:
        raise InvalidParameter(f"{name} window must start at round 1 or later, got {start}")
    if stop > length:
        raise InvalidParameter(f"{name} window {window} exceeds the {length} recorded rounds")
    rounds = np.arange(start, stop)
    if rounds.size == 0:
        raise EmptyWindow(f"{name} window {window} selects no rounds")
    return rounds


def growth_envelope_check(
    series: ErrorSeries,
    e_alpha: float,
    fit_window: Window,
    test_window: Window,
    slack: float = 2.0,
) -> EnvelopeVerdict:
    """Fit C on ``fit_window`` and test values <= slack * C * g(t) on ``test_window``.

    Windows are half-open ``[start, stop)``.
    """
    if slack < 1:
        raise InvalidParameter(f"Slack must be at least 1, got {slack}")
    fit = _window_rounds(fit_window, series.values.size, "fit")
    test = _window_rounds(test_window, series.values.size, "test")
    if fit[0] > test[0]:
        raise InvalidParameter(f"Fit window {fit_window} must precede test window {test_window}")

    constant = float(np.max(series.values[fit] / envelope(fit, e_alpha)))
    limit = slack * constant * envelope(test, e_alpha)
    values = series.values[test]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(limit > 0, values / limit, np.where(values > 0, np.inf, 0.0))
    failing = tuple(int(t) for t in test[values > limit])
    return EnvelopeVerdict(
        passed=not failing,
        constant=constant,
        worst_ratio=float(ratios.max()),
        failing_rounds=failing,
    )


def is_eventually_decreasing(
    series: ErrorSeries, fraction: float = 0.25, tolerance: float = 0.05
) -> bool:
    """True when no value in the last ``fraction`` of rounds exceeds an earlier
    one (within that tail) by more than the relative ``tolerance``.
    """
    start = int(series.values.size * (1 - fraction))
    tail = series.values[start:]
    running_min = np.minimum.accumulate(tail)
    return bool(np.all(tail <= running_min * (1 + tolerance)))


def transition_operator_norm(
    weights: WeightMatrix, dataset: NetworkDataset, step: float
) -> Tuple[float, float]:
    """||W (x) I - step * blockdiag(X_i^T X_i)|| and its bound 1 + step * max ||X_i^T X_i||."""
    m = dataset.m
    blocks = np.zeros((dataset.k * m, dataset.k * m))
    curvature = []
    for i, local in enumerate(dataset.locals):
        hessian = local.design.T @ local.design
        blocks[i * m : (i + 1) * m, i * m : (i + 1) * m] = hessian
        curvature.append(float(np.linalg.norm(hessian, 2)))
    operator = np.kron(weights.entries, np.eye(m)) - step * blocks
    return float(np.linalg.norm(operator, 2)), 1.0 + step * max(curvature)


def sweep(
    scenario: Scenario,
    grid: Dict[str, Sequence[float]],
    trials: int,
    seeds: Sequence[int],
    beta_star: np.ndarray,
    inputs: BudgetInputs,
    fit_window: Window,
    test_window: Window,
    slack: float = 2.0,
    workers: int = 1,
) -> pd.DataFrame:
    """One row per point of the cartesian product of schedule values."""
    names = sorted(grid)
    rows: List[dict] = []
    for point in itertools.product(*(grid[name] for name in names)):
        changes = dict(zip(names, point))
        params = scenario.params.replace(**changes)
        series = mean_error_over_trials(
            scenario.replace(params=params), trials, seeds, beta_star, workers=workers
        )
        verdict = growth_envelope_check(series, params.e_alpha, fit_window, test_window, slack)
        budgets = regime_summary(params, inputs, force=True)
        rows.append(
            {
                **{name: getattr(params, name) for name in params.__dataclass_fields__},
                "final_error": float(series.values[-1]),
                "fitted_c": verdict.constant,
                "envelope_verdict": "pass" if verdict.passed else "fail",
                "epsilon_formula": budgets.epsilon_formula,
                "epsilon_sum": budgets.epsilon_sum,
                "epsilon_limit": budgets.epsilon_limit,
                "closed_form_valid": budgets.regime.closed_form_valid,
            }
        )
        logger.info(f"Sweep point {changes}: envelope {rows[-1]['envelope_verdict']}")
    return pd.DataFrame(rows)


"""Tests for error series, trial averages and growth envelopes."""

import dataclasses
import math

import numpy as np
import pytest

from privlinreg.core.data_model import closed_form_solution, generate_synthetic, stack
from privlinreg.core.engine import Scenario
from privlinreg.core.errors import EmptyWindow, InvalidParameter, ShapeMismatch
from privlinreg.core.experiments import (
    ErrorSeries,
    envelope,
    error_trajectory,
    growth_envelope_check,
    is_eventually_decreasing,
    mean_error,
    mean_error_over_trials,
    per_node_errors,
    run_trials,
    sweep,
    transition_operator_norm,
)
from privlinreg.core.projection import suggest_omega
from privlinreg.core.schedules import BudgetInputs, ScheduleParams
from privlinreg.core.topology import metropolis_weights, path_graph, ring_graph


def private_scenario(e_alpha=1.0, e_v=1.0, rounds=30, k=3):
    graph = path_graph(k)
    dataset = generate_synthetic(k, [5] * k, 2, np.array([1.0, -0.5]), 0.1, seed=8)
    params = ScheduleParams(c_alpha=0.05, d_alpha=2, e_alpha=e_alpha, c_v=1, d_v=1, e_v=e_v)
    region = suggest_omega(dataset, 2.0)
    return Scenario(dataset, graph, metropolis_weights(graph), params, region, rounds)


def optimum(scenario):
    return closed_form_solution(*stack(scenario.dataset))


class TestErrorSeries:
    """Test cases for per-round error series."""

    @pytest.fixture
    def scenario(self):
        """A short private scenario."""
        return private_scenario()

    def test_per_node_errors(self, scenario):
        """Test errors are distances of published estimates to beta*."""
        trajectory = scenario.run(seed=2)
        beta_star = optimum(scenario)
        errors = per_node_errors(trajectory, beta_star)
        assert errors.shape == (30, 3)
        assert errors[4, 1] == pytest.approx(np.linalg.norm(trajectory.published[4, 1] - beta_star))
        np.testing.assert_allclose(
            error_trajectory(trajectory, beta_star).values, errors.sum(axis=1)
        )

    def test_relabelling_nodes(self, scenario):
        """Test permuting the node axis leaves the summed error unchanged."""
        trajectory = scenario.run(seed=3)
        beta_star = optimum(scenario)
        permuted = dataclasses.replace(trajectory, published=trajectory.published[:, [2, 0, 1]])
        np.testing.assert_allclose(
            error_trajectory(permuted, beta_star).values,
            error_trajectory(trajectory, beta_star).values,
            rtol=1e-12,
        )

    def test_wrong_optimum_shape(self, scenario):
        """Test beta* must match the feature count."""
        with pytest.raises(ShapeMismatch):
            per_node_errors(scenario.run(seed=0), np.zeros(3))

    def test_run_trials_in_parallel(self, scenario):
        """Test threaded trials reproduce the serial ones in seed order."""
        serial = run_trials(scenario, [4, 5, 6])
        threaded = run_trials(scenario, [4, 5, 6], workers=3)
        for first, second in zip(serial, threaded):
            np.testing.assert_array_equal(first.published, second.published)

    def test_mean_error_and_stderr(self, scenario):
        """Test the average and its standard error over two trials."""
        beta_star = optimum(scenario)
        trajectories = run_trials(scenario, [0, 1])
        series = mean_error(trajectories, beta_star)
        values = np.vstack([error_trajectory(t, beta_star).values for t in trajectories])
        np.testing.assert_allclose(series.values, values.mean(axis=0))
        np.testing.assert_allclose(series.stderr, np.abs(values[0] - values[1]) / 2)
        assert series.trials == 2
        assert list(series.to_frame().columns) == ["round", "value", "stderr"]

    def test_single_trial_has_zero_stderr(self, scenario):
        """Test one trial reports a zero standard error."""
        series = mean_error_over_trials(scenario, 1, [9], optimum(scenario))
        assert np.all(series.stderr == 0)

    def test_too_few_seeds(self, scenario):
        """Test every trial needs its own seed."""
        with pytest.raises(InvalidParameter):
            mean_error_over_trials(scenario, 3, [0, 1], optimum(scenario))

    def test_scaled(self):
        """Test scaling multiplies values and standard errors."""
        series = ErrorSeries(np.array([1.0, 2.0]), np.array([0.5, 0.5]), 4).scaled(2.0)
        np.testing.assert_array_equal(series.values, [2.0, 4.0])
        np.testing.assert_array_equal(series.stderr, [1.0, 1.0])


class TestEnvelope:
    """Test cases for the growth envelope check."""

    def test_envelope_shapes(self):
        """Test g(t) = t for e_alpha = 1 and exp(t^(1 - e_alpha)) otherwise."""
        np.testing.assert_array_equal(envelope(np.array([1, 5]), 1.0), [1.0, 5.0])
        np.testing.assert_allclose(envelope(np.array([1, 4]), 0.5), [math.e, math.exp(2)])

    def test_quadratic_growth_fails(self):
        """Test t^2 escapes the linear envelope at round 9."""
        series = ErrorSeries(np.arange(10, dtype=float) ** 2)
        verdict = growth_envelope_check(series, 1.0, (1, 5), (5, 10), slack=2.0)
        assert verdict.constant == pytest.approx(4.0)
        assert not verdict.passed
        assert verdict.failing_rounds == (9,)
        assert verdict.worst_ratio == pytest.approx(81 / 72)

    def test_bounded_series_passes(self):
        """Test a flat series stays below a linear envelope."""
        verdict = growth_envelope_check(ErrorSeries(np.ones(20)), 1.0, (1, 5), (5, 20))
        assert verdict.passed
        assert verdict.failing_rounds == ()

    def test_exact_root_exponential_passes(self):
        """Test exp(sqrt(t)) sits on its own envelope for e_alpha = 0.5 and slack 1.5."""
        t = np.arange(60, dtype=float)
        verdict = growth_envelope_check(
            ErrorSeries(np.exp(np.sqrt(t))), 0.5, (1, 20), (20, 60), slack=1.5
        )
        assert verdict.constant == pytest.approx(1.0)
        assert verdict.passed

    @pytest.mark.parametrize("factor", [0.01, 3.0, 250.0])
    def test_scale_covariance(self, factor):
        """Test scaling the series scales C and keeps the verdict and failing rounds."""
        series = ErrorSeries(np.arange(10, dtype=float) ** 2.5)
        verdict = growth_envelope_check(series, 1.0, (1, 5), (5, 10), slack=2.0)
        assert verdict.failing_rounds == (7, 8, 9)
        scaled = growth_envelope_check(series.scaled(factor), 1.0, (1, 5), (5, 10), slack=2.0)
        assert scaled.constant == pytest.approx(factor * verdict.constant)
        assert scaled.passed == verdict.passed
        assert scaled.failing_rounds == verdict.failing_rounds
        assert scaled.worst_ratio == pytest.approx(verdict.worst_ratio)

    def test_empty_window(self):
        """Test a window selecting no rounds is refused."""
        with pytest.raises(EmptyWindow):
            growth_envelope_check(ErrorSeries(np.ones(10)), 1.0, (1, 5), (5, 5))

    def test_window_before_round_one(self):
        """Test windows must start at round 1 or later."""
        with pytest.raises(InvalidParameter):
            growth_envelope_check(ErrorSeries(np.ones(10)), 1.0, (0, 5), (5, 10))

    def test_window_past_the_end(self):
        """Test windows cannot exceed the recorded rounds."""
        with pytest.raises(InvalidParameter):
            growth_envelope_check(ErrorSeries(np.ones(10)), 1.0, (1, 5), (5, 11))

    @pytest.mark.slow
    @pytest.mark.parametrize("e_alpha", [1.0, 0.5])
    def test_private_runs_stay_in_envelope(self, e_alpha):
        """Test 20 trials of 2000 rounds stay within twice the fitted envelope."""
        scenario = private_scenario(e_alpha=e_alpha, e_v=min(1.0, e_alpha), rounds=2000)
        series = mean_error_over_trials(scenario, 20, range(20), optimum(scenario))
        verdict = growth_envelope_check(series, e_alpha, (100, 500), (500, 2000), slack=2.0)
        assert verdict.passed


class TestTrends:
    """Test cases for trend and operator diagnostics."""

    def test_decreasing(self):
        """Test a decaying series is eventually decreasing."""
        assert is_eventually_decreasing(ErrorSeries(1.0 / np.arange(1, 101)))

    def test_increasing(self):
        """Test a growing tail is flagged."""
        assert not is_eventually_decreasing(ErrorSeries(np.arange(1, 101, dtype=float)))

    def test_baseline_run_decreases(self):
        """Test the error of a noiseless run shrinks over its last quarter."""
        scenario = private_scenario(rounds=400)
        trajectory = scenario.run(seed=0, private=False)
        series = error_trajectory(trajectory, optimum(scenario))
        assert is_eventually_decreasing(series)
        assert series.values[-1] < series.values[0]

    @pytest.mark.parametrize("step", [0.0, 0.01, 0.1])
    def test_operator_norm_bound(self, step):
        """Test the transition operator norm never exceeds 1 + step * max curvature."""
        graph = ring_graph(5)
        dataset = generate_synthetic(5, [4] * 5, 3, np.ones(3), 0.1, seed=1)
        norm, bound = transition_operator_norm(metropolis_weights(graph), dataset, step)
        assert norm <= bound + 1e-12
        if step == 0.0:
            assert norm == pytest.approx(1.0)


class TestSweep:
    """Test cases for schedule sweeps."""

    def test_rows(self):
        """Test one row per grid point with budgets and envelope verdicts."""
        scenario = private_scenario(rounds=30)
        inputs = BudgetInputs.from_dataset(scenario.dataset, scenario.region, 30)
        frame = sweep(
            scenario,
            {"c_alpha": [0.05, 0.1], "c_v": [1.0]},
            trials=2,
            seeds=[0, 1],
            beta_star=optimum(scenario),
            inputs=inputs,
            fit_window=(1, 10),
            test_window=(10, 30),
        )
        assert len(frame) == 2
        assert frame["c_alpha"].tolist() == [0.05, 0.1]
        for column in ("final_error", "fitted_c", "envelope_verdict", "epsilon_formula"):
            assert column in frame.columns
        assert frame["epsilon_formula"].iloc[1] == pytest.approx(
            2 * frame["epsilon_formula"].iloc[0]
        )

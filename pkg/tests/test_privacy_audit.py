"""Tests for realized privacy loss audits and the Monte Carlo check."""

import math

import numpy as np
import pytest

from privlinreg.core.data_model import (
    LocalDataset,
    NetworkDataset,
    adjacency_params,
    generate_synthetic,
    make_adjacent,
    perturbed_local,
)
from privlinreg.core.engine import Scenario, Trajectory
from privlinreg.core.errors import (
    ConfigMismatch,
    InsufficientTrials,
    NonAuditable,
    NotAdjacent,
)
from privlinreg.core.privacy_audit import (
    audit,
    gradient_sensitivity,
    monte_carlo_dp_check,
    realized_privacy_loss,
    release_bounds,
)
from privlinreg.core.projection import OmegaBall, suggest_omega
from privlinreg.core.schedules import (
    BudgetInputs,
    ScheduleParams,
    per_step_loss_bound,
    privacy_budget,
)
from privlinreg.core.topology import build_graph, metropolis_weights, path_graph

PARAMS = ScheduleParams(c_alpha=1, d_alpha=2, e_alpha=1, c_v=1, d_v=1, e_v=1)


def audit_setup(perturbation="negate-labels", node=2, rounds=50, params=PARAMS):
    """k=3 path, m=2, four rows per node and one replaced node."""
    dataset = generate_synthetic(3, [4, 4, 4], 2, np.array([0.7, -1.2]), 0.2, seed=21)
    graph = path_graph(3)
    region = suggest_omega(dataset, 1.5)
    scenario = Scenario(dataset, graph, metropolis_weights(graph), params, region, rounds)
    bounds = adjacency_params(dataset)
    adjacent = make_adjacent(
        dataset, node, perturbed_local(dataset.local(node), perturbation, bounds), bounds
    )
    inputs = BudgetInputs.from_dataset(dataset, region, rounds)
    return scenario, adjacent, inputs


def run_audit(scenario, adjacent, inputs, seeds):
    trials = [scenario.run(seed) for seed in seeds]
    return audit(
        trials,
        scenario.dataset,
        adjacent,
        scenario.weights,
        scenario.region,
        scenario.params,
        inputs,
    )


class TestRealizedPrivacyLoss:
    """Test cases for per-release realized loss."""

    @pytest.fixture
    def setup(self):
        """Scenario, adjacent dataset and budget inputs with 10 rounds."""
        return audit_setup(rounds=10)

    def test_shape_and_initial_release(self, setup):
        """Test one entry per release with zero loss for the initial one."""
        scenario, adjacent, _ = setup
        trajectory = scenario.run(seed=3)
        losses = realized_privacy_loss(
            trajectory,
            scenario.dataset,
            adjacent,
            scenario.weights,
            scenario.region,
            scenario.params,
        )
        assert losses.shape == (10,)
        assert losses[0] == 0.0
        assert np.all(losses >= 0)
        assert np.any(losses > 0)

    def test_identical_datasets_lose_nothing(self):
        """Test D = D' yields all-zero realized losses."""
        scenario, adjacent, inputs = audit_setup("identity", rounds=10)
        report = run_audit(scenario, adjacent, inputs, range(5))
        assert np.all(report.per_step_realized == 0)
        assert report.total_realized == 0
        assert report.passed

    def test_zero_noise_is_not_auditable(self, setup):
        """Test trajectories without noise are refused."""
        scenario, adjacent, _ = setup
        trajectory = scenario.run(seed=0, zero_noise=True)
        with pytest.raises(NonAuditable):
            realized_privacy_loss(
                trajectory,
                scenario.dataset,
                adjacent,
                scenario.weights,
                scenario.region,
                scenario.params,
            )

    def test_baseline_is_not_auditable(self, setup):
        """Test baseline trajectories are refused."""
        scenario, adjacent, _ = setup
        trajectory = scenario.run(seed=0, private=False)
        with pytest.raises(NonAuditable):
            realized_privacy_loss(
                trajectory,
                scenario.dataset,
                adjacent,
                scenario.weights,
                scenario.region,
                scenario.params,
            )

    def test_symmetric_in_the_pair(self, setup):
        """Test swapping D and D' leaves every loss magnitude unchanged."""
        scenario, adjacent, _ = setup
        trajectory = scenario.run(seed=6)
        arguments = (scenario.weights, scenario.region, scenario.params)
        forward = realized_privacy_loss(trajectory, scenario.dataset, adjacent, *arguments)
        backward = realized_privacy_loss(trajectory, adjacent, scenario.dataset, *arguments)
        np.testing.assert_array_equal(forward, backward)

    @pytest.fixture
    def line(self):
        """One node, X = 1, labels 0.5 and -0.5, and a radius-100 ball."""
        dataset = NetworkDataset((LocalDataset(np.array([[1.0]]), np.array([0.5])),))
        adjacent = NetworkDataset((LocalDataset(np.array([[1.0]]), np.array([-0.5])),))
        graph = build_graph(1, [])
        params = ScheduleParams(c_alpha=0.1, d_alpha=2, e_alpha=1, c_v=1, d_v=1, e_v=1)
        return dataset, adjacent, metropolis_weights(graph), OmegaBall.centered(1, 100.0), params

    @staticmethod
    def recorded(published):
        """A two-release trajectory with the given published values."""
        published = np.array(published, dtype=float).reshape(2, 1, 1)
        return Trajectory(
            published=published,
            internal=np.zeros((3, 1, 1)),
            projected=published.copy(),
            noise=np.ones((2, 1, 1)),
            seed=0,
            params_hash="hand-built",
            private=True,
            zero_noise=False,
        )

    def test_one_dimensional_far_side(self, line):
        """Test the loss is |delta| / v(1) when the release lies beyond both means.

        From beta~(0) = 0.3 the means are 0.31 and 0.26, so delta = 0.05 and
        v(1) = 0.5.
        """
        dataset, adjacent, weights, region, params = line
        losses = realized_privacy_loss(
            self.recorded([0.3, 50.0]), dataset, adjacent, weights, region, params
        )
        assert losses[1] == pytest.approx(0.05 / 0.5, rel=1e-12)

    def test_one_dimensional_between_means(self, line):
        """Test a release between the two means loses less than |delta| / v(1)."""
        dataset, adjacent, weights, region, params = line
        losses = realized_privacy_loss(
            self.recorded([0.3, 0.28]), dataset, adjacent, weights, region, params
        )
        assert losses[1] == pytest.approx((0.03 - 0.02) / 0.5, rel=1e-9)
        assert losses[1] < 0.1

    def test_two_nodes_changed(self, setup):
        """Test datasets differing at two nodes are rejected."""
        scenario, adjacent, _ = setup
        locals_ = list(adjacent.locals)
        locals_[0] = LocalDataset(-locals_[0].design, locals_[0].labels)
        trajectory = scenario.run(seed=0)
        with pytest.raises(NotAdjacent):
            realized_privacy_loss(
                trajectory,
                scenario.dataset,
                NetworkDataset(tuple(locals_)),
                scenario.weights,
                scenario.region,
                scenario.params,
            )


class TestAudit:
    """Test cases for the aggregated audit report."""

    def test_release_bounds(self):
        """Test release t is bounded by eps_step(t - 1)."""
        _, _, inputs = audit_setup(rounds=5)
        bounds = release_bounds(PARAMS, inputs)
        assert bounds[0] == 0
        np.testing.assert_allclose(bounds[1:], per_step_loss_bound(np.arange(4), PARAMS, inputs))

    def test_doubling_step_doubles_bounds(self):
        """Test doubling c_alpha doubles every bound and both audits still pass."""
        scenario, adjacent, inputs = audit_setup(rounds=10)
        doubled = PARAMS.replace(c_alpha=2 * PARAMS.c_alpha)
        np.testing.assert_allclose(
            release_bounds(doubled, inputs), 2 * release_bounds(PARAMS, inputs), rtol=1e-12
        )
        assert run_audit(scenario, adjacent, inputs, range(3)).passed
        wider = scenario.replace(params=doubled)
        assert run_audit(wider, adjacent, inputs, range(3)).passed

    def test_report_frames(self):
        """Test the report tables carry the documented columns."""
        scenario, adjacent, inputs = audit_setup(rounds=8)
        report = run_audit(scenario, adjacent, inputs, range(3))
        frame = report.to_frame()
        assert list(frame.columns) == ["t", "realized_max", "bound", "margin"]
        assert frame["t"].tolist() == list(range(8))
        summary = report.summary_frame()
        assert list(summary.columns) == [
            "epsilon_formula",
            "epsilon_sum",
            "total_realized",
            "verdict",
        ]
        assert summary["verdict"].iloc[0] == report.verdict
        assert report.trials == 3

    def test_mixed_configurations(self):
        """Test trajectories from different configurations cannot be pooled."""
        scenario, adjacent, inputs = audit_setup(rounds=6)
        other = scenario.replace(params=PARAMS.replace(c_alpha=0.5))
        trials = [scenario.run(0), other.run(1)]
        with pytest.raises(ConfigMismatch):
            audit(
                trials,
                scenario.dataset,
                adjacent,
                scenario.weights,
                scenario.region,
                PARAMS,
                inputs,
            )

    def test_round_mismatch(self):
        """Test the budget horizon must match the trajectories."""
        scenario, adjacent, inputs = audit_setup(rounds=6)
        trials = [scenario.run(0)]
        with pytest.raises(ConfigMismatch):
            audit(
                trials,
                scenario.dataset,
                adjacent,
                scenario.weights,
                scenario.region,
                PARAMS,
                inputs.replace(rounds=7),
            )

    def test_regime_violation_is_flagged(self):
        """Test e_v > e_alpha flags the report and compares against the sum only."""
        params = PARAMS.replace(e_v=2.0)
        scenario, adjacent, inputs = audit_setup(rounds=10, params=params)
        with pytest.warns(Warning):
            report = run_audit(scenario, adjacent, inputs, range(5))
        assert report.regime_violation
        assert bool(report.step_verdicts.all())
        assert report.total_realized <= report.budget_sum

    @pytest.mark.slow
    def test_per_step_bound_over_many_trajectories(self):
        """Test 1000 trajectories never exceed the per-step bound or the closed form."""
        scenario, adjacent, inputs = audit_setup("negate-labels", node=2, rounds=50)
        report = run_audit(scenario, adjacent, inputs, range(1000))
        assert np.all(report.per_step_realized <= report.per_step_bound + 1e-9)
        assert report.total_realized <= privacy_budget(PARAMS, inputs) + 1e-9
        assert report.passed
        assert report.verdict == "pass"
        assert not report.regime_violation

    @pytest.mark.parametrize("perturbation", ["negate-design", "resample:5", "scale-labels:0.25"])
    def test_other_perturbations_pass(self, perturbation):
        """Test the bound holds for every named perturbation."""
        scenario, adjacent, inputs = audit_setup(perturbation, node=1, rounds=15)
        report = run_audit(scenario, adjacent, inputs, range(20))
        assert report.passed


class TestGradientSensitivity:
    """Test cases for realized gradient sensitivities."""

    def test_within_bounds(self):
        """Test an adjacent pair stays inside the sensitivity bounds."""
        scenario, adjacent, inputs = audit_setup("resample:1")
        sensitivity = gradient_sensitivity(scenario.dataset, adjacent, inputs)
        assert sensitivity.node == 2
        assert sensitivity.within_bounds

    def test_identical(self):
        """Test identical datasets have zero sensitivity."""
        scenario, adjacent, inputs = audit_setup("identity")
        sensitivity = gradient_sensitivity(scenario.dataset, adjacent, inputs)
        assert sensitivity.node is None
        assert sensitivity.hessian_l1 == 0 and sensitivity.cross_l1 == 0


class TestMonteCarloCheck:
    """Test cases for the histogram ratio check."""

    @pytest.fixture
    def pair(self):
        """One node, one feature, labels 0.5 and -0.5."""
        dataset = NetworkDataset((LocalDataset(np.array([[1.0]]), np.array([0.5])),))
        adjacent = NetworkDataset((LocalDataset(np.array([[1.0]]), np.array([-0.5])),))
        graph = build_graph(1, [])
        params = ScheduleParams(c_alpha=0.1, d_alpha=2, e_alpha=1, c_v=1, d_v=1, e_v=1)
        region = OmegaBall.centered(1, 2.0)
        inputs = BudgetInputs.from_dataset(dataset, region, 1)
        return dataset, adjacent, graph, metropolis_weights(graph), params, region, inputs

    def test_epsilon_step(self, pair):
        """Test the configured pair has eps_step(0) = 1."""
        *_, params, _, inputs = pair
        assert float(per_step_loss_bound(0, params, inputs)) == pytest.approx(1.0)

    def test_too_few_trials(self, pair):
        """Test fewer than 10^4 trials are refused."""
        with pytest.raises(InsufficientTrials):
            monte_carlo_dp_check(*pair, trials=1000, bins=10)

    @pytest.mark.slow
    def test_ratios_within_epsilon(self, pair):
        """Test 10^5 trials over 40 bins stay within exp(eps_step(0))."""
        report = monte_carlo_dp_check(*pair, trials=100_000, bins=40, seed=7)
        assert report.passed
        assert report.max_ratio_lower <= math.exp(report.epsilon_step)
        assert len(report.table) == 40
        assert report.table["count"].min() >= 25

    def test_sparse_cells(self, pair):
        """Test too many bins for the sample size are refused."""
        with pytest.raises(InsufficientTrials):
            monte_carlo_dp_check(*pair, trials=10_000, bins=2000)

    def test_wilson_guards_bracket_ratios(self, pair):
        """Test guarded ratios never exceed the raw ones and the pair passes."""
        report = monte_carlo_dp_check(*pair, trials=20_000, bins=10, seed=3)
        assert len(report.table) == 10
        assert (report.table["ratio_lower"] <= report.table["ratio"]).all()
        assert (report.table["ratio_lower"] > 0).all()
        assert report.passed

    def test_separated_samples(self):
        """Test samples with disjoint central ranges are refused, not crashed on."""
        dataset = NetworkDataset((LocalDataset(np.array([[1.0]]), np.array([5.0])),))
        adjacent = NetworkDataset((LocalDataset(np.array([[1.0]]), np.array([-5.0])),))
        graph = build_graph(1, [])
        params = ScheduleParams(c_alpha=1, d_alpha=2, e_alpha=1, c_v=0.1, d_v=1, e_v=1)
        region = OmegaBall.centered(1, 10.0)
        inputs = BudgetInputs.from_dataset(dataset, region, 1)
        with pytest.raises(InsufficientTrials, match="do not overlap"):
            monte_carlo_dp_check(
                dataset,
                adjacent,
                graph,
                metropolis_weights(graph),
                params,
                region,
                inputs,
                trials=10_000,
                bins=10,
            )

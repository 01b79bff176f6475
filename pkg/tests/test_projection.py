"""Tests for the constraint ball and projection."""

import math

import numpy as np
import pytest

from privlinreg.core.data_model import LocalDataset, NetworkDataset, closed_form_solution, stack
from privlinreg.core.errors import (
    ContainmentUnverified,
    DimensionMismatch,
    InvalidParameter,
    RankDeficient,
)
from privlinreg.core.projection import OmegaBall, check_containment, project, suggest_omega


class TestOmegaBall:
    """Test cases for the ball type."""

    def test_b_omega(self):
        """Test B_Omega is the center norm plus the radius."""
        assert OmegaBall(np.array([3.0, 4.0]), 2.0).b_omega == pytest.approx(7.0)

    @pytest.mark.parametrize("radius", [0.0, -1.0, math.nan])
    def test_invalid_radius(self, radius):
        """Test the radius must be positive."""
        with pytest.raises(InvalidParameter):
            OmegaBall(np.zeros(2), radius)

    def test_infinite_radius(self):
        """Test an infinite radius is accepted and disables projection."""
        region = OmegaBall.centered(2, math.inf)
        beta = np.array([1e9, -3e8])
        np.testing.assert_array_equal(project(region, beta), beta)


class TestProject:
    """Test cases for the Euclidean projection."""

    @pytest.fixture
    def unit_ball(self):
        """The zero-centered unit ball in R^2."""
        return OmegaBall.centered(2, 1.0)

    def test_outside_point(self, unit_ball):
        """Test (3, 4) is scaled onto the sphere at (0.6, 0.8)."""
        np.testing.assert_allclose(project(unit_ball, np.array([3.0, 4.0])), [0.6, 0.8])

    def test_interior_point(self, unit_ball):
        """Test interior points are unchanged."""
        beta = np.array([0.3, 0.0])
        np.testing.assert_array_equal(project(unit_ball, beta), beta)

    def test_center(self):
        """Test the center is a fixed point."""
        region = OmegaBall(np.array([1.0, -2.0]), 0.5)
        np.testing.assert_array_equal(project(region, region.center), region.center)

    def test_dimension_mismatch(self, unit_ball):
        """Test vectors of the wrong dimension are rejected."""
        with pytest.raises(DimensionMismatch):
            project(unit_ball, np.zeros(3))

    def test_batched(self, unit_ball):
        """Test projection applies row by row over leading axes."""
        betas = np.array([[[3.0, 4.0], [0.1, 0.2]]])
        result = project(unit_ball, betas)
        assert result.shape == betas.shape
        np.testing.assert_allclose(result[0, 0], [0.6, 0.8])
        np.testing.assert_array_equal(result[0, 1], betas[0, 1])

    def test_properties_on_random_pairs(self):
        """Test non-expansiveness, exact idempotence and the B_Omega bound."""
        rng = np.random.default_rng(42)
        for _ in range(10_000):
            m = int(rng.integers(1, 5))
            region = OmegaBall(rng.normal(size=m), float(rng.uniform(0.1, 3.0)))
            x, y = rng.normal(scale=4.0, size=(2, m))
            px, py = project(region, x), project(region, y)
            assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12
            np.testing.assert_array_equal(project(region, px), px)
            assert np.linalg.norm(px) <= region.b_omega * (1 + 1e-12)

    @pytest.mark.parametrize("radius", [10.0, 100.0, 1e4])
    def test_just_outside_large_sphere(self, radius):
        """Test points a hair outside a large sphere are pulled strictly inside."""
        region = OmegaBall.centered(2, radius)
        beta = np.array([radius + 5e-12, 0.0])
        projected = project(region, beta)
        assert np.linalg.norm(projected, axis=-1) <= radius
        np.testing.assert_array_equal(project(region, projected), projected)

    def test_large_radius_sweep(self):
        """Test containment and exact idempotence for radii up to 1e6."""
        rng = np.random.default_rng(7)
        for _ in range(2_000):
            m = int(rng.integers(1, 5))
            radius = float(10 ** rng.uniform(1, 6))
            region = OmegaBall(rng.normal(size=m), radius)
            direction = rng.normal(size=m)
            beta = region.center + direction / np.linalg.norm(direction) * radius * (
                1 + rng.uniform(-1e-12, 1e-12)
            )
            projected = project(region, beta)
            assert np.linalg.norm(projected - region.center, axis=-1) <= radius
            np.testing.assert_array_equal(project(region, projected), projected)


class TestSuggestOmega:
    """Test cases for the ball heuristic."""

    def test_identical_locals(self):
        """Test identical locals with optimum (1, 0) and slack 2 give radius 2."""
        local = LocalDataset(np.eye(2), np.array([1.0, 0.0]))
        dataset = NetworkDataset((local, local, local))
        region = suggest_omega(dataset, slack=2.0)
        assert region.radius == pytest.approx(2.0)
        np.testing.assert_array_equal(region.center, np.zeros(2))
        assert region.contains(closed_form_solution(*stack(dataset)))

    def test_slack_one_is_max_local_norm(self):
        """Test slack 1 gives exactly the largest local optimum norm."""
        first = LocalDataset(np.eye(2), np.array([3.0, 4.0]))
        second = LocalDataset(np.eye(2), np.array([1.0, 0.0]))
        region = suggest_omega(NetworkDataset((first, second)), slack=1.0)
        assert region.radius == pytest.approx(5.0)

    def test_slack_below_one(self):
        """Test slack below 1 is rejected."""
        local = LocalDataset(np.eye(2), np.ones(2))
        with pytest.raises(InvalidParameter):
            suggest_omega(NetworkDataset((local,)), slack=0.5)

    def test_rank_deficient_node(self):
        """Test a rank-deficient node is named in the error."""
        good = LocalDataset(np.eye(2), np.ones(2))
        bad = LocalDataset(np.array([[1.0, 0.0]]), np.ones(1))
        with pytest.raises(RankDeficient, match="Node 2"):
            suggest_omega(NetworkDataset((good, bad)))

    def test_global_optimum_can_escape(self):
        """Test the heuristic ball can miss the global optimum."""
        first = LocalDataset(np.diag([10.0, 1.0]), np.array([10.0, 0.0]))
        second = LocalDataset(np.diag([1.0, 10.0]), np.array([0.0, 10.0]))
        dataset = NetworkDataset((first, second))
        region = suggest_omega(dataset, slack=1.0)
        beta_star = closed_form_solution(*stack(dataset))

        assert region.radius == pytest.approx(1.0)
        np.testing.assert_allclose(beta_star, [100 / 101, 100 / 101])
        with pytest.warns(ContainmentUnverified):
            assert not check_containment(region, beta_star)

    def test_containment_holds_quietly(self, recwarn):
        """Test no warning is emitted when the optimum is inside."""
        assert check_containment(OmegaBall.centered(2, 2.0), np.array([1.0, 1.0]))
        assert not [w for w in recwarn if issubclass(w.category, ContainmentUnverified)]

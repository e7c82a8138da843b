"""
Tests for ProjectionService - Markovian projection onto local volatility
"""

from dataclasses import replace

import numpy as np
import pytest

from app.errors import DomainError, PreconditionError
from app.models.mgp import MgpDescriptor, MixingLaw
from app.services.projection_service import ProjectionService, lognormal_mixture_local_variance


class TestProjectionService:
    """Test suite for ProjectionService"""

    @pytest.fixture
    def projection_service(self, config):
        return ProjectionService(config)

    def test_single_atom_is_constant(self, projection_service, single_atom):
        """Test one component projects onto its own variance rate everywhere"""
        surface = projection_service.project(single_atom, np.geomspace(60.0, 160.0, 21), np.array([0.5, 1.0]))

        np.testing.assert_allclose(surface.variance, 0.04, rtol=1e-12)
        np.testing.assert_allclose(surface.local_vol, 0.2, rtol=1e-12)

    def test_local_variance_between_component_rates(self, projection_service, two_maturity):
        """Test the projected variance is a weighted average of component rates"""
        # Arrange
        x_grid, t_grid = projection_service.default_grids(two_maturity)

        # Act
        surface = projection_service.project(two_maturity, x_grid, t_grid)

        # Assert
        for row, t in enumerate(t_grid):
            rates = two_maturity.variance_rate(t)
            assert np.all(surface.variance[row] >= rates.min() - 1e-12)
            assert np.all(surface.variance[row] <= rates.max() + 1e-12)

    def test_variance_increases_in_the_wings(self, projection_service, two_atom):
        """Test large moves are attributed to the high-variance component"""
        surface = projection_service.project(two_atom, np.array([60.0, 100.0, 160.0]), np.array([1.0]))

        row = surface.variance[0]
        assert row[0] > row[1]
        assert row[2] > row[1]

    def test_matches_lognormal_mixture_closed_form(self, projection_service, two_atom):
        """Test constant-rate components project onto the lognormal-mixture local variance"""
        # Arrange
        x_grid = np.geomspace(70.0, 140.0, 15)

        # Act
        surface = projection_service.project(two_atom, x_grid, np.array([0.5, 1.0]))

        # Assert
        for row, t in enumerate([0.5, 1.0]):
            expected = lognormal_mixture_local_variance([0.5, 0.5], [0.1, 0.3], two_atom.forward_curve, x_grid, t)
            np.testing.assert_allclose(surface.variance[row], expected, rtol=1e-9)

    def test_masked_cells_take_nearest_value(self, projection_service, single_atom):
        """Test cells far in the tail are masked and filled"""
        surface = projection_service.project(single_atom, np.geomspace(1e-3, 1e4, 31), np.array([0.1]))

        assert surface.masked_cells > 0
        np.testing.assert_allclose(surface.variance, 0.04, rtol=1e-12)

    def test_default_grids(self, projection_service, two_maturity):
        x_grid, t_grid = projection_service.default_grids(two_maturity, x_points=11, t_points=4)

        assert x_grid.size == 11
        np.testing.assert_allclose(t_grid, [0.25, 0.5, 0.75, 1.0])
        assert x_grid[0] < 100.0 < x_grid[-1]

    def test_t_grid_must_follow_start(self, projection_service, single_atom):
        with pytest.raises(DomainError, match="t grid"):
            projection_service.project(single_atom, np.array([90.0, 100.0, 110.0]), np.array([0.0, 0.5]))

    def test_x_grid_must_ascend(self, projection_service, single_atom):
        with pytest.raises(PreconditionError, match="x grid"):
            projection_service.project(single_atom, np.array([110.0, 100.0]), np.array([0.5]))

    def test_surface_interpolation(self, projection_service, two_atom):
        """Test the surface is exact on its nodes"""
        surface = projection_service.project(two_atom, np.geomspace(50.0, 200.0, 41), np.array([0.5, 1.0]))

        np.testing.assert_allclose(surface.at(surface.x_grid, 1.0), surface.variance[1])

    def test_verify_projection_matches_mixture(self, config, two_maturity):
        """Test local-vol paths reproduce the mixture marginals"""
        # Arrange
        projection_service = ProjectionService(config.model_copy(update={"euler_steps_per_year": 100}))
        x_grid, t_grid = projection_service.default_grids(two_maturity, x_points=121, t_points=4)
        surface = projection_service.project(two_maturity, x_grid, t_grid)

        # Act
        report = projection_service.verify_projection(two_maturity, surface, paths=20_000, seed=7)

        # Assert
        assert report.escaped_fraction <= config.max_escape_fraction
        assert report.max_statistic < 0.04
        assert report.statistics.size == t_grid.size

    def test_default_grid_projection_at_horizon(self, projection_service, two_maturity):
        """Test local-vol paths on the default grids match the mixture at t = 1 and a +20% surface does not"""
        # Arrange
        x_grid, t_grid = projection_service.default_grids(two_maturity)
        surface = projection_service.project(two_maturity, x_grid, t_grid)
        inflated = replace(surface, variance=1.2 * surface.variance)

        # Act
        report = projection_service.verify_projection(two_maturity, surface, paths=100_000, seed=17)
        control = projection_service.verify_projection(two_maturity, inflated, paths=100_000, seed=17)

        # Assert
        assert report.times[-1] == pytest.approx(1.0)
        assert report.statistics[-1] < 0.012
        assert control.statistics[-1] > 0.02

    def test_verify_is_reproducible(self, projection_service, single_atom):
        surface = projection_service.project(single_atom, np.geomspace(30.0, 300.0, 41), np.array([0.5, 1.0]))

        first = projection_service.verify_projection(single_atom, surface, paths=2000, seed=3)
        second = projection_service.verify_projection(single_atom, surface, paths=2000, seed=3)

        np.testing.assert_array_equal(first.statistics, second.statistics)


class TestGridLaws:
    """Projection of a continuous mixing law"""

    def test_grid_law_projection_is_finite(self, config):
        theta = np.linspace(0.0, 1.0, 51)
        law = MixingLaw.from_grid(theta, np.ones_like(theta))
        desc = MgpDescriptor(mixing=law, maturities=np.array([1.0]),
                             variance_increments=(0.02 + 0.04 * theta)[:, None], x0=100.0)

        surface = ProjectionService(config).project(desc, np.geomspace(50.0, 200.0, 21), np.array([0.5, 1.0]))

        assert np.all(np.isfinite(surface.variance))
        assert np.all((surface.variance >= 0.02 - 1e-12) & (surface.variance <= 0.06 + 1e-12))

"""
Tests for HierarchicalService - layered models from spot and forward-start slices
"""

from dataclasses import replace
from unittest.mock import Mock

import numpy as np
import pytest

from app.errors import InvariantError, PreconditionError
from app.models.hierarchical import VarianceCoupling
from app.models.mgp import OptionKind
from app.services.black_scholes import black_price
from app.services.coupling_service import CouplingService
from app.services.hierarchical_service import HierarchicalService
from app.services.market_service import MarketService


def bs(forward, strike, variance):
    return float(black_price(forward, strike, variance))


class TestHierarchicalService:
    """Test suite for HierarchicalService"""

    @pytest.fixture
    def hierarchical_service(self, config):
        return HierarchicalService(config)

    @pytest.fixture
    def slices(self):
        """v1 in {0.02, 0.04}, independent increment in {0.02, 0.04}, so v2 in {0.04, 0.06, 0.08}"""
        market = MarketService()
        spot = [
            market.mixture_slice(100.0, 0.5, [0.02, 0.04], [0.5, 0.5]),
            market.mixture_slice(100.0, 1.0, [0.04, 0.06, 0.08], [0.25, 0.5, 0.25]),
        ]
        ratio = [market.mixture_slice(1.0, 1.0, [0.02, 0.04], [0.5, 0.5])]
        return spot, ratio

    @pytest.fixture
    def model(self, hierarchical_service, slices):
        spot, ratio = slices
        return hierarchical_service.build_model(spot, ratio, spot=100.0)

    def test_build_model_uses_atomic_lattice(self, model):
        """Test atoms on multiples of 0.02 give a five-node lattice"""
        assert model.layers == 2
        assert model.nodes.size == 5
        assert model.step == pytest.approx(0.02, rel=1e-3)
        np.testing.assert_allclose(model.maturities, [0.0, 0.5, 1.0])

    def test_build_model_marginals(self, model):
        """Test every layer reproduces its total and increment marginals"""
        np.testing.assert_allclose(model.total_marginal(1), [0.0, 0.5, 0.5, 0.0, 0.0], atol=1e-6)
        np.testing.assert_allclose(model.total_marginal(2), [0.0, 0.0, 0.25, 0.5, 0.25], atol=1e-6)
        np.testing.assert_allclose(model.increment_marginal(2), [0.0, 0.5, 0.5, 0.0, 0.0], atol=1e-6)

    def test_independent_increments_give_product_coupling(self, model):
        mass = model.couplings[1].mass

        for cell in ((1, 2), (1, 3), (2, 3), (2, 4)):
            assert mass[cell] == pytest.approx(0.25, abs=1e-6)

    def test_chain_marginals_match_columns(self, hierarchical_service, model):
        chained = hierarchical_service.chain_marginals(model)

        for k, masses in enumerate(chained, start=1):
            np.testing.assert_allclose(masses, model.total_marginal(k), atol=1e-9)

    def test_european_price(self, hierarchical_service, model):
        """Test the layer-2 call weights Black prices over the v2 law"""
        price = hierarchical_service.price_european(model, 2, 100.0)

        expected = 0.25 * bs(100.0, 100.0, 0.04) + 0.5 * bs(100.0, 100.0, 0.06) + 0.25 * bs(100.0, 100.0, 0.08)
        assert price == pytest.approx(expected, rel=1e-3)

    def test_forward_start_price(self, hierarchical_service, model):
        price = hierarchical_service.price_forward_start(model, 2, 1.0)

        expected = 0.5 * bs(1.0, 1.0, 0.02) + 0.5 * bs(1.0, 1.0, 0.04)
        assert price == pytest.approx(expected, rel=1e-3)

    def test_put_price(self, hierarchical_service, model):
        call = hierarchical_service.price_european(model, 1, 95.0)
        put = hierarchical_service.price_european(model, 1, 95.0, OptionKind.PUT)

        assert call - put == pytest.approx(5.0, abs=1e-10)

    def test_conditional_cdf(self, hierarchical_service, model):
        """Test the increment law after v1 = 0.02 is half 0.02, half 0.04"""
        # Act
        conditional = hierarchical_service.conditional_cdf(model, 2, float(model.nodes[1]))

        # Assert
        assert not conditional.snapped
        np.testing.assert_allclose(conditional.cdf[:4], [0.0, 0.5, 1.0, 1.0], atol=1e-6)
        assert conditional.quantile(0.25) == pytest.approx(model.step)
        assert conditional.quantile(0.75) == pytest.approx(2.0 * model.step)

    def test_conditional_cdf_snaps_off_grid_prior(self, hierarchical_service, model):
        conditional = hierarchical_service.conditional_cdf(model, 2, 0.021)

        assert conditional.snapped
        assert conditional.prior_variance == pytest.approx(model.nodes[1])

    def test_layer_outside_range_raises(self, hierarchical_service, model):
        with pytest.raises(PreconditionError, match="layer 3"):
            hierarchical_service.conditional_cdf(model, 3, 0.02)

    def test_layer_descriptor_prices_forward_start(self, hierarchical_service, model):
        """Test the conditional layer MGP matches the forward-start weights"""
        desc = hierarchical_service.layer_descriptor(model, 2, float(model.nodes[2]))

        assert desc.x0 == 1.0
        assert desc.t0 == 0.5
        np.testing.assert_allclose(desc.mixing.masses, [0.5, 0.5], atol=1e-6)
        np.testing.assert_allclose(desc.variance_increments[:, 0], [model.step, 2.0 * model.step])

    def test_layer_parametrization_samples_kernel(self, hierarchical_service, model):
        param = hierarchical_service.build_layer_parametrization(model, 2)

        picked = param.sample(np.array([1, 1, 2, 2]), np.array([0.25, 0.75, 0.25, 0.75]))

        np.testing.assert_array_equal(picked, [2, 3, 3, 4])
        assert param.end - param.start == pytest.approx(0.5)

    def test_ratio_count_checked(self, hierarchical_service, slices):
        spot, _ = slices

        with pytest.raises(PreconditionError, match="forward-start slices"):
            hierarchical_service.build_model(spot, [], spot=100.0)

    def test_decreasing_variance_raises(self, hierarchical_service):
        """Test total variance must not fall between layers"""
        market = MarketService()
        spot = [market.mixture_slice(100.0, 0.5, [0.04], [1.0]), market.mixture_slice(100.0, 1.0, [0.02], [1.0])]
        ratio = [market.mixture_slice(1.0, 1.0, [0.02], [1.0])]

        with pytest.raises(InvariantError, match="falls below"):
            hierarchical_service.build_model(spot, ratio, spot=100.0)

    def test_conditional_restart(self, hierarchical_service, model):
        """Test restarting after layer 1 at v1 = 0.02 prices with the conditional increment law"""
        # Act
        restarted = hierarchical_service.conditional_restart(model, 2, 105.0, float(model.nodes[1]))

        # Assert
        assert restarted.layers == 1
        assert restarted.x0 == 105.0
        price = hierarchical_service.price_european(restarted, 1, 100.0)
        expected = 0.5 * bs(105.0, 100.0, 0.02) + 0.5 * bs(105.0, 100.0, 0.04)
        assert price == pytest.approx(expected, rel=1e-3)

    def test_verify_model_passes_on_its_own_slices(self, hierarchical_service, model):
        report = hierarchical_service.verify_model(model, paths=20_000, seed=5)

        assert report.passed

    def test_verify_model_flags_swapped_ratio_slice(self, hierarchical_service, model):
        """Test a layer-2 forward-start slice the couplings do not produce fails its KS check"""
        # Arrange
        wrong = MarketService().mixture_slice(1.0, 1.0, [0.08], [1.0])
        swapped = replace(model, ratio_slices=(model.ratio_slices[0], wrong))

        # Act
        report = hierarchical_service.verify_model(swapped, paths=20_000, seed=5)

        # Assert
        assert [(check.layer, check.kind) for check in report.failures()] == [(2, "ratio")]
        assert report.failures()[0].statistic > 0.02

    def test_check_chaining_within_tolerance(self, hierarchical_service, model):
        gaps = hierarchical_service.check_chaining(model, [model.total_marginal(1), model.total_marginal(2)])

        assert max(gaps) < 2e-4

    def test_check_chaining_rejects_foreign_marginal(self, hierarchical_service, model):
        with pytest.raises(InvariantError, match="layer 2 marginal"):
            hierarchical_service.check_chaining(model, [model.total_marginal(1), [0.0, 0.0, 0.5, 0.0, 0.5]])

    def test_restart_matches_conditional_simulation(self, hierarchical_service, model):
        """Test the restarted price agrees with paths whose first-layer variance was the restart variance"""
        # Arrange
        batch = hierarchical_service.mc_service.simulate_hier(model, model.maturities, paths=40_000, seed=9)
        bucket = np.isclose(batch.hidden[:, 0], model.nodes[1])
        payoffs = np.maximum(105.0 * batch.values[bucket, 2] / batch.values[bucket, 1] - 100.0, 0.0)

        # Act
        restarted = hierarchical_service.conditional_restart(model, 2, 105.0, float(model.nodes[1]))
        price = hierarchical_service.price_european(restarted, 1, 100.0)

        # Assert
        error = payoffs.std(ddof=1) / np.sqrt(payoffs.size)
        assert abs(price - payoffs.mean()) < 3.0 * error


class TestBuildSafeguards:
    """Mean consistency and chaining checks around the coupling step"""

    NODES = 0.01 * np.arange(7)

    @pytest.fixture
    def hierarchical_service(self, config):
        return HierarchicalService(config)

    @pytest.fixture
    def slices(self):
        """v1 in {0.01, 0.03}, v2 in {0.02, 0.04, 0.06}, increments in {0.01, 0.03}"""
        market = MarketService()
        spot = [
            market.mixture_slice(100.0, 0.5, [0.01, 0.03], [0.3, 0.7]),
            market.mixture_slice(100.0, 1.0, [0.02, 0.04, 0.06], [0.15, 0.5, 0.35]),
        ]
        ratio = [market.mixture_slice(1.0, 1.0, [0.01, 0.03], [0.5, 0.5])]
        return spot, ratio

    def test_chaining_violation_raises(self, config, slices):
        """Test a coupling whose rows disagree with the previous layer is refused"""
        # Arrange: the right column marginal on rows weighted 0.15 / 0.85 instead of 0.3 / 0.7
        mass = np.zeros((7, 7))
        mass[1, 2], mass[3, 4], mass[3, 6] = 0.15, 0.5, 0.35
        coupling_service = Mock(spec=CouplingService)
        coupling_service.couple_marginals.return_value = VarianceCoupling(nodes=self.NODES, mass=mass)
        hierarchical_service = HierarchicalService(config, coupling_service=coupling_service)
        spot, ratio = slices

        # Act & Assert
        with pytest.raises(InvariantError, match="chained couplings miss the layer 2"):
            hierarchical_service.build_model(spot, ratio, spot=100.0)
        coupling_service.couple_marginals.assert_called_once()

    def test_consistent_slices_pass_chaining(self, hierarchical_service, slices):
        spot, ratio = slices

        model = hierarchical_service.build_model(spot, ratio, spot=100.0)

        np.testing.assert_allclose(model.nodes, self.NODES, atol=1e-6)
        np.testing.assert_allclose(model.total_marginal(2)[[2, 4, 6]], [0.15, 0.5, 0.35], atol=1e-6)

    def test_small_mean_gap_is_tilted_away(self, hierarchical_service):
        """Test the increment law is tilted to mean(next) - mean(prior) on its own support"""
        # Arrange
        prior = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        following = np.array([0.0, 0.0, 0.48, 0.02, 0.5, 0.0, 0.0])
        increment = np.array([0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0])

        # Act
        adjusted = hierarchical_service.mean_consistent_increment(prior, following, increment, self.NODES, 2)

        # Assert
        assert adjusted.sum() == pytest.approx(1.0)
        assert np.dot(self.NODES, adjusted) == pytest.approx(0.0202, abs=1e-12)
        assert adjusted[0] == adjusted[2] == 0.0

    def test_large_mean_gap_is_left_for_the_coupling(self, hierarchical_service):
        prior = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        following = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        increment = np.array([0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0])

        adjusted = hierarchical_service.mean_consistent_increment(prior, following, increment, self.NODES, 2)

        assert adjusted is increment


class TestContinuousModel:
    """Layered model built from Gamma variance laws"""

    @pytest.fixture
    def hierarchical_service(self, config):
        return HierarchicalService(config)

    @pytest.fixture
    def model(self, hierarchical_service, gamma_slice):
        """v1 ~ Gamma(2, 0.01), independent Gamma(2, 0.01) increment, so v2 ~ Gamma(4, 0.01)"""
        spot = [gamma_slice(100.0, 0.5, 2.0, 0.01), gamma_slice(100.0, 1.0, 4.0, 0.01)]
        ratio = [gamma_slice(1.0, 1.0, 2.0, 0.01)]
        return hierarchical_service.build_model(spot, ratio, spot=100.0)

    def test_build_model_from_continuous_laws(self, model):
        assert model.layers == 2
        assert model.nodes.size == 128
        assert np.dot(model.nodes, model.total_marginal(2)) == pytest.approx(0.04, rel=1e-2)
        assert np.dot(model.nodes, model.increment_marginal(2)) == pytest.approx(0.02, rel=2e-2)

    def test_chained_marginals_match_recovered_laws(self, hierarchical_service, model):
        chained = hierarchical_service.chain_marginals(model)

        assert np.abs(chained[1] - model.total_marginal(2)).sum() < 2e-4

    def test_continuous_model_verifies(self, hierarchical_service, model):
        """Test simulated spot and forward-start marginals match the input slices"""
        report = hierarchical_service.verify_model(model, paths=20_000, seed=13)

        assert report.passed, report.failures()


class TestFlatModel:
    """Deterministic-variance layered models"""

    @pytest.fixture
    def hierarchical_service(self, config):
        return HierarchicalService(config)

    def test_flat_model_is_black_scholes(self, hierarchical_service):
        model = hierarchical_service.flat_model(0.2, [0.5, 1.0], 100.0)

        price = hierarchical_service.price_european(model, 2, 110.0)

        assert model.nodes.size == 3
        assert price == pytest.approx(bs(100.0, 110.0, 0.04), rel=1e-12)

    def test_flat_model_verifies(self, hierarchical_service):
        """Test simulated layers match the analytic lognormal marginals"""
        model = hierarchical_service.flat_model(0.2, [0.5, 1.0], 100.0)

        report = hierarchical_service.verify_model(model, paths=20_000, seed=11)

        assert report.passed
        assert len(report.checks) == 4

    def test_negative_volatility_raises(self, hierarchical_service):
        with pytest.raises(PreconditionError, match="nonnegative"):
            hierarchical_service.flat_model(-0.2, [1.0], 100.0)

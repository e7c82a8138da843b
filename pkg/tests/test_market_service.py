"""
Tests for MarketService - forwards, coordinate changes and chain ingestion
"""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from app.errors import CalibrationError, DomainError, PreconditionError
from app.models.market import ForwardCurve, OptionChain, RateCurve
from app.services.market_service import MarketService


class TestMarketService:
    """Test suite for MarketService"""

    @pytest.fixture
    def market_service(self, config):
        return MarketService(config)

    def test_forward_zero_rate(self, market_service):
        """Test the forward equals the spot without rates"""
        # Arrange
        curve = ForwardCurve(x0=100.0, rates=RateCurve.flat(0.0))

        # Act
        value = market_service.forward(curve, 1.0)

        # Assert
        assert value == 100.0

    def test_forward_piecewise_rates(self, market_service):
        """Test the forward accrues each rate over its own interval"""
        curve = ForwardCurve(x0=100.0, rates=RateCurve(times=np.array([0.0, 1.0]), rates=np.array([0.01, 0.03])))

        value = market_service.forward(curve, 2.0)

        assert value == pytest.approx(100.0 * np.exp(0.04), rel=1e-12)

    def test_forward_before_start_raises(self, market_service):
        """Test a forward before the curve start is rejected"""
        curve = ForwardCurve(x0=100.0, t0=0.5)

        with pytest.raises(DomainError, match="before curve start"):
            market_service.forward(curve, 0.25)

    def test_log_moneyness_of_lognormal(self, market_service):
        """Test the change of variables keeps unit mass and the -v/2 mean"""
        # Arrange
        rn_slice = market_service.mixture_slice(100.0, 1.0, [0.04], [1.0])

        # Act
        density = market_service.to_log_moneyness(rn_slice)

        # Assert
        assert density.mass() == pytest.approx(1.0, abs=1e-8)
        assert trapezoid(density.grid * density.density, density.grid) == pytest.approx(-0.02, abs=1e-4)
        assert density.exp_mean() == pytest.approx(1.0, abs=1e-6)

    def test_log_moneyness_round_trip(self, market_service):
        """Test going to log-moneyness and back keeps the density"""
        rn_slice = market_service.mixture_slice(100.0, 1.0, [0.01, 0.09], [0.5, 0.5])

        back = market_service.from_log_moneyness(market_service.to_log_moneyness(rn_slice))

        np.testing.assert_allclose(back.grid, rn_slice.grid, rtol=1e-12)
        np.testing.assert_allclose(back.density, rn_slice.density, rtol=1e-6, atol=1e-12)

    def test_mixture_slice_rejects_zero_variance(self, market_service):
        """Test a point-mass component cannot be written as a density"""
        with pytest.raises(PreconditionError, match="zero-variance"):
            market_service.mixture_slice(100.0, 1.0, [0.0], [1.0])

    def test_chain_with_three_strikes_raises(self, market_service):
        """Test chains below the strike minimum are rejected"""
        # Arrange
        chain = OptionChain(maturity=1.0, strikes=np.array([90.0, 100.0, 110.0]),
                            call_prices=np.array([12.0, 6.0, 2.5]), forward=100.0)

        # Act & Assert
        with pytest.raises(PreconditionError, match="strikes"):
            market_service.chain_to_density(chain)

    def test_clean_chain_keeps_arbitrage_free_quotes(self, market_service):
        """Test Black-Scholes quotes need no repair"""
        chain = market_service.black_scholes_chain(100.0, 1.0, 0.2)

        prices, repaired = market_service.clean_chain(chain)

        assert repaired == ()
        np.testing.assert_array_equal(prices, chain.undiscounted_calls)

    def test_clean_chain_repairs_small_violation(self, market_service):
        """Test a slightly non-convex quote is projected and reported"""
        # Arrange
        chain = market_service.black_scholes_chain(100.0, 1.0, 0.2, strikes=21)
        calls = chain.call_prices.copy()
        calls[10] += 0.05
        bumped = OptionChain(maturity=1.0, strikes=chain.strikes, call_prices=calls, forward=100.0)

        # Act
        prices, repaired = market_service.clean_chain(bumped)

        # Assert
        assert len(repaired) > 0
        assert np.all(np.diff(prices) <= 1e-10)
        assert np.all(np.diff(prices, 2) >= -1e-10)

    def test_clean_chain_rejects_large_violation(self, market_service):
        """Test quotes too far from convex fail calibration"""
        chain = market_service.black_scholes_chain(100.0, 1.0, 0.2, strikes=21)
        calls = chain.call_prices.copy()
        calls[10] += 20.0
        broken = OptionChain(maturity=1.0, strikes=chain.strikes, call_prices=calls, forward=100.0)

        with pytest.raises(CalibrationError, match="not convexifiable"):
            market_service.clean_chain(broken)

    def test_chain_to_density_black_scholes(self, market_service):
        """Test the extracted density is normalized, centred on the forward and close to lognormal"""
        # Arrange
        chain = market_service.black_scholes_chain(100.0, 1.0, 0.2, strikes=81)
        exact = market_service.mixture_slice(100.0, 1.0, [0.04], [1.0])

        # Act
        rn_slice = market_service.chain_to_density(chain)

        # Assert
        assert rn_slice.mass() == pytest.approx(1.0, abs=1e-6)
        assert rn_slice.mean() == pytest.approx(100.0, rel=1e-3)
        assert np.max(np.abs(rn_slice.cdf_at(exact.grid) - exact.cdf)) < 0.02

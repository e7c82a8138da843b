"""
Tests for MgpService - densities, weighted Black-Scholes pricing,
re-parametrization and admissibility
"""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from app.errors import DomainError, InvariantError, NonInvertibleCdfError, PreconditionError
from app.models.mgp import EuropeanSpec, MgpDescriptor, MixingLaw, OptionKind
from app.services.black_scholes import black_price, implied_volatility
from app.services.mgp_service import MgpService


class TestBlackScholes:
    """Test suite for the Black-Scholes kernels"""

    def test_zero_variance_is_intrinsic(self):
        assert black_price(100.0, 90.0, 0.0) == pytest.approx(10.0)
        assert black_price(100.0, 110.0, 0.0) == 0.0

    def test_implied_volatility_inverts_price(self):
        """Test the implied vol reproduces the input volatility"""
        price = float(black_price(100.0, 110.0, 0.3 ** 2 * 2.0))

        sigma = implied_volatility(price, 100.0, 110.0, 2.0)

        assert sigma == pytest.approx(0.3, abs=1e-10)

    def test_implied_volatility_rejects_arbitrage(self):
        with pytest.raises(DomainError, match="no-arbitrage range"):
            implied_volatility(150.0, 100.0, 100.0, 1.0)


class TestMixingLaw:
    """Test suite for mixing laws"""

    def test_atoms_must_sum_to_one(self):
        with pytest.raises(InvariantError, match="sum to one"):
            MixingLaw.from_atoms([0.0, 1.0], [0.5, 0.6])

    def test_atomic_quantile(self):
        law = MixingLaw.from_atoms([0.1, 0.3], [0.25, 0.75])

        assert law.quantile(0.2) == pytest.approx(0.1)
        assert law.quantile(0.5) == pytest.approx(0.3)
        assert law.cdf(0.2) == pytest.approx(0.25)

    def test_grid_law_flat_interval(self):
        """Test a gap in the density support is reported as a flat CDF stretch"""
        theta = np.linspace(0.0, 1.0, 11)
        density = np.where((theta > 0.35) & (theta < 0.65), 0.0, 1.0)
        density = density / trapezoid(density, theta)

        law = MixingLaw.from_grid(theta, density)

        assert law.flat_intervals() == [(pytest.approx(0.4), pytest.approx(0.6))]


class TestMgpService:
    """Test suite for MgpService"""

    @pytest.fixture
    def mgp_service(self, config):
        return MgpService(config)

    def test_component_density_degenerate(self, mgp_service):
        """Test a zero-variance component returns the degenerate flag"""
        desc = MgpDescriptor(mixing=MixingLaw.point(0.0), maturities=np.array([1.0]),
                             variance_increments=np.array([[0.0]]), x0=100.0)

        value = mgp_service.component_density(desc, 0.0, 100.0, 1.0)

        assert value.degenerate
        assert value.value == 0.0

    def test_single_atom_density_is_component(self, mgp_service, single_atom):
        x = np.array([80.0, 100.0, 125.0])

        mixture = mgp_service.mixture_density(single_atom, x, 1.0)
        components = [mgp_service.component_density(single_atom, 0.0, v, 1.0).value for v in x]

        np.testing.assert_allclose(mixture, components, rtol=1e-14)

    def test_mixture_density_integrates_to_one(self, mgp_service, two_maturity):
        x = np.geomspace(20.0, 400.0, 4001)

        density = mgp_service.mixture_density(two_maturity, x, 0.75)

        assert trapezoid(density, x) == pytest.approx(1.0, abs=1e-6)

    def test_density_outside_horizon_raises(self, mgp_service, single_atom):
        with pytest.raises(DomainError, match="outside"):
            mgp_service.mixture_density(single_atom, 100.0, 1.5)

    def test_single_atom_price_is_black_scholes(self, mgp_service, single_atom):
        """Test a one-atom mixture prices exactly like Black-Scholes"""
        # Arrange
        spec = EuropeanSpec(OptionKind.CALL, 105.0, 1.0)

        # Act
        price = mgp_service.price_european(single_atom, spec)

        # Assert
        assert price == pytest.approx(float(black_price(100.0, 105.0, 0.04)), abs=1e-12)

    def test_put_call_parity(self, mgp_service, two_maturity):
        call = mgp_service.price_european(two_maturity, EuropeanSpec(OptionKind.CALL, 95.0, 0.75))
        put = mgp_service.price_european(two_maturity, EuropeanSpec(OptionKind.PUT, 95.0, 0.75))

        assert call - put == pytest.approx(100.0 - 95.0, abs=1e-10)

    def test_two_atom_delta_is_weighted_average(self, mgp_service, two_atom):
        """Test Greeks are linear in the mixing weights"""
        # Arrange
        spec = EuropeanSpec(OptionKind.CALL, 100.0, 1.0)
        low = MgpDescriptor(mixing=MixingLaw.point(0.0), maturities=np.array([1.0]),
                            variance_increments=np.array([[0.01]]), x0=100.0)
        high = MgpDescriptor(mixing=MixingLaw.point(0.0), maturities=np.array([1.0]),
                             variance_increments=np.array([[0.09]]), x0=100.0)

        # Act
        greeks = mgp_service.greeks(two_atom, spec)

        # Assert
        expected = 0.5 * (mgp_service.greeks(low, spec).delta + mgp_service.greeks(high, spec).delta)
        assert greeks.delta == pytest.approx(expected, abs=1e-14)
        assert greeks.gamma > 0

    @pytest.mark.parametrize("maturity", [0.5, 1.0])
    @pytest.mark.parametrize("strike", [80.0, 90.0, 100.0, 110.0, 120.0])
    def test_greeks_match_central_differences(self, mgp_service, two_maturity, strike, maturity):
        """Test delta and gamma against bumps of the spot by one basis point"""
        # Arrange
        spec = EuropeanSpec(OptionKind.CALL, strike, maturity)
        bump = 1e-4
        up = mgp_service.price_european(two_maturity.scale_spot(1.0 + bump), spec)
        mid = mgp_service.price_european(two_maturity, spec)
        down = mgp_service.price_european(two_maturity.scale_spot(1.0 - bump), spec)
        h = bump * two_maturity.x0

        # Act
        greeks = mgp_service.greeks(two_maturity, spec)

        # Assert
        assert greeks.price == pytest.approx(mid, abs=1e-12)
        assert greeks.delta == pytest.approx((up - down) / (2.0 * h), abs=1e-7)
        assert greeks.gamma == pytest.approx((up - 2.0 * mid + down) / h ** 2, rel=1e-3, abs=1e-6)

    def test_sticky_delta_scaling(self, mgp_service, two_maturity):
        """Test moving spot and strike together scales prices and keeps implied volatility"""
        # Arrange
        moved = two_maturity.scale_spot(1.1)

        # Act & Assert
        for strike in (90.0, 100.0, 110.0):
            before = mgp_service.price_european(two_maturity, EuropeanSpec(OptionKind.CALL, strike, 1.0))
            after = mgp_service.price_european(moved, EuropeanSpec(OptionKind.CALL, 1.1 * strike, 1.0))
            assert after == pytest.approx(1.1 * before, rel=1e-12)
            assert mgp_service.implied_vol(moved, 1.1 * strike, 1.0) == pytest.approx(
                mgp_service.implied_vol(two_maturity, strike, 1.0), rel=1e-8)
        assert moved.mixing is two_maturity.mixing
        np.testing.assert_array_equal(moved.variance_increments, two_maturity.variance_increments)

    def test_strike_must_be_positive(self):
        with pytest.raises(PreconditionError, match="strike must be positive"):
            EuropeanSpec(OptionKind.CALL, 0.0, 1.0)

    def test_forward_start_price_uses_increments(self, mgp_service, two_maturity):
        """Test a cliquet over the second interval weights Black prices of the increment"""
        price = mgp_service.price_forward_start(two_maturity, 1.0, 0.5, 1.0)

        expected = 0.4 * float(black_price(1.0, 1.0, 0.02)) + 0.6 * float(black_price(1.0, 1.0, 0.05))
        assert price == pytest.approx(expected, abs=1e-14)

    def test_implied_vol_of_single_atom(self, mgp_service, single_atom):
        assert mgp_service.implied_vol(single_atom, 90.0, 1.0) == pytest.approx(0.2, abs=1e-9)

    def test_identity_reparametrization(self, mgp_service, two_maturity):
        """Test re-parametrizing onto the same law changes nothing"""
        same = mgp_service.reparametrize_equivalent(two_maturity, two_maturity.mixing)

        report = mgp_service.check_equivalence(two_maturity, same)

        assert report.equivalent
        np.testing.assert_allclose(same.variance_increments, two_maturity.variance_increments)

    def test_reparametrization_onto_new_atoms_keeps_prices(self, mgp_service, two_maturity):
        """Test moving the atoms keeps every vanilla price"""
        # Arrange
        target = MixingLaw.from_atoms([5.0, 7.0], [0.4, 0.6])

        # Act
        moved = mgp_service.reparametrize_equivalent(two_maturity, target)

        # Assert
        for maturity in (0.5, 1.0):
            spec = EuropeanSpec(OptionKind.CALL, 104.0, maturity)
            assert mgp_service.price_european(moved, spec) == pytest.approx(
                mgp_service.price_european(two_maturity, spec), abs=1e-12)

    def test_equivalence_detects_different_variances(self, mgp_service, two_atom, single_atom):
        report = mgp_service.check_equivalence(two_atom, single_atom)

        assert not report.equivalent
        assert report.worst_maturity == 1.0

    def test_reparametrization_rejects_flat_cdf(self, mgp_service, two_atom):
        theta = np.linspace(0.0, 1.0, 11)
        density = np.where((theta > 0.35) & (theta < 0.65), 0.0, 1.0)
        target = MixingLaw.from_grid(theta, density / trapezoid(density, theta))

        with pytest.raises(NonInvertibleCdfError, match="flat"):
            mgp_service.reparametrize_equivalent(two_atom, target)

    def test_single_atom_is_admissible(self, mgp_service, single_atom):
        report = mgp_service.check_strong_solution(single_atom)

        assert report.finite
        assert report.c0 == pytest.approx(20.0)
        assert report.value == pytest.approx(np.exp(20.0 * 0.04))

    def test_exploding_tail_is_divergent(self, mgp_service):
        """Test a variance rate growing like theta^2 against an exponential tail diverges"""
        # Arrange
        theta = np.linspace(0.0, 10.0, 201)
        density = np.exp(-theta)
        law = MixingLaw.from_grid(theta, density / trapezoid(density, theta))
        desc = MgpDescriptor(mixing=law, maturities=np.array([1.0]),
                             variance_increments=(0.01 * (1.0 + theta) ** 2)[:, None], x0=100.0)

        # Act
        report = mgp_service.check_strong_solution(desc)

        # Assert
        assert not report.finite
        assert report.tail_slope >= 0

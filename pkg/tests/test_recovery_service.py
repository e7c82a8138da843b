"""
Tests for RecoveryService and the inverse Laplace kernels
"""

import numpy as np
import pytest
from scipy.stats import gamma

from app.config import InversionMethod
from app.errors import InconsistentTransformError, InversionError, PreconditionError, RepricingError, TruncationError
from app.models.market import RiskNeutralSlice
from app.models.mgp import EuropeanSpec, OptionKind
from app.models.recovery import TransformProfile
from app.services.black_scholes import black_price
from app.services.laplace_inversion import matrix_pencil_atoms, stehfest, stehfest_sweep, talbot
from app.services.market_service import MarketService
from app.services.mgp_service import MgpService
from app.services.recovery_service import RecoveryService


class TestLaplaceInversion:
    """Test suite for the inversion kernels"""

    def test_talbot_exponential(self):
        """Test 1/(p+1) inverts to e^{-t}"""
        times = np.array([0.5, 1.0, 2.0])

        result = talbot(lambda p: 1.0 / (p + 1.0), times)

        assert np.all(result.stable)
        np.testing.assert_allclose(result.values, np.exp(-times), rtol=1e-8)

    def test_stehfest_exponential(self):
        times = np.array([0.5, 1.0, 2.0])

        values = stehfest(lambda p: 1.0 / (p + 1.0), times, terms=14)

        np.testing.assert_allclose(values, np.exp(-times), rtol=1e-3)

    def test_stehfest_sweep_shares_evaluations(self):
        """Test every count of a sweep matches its single-count inverse from one batch of F calls"""
        calls = []

        def function(p):
            calls.append(p.size)
            return 1.0 / (p + 1.0)

        times = np.array([0.0, 0.5, 1.0])
        sweep = stehfest_sweep(function, times, (6, 10, 14))

        assert len(calls) == 1
        assert sweep[14][0] == 0.0
        np.testing.assert_allclose(sweep[10], stehfest(lambda p: 1.0 / (p + 1.0), times, terms=10))

    def test_stehfest_sweep_rejects_odd_counts(self):
        with pytest.raises(PreconditionError, match="even"):
            stehfest_sweep(lambda p: 1.0 / p, np.array([1.0]), (5,))

    def test_matrix_pencil_finds_two_atoms(self):
        """Test a two-atom transform is identified exactly"""
        fit = matrix_pencil_atoms(lambda eta: 0.3 * np.exp(-0.02 * eta) + 0.7 * np.exp(-0.05 * eta), 0.03)

        assert fit is not None
        np.testing.assert_allclose(fit.locations, [0.02, 0.05], rtol=1e-6)
        np.testing.assert_allclose(fit.weights, [0.3, 0.7], rtol=1e-6)

    def test_matrix_pencil_rejects_continuous_law(self):
        """Test the transform of an exponential law is not a few atoms"""
        assert matrix_pencil_atoms(lambda eta: 1.0 / (1.0 + 0.04 * eta), 0.04) is None


class TestRecoveryService:
    """Test suite for RecoveryService"""

    @pytest.fixture
    def market_service(self, config):
        return MarketService(config)

    @pytest.fixture
    def recovery_service(self, config, market_service):
        return RecoveryService(config, market_service, MgpService(config))

    def test_char_function_at_zero_is_mass(self, recovery_service, market_service):
        density = market_service.to_log_moneyness(market_service.mixture_slice(100.0, 1.0, [0.04], [1.0]))

        value = recovery_service.char_function(density, 0.0)

        assert abs(value - 1.0) < 1e-8

    def test_char_function_of_gaussian(self, recovery_service, market_service):
        """Test the quadrature matches the Gaussian characteristic function"""
        density = market_service.to_log_moneyness(market_service.mixture_slice(100.0, 1.0, [0.04], [1.0]))
        eta = np.array([0.5, 1.0, 3.0])

        values = recovery_service.char_function(density, eta)

        np.testing.assert_allclose(values, np.exp(-0.02j * eta - 0.02 * eta ** 2), atol=1e-6)

    def test_build_G_of_mixture_is_laplace_transform(self, recovery_service, market_service):
        """Test G equals E[exp(-eta theta)] over the total-variance atoms"""
        # Arrange
        density = market_service.to_log_moneyness(
            market_service.mixture_slice(100.0, 1.0, [0.01, 0.09], [0.5, 0.5]))
        eta = np.linspace(0.0, 20.0, 11)

        # Act
        profile = recovery_service.build_G(density, eta, time_scale=1.0)

        # Assert
        expected = 0.5 * np.exp(-0.01 * eta) + 0.5 * np.exp(-0.09 * eta)
        np.testing.assert_allclose(profile.values, expected, atol=1e-6)
        assert profile.imag_residue < 1e-6

    def test_build_G_rejects_non_mixture(self, recovery_service, market_service):
        """Test a skewed density leaves an imaginary residue"""
        # Arrange
        rn_slice = market_service.mixture_slice(100.0, 1.0, [0.04], [1.0])
        skewed = rn_slice.density * (1.0 + 0.5 * np.tanh((rn_slice.grid - 100.0) / 10.0))
        density = market_service.to_log_moneyness(RiskNeutralSlice.from_density(1.0, 100.0, rn_slice.grid, skewed))

        # Act & Assert
        with pytest.raises(InconsistentTransformError, match="imaginary residue"):
            recovery_service.build_G(density, np.linspace(0.0, 50.0, 11), time_scale=1.0)

    def test_exponential_is_completely_monotone(self, recovery_service):
        profile = TransformProfile.from_function(lambda eta: np.exp(-eta), np.linspace(0.0, 5.0, 40))

        assert recovery_service.check_completely_monotone(profile).passed

    def test_cosine_is_not_completely_monotone(self, recovery_service):
        profile = TransformProfile.from_function(np.cos, np.linspace(0.0, 5.0, 40))

        report = recovery_service.check_completely_monotone(profile)

        assert not report.passed
        assert report.order is not None

    def test_invert_refuses_non_monotone_transform(self, recovery_service):
        profile = TransformProfile.from_function(np.cos, np.linspace(0.0, 5.0, 40))

        with pytest.raises(InversionError, match="not completely monotone"):
            recovery_service.invert_laplace(profile, np.linspace(0.0, 1.0, 11))

    def test_dirac_recovery(self, recovery_service):
        """Test G = exp(-0.04 eta) recovers a point mass at 0.04"""
        # Arrange
        profile = TransformProfile.from_function(lambda eta: np.exp(-0.04 * eta), np.geomspace(1e-2, 1e3, 64))
        theta = np.linspace(0.0, 0.1, 101)

        # Act
        recovered = recovery_service.invert_laplace(profile, theta)

        # Assert
        assert recovered.atoms is not None
        assert recovered.diagnostics.method_used == "atoms"
        assert recovered.quantile(0.5) == pytest.approx(0.04, rel=1e-6)
        assert recovered.cdf_at(0.039) == 0.0
        assert recovered.cdf_at(0.041) == 1.0

    def test_talbot_on_closed_form_transform(self, recovery_service):
        """Test Talbot inverts a transform that continues analytically onto its contour"""
        # Arrange: Gamma(shape 2, scale 0.02) has G = (1 + 0.02 eta)^-2
        profile = TransformProfile.from_function(lambda eta: (1.0 + 0.02 * eta) ** -2, np.geomspace(1e-2, 1e3, 64))
        theta = np.linspace(0.0, 0.4, 801)

        # Act
        recovered = recovery_service.invert_laplace(profile, theta)

        # Assert
        assert recovered.diagnostics.method_used == InversionMethod.TALBOT.value
        assert recovered.diagnostics.fallback_reason is None
        assert np.max(np.abs(recovered.cdf - gamma.cdf(theta, 2.0, scale=0.02))) < 1e-3
        assert recovered.diagnostics.transform_residual < 1e-3

    def test_stehfest_method_on_request(self, recovery_service):
        profile = TransformProfile.from_function(lambda eta: (1.0 + 0.02 * eta) ** -2, np.geomspace(1e-2, 1e3, 64))
        theta = np.linspace(0.0, 0.4, 801)

        recovered = recovery_service.invert_laplace(profile, theta, method=InversionMethod.STEHFEST)

        assert recovered.diagnostics.method_used == "stehfest"
        assert recovered.diagnostics.stehfest_change < 1e-3
        assert recovered.mean() == pytest.approx(0.04, rel=5e-3)

    def test_coarse_grid_misses_accuracy_target(self, recovery_service):
        """Test a mixing grid too coarse for the law fails instead of warning"""
        profile = TransformProfile.from_function(lambda eta: (1.0 + 0.02 * eta) ** -2, np.geomspace(1e-2, 1e3, 64))

        with pytest.raises(InversionError, match="misses G"):
            recovery_service.invert_laplace(profile, np.linspace(0.0, 0.4, 16), method=InversionMethod.STEHFEST)

    def test_theta_grid_must_ascend(self, recovery_service):
        profile = TransformProfile.from_function(lambda eta: np.exp(-eta), np.linspace(0.0, 5.0, 10))

        with pytest.raises(PreconditionError, match="theta grid"):
            recovery_service.invert_laplace(profile, np.array([0.0, 0.2, 0.1]))

    def test_recover_slice_of_two_atom_mixture(self, recovery_service, market_service):
        """Test a lognormal mixture slice gives back its total-variance atoms"""
        rn_slice = market_service.mixture_slice(100.0, 1.0, [0.02, 0.06], [0.3, 0.7])

        recovered = recovery_service.recover_slice(rn_slice)

        assert recovered.atoms is not None
        np.testing.assert_allclose(np.sort(recovered.atoms.theta), [0.02, 0.06], rtol=1e-4)
        assert recovered.cdf_at(0.04) == pytest.approx(0.3, abs=1e-4)

    def test_calibrate_mgd_reprices_mixture(self, recovery_service, market_service, config):
        """Test the calibrated MGD reproduces vanilla prices of the input mixtures"""
        # Arrange
        slices = [
            market_service.mixture_slice(100.0, 0.5, [0.01, 0.03], [0.5, 0.5]),
            market_service.mixture_slice(100.0, 1.0, [0.02, 0.06], [0.5, 0.5]),
        ]
        mgp_service = MgpService(config)

        # Act
        result = recovery_service.calibrate_mgd(slices, spot=100.0)

        # Assert
        desc = result.descriptor
        assert desc.mixing.size == config.quantile_grid_points
        assert desc.x0 == pytest.approx(100.0)
        assert result.calendar.violations == 0
        for maturity, variances in ((0.5, (0.01, 0.03)), (1.0, (0.02, 0.06))):
            spec = EuropeanSpec(OptionKind.CALL, 105.0, maturity)
            expected = 0.5 * sum(float(black_price(100.0, 105.0, v)) for v in variances)
            assert mgp_service.price_european(desc, spec) == pytest.approx(expected, rel=1e-3)

    def test_calibrate_needs_increasing_maturities(self, recovery_service, market_service):
        slices = [market_service.mixture_slice(100.0, 1.0, [0.04], [1.0]),
                  market_service.mixture_slice(100.0, 0.5, [0.02], [1.0])]

        with pytest.raises(PreconditionError, match="increasing maturities"):
            recovery_service.calibrate_mgd(slices)

    def test_infer_rates_from_forwards(self):
        """Test forwards imply piecewise rates and the spot"""
        slices_forwards = [(0.5, 101.0), (1.0, 103.0)]
        slices = [MarketService().mixture_slice(f, t, [0.04 * t], [1.0]) for t, f in slices_forwards]

        rates, x0 = RecoveryService.infer_rates(slices, spot=100.0)

        assert x0 == pytest.approx(100.0)
        np.testing.assert_allclose(rates.rates, [np.log(1.01) / 0.5, np.log(103.0 / 101.0) / 0.5])


class TestContinuousRecovery:
    """Continuous mixing laws recovered from forward-generated slices"""

    @pytest.fixture
    def recovery_service(self, config):
        return RecoveryService(config)

    @pytest.mark.parametrize("shape, scale", [(2.0, 0.02), (4.0, 0.01)])
    def test_gamma_law_within_cdf_target(self, recovery_service, gamma_slice, shape, scale):
        """Test a Gamma total-variance law comes back within 1e-3 in CDF"""
        # Arrange
        rn_slice = gamma_slice(100.0, 1.0, shape, scale)

        # Act
        recovered = recovery_service.recover_slice(rn_slice, force=True)

        # Assert
        assert recovered.atoms is None
        assert recovered.diagnostics.method_used == InversionMethod.STEHFEST.value
        assert recovered.diagnostics.stehfest_terms >= 10
        assert recovered.diagnostics.transform_residual < 1e-3
        assert np.max(np.abs(recovered.cdf - gamma.cdf(recovered.theta, shape, scale=scale))) < 1e-3

    def test_gamma_law_on_narrow_grid(self, recovery_service, gamma_slice):
        """Test a grid cut at y = 2 still recovers the law and reports why Talbot was skipped"""
        # Arrange
        grid = 100.0 * np.exp(np.linspace(-3.5, 2.0, 512))
        rn_slice = gamma_slice(100.0, 1.0, 2.0, 0.02, grid=grid)

        # Act
        recovered = recovery_service.recover_slice(rn_slice, force=True)

        # Assert
        assert "Talbot contour" in recovered.diagnostics.fallback_reason
        assert np.max(np.abs(recovered.cdf - gamma.cdf(recovered.theta, 2.0, scale=0.02))) < 1e-3
        assert recovered.mean() == pytest.approx(0.04, rel=1e-2)

    def test_transform_with_continued_tails(self, recovery_service, gamma_slice):
        """Test G of a sampled Gamma slice matches (1 + scale eta)^-shape on the real axis"""
        density = MarketService().to_log_moneyness(gamma_slice(100.0, 1.0, 2.0, 0.02))
        eta = np.geomspace(0.1, 200.0, 25)

        profile = recovery_service.build_G(density, eta, time_scale=1.0)

        np.testing.assert_allclose(profile.values, (1.0 + 0.02 * eta) ** -2, atol=1e-4)

    def test_divergent_contour_raises_truncation(self, recovery_service, gamma_slice):
        """Test G off the convergence half-plane is refused rather than guessed"""
        density = MarketService().to_log_moneyness(gamma_slice(100.0, 1.0, 2.0, 0.02))

        with pytest.raises(TruncationError, match="diverges"):
            recovery_service.char_function(density, np.array([1.0 - 200.0j]))

    def test_calibrate_continuous_slices(self, recovery_service, gamma_slice):
        """Test calibration from Gamma slices reproduces their densities"""
        slices = [gamma_slice(100.0, 0.5, 2.0, 0.01), gamma_slice(100.0, 1.0, 4.0, 0.01)]

        result = recovery_service.calibrate_mgd(slices, spot=100.0)

        for entry in result.maturities:
            assert entry.l1_error < 1e-2
            assert entry.inversion.method_used == InversionMethod.STEHFEST.value

    def test_calibration_gap_above_tolerance_raises(self, config):
        """Test a calibrated density missing its slice fails instead of warning"""
        recovery_service = RecoveryService(config.model_copy(update={"calibration_l1_tolerance": 1e-14}))
        slices = [MarketService().mixture_slice(100.0, 1.0, [0.02, 0.06], [0.5, 0.5])]

        with pytest.raises(RepricingError, match="away in L1"):
            recovery_service.calibrate_mgd(slices, spot=100.0)

"""
Recovery Service - Business Logic Layer
Characteristic functions of log-moneyness densities, the transform G, the
complete-monotonicity screen, inverse Laplace recovery of mixing laws and
calibration of an MGD from risk-neutral slices
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import isotonic_regression

from ..config import InversionMethod, MixvolSettings, settings as default_settings
from ..errors import (
    CalendarArbitrageError, InconsistentTransformError, InversionError, MixvolError,
    PreconditionError, RepricingError, TruncationError
)
from ..models.market import LogMoneynessDensity, RateCurve, RiskNeutralSlice
from ..models.mgp import MgpDescriptor, MixingLaw, trapezoid_weights
from ..models.recovery import (
    CalendarRepair, CalibrationResult, InversionDiagnostics, MaturityDiagnostics,
    MonotonicityReport, RecoveredMixing, TransformProfile, split_atoms
)
from .laplace_inversion import matrix_pencil_atoms, stehfest_sweep, talbot
from .market_service import MarketService
from .mgp_service import MgpService

logger = logging.getLogger(__name__)

QUADRATURE_CHUNK = 256


def transform_argument(eta, time_scale: float) -> np.ndarray:
    """xi(eta) = sqrt(2 eta / t - 1/4) - i/2 on the principal branch"""
    eta = np.asarray(eta, dtype=complex)
    return np.sqrt(2.0 * eta / time_scale - 0.25) - 0.5j


class RecoveryService:
    """
    Service recovering mixing laws from risk-neutral densities

    A lognormal mixture has F(E)(xi(eta)) = E[exp(-eta theta)], so the
    mixing law is the inverse Laplace transform of G.
    """

    def __init__(self, config: MixvolSettings = default_settings,
                 market_service: Optional[MarketService] = None,
                 mgp_service: Optional[MgpService] = None):
        self.config = config
        self.market_service = market_service or MarketService(config)
        self.mgp_service = mgp_service or MgpService(config)

    # Transforms

    def _quadrature(self, density: LogMoneynessDensity, xi) -> Tuple[np.ndarray, np.ndarray]:
        """
        int e^{i xi y} E(y) dy as the trapezoid sum on the grid plus both
        tails continued exponentially past the edges, scaled to unit mass.
        The error is how far the continuation moves when its decay rate is
        taken one node further in; it is infinite where the tails diverge.
        """
        xi = np.atleast_1d(np.asarray(xi, dtype=complex)).ravel()
        y, e = density.grid, density.density
        zero_tails, zero_error = _continued_tails(y, e, np.zeros(1, dtype=complex))
        mass = trapezoid(e, y) + zero_tails[0].real
        values = np.empty(xi.size, dtype=complex)
        errors = np.empty(xi.size)
        for start in range(0, xi.size, QUADRATURE_CHUNK):
            z = xi[start:start + QUADRATURE_CHUNK]
            with np.errstate(over="ignore", invalid="ignore"):
                body = trapezoid(np.exp(1j * np.outer(z, y)) * e, y, axis=1)
            tails, error = _continued_tails(y, e, z)
            values[start:start + z.size] = (body + tails) / mass
            errors[start:start + z.size] = np.where(np.isfinite(values[start:start + z.size]),
                                                    (error + zero_error[0]) / mass, np.inf)
        return values, errors

    def char_function(self, density: LogMoneynessDensity, eta):
        """
        F(E)(eta) = int e^{i eta y} E(y) dy by quadrature on the y grid with
        continued tails. Raises TruncationError when the tail uncertainty
        exceeds the truncation tolerance.
        """
        values, errors = self._quadrature(density, eta)
        worst = int(np.argmax(errors))
        if errors[worst] > self.config.truncation_tolerance:
            detail = f"is uncertain by {errors[worst]:.2e}" if np.isfinite(errors[worst]) else "diverges"
            raise TruncationError(
                f"characteristic function at {complex(np.ravel(eta)[worst]):.4g} {detail} "
                f"outside the log-moneyness grid; widen the grid",
                {"maturity": density.maturity, "truncation": float(errors[worst])},
            )
        return complex(values[0]) if np.ndim(eta) == 0 else values.reshape(np.shape(eta))

    def build_G(self, density: LogMoneynessDensity, eta, time_scale: Optional[float] = None,
                residue_tolerance: Optional[float] = None) -> TransformProfile:
        """
        G(eta) = F(E)(xi(eta)); real for any lognormal mixture.
        time_scale defaults to the slice maturity (theta as a variance rate);
        time_scale = 1 makes theta the total variance.
        """
        scale = density.maturity if time_scale is None else float(time_scale)
        tolerance = self.config.residue_tolerance if residue_tolerance is None else residue_tolerance
        eta = np.asarray(eta, dtype=float)
        values, errors = self._quadrature(density, transform_argument(eta, scale))
        if np.max(errors) > self.config.truncation_tolerance:
            raise TruncationError(
                f"transform at maturity {density.maturity} loses {np.max(errors):.2e} outside the grid",
                {"maturity": density.maturity, "truncation": float(np.max(errors))},
            )
        residue = float(np.max(np.abs(values.imag)))
        if residue > tolerance:
            raise InconsistentTransformError(
                f"G at maturity {density.maturity} has imaginary residue {residue:.2e}; "
                f"the slice is not a lognormal mixture",
                {"maturity": density.maturity, "residue": residue},
            )

        def evaluator(points):
            return self.char_function(density, transform_argument(points, scale))

        profile = TransformProfile(
            eta=eta, values=values.real, time_scale=scale, imag_residue=residue,
            noise=max(residue, float(np.max(errors))), evaluator=evaluator, analytic=False,
            maturity=density.maturity,
        )
        logger.debug(f"Built G at maturity {density.maturity} on {eta.size} nodes, residue {residue:.2e}")
        return profile

    # Screening

    def check_completely_monotone(self, profile: TransformProfile,
                                  max_order: Optional[int] = None) -> MonotonicityReport:
        """
        Necessary-condition screen: (-1)^n times every n-th divided difference
        over consecutive nodes must be nonnegative up to the rounding noise of
        its own terms. Returns the first failing order and window start.
        """
        max_order = self.config.monotone_max_order if max_order is None else max_order
        if not 0 <= max_order <= 6:
            raise PreconditionError("monotonicity screen supports orders 0 to 6")
        tolerance = self.config.monotone_tolerance
        eta, values = profile.eta, profile.values
        for order in range(min(max_order, eta.size - 1) + 1):
            nodes = sliding_window_view(eta, order + 1)
            samples = sliding_window_view(values, order + 1)
            gaps = nodes[:, :, None] - nodes[:, None, :]
            gaps[:, np.arange(order + 1), np.arange(order + 1)] = 1.0
            weights = 1.0 / np.prod(gaps, axis=2)
            differences = (-1) ** order * np.sum(weights * samples, axis=1)
            bound = (tolerance * np.sum(np.abs(weights * samples), axis=1)
                     + 10.0 * profile.noise * np.sum(np.abs(weights), axis=1))
            failing = np.flatnonzero(differences < -bound)
            if failing.size:
                at = float(nodes[failing[0], 0])
                logger.info(f"Complete monotonicity fails at order {order}, eta {at:.6g}")
                return MonotonicityReport(passed=False, order=order, eta=at)
        return MonotonicityReport(passed=True)

    # Inversion

    def detect_atoms(self, profile: TransformProfile) -> Optional[MixingLaw]:
        """Exact finite mixture behind G, when a few point masses reproduce it to noise"""
        if profile.evaluator is None:
            return None
        below = np.flatnonzero((profile.values < 0.9) & (profile.values > 0) & (profile.eta > 0))
        if below.size == 0:
            return None
        scale = -np.log(profile.values[below[0]]) / profile.eta[below[0]]
        noise = max(1e-10, 10.0 * profile.noise)
        try:
            fit = matrix_pencil_atoms(profile.evaluate, scale, noise=noise)
        except TruncationError:
            return None
        if fit is None:
            return None
        model = np.exp(-np.outer(profile.eta, fit.locations)) @ fit.weights
        if np.max(np.abs(model - profile.values)) > max(10.0 * noise, 1e-9):
            return None
        return MixingLaw.from_atoms(np.clip(fit.locations, 0.0, None), fit.weights)

    def invert_laplace(self, profile: TransformProfile, theta_grid, method: Optional[InversionMethod] = None,
                       force: bool = False) -> RecoveredMixing:
        """
        Mixing density on the theta grid.

        Finite mixtures are identified exactly; otherwise fixed Talbot is used,
        falling back to Gaver-Stehfest when G cannot be evaluated on the
        contour. Negative values are clipped and the mass renormalized.
        """
        theta = np.asarray(theta_grid, dtype=float)
        if theta.size < 3 or theta[0] < 0 or np.any(np.diff(theta) <= 0):
            raise PreconditionError("theta grid must be nonnegative, ascending, with at least 3 nodes")
        if not force:
            report = self.check_completely_monotone(profile)
            if not report.passed:
                raise InversionError(
                    f"G is not completely monotone (order {report.order} at eta {report.eta:.6g})",
                    {"order": report.order, "eta": report.eta},
                )
        try:
            atoms = self.detect_atoms(profile)
            if atoms is not None:
                return self._atomic_recovery(atoms, theta)
            return self._continuous_recovery(profile, theta, method or self.config.inversion_method)
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error inverting transform: {e}")
            raise

    def _atomic_recovery(self, atoms: MixingLaw, theta: np.ndarray) -> RecoveredMixing:
        masses = np.zeros(theta.size)
        inside = (atoms.theta >= theta[0]) & (atoms.theta <= theta[-1])
        if np.any(inside):
            masses = split_atoms(theta, atoms.theta[inside], atoms.masses[inside]) * atoms.masses[inside].sum()
        widths = trapezoid_weights(theta)
        diagnostics = InversionDiagnostics(method_used="atoms", clipped_mass=0.0, renormalization=1.0,
                                           atoms_detected=atoms.size)
        logger.info(f"Transform identified as {atoms.size} atoms at {np.round(atoms.theta, 8).tolist()}")
        return RecoveredMixing(theta=theta, density=masses / widths, cdf=atoms.cdf(theta),
                               diagnostics=diagnostics, atoms=atoms)

    def _continuous_recovery(self, profile: TransformProfile, theta: np.ndarray,
                             method: InversionMethod) -> RecoveredMixing:
        """
        A G sampled from a slice exists only where the exponential moments of
        the density converge; Talbot nodes beyond that half-plane raise
        TruncationError and the real-axis Gaver-Stehfest sum takes over.
        """
        positive = theta > 0
        raw = np.zeros(theta.size)
        unstable = 0
        fallback = None
        contour_truncation = None
        used = method
        if method == InversionMethod.TALBOT:
            try:
                cap = 2.0 / float(np.min(np.diff(theta)))
                result = talbot(profile.evaluate, theta[positive], self.config.talbot_nodes, value_cap=cap)
                raw[positive] = result.values
                unstable = int(np.sum(~result.stable))
                if not np.any(result.stable):
                    fallback = "no stable Talbot node"
            except TruncationError as e:
                fallback = f"G not evaluable on the Talbot contour: {e}"
                truncation = e.context.get("truncation")
                if truncation is not None and np.isfinite(truncation):
                    contour_truncation = float(truncation)
            except PreconditionError as e:
                fallback = f"G not evaluable on the Talbot contour: {e}"
            if fallback:
                used = InversionMethod.STEHFEST
                unstable = 0
                logger.info(f"Falling back to Gaver-Stehfest: {fallback}")
            elif unstable:
                logger.warning(f"{unstable} unstable Talbot nodes set to zero")
        terms = 0
        change = None
        if used == InversionMethod.STEHFEST:
            raw[positive], terms, change = self._stehfest_density(profile, theta)
        if not positive[0]:
            raw[0] = max(0.0, 2.0 * raw[1] - raw[2])

        negative = np.clip(-raw, 0.0, None)
        density = np.clip(raw, 0.0, None)
        mass = trapezoid(density, theta)
        if not mass > 0:
            raise InversionError("inversion produced no positive mass", {"method": used.value})
        clipped = float(trapezoid(negative, theta) / mass)
        if clipped > self.config.max_clipped_mass:
            raise InversionError(f"inversion clipped {clipped:.1%} of the mass",
                                 {"clipped_mass": clipped, "method": used.value})
        if clipped > self.config.accepted_clipped_mass:
            logger.warning(f"Inversion clipped {clipped:.2%} of the mass, above the accepted level")
        density = density / mass
        cdf = cumulative_trapezoid(density, theta, initial=0.0)
        cdf = np.clip(cdf / cdf[-1], 0.0, 1.0)

        residual = self._transform_residual(profile, theta, density)
        diagnostics = InversionDiagnostics(
            method_used=used.value, clipped_mass=clipped, renormalization=float(1.0 / mass),
            talbot_nodes=self.config.talbot_nodes if used == InversionMethod.TALBOT else 0,
            stehfest_terms=terms, unstable_nodes=unstable, fallback_reason=fallback,
            contour_truncation=contour_truncation, stehfest_change=change, transform_residual=residual,
        )
        target = self.config.recovery_tolerance + profile.noise
        context = {"method": used.value, "transform_residual": residual, "stehfest_change": change,
                   "stehfest_terms": terms, "maturity": profile.maturity}
        if residual > target:
            raise InversionError(f"recovered law misses G by {residual:.2e}, above the target {target:.1e}", context)
        if change is not None and change > target:
            raise InversionError(f"Gaver-Stehfest CDF still moves by {change:.2e} at {terms} terms, "
                                 f"above the target {target:.1e}", context)
        logger.info(f"Recovered mixing density by {used.value}: clipped {clipped:.2e}, "
                    f"renormalized by {1 / mass:.6f}, transform residual {residual:.2e}")
        return RecoveredMixing(theta=theta, density=density, cdf=cdf, diagnostics=diagnostics)

    def _stehfest_density(self, profile: TransformProfile,
                          theta: np.ndarray) -> Tuple[np.ndarray, int, Optional[float]]:
        """
        Gaver-Stehfest density at the positive nodes for the even term count
        whose accumulated CDF moves least against two terms fewer, with that
        count and the move. Smooth quadrature errors in G cancel in the
        weighted sum; only rounding noise grows with the term count.
        """
        t = theta[theta > 0]
        top = self.config.stehfest_terms + self.config.stehfest_terms % 2
        sweep = stehfest_sweep(profile.evaluate, t, range(4, top + 1, 2))
        if top < 6:
            return sweep[top], top, None
        changes = {
            n: float(np.max(np.abs(cumulative_trapezoid(sweep[n] - sweep[n - 2], t, initial=0.0))))
            for n in range(6, top + 1, 2)
        }
        terms = min(changes, key=lambda n: (changes[n], -n))
        logger.debug(f"Gaver-Stehfest CDF moves by {changes} per term count; using {terms}")
        return sweep[terms], terms, changes[terms]

    @staticmethod
    def _transform_residual(profile: TransformProfile, theta: np.ndarray, density: np.ndarray) -> float:
        """Largest |G - transform of the piecewise-linear recovered density| on the profile grid"""
        recovered = linear_density_transform(theta, density, profile.eta)
        return float(np.max(np.abs(recovered - profile.values)))

    # Calibration

    def recover_slice(self, rn_slice: RiskNeutralSlice, residue_tolerance: Optional[float] = None,
                      force: bool = False) -> RecoveredMixing:
        """Total-variance mixing law of one slice"""
        density = self.market_service.to_log_moneyness(rn_slice)
        spread = density.variance()
        eta = np.geomspace(1e-2, 50.0, self.config.transform_grid_points) / spread
        profile = self.build_G(density, eta, time_scale=1.0, residue_tolerance=residue_tolerance)
        theta = np.linspace(0.0, self.config.mixing_grid_span * spread, self.config.mixing_grid_points)
        return self.invert_laplace(profile, theta, force=force)

    def calibrate_mgd(self, slices: Sequence[RiskNeutralSlice], spot: Optional[float] = None,
                      residue_tolerance: Optional[float] = None, force: bool = False) -> CalibrationResult:
        """
        Uniform-mixing MGD whose component at quantile u carries total
        variance Z_t^{-1}(u) at each maturity, made calendar-monotone by
        isotonic projection per quantile.
        """
        slices = list(slices)
        if not slices:
            raise PreconditionError("calibration needs at least one slice")
        maturities = np.array([s.maturity for s in slices])
        if np.any(np.diff(maturities) <= 0):
            raise PreconditionError("slices must have strictly increasing maturities")
        try:
            with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
                recovered = list(pool.map(lambda s: self.recover_slice(s, residue_tolerance, force), slices))

            n = self.config.quantile_grid_points
            levels = (np.arange(n) + 0.5) / n
            raw = np.column_stack([r.quantile(levels) for r in recovered])
            variances, calendar = self._calendar_projection(raw, levels)

            rates, x0 = self.infer_rates(slices, spot)
            increments = np.clip(np.diff(variances, axis=1, prepend=0.0), 0.0, None)
            descriptor = MgpDescriptor(
                mixing=MixingLaw.uniform(n), maturities=maturities, variance_increments=increments,
                x0=x0, t0=0.0, rates=rates,
            )
            diagnostics = []
            for rn_slice, mixing in zip(slices, recovered):
                error = self._l1_error(descriptor, rn_slice)
                if error > self.config.calibration_l1_tolerance:
                    raise RepricingError(
                        f"calibrated density at maturity {rn_slice.maturity} is {error:.2e} away in L1, "
                        f"above {self.config.calibration_l1_tolerance:.1e}",
                        {"maturity": rn_slice.maturity, "l1_error": error},
                    )
                diagnostics.append(MaturityDiagnostics(rn_slice.maturity, mixing.diagnostics, error))
            logger.info(f"Calibrated MGD on {maturities.size} maturities with {n} quantile components")
            return CalibrationResult(descriptor=descriptor, maturities=diagnostics, calendar=calendar)
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error calibrating MGD: {e}")
            raise

    def _calendar_projection(self, raw: np.ndarray, levels: np.ndarray):
        projected = np.array([isotonic_regression(row, increasing=True).x for row in raw])
        changed = np.abs(projected - raw) > 1e-12 * np.maximum(np.abs(raw), 1.0)
        rows = np.flatnonzero(changed.any(axis=1))
        relative = np.abs(projected - raw) / np.maximum(np.abs(raw), 1e-300)
        worst = float(relative[changed].max()) if rows.size else 0.0
        if worst > self.config.calendar_repair_tolerance:
            index = np.unravel_index(int(np.argmax(np.where(changed, relative, 0.0))), relative.shape)
            raise CalendarArbitrageError(
                f"calendar repair changes total variance by {worst:.1%} at quantile {levels[index[0]]:.4f}",
                {"quantile": float(levels[index[0]]), "relative_change": worst},
            )
        if rows.size:
            logger.warning(f"Calendar monotonicity repaired on {rows.size} quantiles, max change {worst:.2e}")
        return projected, CalendarRepair(violations=int(rows.size), max_relative_change=worst,
                                         repaired_quantiles=tuple(float(u) for u in levels[rows]))

    @staticmethod
    def infer_rates(slices: Sequence[RiskNeutralSlice], spot: Optional[float]):
        """Piecewise-constant rates implied by the slice forwards"""
        maturities = np.array([s.maturity for s in slices])
        forwards = np.array([s.forward for s in slices])
        later = np.log(forwards[1:] / forwards[:-1]) / np.diff(maturities)
        if spot is not None:
            first = np.log(forwards[0] / spot) / maturities[0]
        else:
            first = later[0] if later.size else 0.0
        rates = np.concatenate([[first], later])
        x0 = forwards[0] * np.exp(-first * maturities[0])
        return RateCurve(times=np.concatenate([[0.0], maturities[:-1]]), rates=rates), float(x0)

    def _l1_error(self, descriptor: MgpDescriptor, rn_slice: RiskNeutralSlice) -> float:
        model = self.mgp_service.mixture_density(descriptor, rn_slice.grid, rn_slice.maturity)
        return float(trapezoid(np.abs(model - rn_slice.density), rn_slice.grid))


def _continued_tails(y: np.ndarray, density: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    int e^{i z y} E(y) dy beyond both grid edges with E continued as
    E_edge exp(-k |y - y_edge|), k the log-slope of the two outermost nodes.
    The error is the change when k comes from the next pair inward, or the
    whole tail when that pair does not decay; it is infinite where the
    continuation diverges or the edge does not decay.
    """
    total = np.zeros(z.size, dtype=complex)
    error = np.zeros(z.size)
    for positions, values in ((y[2::-1], density[2::-1]), (y[-3:], density[-3:])):
        edge = values[-1]
        if edge == 0:
            continue
        outward = z * np.sign(positions[-1] - positions[-2])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            inner, outer = np.log(values[:-1] / values[1:]) / np.abs(np.diff(positions))
            phase = edge * np.exp(1j * z * positions[-1])
            if not (np.isfinite(outer) and outer > 0):
                error[:] = np.inf
                continue
            live = outer + outward.imag > 0
            tail = np.where(live, phase / (outer - 1j * outward), 0.0)
            if np.isfinite(inner) and inner > 0:
                moved = np.where(inner + outward.imag > 0, np.abs(tail - phase / (inner - 1j * outward)),
                                 np.abs(tail))
            else:
                moved = np.abs(tail)
        total += tail
        error += np.where(live, moved, np.inf)
    return total, error


def linear_density_transform(theta: np.ndarray, density: np.ndarray, eta) -> np.ndarray:
    """int e^{-eta theta} l(theta) dtheta for l linear between its grid values"""
    theta = np.asarray(theta, dtype=float)
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    step = np.diff(theta)
    s = eta[:, None] * step[None, :]
    small = s < 1e-4
    safe = np.where(small, 1.0, s)
    # int_0^1 e^{-s u} (1 - u) du and int_0^1 e^{-s u} u du
    left = np.where(small, 0.5 - s / 6.0 + s ** 2 / 24.0, (safe + np.expm1(-safe)) / safe ** 2)
    right = np.where(small, 0.5 - s / 3.0 + s ** 2 / 8.0, (-np.expm1(-safe) - safe * np.exp(-safe)) / safe ** 2)
    start = np.exp(-eta[:, None] * theta[None, :-1]) * step[None, :]
    return np.sum(start * (density[None, :-1] * left + density[None, 1:] * right), axis=1)

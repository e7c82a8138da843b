"""
MGP Service - Business Logic Layer
Mixture densities, weighted Black-Scholes pricing and Greeks, equivalence
re-parametrization and the strong-solution admissibility check
"""

import logging
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from ..config import MixvolSettings, settings as default_settings
from ..errors import DomainError, NonInvertibleCdfError, PreconditionError
from ..models.mgp import (
    AdmissibilityReport, DensityValue, EquivalenceReport, EuropeanSpec, Greeks,
    MgpDescriptor, MixingLaw, OptionKind
)
from .black_scholes import black_delta, black_gamma, black_price, black_vega, implied_volatility

logger = logging.getLogger(__name__)

GrowthBound = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, None]


def lognormal_pdf(x, forward, total_variance):
    """Density of F exp(-v/2 + sqrt(v) Z)"""
    x = np.asarray(x, dtype=float)
    total_variance = np.asarray(total_variance, dtype=float)
    return np.exp(-((np.log(x / forward) + 0.5 * total_variance) ** 2) / (2 * total_variance)) / (
        x * np.sqrt(2 * np.pi * total_variance)
    )


def lognormal_logpdf(x, forward, total_variance):
    x = np.asarray(x, dtype=float)
    return (-((np.log(x / forward) + 0.5 * total_variance) ** 2) / (2 * total_variance)
            - np.log(x) - 0.5 * np.log(2 * np.pi * total_variance))


class MgpService:
    """
    Service for mixtures of generalized geometric Brownian motions

    Every quantity is the mixing-weighted sum of its per-component
    Black-Scholes counterpart.
    """

    def __init__(self, config: MixvolSettings = default_settings):
        self.config = config

    def _validate_time(self, desc: MgpDescriptor, t: float) -> None:
        if not desc.t0 < t <= desc.tau0 + 1e-12:
            raise DomainError(f"time {t} outside ({desc.t0}, {desc.tau0}]")

    def component_density(self, desc: MgpDescriptor, theta: float, x: float, t: float) -> DensityValue:
        """Lognormal density of one component; zero variance yields the degenerate flag"""
        self._validate_time(desc, t)
        if not x > 0:
            raise DomainError(f"price must be positive, got {x}")
        variance = desc.variance_at(theta, t)
        if variance <= 0:
            return DensityValue(value=0.0, degenerate=True)
        return DensityValue(value=float(lognormal_pdf(x, desc.forward_curve.forward(t), variance)))

    def mixture_density(self, desc: MgpDescriptor, x, t: float):
        """
        Sum of component densities weighted by the mixing masses.
        Zero-variance components are point masses and add nothing here.
        """
        self._validate_time(desc, t)
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x_arr <= 0):
            raise DomainError("prices must be positive")
        variances = desc.cumulative_variance(t)
        live = variances > 0
        if not np.all(live):
            logger.debug(f"{int((~live).sum())} degenerate components excluded from the density at {t}")
        forward = desc.forward_curve.forward(t)
        values = lognormal_pdf(x_arr[:, None], forward, variances[live][None, :]) @ desc.mixing.masses[live]
        return float(values[0]) if np.ndim(x) == 0 else values

    def mixture_cdf(self, desc: MgpDescriptor, x, t: float):
        self._validate_time(desc, t)
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        variances = desc.cumulative_variance(t)
        forward = desc.forward_curve.forward(t)
        live = variances > 0
        safe = np.where(live, variances, 1.0)
        with np.errstate(divide="ignore"):
            z = (np.log(x_arr[:, None] / forward) + 0.5 * safe[None, :]) / np.sqrt(safe[None, :])
        cdf = np.where(live[None, :], norm.cdf(z), (x_arr[:, None] >= forward).astype(float))
        values = cdf @ desc.mixing.masses
        return float(values[0]) if np.ndim(x) == 0 else values

    def price_european(self, desc: MgpDescriptor, spec: EuropeanSpec) -> float:
        """Mixing-weighted Black-Scholes price, discounted on the descriptor's curve"""
        self._validate_time(desc, spec.maturity)
        curve = desc.forward_curve
        prices = black_price(curve.forward(spec.maturity), spec.strike, desc.cumulative_variance(spec.maturity),
                             curve.discount(spec.maturity), spec.kind)
        return float(np.dot(desc.mixing.masses, prices))

    def greeks(self, desc: MgpDescriptor, spec: EuropeanSpec) -> Greeks:
        """Weighted component delta and gamma; vega per component"""
        self._validate_time(desc, spec.maturity)
        curve = desc.forward_curve
        forward = curve.forward(spec.maturity)
        discount = curve.discount(spec.maturity)
        variances = desc.cumulative_variance(spec.maturity)
        weights = desc.mixing.masses
        price = float(np.dot(weights, black_price(forward, spec.strike, variances, discount, spec.kind)))
        delta = float(np.dot(weights, black_delta(desc.x0, forward, spec.strike, variances, discount, spec.kind)))
        gamma = float(np.dot(weights, black_gamma(desc.x0, forward, spec.strike, variances, discount)))
        tenor = spec.maturity - desc.t0
        vega = black_vega(forward, spec.strike, variances, tenor, discount)
        return Greeks(price=price, delta=delta, gamma=gamma, vega=np.asarray(vega), weights=np.asarray(weights))

    def price_forward_start(self, desc: MgpDescriptor, strike: float, start: float, end: float,
                            kind: OptionKind = OptionKind.CALL) -> float:
        """Option on X_end / X_start paid at end: weighted Black price of the ratio"""
        if not desc.t0 <= start < end:
            raise DomainError(f"forward-start window ({start}, {end}) is not ordered after t0")
        self._validate_time(desc, end)
        curve = desc.forward_curve
        increments = desc.cumulative_variance(end) - desc.cumulative_variance(start)
        prices = black_price(curve.growth(start, end), strike, increments, curve.discount(end), kind)
        return float(np.dot(desc.mixing.masses, prices))

    def implied_vol(self, desc: MgpDescriptor, strike: float, maturity: float) -> float:
        price = self.price_european(desc, EuropeanSpec(OptionKind.CALL, strike, maturity))
        curve = desc.forward_curve
        return implied_volatility(price, curve.forward(maturity), strike, maturity - desc.t0,
                                  curve.discount(maturity))

    def reparametrize_equivalent(self, desc: MgpDescriptor, target: MixingLaw) -> MgpDescriptor:
        """
        Variance function for a new mixing law with the same mixture marginals:
        the target node at level u = M_target(theta) takes the variance path of
        the source component at quantile u.
        """
        for law, name in ((desc.mixing, "source"), (target, "target")):
            flats = law.flat_intervals()
            if flats:
                lo, hi = flats[0]
                raise NonInvertibleCdfError(
                    f"{name} mixing CDF is flat on [{lo:.6g}, {hi:.6g}]", {"interval": (lo, hi), "law": name}
                )
        levels = self._node_levels(target)
        profile = desc.quantile_profile(levels)
        increments = np.diff(np.concatenate([np.zeros((levels.size, 1)), profile], axis=1), axis=1)
        result = MgpDescriptor(
            mixing=target,
            maturities=desc.maturities,
            variance_increments=np.clip(increments, 0.0, None),
            x0=desc.x0,
            t0=desc.t0,
            rates=desc.rates,
        )
        logger.info(f"Re-parametrized {desc.mixing.size} components onto {target.size} target nodes")
        return result

    @staticmethod
    def _node_levels(law: MixingLaw) -> np.ndarray:
        """Quantile level each node of a law stands for"""
        if law.is_atomic:
            cumulative = law.cdf(law.theta)
            return np.clip(cumulative - 0.5 * law.masses, 0.0, 1.0)
        return np.clip(law.cdf(law.theta), 0.0, 1.0)

    def check_equivalence(self, a: MgpDescriptor, b: MgpDescriptor) -> EquivalenceReport:
        """Compare quantile-variance profiles on the shared maturity grid"""
        if a.maturities.shape != b.maturities.shape or not np.allclose(a.maturities, b.maturities, rtol=0, atol=1e-12):
            raise PreconditionError("equivalence needs a shared maturity grid")
        n = self.config.quantile_grid_points
        levels = (np.arange(n) + 0.5) / n
        profile_a = a.quantile_profile(levels)
        profile_b = b.quantile_profile(levels)
        scale = np.maximum(np.maximum(np.abs(profile_a), np.abs(profile_b)), 1e-300)
        deviation = np.abs(profile_a - profile_b) / scale
        worst = np.unravel_index(int(np.argmax(deviation)), deviation.shape)
        max_deviation = float(deviation[worst])
        equivalent = max_deviation <= self.config.equivalence_tolerance
        return EquivalenceReport(
            equivalent=equivalent,
            max_deviation=max_deviation,
            worst_quantile=None if equivalent else float(levels[worst[0]]),
            worst_maturity=None if equivalent else float(a.maturities[worst[1]]),
        )

    def growth_bound(self, desc: MgpDescriptor) -> np.ndarray:
        """f(theta) = max(sup |r|, sup_t sqrt(nu(theta, t))) for GGBM components"""
        widths = np.diff(desc.knots)
        rates = desc.variance_increments / widths[None, :]
        return np.maximum(desc.rates.max_rate, np.sqrt(rates.max(axis=1)))

    def check_strong_solution(self, desc: MgpDescriptor, growth: GrowthBound = None,
                              tau0: Optional[float] = None, derive_bound: bool = True) -> AdmissibilityReport:
        """
        Evaluates int exp(C0 f(theta)^2) m(dtheta), C0 = 10 (tau0^2 + tau0).
        Grid laws are declared divergent when log m + C0 f^2 does not
        decrease over the upper tail of the grid.
        """
        tau0 = desc.tau0 - desc.t0 if tau0 is None else tau0
        c0 = 10.0 * (tau0 ** 2 + tau0)
        if growth is None:
            if not derive_bound:
                raise PreconditionError("no growth bound supplied and derivation disabled")
            bound = self.growth_bound(desc)
        elif callable(growth):
            bound = np.asarray(growth(desc.mixing.theta), dtype=float)
        else:
            bound = np.asarray(growth, dtype=float)
        if bound.shape != desc.mixing.theta.shape or np.any(bound < 0):
            raise PreconditionError("growth bound needs one nonnegative value per mixing node")

        exponent = c0 * bound ** 2
        masses = desc.mixing.masses
        live = masses > 0
        log_value = float(logsumexp(exponent[live], b=masses[live]))

        tail_slope = None
        if not desc.mixing.is_atomic and desc.mixing.density is not None:
            positive = np.flatnonzero(desc.mixing.density > 0)
            tail = positive[-max(3, positive.size // 10):]
            if tail.size >= 3:
                log_integrand = np.log(desc.mixing.density[tail]) + exponent[tail]
                tail_slope = float(np.polyfit(desc.mixing.theta[tail], log_integrand, 1)[0])
                if tail_slope >= 0:
                    logger.warning(f"Admissibility integral diverges: tail log-slope {tail_slope:.4g}")
                    return AdmissibilityReport(finite=False, c0=c0, log_value=None, tail_slope=tail_slope)
        value = float(np.exp(log_value)) if log_value < 700 else float("inf")
        return AdmissibilityReport(finite=True, c0=c0, value=value, log_value=log_value, tail_slope=tail_slope)

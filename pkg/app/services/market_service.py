"""
Market Service - Business Logic Layer
Forwards, coordinate changes of risk-neutral densities and option-chain
ingestion (convex cleaning followed by second strike differences)
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator
from scipy.optimize import lsq_linear
from scipy.stats import norm

from ..config import MixvolSettings, settings as default_settings
from ..errors import (
    CalibrationError, DomainError, GridResolutionError, MixvolError, PreconditionError
)
from ..models.market import ForwardCurve, LogMoneynessDensity, OptionChain, RiskNeutralSlice
from ..models.mgp import OptionKind
from .black_scholes import black_price, implied_volatility

logger = logging.getLogger(__name__)


class MarketService:
    """
    Market data service

    Turns quotes into risk-neutral slices and moves densities between the
    asset-price and log-moneyness coordinates.
    """

    def __init__(self, config: MixvolSettings = default_settings):
        self.config = config

    def forward(self, curve: ForwardCurve, t: float) -> float:
        """F(t) = x0 exp(int r); raises DomainError before the curve start"""
        if t < curve.t0:
            raise DomainError(f"forward requested at {t}, before curve start {curve.t0}")
        return float(curve.forward(t))

    def log_grid(self, forward: float, total_variance: float, points: Optional[int] = None,
                 center_variance: Optional[float] = None) -> np.ndarray:
        """Log-spaced asset grid centred on log F - v/2, spanning the configured stdevs"""
        if not total_variance > 0:
            raise PreconditionError("a density grid needs a positive reference variance")
        points = points or self.config.density_grid_points
        width = self.config.density_grid_stdevs * np.sqrt(total_variance)
        center = -0.5 * (total_variance if center_variance is None else center_variance)
        return forward * np.exp(np.linspace(center - width, center + width, points))

    def to_log_moneyness(self, rn_slice: RiskNeutralSlice) -> LogMoneynessDensity:
        """
        E(y) = x D(x) at y = log(x / F).

        The y grid is the image of the slice grid; the result is renormalized
        by trapezoid in y. Resolution is judged by comparing the trapezoid
        mass on the full grid with the one on every other node.
        """
        y = np.log(rn_slice.grid / rn_slice.forward)
        values = rn_slice.grid * rn_slice.density
        mass = trapezoid(values, y)
        coarse = trapezoid(values[::2], y[::2]) if y.size % 2 == 1 else trapezoid(values[:-1:2], y[:-1:2])
        coarse_tail = 0.0 if y.size % 2 == 1 else trapezoid(values[-2:], y[-2:])
        resolution_error = abs(coarse + coarse_tail - mass)
        if resolution_error > 1e-4:
            raise GridResolutionError(
                f"log-moneyness grid at maturity {rn_slice.maturity} loses {resolution_error:.2e} of mass",
                {"maturity": rn_slice.maturity, "mass_error": resolution_error},
            )
        return LogMoneynessDensity(
            maturity=rn_slice.maturity,
            forward=rn_slice.forward,
            grid=y,
            density=values / mass,
        )

    def from_log_moneyness(self, density: LogMoneynessDensity) -> RiskNeutralSlice:
        """D(x) = E(log(x / F)) / x on x = F e^y"""
        grid = density.forward * np.exp(density.grid)
        return RiskNeutralSlice.from_density(density.maturity, density.forward, grid, density.density / grid)

    def mixture_slice(self, forward: float, maturity: float, total_variances: Sequence[float],
                      weights: Sequence[float], grid: Optional[np.ndarray] = None) -> RiskNeutralSlice:
        """Risk-neutral slice of a lognormal mixture of total variances"""
        variances = np.asarray(total_variances, dtype=float)
        weights = np.asarray(weights, dtype=float)
        live = weights > 0
        if not np.any(live):
            raise PreconditionError("mixture has no positive weight")
        if np.any(variances[live] <= 0):
            raise PreconditionError("zero-variance components have no density; use a positive variance")
        if grid is None:
            order = np.argsort(variances[live])
            cumulative = np.cumsum(weights[live][order]) / weights[live].sum()
            reference = variances[live][order][min(np.searchsorted(cumulative, 1 - 1e-6), order.size - 1)]
            smallest = variances[live].min()
            grid = self.log_grid(forward, reference, center_variance=0.5 * (reference + smallest))
        y = np.log(grid / forward)[:, None]
        v = variances[live][None, :]
        components = np.exp(-((y + 0.5 * v) ** 2) / (2 * v)) / np.sqrt(2 * np.pi * v)
        e_values = components @ (weights[live] / weights[live].sum())
        return RiskNeutralSlice.from_density(maturity, forward, grid, e_values / grid)

    def black_scholes_chain(self, forward: float, maturity: float, sigma: float, strikes: int = 41,
                            stdevs: float = 4.0, discount: float = 1.0,
                            start: Optional[float] = None) -> OptionChain:
        """Call chain with log-equidistant strikes across +-stdevs"""
        span = stdevs * sigma * np.sqrt(maturity - (start or 0.0))
        grid = forward * np.exp(np.linspace(-span, span, strikes))
        variance = sigma * sigma * (maturity - (start or 0.0))
        calls = black_price(forward, grid, variance, discount, OptionKind.CALL)
        return OptionChain(maturity=maturity, strikes=grid, call_prices=calls, forward=forward,
                           discount=discount, start=start)

    def clean_chain(self, chain: OptionChain):
        """
        Least-squares projection of undiscounted calls onto nonincreasing
        convex functions of strike. Returns cleaned prices and repairs.
        """
        strikes = chain.strikes
        prices = chain.undiscounted_calls
        n = strikes.size
        # call-spread basis: constant, slope at the right end, slope increments
        basis = np.zeros((n, n))
        basis[:, 0] = 1.0
        basis[:, 1] = strikes[-1] - strikes
        for i in range(n - 2):
            basis[:, 2 + i] = np.maximum(strikes[i + 1] - strikes, 0.0)
        fit = lsq_linear(basis, prices, bounds=(0.0, np.inf), method="bvls", tol=1e-14)
        cleaned = basis @ fit.x
        repairs = np.abs(cleaned - prices)
        tolerance = 1e-8 * chain.forward
        repaired = tuple(float(k) for k in strikes[repairs > tolerance])
        worst = int(np.argmax(repairs))
        if repairs[worst] > self.config.chain_repair_tolerance * chain.forward:
            raise CalibrationError(
                f"chain at maturity {chain.maturity} is not convexifiable; worst strike {strikes[worst]:.6g} "
                f"needs a repair of {repairs[worst]:.6g}",
                {"maturity": chain.maturity, "worst_strike": float(strikes[worst]), "repair": float(repairs[worst])},
            )
        if not repaired:
            return prices.copy(), repaired
        return cleaned, repaired

    def chain_to_density(self, chain: OptionChain) -> RiskNeutralSlice:
        """Breeden-Litzenberger density from a call chain with lognormal tails"""
        if chain.strikes.size < self.config.min_chain_strikes:
            raise PreconditionError(
                f"chain at maturity {chain.maturity} has {chain.strikes.size} strikes; "
                f"{self.config.min_chain_strikes} required"
            )
        try:
            prices, repaired = self.clean_chain(chain)
            if repaired:
                logger.warning(f"Chain at maturity {chain.maturity} repaired at strikes {list(repaired)}")

            strikes = chain.strikes
            slopes = np.diff(prices) / np.diff(strikes)
            nodes = strikes[1:-1]
            density = np.clip(2.0 * np.diff(slopes) / (strikes[2:] - strikes[:-2]), 0.0, None)

            tenor = chain.maturity - (chain.start or 0.0)
            variance = self._reference_variance(chain, prices, tenor)
            grid = self.log_grid(chain.forward, variance)
            values = self._interpolate_with_tails(nodes, density, grid, variance)

            rn_slice = RiskNeutralSlice.from_density(chain.maturity, chain.forward, grid, values)
            scale = chain.forward / rn_slice.mean()
            rn_slice = RiskNeutralSlice.from_density(
                chain.maturity, chain.forward, grid * scale, rn_slice.density / scale, repaired
            )
            rn_slice.check_invariants(self.config.mass_tolerance, self.config.martingale_tolerance)
            logger.info(f"Density extracted at maturity {chain.maturity} from {strikes.size} strikes")
            return rn_slice
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error extracting density at maturity {chain.maturity}: {e}")
            raise

    def _reference_variance(self, chain: OptionChain, prices: np.ndarray, tenor: float) -> float:
        atm = int(np.argmin(np.abs(np.log(chain.strikes / chain.forward))))
        try:
            sigma = implied_volatility(float(prices[atm]), chain.forward, float(chain.strikes[atm]), tenor)
        except DomainError:
            sigma = 0.0
        if sigma > 0:
            return sigma * sigma * tenor
        # fall back to the spread of the quoted strikes
        return float(np.var(np.log(chain.strikes / chain.forward))) / 4.0

    @staticmethod
    def _interpolate_with_tails(nodes: np.ndarray, density: np.ndarray, grid: np.ndarray,
                                variance: float) -> np.ndarray:
        """Shape-preserving interpolation in log strike, lognormal tails past the outer nodes"""
        u_nodes = np.log(nodes)
        u = np.log(grid)
        values = np.zeros_like(grid)
        inside = (u >= u_nodes[0]) & (u <= u_nodes[-1])
        values[inside] = np.clip(PchipInterpolator(u_nodes, density)(u[inside]), 0.0, None)

        positive = np.flatnonzero(density > 0)
        if positive.size >= 2:
            for side, edge, inner, mask in (
                ("left", positive[0], positive[1], u < u_nodes[0]),
                ("right", positive[-1], positive[-2], u > u_nodes[-1]),
            ):
                u_edge = u_nodes[edge]
                slope = (np.log(density[inner]) - np.log(density[edge])) / (u_nodes[inner] - u_nodes[edge])
                mu = u_edge + variance * (1.0 + slope)
                log_tail = (np.log(density[edge]) - (u[mask] - u_edge)
                            - ((u[mask] - mu) ** 2 - (u_edge - mu) ** 2) / (2.0 * variance))
                values[mask] = np.exp(log_tail)
        return values


def lognormal_cdf(x, forward: float, total_variance: float):
    """CDF of a lognormal with mean forward and log-variance total_variance"""
    sqrt_v = np.sqrt(total_variance)
    return norm.cdf((np.log(np.asarray(x) / forward) + 0.5 * total_variance) / sqrt_v)

"""
Pricing Service - Business Logic Layer
Prices a payoff on an MGD or a layered model, in closed form where one
exists and by Monte Carlo otherwise
"""

import logging
from typing import Optional, Union

import numpy as np

from ..config import MixvolSettings, settings as default_settings
from ..errors import MixvolError
from ..models.hierarchical import HierarchicalModel
from ..models.mgp import EuropeanSpec, MgpDescriptor
from ..models.paths import PayoffKind, PayoffSpec, PriceQuote, PricingMethod
from .hierarchical_service import HierarchicalService
from .mc_service import McService
from .mgp_service import MgpService

logger = logging.getLogger(__name__)

PricedModel = Union[MgpDescriptor, HierarchicalModel]


def _maturity_index(maturities: np.ndarray, t: float) -> Optional[int]:
    hits = np.flatnonzero(np.isclose(maturities, t, rtol=0.0, atol=1e-10))
    return int(hits[0]) if hits.size else None


class PricingService:
    """Chooses the pricing route for a (model, payoff) pair"""

    def __init__(self, config: MixvolSettings = default_settings,
                 mgp_service: Optional[MgpService] = None,
                 hierarchical_service: Optional[HierarchicalService] = None,
                 mc_service: Optional[McService] = None):
        self.config = config
        self.mgp_service = mgp_service or MgpService(config)
        self.mc_service = mc_service or McService(config)
        self.hierarchical_service = hierarchical_service or HierarchicalService(config, mc_service=self.mc_service)

    def price(self, model: PricedModel, payoff: PayoffSpec, monte_carlo: bool = False,
              paths: Optional[int] = None, seed: Optional[int] = None, antithetic: bool = False) -> PriceQuote:
        try:
            quote = None
            if not monte_carlo:
                if isinstance(model, MgpDescriptor):
                    quote = self._analytic_mgd(model, payoff)
                else:
                    quote = self._analytic_layered(model, payoff)
                if quote is None:
                    logger.info(f"No closed form for a {payoff.kind.value} payoff on this model; using Monte Carlo")
            if quote is None:
                quote = self._monte_carlo(model, payoff, paths, seed, antithetic)
            logger.info(f"Priced {payoff.kind.value} {payoff.option.value} K={payoff.strike} T={payoff.maturity}: "
                        f"{quote.price:.6g} ({quote.method.value})")
            return quote
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error pricing payoff: {e}")
            raise

    def _analytic_mgd(self, desc: MgpDescriptor, payoff: PayoffSpec) -> Optional[PriceQuote]:
        if payoff.kind == PayoffKind.FORWARD_START:
            price = self.mgp_service.price_forward_start(desc, payoff.strike, payoff.start, payoff.maturity,
                                                         payoff.option)
            return PriceQuote(price=price, method=PricingMethod.ANALYTIC)
        if payoff.kind != PayoffKind.EUROPEAN or payoff.strike <= 0:
            return None
        greeks = self.mgp_service.greeks(desc, EuropeanSpec(payoff.option, payoff.strike, payoff.maturity))
        implied = None
        try:
            implied = self.mgp_service.implied_vol(desc, payoff.strike, payoff.maturity)
        except MixvolError as e:
            logger.debug(f"No implied volatility at strike {payoff.strike}: {e}")
        return PriceQuote(price=greeks.price, method=PricingMethod.ANALYTIC, implied_vol=implied,
                          delta=greeks.delta, gamma=greeks.gamma)

    def _analytic_layered(self, model: HierarchicalModel, payoff: PayoffSpec) -> Optional[PriceQuote]:
        k = _maturity_index(model.maturities, payoff.maturity)
        if k is None or k == 0:
            return None
        if payoff.kind == PayoffKind.EUROPEAN:
            price = self.hierarchical_service.price_european(model, k, payoff.strike, payoff.option)
            return PriceQuote(price=price, method=PricingMethod.ANALYTIC)
        if payoff.kind == PayoffKind.FORWARD_START and _maturity_index(model.maturities, payoff.start) == k - 1:
            price = self.hierarchical_service.price_forward_start(model, k, payoff.strike, payoff.option)
            return PriceQuote(price=price, method=PricingMethod.ANALYTIC)
        return None

    def _monte_carlo(self, model: PricedModel, payoff: PayoffSpec, paths: Optional[int], seed: Optional[int],
                     antithetic: bool) -> PriceQuote:
        paths = self.config.mc_paths if paths is None else paths
        seed = self.config.seed if seed is None else seed
        times = [payoff.maturity] if payoff.start is None else [payoff.start, payoff.maturity]
        grid = np.unique(np.asarray(times, dtype=float))
        if isinstance(model, MgpDescriptor):
            batch = self.mc_service.simulate_mgd(model, grid, paths, seed, antithetic=antithetic)
        else:
            batch = self.mc_service.simulate_hier(model, grid, paths, seed, antithetic=antithetic)
        price, error = self.mc_service.price_mc(batch, payoff, model.rates)
        return PriceQuote(price=price, method=PricingMethod.MONTE_CARLO, standard_error=error,
                          paths=paths, seed=seed)

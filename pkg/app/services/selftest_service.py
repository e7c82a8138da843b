"""
Selftest Service - Business Logic Layer
Closed-form sanity cases run against a fresh set of services
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from scipy.integrate import trapezoid

from ..config import MixvolSettings, settings as default_settings
from ..errors import InfeasibleCouplingError, PreconditionError, VerificationError
from ..models.market import ForwardCurve, OptionChain, RateCurve
from ..models.mgp import EuropeanSpec, MgpDescriptor, MixingLaw, OptionKind
from ..models.paths import PayoffKind, PayoffSpec
from ..models.recovery import TransformProfile
from .black_scholes import black_price
from .coupling_service import CouplingService
from .hierarchical_service import HierarchicalService
from .market_service import MarketService
from .mc_service import McService
from .mgp_service import MgpService
from .projection_service import ProjectionService
from .recovery_service import RecoveryService

logger = logging.getLogger(__name__)


class SelftestFailure(VerificationError):
    """Raised by a selftest case whose expectation does not hold"""


@dataclass(frozen=True)
class SelftestCase:
    name: str
    passed: bool
    detail: str = ""


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise SelftestFailure(message)


def _two_atom(x0: float = 100.0) -> MgpDescriptor:
    return MgpDescriptor(mixing=MixingLaw.from_atoms([0.0, 1.0], [0.5, 0.5]), maturities=np.array([1.0]),
                         variance_increments=np.array([[0.01], [0.09]]), x0=x0)


def _single_atom(variance: float = 0.04, x0: float = 100.0) -> MgpDescriptor:
    return MgpDescriptor(mixing=MixingLaw.point(0.0), maturities=np.array([1.0]),
                         variance_increments=np.array([[variance]]), x0=x0)


class SelftestService:
    """Runs every case and reports; a failing case never stops the others"""

    def __init__(self, config: MixvolSettings = default_settings, paths: int = 20_000):
        self.config = config
        self.paths = paths
        self.market_service = MarketService(config)
        self.mgp_service = MgpService(config)
        self.recovery_service = RecoveryService(config, self.market_service, self.mgp_service)
        self.projection_service = ProjectionService(config)
        self.coupling_service = CouplingService(config)
        self.mc_service = McService(config)
        self.hierarchical_service = HierarchicalService(config, self.recovery_service, self.coupling_service,
                                                        self.mc_service, self.market_service)

    def cases(self) -> List[Tuple[str, Callable[[], None]]]:
        return [
            ("forward at zero rate", self.forward_zero_rate),
            ("lognormal change of variables", self.lognormal_log_moneyness),
            ("too few strikes", self.too_few_strikes),
            ("degenerate component density", self.degenerate_density),
            ("single-atom pricing and parity", self.single_atom_pricing),
            ("two-atom delta linearity", self.two_atom_delta),
            ("identity re-parametrization", self.identity_reparametrization),
            ("single-atom admissibility", self.single_atom_admissible),
            ("gaussian transform", self.gaussian_transform),
            ("exponential transform is completely monotone", self.exponential_monotone),
            ("cosine transform is not completely monotone", self.cosine_not_monotone),
            ("dirac mixing recovery", self.dirac_recovery),
            ("single-atom projection", self.single_atom_projection),
            ("deterministic coupling", self.deterministic_coupling),
            ("flat layered model", self.flat_layers),
            ("zero-variance paths", self.zero_variance_paths),
            ("flat layered paths match the single atom", self.flat_paths_match),
            ("zero-strike call is the forward", self.zero_strike_call),
            ("single-atom posterior", self.single_atom_posterior),
            ("restart at the model start", self.identity_restart),
        ]

    def run(self) -> List[SelftestCase]:
        results = []
        for name, case in self.cases():
            try:
                case()
                results.append(SelftestCase(name=name, passed=True))
            except Exception as e:
                logger.warning(f"Selftest case '{name}' failed: {e}")
                results.append(SelftestCase(name=name, passed=False, detail=str(e)))
        passed = sum(result.passed for result in results)
        logger.info(f"Selftest: {passed}/{len(results)} cases passed")
        return results

    # Market

    def forward_zero_rate(self):
        value = self.market_service.forward(ForwardCurve(x0=100.0, rates=RateCurve.flat(0.0)), 1.0)
        _expect(value == 100.0, f"forward {value} != 100")

    def lognormal_log_moneyness(self):
        rn_slice = self.market_service.mixture_slice(100.0, 1.0, [0.04], [1.0])
        density = self.market_service.to_log_moneyness(rn_slice)
        mass = trapezoid(density.density, density.grid)
        _expect(abs(mass - 1.0) < 1e-8, f"log-moneyness mass {mass}")
        mean = trapezoid(density.grid * density.density, density.grid)
        _expect(abs(mean + 0.02) < 1e-4, f"log-moneyness mean {mean} != -0.02")

    def too_few_strikes(self):
        chain = OptionChain(maturity=1.0, strikes=np.array([90.0, 100.0, 110.0]),
                            call_prices=np.array([12.0, 6.0, 2.5]), forward=100.0)
        try:
            self.market_service.chain_to_density(chain)
        except PreconditionError:
            return
        raise SelftestFailure("a three-strike chain was accepted")

    # MGP core

    def degenerate_density(self):
        desc = _single_atom(variance=0.0)
        value = self.mgp_service.component_density(desc, 0.0, 100.0, 1.0)
        _expect(value.degenerate, "zero-variance component not flagged")

    def single_atom_pricing(self):
        desc = _single_atom()
        call = self.mgp_service.price_european(desc, EuropeanSpec(OptionKind.CALL, 105.0, 1.0))
        put = self.mgp_service.price_european(desc, EuropeanSpec(OptionKind.PUT, 105.0, 1.0))
        reference = float(black_price(100.0, 105.0, 0.04))
        _expect(abs(call - reference) < 1e-10, f"call {call} != Black {reference}")
        _expect(abs(call - put - (100.0 - 105.0)) < 1e-10, "put-call parity broken")

    def two_atom_delta(self):
        desc = _two_atom()
        spec = EuropeanSpec(OptionKind.CALL, 100.0, 1.0)
        delta = self.mgp_service.greeks(desc, spec).delta
        parts = [self.mgp_service.greeks(_single_atom(v), spec).delta for v in (0.01, 0.09)]
        _expect(abs(delta - 0.5 * sum(parts)) < 1e-12, f"delta {delta} is not the average of {parts}")

    def identity_reparametrization(self):
        desc = _two_atom()
        same = self.mgp_service.reparametrize_equivalent(desc, desc.mixing)
        _expect(self.mgp_service.check_equivalence(desc, same).equivalent, "identity map changed the marginals")

    def single_atom_admissible(self):
        _expect(self.mgp_service.check_strong_solution(_single_atom()).finite, "single atom declared divergent")

    # Mixing recovery

    def gaussian_transform(self):
        rn_slice = self.market_service.mixture_slice(100.0, 1.0, [0.04], [1.0])
        density = self.market_service.to_log_moneyness(rn_slice)
        value = complex(self.recovery_service.char_function(density, np.array([1.0 + 0j]))[0])
        expected = np.exp(-(1j + 1.0) * 0.02)
        _expect(abs(value - expected) < 1e-5, f"characteristic function {value} != {expected}")
        mass = complex(self.recovery_service.char_function(density, np.array([0j]))[0])
        _expect(abs(mass - 1.0) < 1e-8, f"transform at zero is {mass}")

    def exponential_monotone(self):
        profile = TransformProfile.from_function(lambda eta: np.exp(-eta), np.linspace(0.0, 5.0, 40))
        _expect(self.recovery_service.check_completely_monotone(profile).passed, "exp(-eta) failed the screen")

    def cosine_not_monotone(self):
        profile = TransformProfile.from_function(np.cos, np.linspace(0.0, 5.0, 40))
        _expect(not self.recovery_service.check_completely_monotone(profile).passed, "cos(eta) passed the screen")

    def dirac_recovery(self):
        profile = TransformProfile.from_function(lambda eta: np.exp(-0.04 * eta), np.geomspace(1e-2, 1e3, 64))
        theta = np.linspace(0.0, 0.1, 101)
        recovered = self.recovery_service.invert_laplace(profile, theta)
        median = float(recovered.quantile(0.5))
        _expect(abs(median - 0.04) <= 2 * (theta[1] - theta[0]), f"step at {median}, expected 0.04")

    # Projection

    def single_atom_projection(self):
        desc = _single_atom()
        surface = self.projection_service.project(desc, np.geomspace(60.0, 160.0, 21), np.array([0.5, 1.0]))
        _expect(np.allclose(surface.variance, 0.04, rtol=1e-12, atol=0.0), "single-atom local variance not flat")

    # Hierarchical

    def deterministic_coupling(self):
        nodes = np.linspace(0.0, 0.1, 11)
        prev, nxt, inc = (np.eye(11)[i] for i in (2, 5, 3))
        coupling = self.coupling_service.couple_marginals(prev, nxt, inc, nodes)
        _expect(abs(coupling.mass[2, 5] - 1.0) < 1e-12, "deterministic coupling is not a point mass")
        try:
            self.coupling_service.couple_marginals(prev, np.eye(11)[6], inc, nodes)
        except InfeasibleCouplingError:
            return
        raise SelftestFailure("inconsistent point masses were coupled")

    def flat_layers(self):
        model = self.hierarchical_service.flat_model(0.2, [0.5, 1.0], 100.0)
        for k, total in ((1, 0.02), (2, 0.04)):
            marginal = model.total_marginal(k)
            at = float(model.nodes[int(np.argmax(marginal))])
            _expect(abs(at - total) < 1e-10 and abs(marginal.max() - 1.0) < 1e-10, f"layer {k} total {at}")

    # Monte Carlo

    def zero_variance_paths(self):
        desc = _single_atom(variance=0.0)
        batch = self.mc_service.simulate_mgd(desc, np.array([0.5, 1.0]), paths=1000, seed=self.config.seed)
        _expect(np.all(batch.values == 100.0), "zero-variance paths moved")

    def flat_paths_match(self):
        model = self.hierarchical_service.flat_model(0.2, [1.0], 100.0)
        grid = np.array([0.25, 0.5, 1.0])
        layered = self.mc_service.simulate_hier(model, grid, paths=2000, seed=self.config.seed)
        direct = self.mc_service.simulate_mgd(_single_atom(), grid, paths=2000, seed=self.config.seed)
        _expect(np.allclose(layered.values, direct.values, rtol=1e-12), "flat layered paths differ")

    def single_atom_posterior(self):
        desc = _single_atom()
        posterior = self.mc_service.posterior_mixing(desc, 0.5, 93.0)
        _expect(np.allclose(posterior.masses, [1.0]), "posterior of a single atom moved")

    def identity_restart(self):
        model = self.hierarchical_service.flat_model(0.2, [0.5, 1.0], 100.0)
        restarted = self.hierarchical_service.conditional_restart(model, 1, 100.0, 0.0)
        for k in (1, 2):
            _expect(np.allclose(restarted.total_marginal(k), model.total_marginal(k)), f"restart moved layer {k}")

    def zero_strike_call(self):
        desc = _two_atom()
        batch = self.mc_service.simulate_mgd(desc, np.array([1.0]), paths=self.paths, seed=self.config.seed)
        price, error = self.mc_service.price_mc(batch, PayoffSpec(PayoffKind.EUROPEAN, 1.0, 0.0))
        _expect(abs(price - 100.0) < 4 * error, f"zero-strike call {price} +- {error}")

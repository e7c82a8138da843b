"""
Hierarchical Service - Business Logic Layer
Layered MGD construction from spot and forward-start slices: variance
marginals, couplings, conditional laws, layer parametrizations,
verification and conditional restarts
"""

import logging
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.stats import ks_2samp, kstest, norm

from ..config import MixvolSettings, settings as default_settings
from ..errors import InvariantError, MixvolError, PreconditionError
from ..models.hierarchical import (
    ConditionalCdf, HierarchicalModel, LayerParametrization, ModelVerification, SliceCheck,
    VarianceCoupling, VarianceMarginals
)
from ..models.market import RateCurve, RiskNeutralSlice
from ..models.mgp import MgpDescriptor, MixingLaw, OptionKind
from ..models.recovery import RecoveredMixing, split_atoms
from .black_scholes import black_price
from .coupling_service import CouplingService
from .market_service import MarketService
from .mc_service import McService
from .recovery_service import RecoveryService

logger = logging.getLogger(__name__)

SNAP_TOLERANCE = 1e-3


def mixture_cdf_on_nodes(x, forward: float, variances: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """CDF of a lognormal mixture whose zero-variance components are point masses at the forward"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    live = masses > 0
    variances, masses = variances[live], masses[live]
    safe = np.where(variances > 0, variances, 1.0)
    with np.errstate(divide="ignore"):
        z = (np.log(x[:, None] / forward) + 0.5 * safe[None, :]) / np.sqrt(safe[None, :])
    cdf = np.where(variances[None, :] > 0, norm.cdf(z), (x[:, None] >= forward).astype(float))
    return cdf @ masses


def rescaled_slice(rn_slice: RiskNeutralSlice, factor: float) -> RiskNeutralSlice:
    """Slice of factor * X"""
    return RiskNeutralSlice.from_density(rn_slice.maturity, rn_slice.forward * factor, rn_slice.grid * factor,
                                         rn_slice.density / factor, rn_slice.repaired_strikes)


class HierarchicalService:
    """
    Service for layered MGDs

    Total variance v_k at each maturity is a Markov chain on a uniform
    grid; layer k draws v_k from the coupling row of the realized v_{k-1}.
    """

    def __init__(self, config: MixvolSettings = default_settings,
                 recovery_service: Optional[RecoveryService] = None,
                 coupling_service: Optional[CouplingService] = None,
                 mc_service: Optional[McService] = None,
                 market_service: Optional[MarketService] = None):
        self.config = config
        self.market_service = market_service or MarketService(config)
        self.recovery_service = recovery_service or RecoveryService(config, self.market_service)
        self.coupling_service = coupling_service or CouplingService(config)
        self.mc_service = mc_service or McService(config)

    # Marginals

    def recover_variance_marginals(self, spot_slices: Sequence[RiskNeutralSlice],
                                   ratio_slices: Sequence[RiskNeutralSlice],
                                   residue_tolerance: Optional[float] = None) -> List[VarianceMarginals]:
        """
        l_k from the spot slice at T_k and l_hat_k from the ratio slice of
        X_{T_k} / X_{T_{k-1}}; the first ratio slice is the spot slice itself.
        """
        spot_slices = list(spot_slices)
        ratio_slices = list(ratio_slices)
        if not spot_slices:
            raise PreconditionError("at least one spot slice is required")
        if len(ratio_slices) != len(spot_slices) - 1:
            raise PreconditionError(
                f"{len(spot_slices)} spot slices need {len(spot_slices) - 1} forward-start slices, "
                f"got {len(ratio_slices)}"
            )
        maturities = np.array([s.maturity for s in spot_slices])
        if np.any(np.diff(maturities) <= 0):
            raise PreconditionError("spot slices must have strictly increasing maturities")
        for k, ratio in enumerate(ratio_slices, start=2):
            if abs(ratio.maturity - maturities[k - 1]) > 1e-10:
                raise PreconditionError(f"forward-start slice {k} ends at {ratio.maturity}, not {maturities[k - 1]}")

        marginals = []
        previous: Optional[RecoveredMixing] = None
        for k, spot in enumerate(spot_slices, start=1):
            total = self._recover(spot, k, "spot", residue_tolerance)
            if previous is not None:
                self._check_domination(previous, total, k)
            increment = total if k == 1 else self._recover(ratio_slices[k - 2], k, "forward-start",
                                                           residue_tolerance)
            marginals.append(VarianceMarginals(index=k, maturity=spot.maturity, total=total, increment=increment))
            previous = total
        logger.info(f"Recovered variance marginals for {len(marginals)} layers")
        return marginals

    def _recover(self, rn_slice: RiskNeutralSlice, k: int, kind: str,
                 residue_tolerance: Optional[float]) -> RecoveredMixing:
        try:
            return self.recovery_service.recover_slice(rn_slice, residue_tolerance)
        except MixvolError as e:
            context = dict(e.context)
            context["layer"] = k
            raise type(e)(f"layer {k} ({kind} slice): {e}", context) from e

    def _check_domination(self, previous: RecoveredMixing, current: RecoveredMixing, k: int) -> None:
        n = self.config.quantile_grid_points
        levels = (np.arange(n) + 0.5) / n
        before = previous.quantile(levels)
        after = current.quantile(levels)
        shortfall = before * (1.0 - 1e-2) - after
        worst = int(np.argmax(shortfall))
        if shortfall[worst] > 1e-12:
            raise InvariantError(
                f"layer {k} total variance falls below layer {k - 1} at quantile {levels[worst]:.4f}",
                {"layer": k, "quantile": float(levels[worst])},
            )

    def variance_nodes(self, laws: Sequence[RecoveredMixing], points: Optional[int] = None) -> np.ndarray:
        """
        Shared uniform grid from zero. Purely atomic inputs whose locations sit
        on a common lattice get that lattice; otherwise the configured number
        of points up to the largest support.
        """
        atoms = [law.atoms for law in laws]
        if all(a is not None for a in atoms):
            lattice = self._atomic_lattice(np.concatenate([a.theta[a.masses > 0] for a in atoms]))
            if lattice is not None:
                return lattice
        points = self.config.coupling_grid_points if points is None else points
        top = max(float(law.quantile(1.0 - 1e-9)) for law in laws)
        if not top > 0:
            raise PreconditionError("variance marginals carry no variance")
        return np.linspace(0.0, 1.02 * top, points)

    @staticmethod
    def _atomic_lattice(locations: np.ndarray, max_nodes: int = 4096) -> Optional[np.ndarray]:
        positive = locations[locations > 0]
        if positive.size == 0:
            return None
        smallest = positive.min()
        for divisor in range(1, 13):
            step = smallest / divisor
            ratio = locations / step
            if np.all(np.abs(ratio - np.rint(ratio)) < SNAP_TOLERANCE) and ratio.max() < max_nodes:
                return step * np.arange(int(np.rint(ratio.max())) + 1)
        return None

    @staticmethod
    def node_masses(law: RecoveredMixing, nodes: np.ndarray) -> np.ndarray:
        """Masses of a recovered law on the grid; atoms close to a node land on it"""
        if law.atoms is None:
            return law.cell_masses(nodes)
        step = nodes[1] - nodes[0]
        ratio = law.atoms.theta / step
        snapped = np.where(np.abs(ratio - np.rint(ratio)) < SNAP_TOLERANCE, np.rint(ratio) * step, law.atoms.theta)
        return split_atoms(nodes, snapped, law.atoms.masses)

    # Couplings

    def couple_marginals(self, l_prev, l_next, l_inc, nodes) -> VarianceCoupling:
        return self.coupling_service.couple_marginals(l_prev, l_next, l_inc, nodes)

    def build_model(self, spot_slices: Sequence[RiskNeutralSlice], ratio_slices: Sequence[RiskNeutralSlice],
                    spot: Optional[float] = None, t0: float = 0.0, residue_tolerance: Optional[float] = None,
                    points: Optional[int] = None) -> HierarchicalModel:
        """Recover the marginals, put them on one grid and couple consecutive layers"""
        try:
            marginals = self.recover_variance_marginals(spot_slices, ratio_slices, residue_tolerance)
            laws = [m.total for m in marginals] + [m.increment for m in marginals]
            nodes = self.variance_nodes(laws, points)
            totals = [self.node_masses(m.total, nodes) for m in marginals]
            increments = [self.node_masses(m.increment, nodes) for m in marginals]

            first = np.zeros((nodes.size, nodes.size))
            first[0] = totals[0]
            couplings = [VarianceCoupling(nodes=nodes, mass=first)]
            for k in range(2, len(marginals) + 1):
                prior = couplings[-1].column_marginal
                try:
                    increment = self.mean_consistent_increment(prior, totals[k - 1], increments[k - 1], nodes, k)
                    couplings.append(self.couple_marginals(prior, totals[k - 1], increment, nodes))
                except MixvolError as e:
                    context = dict(e.context)
                    context["layer"] = k
                    raise type(e)(f"layer {k}: {e}", context) from e

            rates, x0 = self.recovery_service.infer_rates(list(spot_slices), spot)
            ratios = (rescaled_slice(spot_slices[0], 1.0 / x0),) + tuple(ratio_slices)
            model = HierarchicalModel(
                maturities=np.concatenate([[t0], [s.maturity for s in spot_slices]]), x0=x0, nodes=nodes,
                couplings=tuple(couplings), rates=rates, spot_slices=tuple(spot_slices), ratio_slices=ratios,
            )
            self.check_chaining(model, totals)
            logger.info(f"Built layered model with {model.layers} layers on {nodes.size} variance nodes")
            return model
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error building layered model: {e}")
            raise

    def flat_model(self, sigma: Union[float, Sequence[float]], maturities: Sequence[float], x0: float,
                   rates: Optional[RateCurve] = None, t0: float = 0.0) -> HierarchicalModel:
        """Deterministic variance: layer k accrues sigma_k^2 (T_k - T_{k-1})"""
        maturities = np.concatenate([[t0], np.asarray(maturities, dtype=float)])
        sigmas = np.broadcast_to(np.asarray(sigma, dtype=float), (maturities.size - 1,))
        if np.any(sigmas < 0):
            raise PreconditionError("volatilities must be nonnegative")
        totals = np.concatenate([[0.0], np.cumsum(sigmas ** 2 * np.diff(maturities))])
        nodes = self._atomic_lattice(np.concatenate([totals, np.diff(totals)])) if np.any(totals > 0) else None
        if nodes is None:
            nodes = np.linspace(0.0, max(totals[-1], 1e-12), self.config.coupling_grid_points)
        index = [int(np.argmin(np.abs(nodes - v))) for v in totals]
        couplings = []
        for k in range(1, maturities.size):
            mass = np.zeros((nodes.size, nodes.size))
            mass[index[k - 1], index[k]] = 1.0
            couplings.append(VarianceCoupling(nodes=nodes, mass=mass))
        return HierarchicalModel(maturities=maturities, x0=x0, nodes=nodes, couplings=tuple(couplings),
                                 rates=rates or RateCurve.flat())

    def chain_marginals(self, model: HierarchicalModel) -> List[np.ndarray]:
        """l_1..l_n propagated from the point mass at v0 through the coupling kernels"""
        current = model.total_marginal(0)
        chained = []
        for coupling in model.couplings:
            current = current @ coupling.kernel()
            chained.append(current)
        return chained

    def check_chaining(self, model: HierarchicalModel, marginals: Sequence[np.ndarray]) -> List[float]:
        """L1 gaps between the chained and the given layer marginals; raises above the chaining tolerance"""
        gaps = []
        for k, (chained, target) in enumerate(zip(self.chain_marginals(model), marginals), start=1):
            target = np.asarray(target, dtype=float)
            gap = float(np.abs(chained / chained.sum() - target / target.sum()).sum())
            if gap > self.config.chaining_tolerance:
                raise InvariantError(
                    f"chained couplings miss the layer {k} marginal by {gap:.2e} in L1",
                    {"layer": k, "gap": gap},
                )
            gaps.append(gap)
        logger.debug(f"Chained marginals within {max(gaps):.2e} of the layer marginals")
        return gaps

    def mean_consistent_increment(self, l_prev: np.ndarray, l_next: np.ndarray, l_inc: np.ndarray,
                                  nodes: np.ndarray, k: int) -> np.ndarray:
        """
        Increment masses tilted by exp(lambda theta) so that
        mean(l_prev) + mean(l_inc) = mean(l_next) holds on the nodes, which
        every coupling needs. Gaps beyond the projection tolerance are
        returned untouched for the coupling's moment check.
        """
        def mean(masses):
            return float(np.dot(nodes, masses) / masses.sum())

        target = mean(l_next) - mean(l_prev)
        current = mean(l_inc)
        gap = target - current
        support = nodes[l_inc > 0]
        if abs(gap) <= 1e-12 * nodes[-1] or abs(gap) > self.config.mean_projection_tolerance * mean(l_next):
            return l_inc
        if not support.min() < target < support.max():
            return l_inc
        scaled = nodes / nodes[-1]

        def tilted(lam):
            exponent = lam * scaled
            weights = np.where(l_inc > 0, l_inc * np.exp(exponent - exponent[l_inc > 0].max()), 0.0)
            return weights / weights.sum()

        lo, hi = -1.0, 1.0
        while mean(tilted(lo)) > target and lo > -1e6:
            lo *= 2.0
        while mean(tilted(hi)) < target and hi < 1e6:
            hi *= 2.0
        lam = brentq(lambda x: mean(tilted(x)) - target, lo, hi, xtol=1e-14)
        adjusted = tilted(lam) * l_inc.sum()
        logger.info(f"Layer {k}: increment mean moved by {gap:.3e} to {target:.6g} for a consistent coupling")
        return adjusted

    def conditional_cdf(self, model: HierarchicalModel, k: int, sigma_prev: float) -> ConditionalCdf:
        """F_k( . | v_{k-1}) on increments; v_{k-1} snaps to the nearest node"""
        model.check_layer(k)
        i = int(np.argmin(np.abs(model.nodes - sigma_prev)))
        snapped = abs(model.nodes[i] - sigma_prev) > 1e-12 * max(1.0, abs(sigma_prev))
        if snapped:
            logger.warning(f"Prior variance {sigma_prev:.6g} snapped to node {model.nodes[i]:.6g}")
        row = model.couplings[k - 1].mass[i, i:]
        if not row.sum() > 0:
            raise PreconditionError(f"layer {k} has no mass after variance {model.nodes[i]:.6g}",
                                    {"layer": k, "variance": float(model.nodes[i])})
        cdf = np.clip(np.cumsum(row) / row.sum(), 0.0, 1.0)
        return ConditionalCdf(increments=model.nodes[i:] - model.nodes[i], cdf=cdf,
                              prior_variance=float(model.nodes[i]), snapped=bool(snapped))

    def build_layer_parametrization(self, model: HierarchicalModel, k: int) -> LayerParametrization:
        model.check_layer(k)
        return LayerParametrization.from_coupling(k, float(model.maturities[k - 1]), float(model.maturities[k]),
                                                  model.couplings[k - 1])

    def layer_descriptor(self, model: HierarchicalModel, k: int, sigma_prev: float) -> MgpDescriptor:
        """
        One layer as an MGP on [T_{k-1}, T_k] started at one: mixing over the
        increment with conditional law F_k, variance rate increment / tenor.
        """
        conditional = self.conditional_cdf(model, k, sigma_prev)
        masses = np.diff(conditional.cdf, prepend=0.0)
        live = masses > 0
        return MgpDescriptor(
            mixing=MixingLaw.from_atoms(conditional.increments[live], masses[live] / masses[live].sum()),
            maturities=np.array([model.maturities[k]]),
            variance_increments=conditional.increments[live][:, None],
            x0=1.0,
            t0=float(model.maturities[k - 1]),
            rates=model.rates,
        )

    # Slices and prices

    def spot_slice(self, model: HierarchicalModel, k: int) -> RiskNeutralSlice:
        """D_k as the lognormal mixture over l_k"""
        masses = model.total_marginal(k)
        maturity = float(model.maturities[k])
        return self.market_service.mixture_slice(model.forward_curve.forward(maturity), maturity,
                                                 model.nodes - model.nodes[model.v0_index], masses)

    def ratio_slice(self, model: HierarchicalModel, k: int) -> RiskNeutralSlice:
        """D_hat_k: X_{T_k} / X_{T_{k-1}} mixes lognormals over the increment law"""
        maturity = float(model.maturities[k])
        growth = model.forward_curve.growth(float(model.maturities[k - 1]), maturity)
        return self.market_service.mixture_slice(growth, maturity, model.nodes, model.increment_marginal(k))

    def price_european(self, model: HierarchicalModel, k: int, strike: float,
                       kind: OptionKind = OptionKind.CALL) -> float:
        """Mixing-weighted Black-Scholes on the total variance accrued since the model start"""
        masses = model.total_marginal(k)
        maturity = float(model.maturities[k])
        curve = model.forward_curve
        variances = model.nodes - model.nodes[model.v0_index]
        live = masses > 0
        prices = black_price(curve.forward(maturity), strike, variances[live], curve.discount(maturity), kind)
        return float(np.dot(masses[live], prices))

    def price_forward_start(self, model: HierarchicalModel, k: int, strike: float,
                            kind: OptionKind = OptionKind.CALL) -> float:
        """Option on X_{T_k} / X_{T_{k-1}} paid at T_k: Black prices weighted by the increment law"""
        model.check_layer(k)
        masses = model.increment_marginal(k)
        start, end = float(model.maturities[k - 1]), float(model.maturities[k])
        curve = model.forward_curve
        live = masses > 0
        prices = black_price(curve.growth(start, end), strike, model.nodes[live], curve.discount(end), kind)
        return float(np.dot(masses[live], prices))

    # Verification

    def verify_model(self, model: HierarchicalModel, paths: Optional[int] = None,
                     seed: Optional[int] = None) -> ModelVerification:
        """
        KS tests of the simulated X_{T_k} against D_k and of X_{T_k}/X_{T_{k-1}}
        against D_hat_k, using attached slices when the model carries them.
        """
        paths = self.config.mc_paths if paths is None else paths
        seed = self.config.seed if seed is None else seed
        batch = self.mc_service.simulate_hier(model, model.maturities, paths, seed)
        threshold = max(self.config.ks_tolerance, 1.95 / np.sqrt(paths))
        curve = model.forward_curve
        checks = []
        for k in range(1, model.layers + 1):
            maturity = float(model.maturities[k])
            spot = batch.values[:, k]
            ratio = batch.values[:, k] / batch.values[:, k - 1]
            if model.spot_slices:
                spot_cdf = model.spot_slices[k - 1].cdf_at
                ratio_cdf = model.ratio_slices[k - 1].cdf_at
            else:
                spot_cdf = self._analytic_cdf(curve.forward(maturity), model.nodes - model.nodes[model.v0_index],
                                              model.total_marginal(k))
                ratio_cdf = self._analytic_cdf(curve.growth(float(model.maturities[k - 1]), maturity),
                                               model.nodes, model.increment_marginal(k))
            for kind, sample, cdf in (("spot", spot, spot_cdf), ("ratio", ratio, ratio_cdf)):
                result = kstest(sample, cdf)
                passed = bool(result.statistic < threshold)
                checks.append(SliceCheck(layer=k, kind=kind, statistic=float(result.statistic),
                                         p_value=float(result.pvalue), passed=passed))
                if not passed:
                    logger.warning(f"Layer {k} {kind} marginal fails: KS {result.statistic:.4f} >= {threshold:.4f}")
        report = ModelVerification(paths=paths, seed=seed, checks=checks)
        logger.info(f"Verified {model.layers} layers over {paths} paths: {'pass' if report.passed else 'fail'}")
        return report

    def compare_with_samples(self, model: HierarchicalModel, samples: np.ndarray, paths: Optional[int] = None,
                             seed: Optional[int] = None) -> ModelVerification:
        """
        Two-sample KS of simulated X_{T_k} and X_{T_k}/X_{T_{k-1}} against
        reference asset draws with one column per layer maturity.
        """
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != model.layers:
            raise PreconditionError(f"reference draws need {model.layers} columns, got shape {samples.shape}")
        paths = self.config.mc_paths if paths is None else paths
        seed = self.config.seed if seed is None else seed
        batch = self.mc_service.simulate_hier(model, model.maturities, paths, seed)
        reference = np.column_stack([np.full(samples.shape[0], model.x0), samples])
        checks = []
        for k in range(1, model.layers + 1):
            pairs = (
                ("spot", batch.values[:, k], reference[:, k]),
                ("ratio", batch.values[:, k] / batch.values[:, k - 1], reference[:, k] / reference[:, k - 1]),
            )
            for kind, simulated, target in pairs:
                result = ks_2samp(simulated, target)
                passed = bool(result.statistic < self.config.oracle_ks_tolerance)
                checks.append(SliceCheck(layer=k, kind=kind, statistic=float(result.statistic),
                                         p_value=float(result.pvalue), passed=passed))
                if not passed:
                    logger.warning(f"Layer {k} {kind} marginal departs from the reference: KS {result.statistic:.4f}")
        report = ModelVerification(paths=paths, seed=seed, checks=checks)
        logger.info(f"Compared {model.layers} layers with {samples.shape[0]} reference draws")
        return report

    @staticmethod
    def _analytic_cdf(forward: float, variances: np.ndarray, masses: np.ndarray):
        def cdf(x):
            return mixture_cdf_on_nodes(x, forward, variances, masses)
        return cdf

    # Restarts

    def conditional_restart(self, model: HierarchicalModel, k: int, x: float, v_prev: float) -> HierarchicalModel:
        """
        Model on layers k..n started at T_{k-1} from spot x and realized total
        variance v_prev, chaining the original kernels from that point mass.
        """
        model.check_layer(k)
        if not x > 0:
            raise PreconditionError("restart spot must be positive")
        prior = model.couplings[k - 1].row_marginal
        support = np.flatnonzero(prior > 0)
        i = int(support[np.argmin(np.abs(model.nodes[support] - v_prev))])
        if abs(model.nodes[i] - v_prev) > 1e-12 * max(1.0, abs(v_prev)):
            logger.warning(f"Realized variance {v_prev:.6g} snapped to supported node {model.nodes[i]:.6g}")
        current = np.zeros(model.nodes.size)
        current[i] = 1.0
        couplings = []
        for coupling in model.couplings[k - 1:]:
            mass = current[:, None] * coupling.kernel()
            couplings.append(VarianceCoupling(nodes=model.nodes, mass=mass))
            current = mass.sum(axis=0)
        restarted = HierarchicalModel(
            maturities=model.maturities[k - 1:], x0=x, nodes=model.nodes, couplings=tuple(couplings),
            v0=float(model.nodes[i]), rates=model.rates,
        )
        logger.info(f"Restarted layered model at layer {k} from x={x:.6g}, v={model.nodes[i]:.6g}")
        return restarted

"""
Heston Service - Business Logic Layer
Integrated CIR variance samples, empirical layered models built from them
and uncorrelated Heston asset draws for comparison
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ..config import MixvolSettings, settings as default_settings
from ..errors import PreconditionError
from ..models.hierarchical import CirParams, HestonVarianceSample, HierarchicalModel, VarianceCoupling
from ..models.market import RateCurve

logger = logging.getLogger(__name__)


class HestonService:
    """Service for the uncorrelated Heston oracle of the layered model"""

    def __init__(self, config: MixvolSettings = default_settings):
        self.config = config

    def heston_variance_law(self, params: CirParams, maturities: Sequence[float], draws: Optional[int] = None,
                            seed: Optional[int] = None, t0: float = 0.0) -> HestonVarianceSample:
        """
        I(T_k) = int_{t0}^{T_k} v ds by full-truncation Euler for v, trapezoid
        in time for I. Batches draw from independent seed-sequence children.
        """
        maturities = np.asarray(maturities, dtype=float)
        if maturities.size == 0 or maturities[0] <= t0 or np.any(np.diff(maturities) <= 0):
            raise PreconditionError("maturities must ascend after the start")
        draws = self.config.heston_draws if draws is None else draws
        seed = self.config.seed if seed is None else seed
        batch = self.config.mc_batch_size
        sizes = [min(batch, draws - start) for start in range(0, draws, batch)]

        def run(b: int):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
            return self._integrate(params, maturities, t0, sizes[b], rng)

        with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
            results = list(pool.map(run, range(len(sizes))))
        integrated = np.concatenate([r[0] for r in results])
        truncated = sum(r[1] for r in results)
        steps = sum(r[2] for r in results)
        rate = truncated / max(steps, 1)
        if rate > self.config.cir_truncation_warning:
            logger.warning(f"CIR variance truncated on {rate:.1%} of steps (Feller ratio {params.feller_ratio:.3f})")
        logger.info(f"Sampled {draws} integrated-variance paths at {maturities.size} maturities")
        return HestonVarianceSample(maturities=maturities, integrated=integrated, truncation_rate=float(rate))

    def _integrate(self, params: CirParams, maturities: np.ndarray, t0: float, size: int,
                   rng: np.random.Generator):
        step = 1.0 / self.config.cir_steps_per_year
        v = np.full(size, params.v0)
        integral = np.zeros(size)
        out = np.empty((size, maturities.size))
        truncated = 0
        steps = 0
        now = t0
        for k, target in enumerate(maturities):
            count = max(1, int(np.ceil((target - now) / step - 1e-9)))
            dt = (target - now) / count
            for _ in range(count):
                positive = np.maximum(v, 0.0)
                v = v + params.kappa * (params.theta - positive) * dt + params.xi * np.sqrt(positive * dt) * (
                    rng.standard_normal(size)
                )
                truncated += int(np.count_nonzero(v < 0))
                steps += size
                integral += 0.5 * (positive + np.maximum(v, 0.0)) * dt
            now = target
            out[:, k] = integral
        return out, truncated, steps

    def model_from_variance_samples(self, integrated: np.ndarray, maturities: Sequence[float], x0: float,
                                    rates: Optional[RateCurve] = None, points: Optional[int] = None,
                                    t0: float = 0.0) -> HierarchicalModel:
        """
        Empirical layered model: samples are rounded to a uniform grid and
        consecutive pairs are histogrammed into couplings.
        """
        integrated = np.asarray(integrated, dtype=float)
        maturities = np.asarray(maturities, dtype=float)
        if integrated.ndim != 2 or integrated.shape[1] != maturities.size:
            raise PreconditionError("samples need one column per maturity")
        if np.any(integrated < 0) or np.any(np.diff(integrated, axis=1) < 0):
            raise PreconditionError("integrated variance must be nonnegative and nondecreasing")
        points = self.config.coupling_grid_points if points is None else points
        top = float(integrated.max())
        if not top > 0:
            raise PreconditionError("samples carry no variance")
        nodes = np.linspace(0.0, top, points)
        step = nodes[1]
        index = np.clip(np.rint(integrated / step).astype(int), 0, points - 1)
        index = np.column_stack([np.zeros(index.shape[0], dtype=int), index])
        couplings = []
        for k in range(maturities.size):
            mass = np.zeros((points, points))
            np.add.at(mass, (index[:, k], index[:, k + 1]), 1.0)
            couplings.append(VarianceCoupling(nodes=nodes, mass=mass / index.shape[0]))
        logger.info(f"Empirical model from {integrated.shape[0]} samples on {points} variance nodes")
        return HierarchicalModel(
            maturities=np.concatenate([[t0], maturities]), x0=x0, nodes=nodes, couplings=tuple(couplings),
            rates=rates or RateCurve.flat(),
        )

    def heston_asset_samples(self, sample: HestonVarianceSample, x0: float, rates: Optional[RateCurve] = None,
                             seed: Optional[int] = None, t0: float = 0.0) -> np.ndarray:
        """
        Asset values at the maturities given integrated variance: with the
        driving noises independent, log-returns are Gaussian with variance
        equal to the integrated-variance increments.
        """
        rates = rates or RateCurve.flat()
        seed = self.config.seed if seed is None else seed
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**31,)))
        increments = np.diff(sample.integrated, axis=1, prepend=0.0)
        brownian = np.cumsum(np.sqrt(increments) * rng.standard_normal(increments.shape), axis=1)
        forwards = x0 * np.exp(rates.integral(t0, sample.maturities))
        return forwards[None, :] * np.exp(-0.5 * sample.integrated + brownian)

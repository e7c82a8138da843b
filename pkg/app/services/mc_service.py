"""
Monte Carlo Service - Business Logic Layer
Exact-in-distribution simulation of MGDs and layered models, payoff
estimation and posterior reweighting of the mixing law
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from ..config import MixvolSettings, settings as default_settings
from ..errors import DomainError, MixvolError, PosteriorError, PreconditionError
from ..models.hierarchical import HierarchicalModel, LayerParametrization
from ..models.market import RateCurve
from ..models.mgp import MgpDescriptor, MixingLaw
from ..models.paths import PathBatch, PayoffSpec
from .mgp_service import lognormal_logpdf

logger = logging.getLogger(__name__)

BatchKernel = Callable[[np.random.Generator, int], Tuple[np.ndarray, np.ndarray]]


def lognormal_paths(forwards: np.ndarray, variances: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """
    X_j = F(t_j) exp(-V_j / 2 + W_j) with W_j Gaussian of variance V_j and
    independent increments; rows are paths, columns grid times.
    """
    steps = np.diff(variances, axis=1, prepend=0.0)
    brownian = np.cumsum(np.sqrt(np.clip(steps, 0.0, None)) * normals, axis=1)
    return forwards[None, :] * np.exp(-0.5 * variances + brownian)


class McService:
    """
    Monte Carlo engine

    Paths are split into fixed-size batches; batch b always draws from
    SeedSequence(seed, spawn_key=(b,)), normals before uniforms, so results
    do not depend on the worker count.
    """

    def __init__(self, config: MixvolSettings = default_settings):
        self.config = config

    def _draw(self, rng: np.random.Generator, size: int, steps: int, uniforms: int, antithetic: bool):
        if not antithetic:
            return rng.standard_normal((size, steps)), rng.random((size, uniforms))
        half = (size + 1) // 2
        normals = rng.standard_normal((half, steps))
        draws = rng.random((half, uniforms))
        return (np.concatenate([normals, -normals])[:size], np.concatenate([draws, 1.0 - draws])[:size])

    def _run_batches(self, paths: int, seed: int, kernel: BatchKernel, threads: Optional[int]):
        if paths < 1:
            raise PreconditionError("simulation needs at least one path")
        batch = self.config.mc_batch_size
        sizes = [min(batch, paths - start) for start in range(0, paths, batch)]
        workers = threads or self.config.threads

        def run(b: int):
            return kernel(np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,))), sizes[b])

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results: List[Tuple[np.ndarray, np.ndarray]] = list(pool.map(run, range(len(sizes))))
        return np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results]), workers

    @staticmethod
    def _check_grid(grid: np.ndarray, start: float, end: float) -> np.ndarray:
        grid = np.asarray(grid, dtype=float)
        if grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise PreconditionError("simulation grid must be ascending")
        if grid[0] < start - 1e-12 or grid[-1] > end + 1e-12:
            raise DomainError(f"simulation grid must lie in [{start}, {end}]")
        return grid

    def simulate_mgd(self, desc: MgpDescriptor, grid, paths: Optional[int] = None, seed: Optional[int] = None,
                     threads: Optional[int] = None, antithetic: bool = False) -> PathBatch:
        """One uniform picks the mixing node by inverse CDF; increments are exact lognormals"""
        grid = self._check_grid(grid, desc.t0, desc.tau0)
        paths = self.config.mc_paths if paths is None else paths
        seed = self.config.seed if seed is None else seed
        forwards = np.asarray(desc.forward_curve.forward(grid), dtype=float).reshape(-1)
        table = np.column_stack([desc.cumulative_variance(t) for t in grid])
        cumulative = np.cumsum(desc.mixing.masses)

        def kernel(rng: np.random.Generator, size: int):
            normals, uniforms = self._draw(rng, size, grid.size, 1, antithetic)
            index = np.minimum(np.searchsorted(cumulative, uniforms[:, 0] * cumulative[-1], side="right"),
                               desc.mixing.size - 1)
            return lognormal_paths(forwards, table[index], normals), desc.mixing.theta[index][:, None]

        try:
            values, hidden, workers = self._run_batches(paths, seed, kernel, threads)
            logger.info(f"Simulated {paths} MGD paths on {grid.size} times with seed {seed}")
            return PathBatch(times=grid, values=values, hidden=hidden, seed=seed, workers=workers, t0=desc.t0)
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error simulating MGD paths: {e}")
            raise

    def simulate_hier(self, model: HierarchicalModel, grid, paths: Optional[int] = None,
                      seed: Optional[int] = None, threads: Optional[int] = None,
                      antithetic: bool = False) -> PathBatch:
        """
        Layer by layer, V_k is the quantile of the conditional law given the
        realized V_{k-1}; inside a layer variance accrues at a constant rate.
        """
        grid = self._check_grid(grid, model.t0, float(model.maturities[-1]))
        paths = self.config.mc_paths if paths is None else paths
        seed = self.config.seed if seed is None else seed
        forwards = np.asarray(model.forward_curve.forward(grid), dtype=float).reshape(-1)
        layers = [
            LayerParametrization.from_coupling(k, float(model.maturities[k - 1]), float(model.maturities[k]),
                                               model.couplings[k - 1])
            for k in range(1, model.layers + 1)
        ]
        segment = np.clip(np.searchsorted(model.maturities, grid, side="left"), 1, model.layers)
        fraction = (grid - model.maturities[segment - 1]) / (model.maturities[segment] - model.maturities[segment - 1])

        def kernel(rng: np.random.Generator, size: int):
            normals, uniforms = self._draw(rng, size, grid.size, model.layers, antithetic)
            index = np.full(size, model.v0_index)
            states = [index]
            for layer in layers:
                index = layer.sample(index, uniforms[:, layer.index - 1])
                states.append(index)
            totals = model.nodes[np.column_stack(states)] - model.nodes[model.v0_index]
            variances = totals[:, segment - 1] + fraction[None, :] * (totals[:, segment] - totals[:, segment - 1])
            return lognormal_paths(forwards, variances, normals), model.nodes[np.column_stack(states[1:])]

        try:
            values, hidden, workers = self._run_batches(paths, seed, kernel, threads)
            logger.info(f"Simulated {paths} layered paths over {model.layers} layers with seed {seed}")
            return PathBatch(times=grid, values=values, hidden=hidden, seed=seed, workers=workers, t0=model.t0)
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error simulating layered paths: {e}")
            raise

    def price_mc(self, batch: PathBatch, payoff: PayoffSpec, rates: Optional[RateCurve] = None):
        """Discounted sample mean and its standard error"""
        rates = rates or RateCurve.flat()
        values = payoff.evaluate(batch)
        discount = float(np.exp(-rates.integral(batch.t0, payoff.maturity)))
        price = discount * float(values.mean())
        error = discount * float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else float("nan")
        return price, error

    def summarize(self, batch: PathBatch) -> pd.DataFrame:
        """Per-time statistics of the simulated asset"""
        return pd.DataFrame({
            "t": batch.times,
            "mean": batch.values.mean(axis=0),
            "std": batch.values.std(axis=0, ddof=1) if batch.paths > 1 else np.zeros(batch.times.size),
            "min": batch.values.min(axis=0),
            "max": batch.values.max(axis=0),
        })

    def posterior_mixing(self, desc: MgpDescriptor, t1: float, x1: float) -> MixingLaw:
        """m_hat(dtheta) proportional to m(dtheta) P(x1, t1; theta), in log space"""
        if not desc.t0 < t1 <= desc.tau0 + 1e-12:
            raise DomainError(f"observation time {t1} outside ({desc.t0}, {desc.tau0}]")
        if not x1 > 0:
            raise DomainError("observed price must be positive")
        variances = desc.cumulative_variance(t1)
        masses = desc.mixing.masses
        live = (variances > 0) & (masses > 0)
        log_weights = np.full(masses.size, -np.inf)
        log_weights[live] = np.log(masses[live]) + lognormal_logpdf(
            x1, desc.forward_curve.forward(t1), variances[live]
        )
        total = logsumexp(log_weights)
        if not np.isfinite(total):
            raise PosteriorError(f"no component gives positive density to {x1} at {t1}", {"t": t1, "x": x1})
        posterior = np.exp(log_weights - total)
        logger.debug(f"Posterior mixing at t={t1}, x={x1}: {int(live.sum())} live components")
        return desc.mixing.reweighted(posterior)

    def restart_descriptor(self, desc: MgpDescriptor, t1: float, x1: float) -> MgpDescriptor:
        """MGD started at (t1, x1) with the posterior mixing; variance is measured from t1"""
        posterior = self.posterior_mixing(desc, t1, x1)
        later = desc.maturities > t1 + 1e-12
        if not np.any(later):
            raise DomainError(f"no maturity after the restart time {t1}")
        first = int(np.flatnonzero(later)[0])
        increments = desc.variance_increments[:, first:].copy()
        increments[:, 0] = desc.cumulative[:, first + 1] - desc.cumulative_variance(t1)
        return MgpDescriptor(
            mixing=posterior,
            maturities=desc.maturities[first:],
            variance_increments=np.clip(increments, 0.0, None),
            x0=x1,
            t0=t1,
            rates=desc.rates,
        )

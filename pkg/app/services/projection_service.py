"""
Projection Service - Business Logic Layer
Markovian projection of an MGD onto local volatility and the Monte Carlo
check that both processes share their marginals
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import ks_2samp, lognorm

from ..config import MixvolSettings, settings as default_settings
from ..errors import DomainError, GridError, MixvolError, PreconditionError
from ..models.market import ForwardCurve
from ..models.mgp import MgpDescriptor
from ..models.projection import KsReport, LocalVolSurface
from .mgp_service import lognormal_logpdf

logger = logging.getLogger(__name__)


def lognormal_mixture_local_variance(weights: Sequence[float], sigmas: Sequence[float], curve: ForwardCurve,
                                     x, t: float) -> np.ndarray:
    """
    Local variance of the lognormal-mixture dynamics with constant component
    volatilities: sum lambda_i sigma_i^2 p_i(x) / sum lambda_i p_i(x).
    """
    weights = np.asarray(weights, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tenor = t - curve.t0
    if tenor <= 0:
        raise DomainError("local variance needs a time after the curve start")
    forward = curve.forward(t)
    scales = sigmas * np.sqrt(tenor)
    densities = lognorm.pdf(x[:, None], s=scales[None, :], scale=forward * np.exp(-0.5 * scales[None, :] ** 2))
    return (densities @ (weights * sigmas ** 2)) / (densities @ weights)


class ProjectionService:
    """Service for the local-volatility projection of mixture diffusions"""

    def __init__(self, config: MixvolSettings = default_settings):
        self.config = config

    def default_grids(self, desc: MgpDescriptor, x_points: int = 101, t_points: int = 20):
        """Log-spaced prices over +-6 sd of the widest component at the last maturity, times after t0"""
        if x_points < 3 or t_points < 1:
            raise PreconditionError("projection grids need at least three prices and one time")
        spread = float(np.sqrt(max(desc.cumulative_variance(desc.tau0).max(), 1e-8)))
        center = desc.forward_curve.forward(desc.tau0)
        x_grid = center * np.exp(np.linspace(-6.0 * spread, 6.0 * spread, x_points))
        t_grid = np.linspace(desc.t0, desc.tau0, t_points + 1)[1:]
        return x_grid, t_grid

    def project(self, desc: MgpDescriptor, x_grid, t_grid) -> LocalVolSurface:
        """
        nu_hat(x, t) = sum nu(theta, t) P(x, t; theta) m / sum P(x, t; theta) m,
        evaluated pointwise in log space. Cells with mixture density below the
        mask level take the nearest valid value of their row.
        """
        x_grid = np.asarray(x_grid, dtype=float)
        t_grid = np.asarray(t_grid, dtype=float)
        if np.any(x_grid <= 0) or np.any(np.diff(x_grid) <= 0):
            raise PreconditionError("x grid must be positive and ascending")
        if t_grid.size == 0 or t_grid[0] <= desc.t0 or t_grid[-1] > desc.tau0 + 1e-12:
            raise DomainError(f"t grid must lie in ({desc.t0}, {desc.tau0}]")
        try:
            variance = np.empty((t_grid.size, x_grid.size))
            masked = np.zeros_like(variance, dtype=bool)
            log_masses = np.log(np.where(desc.mixing.masses > 0, desc.mixing.masses, 1.0))
            for row, t in enumerate(t_grid):
                totals = desc.cumulative_variance(t)
                rates = desc.variance_rate(t)
                live = (totals > 0) & (desc.mixing.masses > 0)
                if not np.any(live):
                    raise GridError(f"every component is degenerate at t={t}", {"t": float(t)})
                forward = desc.forward_curve.forward(t)
                log_terms = log_masses[live][None, :] + lognormal_logpdf(x_grid[:, None], forward,
                                                                        totals[live][None, :])
                log_density = logsumexp(log_terms, axis=1)
                weights = np.exp(log_terms - log_density[:, None])
                values = weights @ rates[live]
                invalid = log_density < np.log(self.config.projection_mask_density)
                if np.all(invalid):
                    raise GridError(f"mixture density vanishes on the whole x grid at t={t}",
                                    {"t": float(t)})
                if np.any(invalid):
                    valid = np.flatnonzero(~invalid)
                    cells = np.arange(x_grid.size)
                    position = np.searchsorted(valid, cells)
                    right = valid[np.clip(position, 0, valid.size - 1)]
                    left = valid[np.clip(position - 1, 0, valid.size - 1)]
                    values = values[np.where(np.abs(left - cells) < np.abs(right - cells), left, right)]
                variance[row] = values
                masked[row] = invalid
            surface = LocalVolSurface(x_grid=x_grid, t_grid=t_grid, variance=variance, masked=masked,
                                      x0=desc.x0, t0=desc.t0, rates=desc.rates)
            logger.info(f"Projected {desc.mixing.size} components onto a {t_grid.size}x{x_grid.size} surface, "
                        f"{surface.masked_cells} cells masked")
            return surface
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error projecting descriptor: {e}")
            raise

    def simulate_local_vol(self, surface: LocalVolSurface, times: np.ndarray, paths: int,
                           rng: np.random.Generator):
        """
        Log-Euler paths of dX = r X dt + sqrt(nu_hat) X dW sampled at times.
        Returns the samples (len times x paths) and the fraction of paths that
        left the surface's x range.
        """
        step = 1.0 / self.config.euler_steps_per_year
        log_x = np.full(paths, np.log(surface.x0))
        escaped = np.zeros(paths, dtype=bool)
        low, high = np.log(surface.x_grid[0]), np.log(surface.x_grid[-1])
        samples = np.empty((len(times), paths))
        now = surface.t0
        for k, target in enumerate(times):
            count = max(1, int(np.ceil((target - now) / step - 1e-9)))
            dt = (target - now) / count
            for _ in range(count):
                nu = surface.at(np.exp(log_x), now)
                rate = float(surface.rates.rate(now))
                log_x += (rate - 0.5 * nu) * dt + np.sqrt(nu * dt) * rng.standard_normal(paths)
                now += dt
                escaped |= (log_x < low) | (log_x > high)
            now = target
            samples[k] = np.exp(log_x)
        return samples, float(escaped.mean())

    def verify_projection(self, desc: MgpDescriptor, surface: LocalVolSurface, paths: int = 100_000,
                          seed: Optional[int] = None) -> KsReport:
        """Two-sample KS distance between local-vol paths and exact mixture draws at every t_grid point"""
        if paths < 2:
            raise PreconditionError("verification needs at least two paths")
        seed = self.config.seed if seed is None else seed
        euler_stream, exact_stream = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
        try:
            simulated, escaped = self.simulate_local_vol(surface, surface.t_grid, paths, euler_stream)
            if escaped > self.config.max_escape_fraction:
                raise GridError(
                    f"{escaped:.2%} of paths left the surface's x range; widen the grid",
                    {"escaped_fraction": escaped},
                )
            components = exact_stream.choice(desc.mixing.size, size=paths, p=desc.mixing.masses)
            normals = exact_stream.standard_normal((surface.t_grid.size, paths))
            statistics = np.empty(surface.t_grid.size)
            p_values = np.empty(surface.t_grid.size)
            for k, t in enumerate(surface.t_grid):
                total = desc.cumulative_variance(t)[components]
                exact = desc.forward_curve.forward(t) * np.exp(-0.5 * total + np.sqrt(total) * normals[k])
                result = ks_2samp(simulated[k], exact)
                statistics[k] = result.statistic
                p_values[k] = result.pvalue
            report = KsReport(times=surface.t_grid.copy(), statistics=statistics, p_values=p_values,
                              escaped_fraction=escaped, paths=paths)
            logger.info(f"Projection check over {paths} paths: max KS {report.max_statistic:.4f}")
            return report
        except MixvolError:
            raise
        except Exception as e:
            logger.error(f"Error verifying projection: {e}")
            raise

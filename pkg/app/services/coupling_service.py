"""
Coupling Service - Business Logic Layer
Maximum-entropy joint laws of consecutive total variances with prescribed
prior, next and increment marginals
"""

import logging
from typing import Optional

import numpy as np

from ..config import MixvolSettings, settings as default_settings
from ..errors import InfeasibleCouplingError, PreconditionError
from ..models.hierarchical import VarianceCoupling

logger = logging.getLogger(__name__)


def _safe_ratio(target: np.ndarray, current: np.ndarray) -> np.ndarray:
    return np.divide(target, current, out=np.zeros_like(target), where=current > 0)


class CouplingService:
    """
    Iterative proportional scaling over the upper triangle y >= x.

    Each sweep rescales the row, column and diagonal-difference families in
    turn; the limit is the I-projection of the uniform table onto the three
    marginal constraints.
    """

    def __init__(self, config: MixvolSettings = default_settings):
        self.config = config

    def couple_marginals(self, l_prev, l_next, l_inc, nodes, tolerance: Optional[float] = None,
                         max_sweeps: Optional[int] = None) -> VarianceCoupling:
        nodes = np.asarray(nodes, dtype=float)
        marginals = [self._normalized(np.asarray(m, dtype=float), name, nodes.size)
                     for m, name in ((l_prev, "prior"), (l_next, "next"), (l_inc, "increment"))]
        prev, nxt, inc = marginals
        tolerance = self.config.coupling_tolerance if tolerance is None else tolerance
        max_sweeps = self.config.coupling_max_sweeps if max_sweeps is None else max_sweeps

        means = [float(np.dot(nodes, m)) for m in marginals]
        gap = abs(means[1] - means[0] - means[2])
        if gap > self.config.coupling_moment_tolerance * max(means[1], 1e-300):
            raise InfeasibleCouplingError(
                f"mean of the next marginal {means[1]:.6g} differs from prior plus increment "
                f"{means[0] + means[2]:.6g}",
                {"means": means, "gap": gap},
            )

        rows, cols = np.triu_indices(nodes.size)
        diags = cols - rows
        live = (prev[rows] > 0) & (nxt[cols] > 0) & (inc[diags] > 0)
        if not np.any(live):
            raise InfeasibleCouplingError("the three marginals share no admissible cell")
        rows, cols, diags = rows[live], cols[live], diags[live]
        weights = np.full(rows.size, 1.0 / rows.size)

        residuals = self._residuals(weights, rows, cols, diags, marginals)
        sweeps = 0
        while max(residuals) > tolerance and sweeps < max_sweeps:
            for index, target in ((rows, prev), (cols, nxt), (diags, inc)):
                current = np.bincount(index, weights=weights, minlength=nodes.size)
                weights *= _safe_ratio(target, current)[index]
            sweeps += 1
            residuals = self._residuals(weights, rows, cols, diags, marginals)

        worst = max(residuals)
        if worst > self.config.coupling_infeasible_residual:
            raise InfeasibleCouplingError(
                f"no coupling on the grid: best residuals {tuple(round(r, 8) for r in residuals)} "
                f"after {sweeps} sweeps",
                {"residuals": residuals, "sweeps": sweeps},
            )
        if worst > tolerance:
            logger.warning(f"Coupling stopped at residual {worst:.2e} after {sweeps} sweeps")
        mass = np.zeros((nodes.size, nodes.size))
        mass[rows, cols] = weights
        logger.info(f"Coupled marginals on {nodes.size} nodes in {sweeps} sweeps, residual {worst:.2e}")
        return VarianceCoupling(nodes=nodes, mass=mass, residuals=tuple(residuals), sweeps=sweeps)

    @staticmethod
    def _normalized(masses: np.ndarray, name: str, size: int) -> np.ndarray:
        if masses.shape != (size,):
            raise PreconditionError(f"{name} marginal must have one mass per node")
        if np.any(masses < 0) or not masses.sum() > 0:
            raise PreconditionError(f"{name} marginal must be nonnegative with positive mass")
        return masses / masses.sum()

    @staticmethod
    def _residuals(weights, rows, cols, diags, marginals):
        size = marginals[0].size
        return [
            float(np.abs(np.bincount(index, weights=weights, minlength=size) - target).sum())
            for index, target in zip((rows, cols, diags), marginals)
        ]

    def product_coupling(self, l_prev, l_inc, nodes) -> VarianceCoupling:
        """Independent increments: f[i, i + d] = l_prev[i] l_inc[d]"""
        nodes = np.asarray(nodes, dtype=float)
        prev = self._normalized(np.asarray(l_prev, dtype=float), "prior", nodes.size)
        inc = self._normalized(np.asarray(l_inc, dtype=float), "increment", nodes.size)
        rows, cols = np.triu_indices(nodes.size)
        mass = np.zeros((nodes.size, nodes.size))
        mass[rows, cols] = prev[rows] * inc[cols - rows]
        lost = 1.0 - mass.sum()
        if lost > 1e-12:
            raise PreconditionError(f"independent increments leave the grid with mass {lost:.2e}")
        return VarianceCoupling(nodes=nodes, mass=mass)

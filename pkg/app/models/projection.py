"""
Projection Models - Domain Entities
Local variance surfaces and their simulation check
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import PreconditionError
from .market import RateCurve, frozen_array


@dataclass(frozen=True)
class LocalVolSurface:
    """
    Local variance nu_hat on a (t, x) grid; rows follow t_grid.
    Masked cells carry the nearest unmasked value of their row.
    """

    x_grid: np.ndarray
    t_grid: np.ndarray
    variance: np.ndarray
    masked: np.ndarray
    x0: float
    t0: float = 0.0
    rates: RateCurve = field(default_factory=RateCurve.flat)

    def __post_init__(self):
        x_grid = frozen_array(self.x_grid, "surface x grid")
        t_grid = frozen_array(self.t_grid, "surface t grid")
        variance = frozen_array(self.variance, "local variance", ndim=2)
        masked = np.array(self.masked, dtype=bool)
        if variance.shape != (t_grid.size, x_grid.size) or masked.shape != variance.shape:
            raise PreconditionError("surface values must be shaped (len t_grid, len x_grid)")
        if np.any(x_grid <= 0) or np.any(np.diff(x_grid) <= 0) or np.any(np.diff(t_grid) <= 0):
            raise PreconditionError("surface grids must be ascending, prices positive")
        if np.any(variance < 0):
            raise PreconditionError("local variance must be nonnegative")
        masked.setflags(write=False)
        object.__setattr__(self, "x_grid", x_grid)
        object.__setattr__(self, "t_grid", t_grid)
        object.__setattr__(self, "variance", variance)
        object.__setattr__(self, "masked", masked)

    @property
    def local_vol(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def masked_cells(self) -> int:
        return int(self.masked.sum())

    def at(self, x: np.ndarray, t: float) -> np.ndarray:
        """Linear in log x within a row, linear in t between rows, flat outside"""
        log_x = np.log(np.asarray(x, dtype=float))
        log_grid = np.log(self.x_grid)
        if t <= self.t_grid[0]:
            return np.interp(log_x, log_grid, self.variance[0])
        if t >= self.t_grid[-1]:
            return np.interp(log_x, log_grid, self.variance[-1])
        j = int(np.searchsorted(self.t_grid, t, side="right")) - 1
        w = (t - self.t_grid[j]) / (self.t_grid[j + 1] - self.t_grid[j])
        lower = np.interp(log_x, log_grid, self.variance[j])
        upper = np.interp(log_x, log_grid, self.variance[j + 1])
        return (1.0 - w) * lower + w * upper

    def scaled(self, factor: float) -> "LocalVolSurface":
        """Same surface with every variance multiplied by factor"""
        return LocalVolSurface(self.x_grid, self.t_grid, self.variance * factor, self.masked,
                               self.x0, self.t0, self.rates)


@dataclass(frozen=True)
class KsReport:
    times: np.ndarray
    statistics: np.ndarray
    p_values: np.ndarray
    escaped_fraction: float
    paths: int

    @property
    def max_statistic(self) -> float:
        return float(np.max(self.statistics))

"""
MGP Models - Domain Entities
Mixing laws, mixture parametrizations and the European payoff description
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ..errors import DomainError, InvariantError, PreconditionError
from .market import ForwardCurve, RateCurve, frozen_array


class OptionKind(Enum):
    """European option kind"""
    CALL = "call"
    PUT = "put"


class MixingKind(Enum):
    ATOMS = "atoms"
    GRID = "grid"


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Weights w with sum(w * f) equal to the trapezoid integral of f"""
    steps = np.diff(grid)
    weights = np.zeros_like(grid)
    weights[:-1] += 0.5 * steps
    weights[1:] += 0.5 * steps
    return weights


@dataclass(frozen=True)
class MixingLaw:
    """
    Probability law of the hidden parameter.

    `masses` is the quadrature rule every mixture sum uses (the atom weights,
    or density times trapezoid weights). The CDF is the table
    (cdf_theta, cdf_values), interpolated linearly for grid laws.
    """

    kind: MixingKind
    theta: np.ndarray
    masses: np.ndarray
    cdf_theta: np.ndarray
    cdf_values: np.ndarray
    density: Optional[np.ndarray] = None

    @classmethod
    def from_atoms(cls, thetas: Sequence[float], weights: Sequence[float]) -> "MixingLaw":
        theta = frozen_array(thetas, "atom locations")
        weights = np.array(weights, dtype=float)
        if theta.size == 0 or weights.shape != theta.shape:
            raise PreconditionError("atoms need one weight per location")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-10:
            raise InvariantError(f"atom weights must be nonnegative and sum to one, got {weights.sum()!r}")
        weights = weights / weights.sum()
        order = np.argsort(theta, kind="stable")
        cdf_theta = theta[order]
        cdf_values = np.clip(np.cumsum(weights[order]), 0.0, 1.0)
        cdf_values[-1] = 1.0
        return cls(MixingKind.ATOMS, theta, frozen_array(weights, "atom weights"),
                   frozen_array(cdf_theta, "cdf grid"), frozen_array(cdf_values, "cdf"))

    @classmethod
    def point(cls, theta: float) -> "MixingLaw":
        return cls.from_atoms([theta], [1.0])

    @classmethod
    def from_grid(cls, theta: Sequence[float], density: Sequence[float], tolerance: float = 1e-6) -> "MixingLaw":
        theta = frozen_array(theta, "mixing grid")
        density = np.array(density, dtype=float)
        if theta.size < 2 or density.shape != theta.shape or np.any(np.diff(theta) <= 0):
            raise PreconditionError("grid mixing needs an ascending grid with one density value per node")
        if np.any(density < 0):
            raise InvariantError("mixing density has negative values")
        mass = trapezoid(density, theta)
        if abs(mass - 1.0) > tolerance:
            raise InvariantError(f"mixing density integrates to {mass:.8f}")
        density = density / mass
        masses = density * trapezoid_weights(theta)
        cdf = cumulative_trapezoid(density, theta, initial=0.0)
        cdf = np.clip(cdf / cdf[-1], 0.0, 1.0)
        return cls(MixingKind.GRID, theta, frozen_array(masses / masses.sum(), "masses"),
                   theta, frozen_array(cdf, "cdf"), frozen_array(density, "mixing density"))

    @classmethod
    def uniform(cls, n: int) -> "MixingLaw":
        """Uniform law on [0, 1] with n equal cells, nodes at the cell midpoints"""
        if n < 1:
            raise PreconditionError("uniform mixing needs at least one cell")
        theta = (np.arange(n) + 0.5) / n
        return cls(MixingKind.GRID, frozen_array(theta, "quantile nodes"),
                   frozen_array(np.full(n, 1.0 / n), "masses"),
                   frozen_array([0.0, 1.0], "cdf grid"), frozen_array([0.0, 1.0], "cdf"),
                   frozen_array(np.ones(n), "mixing density"))

    @classmethod
    def from_table(cls, theta: Sequence[float], masses: Sequence[float], cdf_theta: Sequence[float],
                   cdf_values: Sequence[float], density: Sequence[float]) -> "MixingLaw":
        """Grid law from stored tables, taken as they are"""
        theta = frozen_array(theta, "mixing grid")
        masses = frozen_array(masses, "masses")
        density = frozen_array(density, "mixing density")
        cdf_theta = frozen_array(cdf_theta, "cdf grid")
        cdf_values = frozen_array(cdf_values, "cdf")
        if masses.shape != theta.shape or density.shape != theta.shape or cdf_theta.shape != cdf_values.shape:
            raise PreconditionError("mixing tables disagree in length")
        if np.any(masses < 0) or np.any(density < 0) or abs(masses.sum() - 1.0) > 1e-10:
            raise InvariantError(f"mixing masses must be nonnegative and sum to one, got {masses.sum()!r}")
        if np.any(np.diff(cdf_theta) < 0) or np.any(np.diff(cdf_values) < 0):
            raise InvariantError("mixing cdf table is not monotone")
        if cdf_values[0] < 0 or cdf_values[-1] > 1.0 + 1e-12:
            raise InvariantError("mixing cdf leaves [0, 1]")
        return cls(MixingKind.GRID, theta, masses, cdf_theta, cdf_values, density)

    @property
    def is_atomic(self) -> bool:
        return self.kind is MixingKind.ATOMS

    @property
    def size(self) -> int:
        return int(self.theta.size)

    def mean(self) -> float:
        return float(np.dot(self.masses, self.theta))

    def cdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.is_atomic:
            index = np.searchsorted(self.cdf_theta, theta, side="right")
            padded = np.concatenate([[0.0], self.cdf_values])
            return padded[index]
        return np.interp(theta, self.cdf_theta, self.cdf_values, left=0.0, right=1.0)

    def quantile_index(self, u) -> np.ndarray:
        """Index into `theta` of the atom carrying quantile level u"""
        if not self.is_atomic:
            raise DomainError("quantile_index applies to atomic laws only")
        order = np.argsort(self.theta, kind="stable")
        position = np.searchsorted(self.cdf_values, np.asarray(u, dtype=float), side="left")
        return order[np.clip(position, 0, self.size - 1)]

    def quantile(self, u):
        """Left-continuous inverse CDF; flat stretches resolve to their midpoint"""
        u = np.asarray(u, dtype=float)
        if self.is_atomic:
            return self.theta[self.quantile_index(u)]
        levels, first = np.unique(self.cdf_values, return_index=True)
        last = self.cdf_values.size - 1 - np.unique(self.cdf_values[::-1], return_index=True)[1]
        nodes = 0.5 * (self.cdf_theta[first] + self.cdf_theta[last])
        if levels.size == 1:
            return np.full_like(u, nodes[0])
        return np.interp(u, levels, nodes)

    def flat_intervals(self) -> List[Tuple[float, float]]:
        """Interior intervals of the support on which the CDF does not move"""
        if self.is_atomic or self.density is None:
            return []
        positive = np.flatnonzero(self.density > 0)
        if positive.size == 0:
            return []
        intervals = []
        start = None
        for i in range(positive[0], positive[-1] + 1):
            if self.density[i] <= 0 and start is None:
                start = i - 1
            elif self.density[i] > 0 and start is not None:
                intervals.append((float(self.theta[start + 1]), float(self.theta[i - 1])))
                start = None
        return intervals

    def reweighted(self, masses: np.ndarray) -> "MixingLaw":
        """Same support with new (normalized) quadrature masses"""
        masses = np.asarray(masses, dtype=float)
        masses = masses / masses.sum()
        if self.is_atomic:
            return MixingLaw.from_atoms(self.theta, masses)
        ratio = np.divide(masses, self.masses, out=np.zeros_like(masses), where=self.masses > 0)
        cdf = np.clip(np.concatenate([[0.0], np.cumsum(masses)]), 0.0, 1.0)
        cdf[-1] = 1.0
        if self.size > 1:
            midpoints = 0.5 * (self.theta[1:] + self.theta[:-1])
            edges = np.concatenate([[self.theta[0]], midpoints, [self.theta[-1]]])
        else:
            edges = np.array([self.theta[0], self.theta[0] + 1e-12])
        return MixingLaw(MixingKind.GRID, self.theta, frozen_array(masses, "masses"),
                         frozen_array(edges, "cdf grid"), frozen_array(cdf, "cdf"),
                         frozen_array(self.density * ratio, "mixing density"))


@dataclass(frozen=True)
class MgpDescriptor:
    """
    Mixture of GGBMs.

    variance_increments[i, j] is the total variance of component theta[i]
    accumulated over (knots[j], knots[j+1]] with knots = (t0, T_1, ..., T_m);
    the variance rate is constant inside each interval.
    """

    mixing: MixingLaw
    maturities: np.ndarray
    variance_increments: np.ndarray
    x0: float
    t0: float = 0.0
    rates: RateCurve = field(default_factory=RateCurve.flat)
    theta_domain: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        maturities = frozen_array(self.maturities, "maturities")
        increments = frozen_array(self.variance_increments, "variance increments", ndim=2)
        if maturities.size == 0 or maturities[0] <= self.t0 or np.any(np.diff(maturities) <= 0):
            raise PreconditionError("maturities must be strictly increasing and after t0")
        if increments.shape != (self.mixing.size, maturities.size):
            raise PreconditionError(
                f"variance table has shape {increments.shape}, expected {(self.mixing.size, maturities.size)}"
            )
        if np.any(increments < 0):
            raise InvariantError("variance increments must be nonnegative")
        if not self.x0 > 0:
            raise PreconditionError("spot must be positive")
        object.__setattr__(self, "maturities", maturities)
        object.__setattr__(self, "variance_increments", increments)
        if self.theta_domain is None:
            domain = (float(self.mixing.theta.min()), float(self.mixing.theta.max()))
            object.__setattr__(self, "theta_domain", domain)
        knots = np.concatenate([[self.t0], maturities])
        cumulative = np.concatenate([np.zeros((self.mixing.size, 1)), np.cumsum(increments, axis=1)], axis=1)
        knots.setflags(write=False)
        cumulative.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "cumulative", cumulative)

    @property
    def tau0(self) -> float:
        return float(self.maturities[-1])

    @property
    def forward_curve(self) -> ForwardCurve:
        return ForwardCurve(x0=self.x0, rates=self.rates, t0=self.t0)

    def _interval(self, t: float) -> Tuple[int, float]:
        if t < self.t0 - 1e-12 or t > self.tau0 + 1e-12:
            raise DomainError(f"time {t} outside [{self.t0}, {self.tau0}]")
        j = int(np.clip(np.searchsorted(self.knots, t, side="left") - 1, 0, self.maturities.size - 1))
        width = self.knots[j + 1] - self.knots[j]
        return j, float(np.clip((t - self.knots[j]) / width, 0.0, 1.0))

    def cumulative_variance(self, t: float) -> np.ndarray:
        """v(theta, t) for every mixing node"""
        j, fraction = self._interval(t)
        return self.cumulative[:, j] + fraction * self.variance_increments[:, j]

    def variance_rate(self, t: float) -> np.ndarray:
        """nu(theta, t); on a maturity the interval ending there applies"""
        j, _ = self._interval(t)
        return self.variance_increments[:, j] / (self.knots[j + 1] - self.knots[j])

    def quantile_profile(self, u) -> np.ndarray:
        """Cumulative variance at every maturity of the component at quantile u"""
        u = np.asarray(u, dtype=float)
        if self.mixing.is_atomic:
            return self.cumulative[self.mixing.quantile_index(u), 1:]
        theta = self.mixing.quantile(u)
        return np.column_stack([
            np.interp(theta, self.mixing.theta, self.cumulative[:, j + 1])
            for j in range(self.maturities.size)
        ])

    def variance_at(self, theta: float, t: float) -> float:
        """v(theta, t) for a parameter value, interpolated between grid nodes"""
        profile = self.cumulative_variance(t)
        if self.mixing.is_atomic:
            hits = np.flatnonzero(np.isclose(self.mixing.theta, theta, rtol=1e-12, atol=1e-15))
            if hits.size == 0:
                raise DomainError(f"theta {theta} is not an atom of the mixing law")
            return float(profile[hits[0]])
        lo, hi = self.mixing.theta[0], self.mixing.theta[-1]
        if not lo - 1e-12 <= theta <= hi + 1e-12:
            raise DomainError(f"theta {theta} outside the mixing grid [{lo}, {hi}]")
        return float(np.interp(theta, self.mixing.theta, profile))

    def scale_spot(self, factor: float) -> "MgpDescriptor":
        return replace(self, x0=self.x0 * factor)


@dataclass(frozen=True)
class EuropeanSpec:
    kind: OptionKind
    strike: float
    maturity: float

    def __post_init__(self):
        if not self.strike > 0:
            raise PreconditionError(f"strike must be positive, got {self.strike}")


@dataclass(frozen=True)
class DensityValue:
    """Component density; degenerate marks a zero-variance (Dirac) component"""
    value: float
    degenerate: bool = False


@dataclass(frozen=True)
class Greeks:
    price: float
    delta: float
    gamma: float
    vega: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class EquivalenceReport:
    equivalent: bool
    max_deviation: float
    worst_quantile: Optional[float] = None
    worst_maturity: Optional[float] = None


@dataclass(frozen=True)
class AdmissibilityReport:
    finite: bool
    c0: float
    value: Optional[float] = None
    log_value: Optional[float] = None
    tail_slope: Optional[float] = None

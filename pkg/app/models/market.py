"""
Market Models - Domain Entities
Rates, forwards, option chains and risk-neutral densities
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ..errors import DomainError, InvariantError, PreconditionError


def frozen_array(values, name: str, ndim: int = 1) -> np.ndarray:
    """Copy values into a read-only float array of the given rank"""
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise PreconditionError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise PreconditionError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class RateCurve:
    """
    Piecewise-constant instantaneous rate.
    rates[i] applies on [times[i], times[i+1]); the last rate extends forever
    and the first one also covers times before times[0].
    """

    times: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        times = frozen_array(self.times, "rate knot times")
        rates = frozen_array(self.rates, "rates")
        if times.size == 0 or times.size != rates.size:
            raise PreconditionError("rate curve needs one rate per knot time")
        if times[0] < 0 or np.any(np.diff(times) <= 0):
            raise PreconditionError("rate knot times must be nonnegative and strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)
        cumulative = np.concatenate([[0.0], np.cumsum(rates[:-1] * np.diff(times))])
        cumulative.setflags(write=False)
        object.__setattr__(self, "_cumulative", cumulative)

    @classmethod
    def flat(cls, rate: float = 0.0) -> "RateCurve":
        return cls(times=np.array([0.0]), rates=np.array([rate]))

    def _antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        index = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 1)
        return self._cumulative[index] + self.rates[index] * (t - self.times[index])

    def integral(self, a, b):
        """Exact integral of r over [a, b]"""
        return self._antiderivative(b) - self._antiderivative(a)

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        index = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 1)
        return self.rates[index]

    @property
    def max_rate(self) -> float:
        return float(np.max(np.abs(self.rates)))


@dataclass(frozen=True)
class ForwardCurve:
    """Forward price F(t) = x0 exp(int_{t0}^t r ds)"""

    x0: float
    rates: RateCurve = field(default_factory=RateCurve.flat)
    t0: float = 0.0

    def __post_init__(self):
        if not self.x0 > 0:
            raise PreconditionError(f"spot must be positive, got {self.x0}")

    def forward(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < self.t0):
            raise DomainError(f"time {t} precedes curve start {self.t0}")
        value = self.x0 * np.exp(self.rates.integral(self.t0, t_arr))
        return float(value) if value.ndim == 0 else value

    def growth(self, s: float, t: float) -> float:
        """Forward ratio F(t)/F(s)"""
        return float(np.exp(self.rates.integral(s, t)))

    def discount(self, t: float, start: Optional[float] = None) -> float:
        start = self.t0 if start is None else start
        return float(np.exp(-self.rates.integral(start, t)))


@dataclass(frozen=True)
class OptionChain:
    """
    Call quotes at one maturity.
    For forward-start (ratio) chains `start` is the strike-fixing date and the
    strikes are quoted on X_T / X_start.
    """

    maturity: float
    strikes: np.ndarray
    call_prices: np.ndarray
    forward: float
    discount: float = 1.0
    start: Optional[float] = None

    def __post_init__(self):
        strikes = frozen_array(self.strikes, "strikes")
        calls = frozen_array(self.call_prices, "call prices")
        if strikes.size != calls.size:
            raise PreconditionError("strikes and call prices differ in length")
        if strikes.size < 2 or np.any(strikes <= 0) or np.any(np.diff(strikes) <= 0):
            raise PreconditionError("strikes must be positive and strictly ascending")
        if np.any(calls < 0):
            raise PreconditionError("call prices must be nonnegative")
        if not (self.maturity > 0 and self.forward > 0 and 0 < self.discount <= 1.5):
            raise PreconditionError("maturity, forward and discount must be positive")
        if self.start is not None and not 0 <= self.start < self.maturity:
            raise PreconditionError("forward-start date must precede the maturity")
        object.__setattr__(self, "strikes", strikes)
        object.__setattr__(self, "call_prices", calls)

    @property
    def undiscounted_calls(self) -> np.ndarray:
        return self.call_prices / self.discount


@dataclass(frozen=True)
class RiskNeutralSlice:
    """Risk-neutral density and CDF of the asset (or of a ratio) at one maturity"""

    maturity: float
    forward: float
    grid: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    repaired_strikes: Tuple[float, ...] = ()

    def __post_init__(self):
        grid = frozen_array(self.grid, "slice grid")
        density = frozen_array(self.density, "slice density")
        cdf = frozen_array(self.cdf, "slice cdf")
        if not (grid.size == density.size == cdf.size) or grid.size < 3:
            raise PreconditionError("slice grid, density and cdf must share a length of at least 3")
        if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise PreconditionError("slice grid must be positive and strictly ascending")
        if np.any(density < 0):
            raise InvariantError("slice density has negative values")
        if np.any(np.diff(cdf) < -1e-12) or cdf[0] < -1e-12 or cdf[-1] > 1 + 1e-12:
            raise InvariantError("slice cdf is not monotone in [0, 1]")
        if not self.forward > 0:
            raise PreconditionError("slice forward must be positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)
        object.__setattr__(self, "cdf", cdf)

    @classmethod
    def from_density(cls, maturity: float, forward: float, grid: Sequence[float],
                     density: Sequence[float], repaired_strikes: Tuple[float, ...] = ()) -> "RiskNeutralSlice":
        """Normalize a nonnegative density on its grid and accumulate the CDF"""
        grid = np.asarray(grid, dtype=float)
        density = np.clip(np.asarray(density, dtype=float), 0.0, None)
        mass = trapezoid(density, grid)
        if not mass > 0:
            raise InvariantError(f"density at maturity {maturity} has no mass on its grid")
        density = density / mass
        cdf = cumulative_trapezoid(density, grid, initial=0.0)
        cdf = np.clip(cdf / cdf[-1], 0.0, 1.0)
        return cls(maturity=maturity, forward=forward, grid=grid, density=density, cdf=cdf,
                   repaired_strikes=tuple(repaired_strikes))

    def mass(self) -> float:
        return float(trapezoid(self.density, self.grid))

    def mean(self) -> float:
        return float(trapezoid(self.grid * self.density, self.grid))

    def cdf_at(self, x):
        return np.interp(x, self.grid, self.cdf, left=0.0, right=1.0)

    def check_invariants(self, mass_tolerance: float = 1e-6, martingale_tolerance: float = 1e-3) -> None:
        mass = self.mass()
        if abs(mass - 1.0) > mass_tolerance:
            raise InvariantError(f"slice at {self.maturity} has mass {mass:.10f}", {"mass": mass})
        mean = self.mean()
        if abs(mean / self.forward - 1.0) > martingale_tolerance:
            raise InvariantError(
                f"slice at {self.maturity} has mean {mean:.6f} against forward {self.forward:.6f}",
                {"mean": mean, "forward": self.forward},
            )


@dataclass(frozen=True)
class LogMoneynessDensity:
    """Density E_t(y) of y = log(x / F(t))"""

    maturity: float
    forward: float
    grid: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        grid = frozen_array(self.grid, "log-moneyness grid")
        density = frozen_array(self.density, "log-moneyness density")
        if grid.size != density.size or grid.size < 3 or np.any(np.diff(grid) <= 0):
            raise PreconditionError("log-moneyness grid must be ascending and match the density")
        if np.any(density < 0):
            raise InvariantError("log-moneyness density has negative values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)

    def mass(self) -> float:
        return float(trapezoid(self.density, self.grid))

    def exp_mean(self) -> float:
        """E[e^y], one for a martingale slice"""
        return float(trapezoid(np.exp(self.grid) * self.density, self.grid))

    def variance(self) -> float:
        mean = trapezoid(self.grid * self.density, self.grid)
        return float(trapezoid((self.grid - mean) ** 2 * self.density, self.grid))

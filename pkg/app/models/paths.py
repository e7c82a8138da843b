"""
Path Models - Domain Entities
Simulated path batches and payoff specifications
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from ..errors import PreconditionError
from .market import frozen_array
from .mgp import OptionKind

PathFunctional = Callable[[np.ndarray, np.ndarray], np.ndarray]


class PayoffKind(str, Enum):
    EUROPEAN = "european"
    FORWARD_START = "forward_start"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PathBatch:
    """
    Asset values (paths x len(times)) and the hidden variance draws behind
    them: theta for an MGD, (V_1..V_n) for a layered model.
    """

    times: np.ndarray
    values: np.ndarray
    hidden: np.ndarray
    seed: int
    workers: int = 1
    t0: float = 0.0

    def __post_init__(self):
        times = frozen_array(self.times, "path times")
        values = frozen_array(self.values, "path values", ndim=2)
        hidden = frozen_array(self.hidden, "hidden draws", ndim=2)
        if values.shape[1] != times.size or hidden.shape[0] != values.shape[0]:
            raise PreconditionError("path values and hidden draws must share the path count")
        if np.any(values <= 0):
            raise PreconditionError("simulated asset values must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "hidden", hidden)

    @property
    def paths(self) -> int:
        return self.values.shape[0]

    def column(self, t: float) -> np.ndarray:
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-10))
        if hits.size == 0:
            raise PreconditionError(f"time {t} is not on the simulation grid")
        return self.values[:, hits[0]]


@dataclass(frozen=True)
class PayoffSpec:
    kind: PayoffKind
    maturity: float
    strike: float = 0.0
    option: OptionKind = OptionKind.CALL
    start: Optional[float] = None
    functional: Optional[PathFunctional] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.strike < 0:
            raise PreconditionError("strike must be nonnegative")
        if self.kind == PayoffKind.FORWARD_START and (self.start is None or not self.start < self.maturity):
            raise PreconditionError("forward-start payoffs need start < maturity")
        if self.kind == PayoffKind.CUSTOM and self.functional is None:
            raise PreconditionError("custom payoffs need a path functional")

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        if self.kind == PayoffKind.CUSTOM:
            return np.asarray(self.functional(batch.times, batch.values), dtype=float)
        underlying = batch.column(self.maturity)
        if self.kind == PayoffKind.FORWARD_START:
            underlying = underlying / batch.column(self.start)
        if self.option == OptionKind.CALL:
            return np.maximum(underlying - self.strike, 0.0)
        return np.maximum(self.strike - underlying, 0.0)


class PricingMethod(str, Enum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class PriceQuote:
    price: float
    method: PricingMethod
    standard_error: Optional[float] = None
    implied_vol: Optional[float] = None
    delta: Optional[float] = None
    gamma: Optional[float] = None
    paths: Optional[int] = None
    seed: Optional[int] = None

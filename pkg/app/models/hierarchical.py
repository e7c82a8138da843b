"""
Hierarchical Models - Domain Entities
Per-layer total-variance marginals, their couplings and the layered model
built on them
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..errors import PreconditionError
from .market import ForwardCurve, RateCurve, RiskNeutralSlice, frozen_array
from .recovery import RecoveredMixing


@dataclass(frozen=True)
class VarianceMarginals:
    """Recovered laws of the total variance v_k and of the increment v_k - v_{k-1}"""

    index: int
    maturity: float
    total: RecoveredMixing
    increment: RecoveredMixing


@dataclass(frozen=True)
class VarianceCoupling:
    """
    Joint masses f[i, j] of (v_{k-1}, v_k) on nodes x nodes; zero below the
    diagonal. Residuals are the L1 misfits of the row, column and
    diagonal-difference marginals.
    """

    nodes: np.ndarray
    mass: np.ndarray
    residuals: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    sweeps: int = 0

    def __post_init__(self):
        nodes = frozen_array(self.nodes, "coupling nodes")
        mass = frozen_array(self.mass, "coupling mass", ndim=2)
        if mass.shape != (nodes.size, nodes.size):
            raise PreconditionError("coupling mass must be square on its nodes")
        if np.any(mass < 0) or np.any(np.tril(mass, -1) > 0):
            raise PreconditionError("coupling mass must be nonnegative and vanish below the diagonal")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "mass", mass)

    @property
    def row_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    @property
    def column_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    @property
    def increment_marginal(self) -> np.ndarray:
        return diagonal_sums(self.mass)

    @property
    def max_residual(self) -> float:
        return float(max(self.residuals))

    def kernel(self) -> np.ndarray:
        """Row-normalized transition matrix; empty rows stay zero"""
        rows = self.mass.sum(axis=1, keepdims=True)
        return np.divide(self.mass, rows, out=np.zeros_like(self.mass), where=rows > 0)


def diagonal_sums(mass: np.ndarray) -> np.ndarray:
    """Mass of y - x = d * h for every offset d of an upper-triangular table"""
    n = mass.shape[0]
    rows, cols = np.triu_indices(n)
    return np.bincount(cols - rows, weights=mass[rows, cols], minlength=n)


@dataclass(frozen=True)
class ConditionalCdf:
    """F_k( . | v_{k-1}) tabulated on increments"""

    increments: np.ndarray
    cdf: np.ndarray
    prior_variance: float
    snapped: bool = False

    def quantile(self, u) -> np.ndarray:
        index = np.searchsorted(self.cdf, np.asarray(u, dtype=float) * self.cdf[-1], side="left")
        return self.increments[np.clip(index, 0, self.increments.size - 1)]


@dataclass(frozen=True)
class HierarchicalModel:
    """
    Layered MGD on maturities T_0 < T_1 < ... < T_n with a shared uniform
    total-variance grid. couplings[k-1] joins v_{k-1} and v_k; the first one
    has all its mass on the row of v0.
    """

    maturities: np.ndarray
    x0: float
    nodes: np.ndarray
    couplings: Tuple[VarianceCoupling, ...]
    v0: float = 0.0
    rates: RateCurve = field(default_factory=RateCurve.flat)
    spot_slices: Tuple[RiskNeutralSlice, ...] = ()
    ratio_slices: Tuple[RiskNeutralSlice, ...] = ()

    def __post_init__(self):
        maturities = frozen_array(self.maturities, "hierarchical maturities")
        nodes = frozen_array(self.nodes, "variance nodes")
        if maturities.size < 2 or np.any(np.diff(maturities) <= 0):
            raise PreconditionError("hierarchical maturities must be T_0 < T_1 < ... with at least one layer")
        if len(self.couplings) != maturities.size - 1:
            raise PreconditionError(f"{maturities.size - 1} layers need as many couplings, got {len(self.couplings)}")
        if nodes.size < 2 or nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
            raise PreconditionError("variance nodes must start at zero and ascend")
        steps = np.diff(nodes)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * nodes[-1]:
            raise PreconditionError("variance nodes must be uniformly spaced")
        if not self.x0 > 0:
            raise PreconditionError("spot must be positive")
        for coupling in self.couplings:
            if coupling.nodes.size != nodes.size:
                raise PreconditionError("couplings must share the model's variance nodes")
        for slices in (self.spot_slices, self.ratio_slices):
            if slices and len(slices) != maturities.size - 1:
                raise PreconditionError("attached slices need one entry per layer")
        object.__setattr__(self, "maturities", maturities)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "spot_slices", tuple(self.spot_slices))
        object.__setattr__(self, "ratio_slices", tuple(self.ratio_slices))

    @property
    def layers(self) -> int:
        return self.maturities.size - 1

    @property
    def t0(self) -> float:
        return float(self.maturities[0])

    @property
    def step(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def forward_curve(self) -> ForwardCurve:
        return ForwardCurve(x0=self.x0, rates=self.rates, t0=self.t0)

    @property
    def v0_index(self) -> int:
        return int(np.argmin(np.abs(self.nodes - self.v0)))

    def total_marginal(self, k: int) -> np.ndarray:
        """l_k as node masses; l_0 is the point mass at v0"""
        self.check_layer(k, allow_zero=True)
        if k == 0:
            masses = np.zeros(self.nodes.size)
            masses[self.v0_index] = 1.0
            return masses
        return self.couplings[k - 1].column_marginal

    def increment_marginal(self, k: int) -> np.ndarray:
        self.check_layer(k)
        return self.couplings[k - 1].increment_marginal

    def check_layer(self, k: int, allow_zero: bool = False) -> None:
        if not (0 if allow_zero else 1) <= k <= self.layers:
            raise PreconditionError(f"layer {k} outside 1..{self.layers}")


@dataclass(frozen=True)
class LayerParametrization:
    """
    Quantile realization of one layer: given the prior node i and a uniform
    u, the new total variance node is the u-quantile of row i of the kernel.
    """

    index: int
    start: float
    end: float
    nodes: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def from_coupling(cls, index: int, start: float, end: float, coupling: VarianceCoupling) -> "LayerParametrization":
        kernel = coupling.kernel()
        return cls(index=index, start=start, end=end, nodes=coupling.nodes,
                   cumulative=np.cumsum(kernel, axis=1))

    def sample(self, prior: np.ndarray, u: np.ndarray) -> np.ndarray:
        """New node index per path, grouped by prior node"""
        prior = np.asarray(prior, dtype=int)
        result = np.empty_like(prior)
        for i in np.unique(prior):
            rows = prior == i
            row = self.cumulative[i]
            if row[-1] <= 0:
                raise PreconditionError(f"layer {self.index} has no mass after node {i}",
                                        {"layer": self.index, "node": int(i)})
            picked = np.searchsorted(row, u[rows] * row[-1], side="right")
            result[rows] = np.clip(picked, i, self.nodes.size - 1)
        return result


@dataclass(frozen=True)
class CirParams:
    kappa: float
    theta: float
    xi: float
    v0: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.theta > 0 and self.xi > 0 and self.v0 > 0):
            raise PreconditionError("CIR parameters must be positive")

    @property
    def feller_ratio(self) -> float:
        return 2.0 * self.kappa * self.theta / self.xi ** 2

    def integrated_mean(self, t) -> np.ndarray:
        """E[int_0^t v ds]"""
        t = np.asarray(t, dtype=float)
        return self.theta * t + (self.v0 - self.theta) * (1.0 - np.exp(-self.kappa * t)) / self.kappa


@dataclass(frozen=True)
class HestonVarianceSample:
    maturities: np.ndarray
    integrated: np.ndarray
    truncation_rate: float


@dataclass(frozen=True)
class SliceCheck:
    layer: int
    kind: str
    statistic: float
    p_value: float
    passed: bool


@dataclass(frozen=True)
class ModelVerification:
    paths: int
    seed: int
    checks: List[SliceCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[SliceCheck]:
        return [check for check in self.checks if not check.passed]


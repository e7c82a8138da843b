"""
Recovery Models - Domain Entities
Transform profiles, recovered mixing laws and their diagnostics
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from ..errors import PreconditionError
from .market import frozen_array
from .mgp import MgpDescriptor, MixingLaw

ComplexEvaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TransformProfile:
    """
    G sampled on an eta grid.

    `noise` bounds the quadrature error of the values (imaginary residue and
    truncated tails). `evaluator` gives G at arbitrary (complex) eta; `analytic` marks a
    closed-form continuation valid on the whole Talbot contour, as opposed
    to a quadrature over a sampled density.
    """

    eta: np.ndarray
    values: np.ndarray
    time_scale: float = 1.0
    imag_residue: float = 0.0
    noise: float = 0.0
    evaluator: Optional[ComplexEvaluator] = field(default=None, compare=False, repr=False)
    analytic: bool = False
    maturity: Optional[float] = None

    def __post_init__(self):
        eta = frozen_array(self.eta, "eta grid")
        values = frozen_array(self.values, "transform values")
        if eta.size != values.size or eta.size < 2:
            raise PreconditionError("transform profile needs matching eta and G arrays")
        if np.any(eta < 0) or np.any(np.diff(eta) <= 0):
            raise PreconditionError("eta grid must be nonnegative and ascending")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, function: ComplexEvaluator, eta, time_scale: float = 1.0,
                      analytic: bool = True) -> "TransformProfile":
        """Profile of a closed-form transform"""
        eta = np.asarray(eta, dtype=float)
        values = np.real(np.asarray(function(eta.astype(complex)), dtype=complex))
        return cls(eta=eta, values=values, time_scale=time_scale, evaluator=function, analytic=analytic)

    def evaluate(self, eta) -> np.ndarray:
        """G at the requested points, interpolated in log G when no evaluator exists"""
        eta = np.asarray(eta)
        if self.evaluator is not None:
            return np.asarray(self.evaluator(eta.astype(complex)), dtype=complex)
        if np.iscomplexobj(eta) and np.any(np.imag(eta) != 0):
            raise PreconditionError("sampled profile cannot be evaluated off the real axis")
        real = np.real(eta)
        if np.any(real < self.eta[0]) or np.any(real > self.eta[-1]):
            raise PreconditionError("eta outside the sampled profile")
        positive = np.clip(self.values, 1e-300, None)
        return np.exp(np.interp(real, self.eta, np.log(positive))).astype(complex)


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    order: Optional[int] = None
    eta: Optional[float] = None


@dataclass(frozen=True)
class InversionDiagnostics:
    """
    How a mixing law was recovered. stehfest_change is the largest CDF move
    between the chosen term count and two fewer; transform_residual is the
    largest gap between G and the transform of the recovered law on the
    profile grid, a lower bound on the CDF error.
    """

    method_used: str
    clipped_mass: float
    renormalization: float
    talbot_nodes: int = 0
    stehfest_terms: int = 0
    unstable_nodes: int = 0
    atoms_detected: int = 0
    fallback_reason: Optional[str] = None
    contour_truncation: Optional[float] = None
    stehfest_change: Optional[float] = None
    transform_residual: Optional[float] = None


@dataclass(frozen=True)
class RecoveredMixing:
    """
    Mixing law recovered on a theta grid.
    A law identified as a finite mixture keeps its exact atoms in `atoms`;
    density and CDF on the grid are then the atoms binned to their cells.
    """

    theta: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    diagnostics: InversionDiagnostics
    atoms: Optional[MixingLaw] = None

    def __post_init__(self):
        theta = frozen_array(self.theta, "recovery grid")
        density = frozen_array(self.density, "recovered density")
        cdf = frozen_array(self.cdf, "recovered cdf")
        if not theta.size == density.size == cdf.size:
            raise PreconditionError("recovered arrays differ in length")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "density", density)
        object.__setattr__(self, "cdf", cdf)

    def cdf_at(self, theta):
        if self.atoms is not None:
            return self.atoms.cdf(theta)
        return np.interp(theta, self.theta, self.cdf, left=0.0, right=1.0)

    def quantile(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.atoms is not None:
            return self.atoms.quantile(u)
        levels, first = np.unique(self.cdf, return_index=True)
        last = self.cdf.size - 1 - np.unique(self.cdf[::-1], return_index=True)[1]
        nodes = 0.5 * (self.theta[first] + self.theta[last])
        return np.interp(u, levels, nodes)

    def mean(self) -> float:
        if self.atoms is not None:
            return self.atoms.mean()
        return float(self.theta[-1] - trapezoid(self.cdf, self.theta))

    def cell_masses(self, nodes: np.ndarray) -> np.ndarray:
        """
        Masses on a uniform node grid: continuous laws by CDF differences over
        the cells around each node, atoms split linearly between neighbours.
        """
        nodes = np.asarray(nodes, dtype=float)
        if self.atoms is not None:
            return split_atoms(nodes, self.atoms.theta, self.atoms.masses)
        edges = np.concatenate([[-np.inf], 0.5 * (nodes[1:] + nodes[:-1]), [np.inf]])
        cdf = np.concatenate([[0.0], self.cdf_at(edges[1:-1]), [1.0]])
        masses = np.clip(np.diff(cdf), 0.0, None)
        return masses / masses.sum()


def split_atoms(nodes: np.ndarray, locations: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Mean-preserving linear split of point masses onto an ascending grid"""
    locations = np.clip(np.asarray(locations, dtype=float), nodes[0], nodes[-1])
    lower = np.clip(np.searchsorted(nodes, locations, side="right") - 1, 0, nodes.size - 2)
    fraction = (locations - nodes[lower]) / (nodes[lower + 1] - nodes[lower])
    masses = np.zeros(nodes.size)
    np.add.at(masses, lower, np.asarray(weights) * (1.0 - fraction))
    np.add.at(masses, lower + 1, np.asarray(weights) * fraction)
    return masses / masses.sum()


@dataclass(frozen=True)
class MaturityDiagnostics:
    maturity: float
    inversion: InversionDiagnostics
    l1_error: Optional[float] = None


@dataclass(frozen=True)
class CalendarRepair:
    violations: int
    max_relative_change: float
    repaired_quantiles: Tuple[float, ...] = ()


@dataclass(frozen=True)
class CalibrationResult:
    descriptor: MgpDescriptor
    maturities: List[MaturityDiagnostics]
    calendar: CalendarRepair

"""
Numerical inverse Laplace transforms

Fixed Talbot contour, Gaver-Stehfest summation and a matrix-pencil fit that
identifies transforms of finite mixtures of point masses, sum_i w_i e^{-eta a_i}.
"""

import logging
from dataclasses import dataclass
from math import factorial, log
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import hankel

from ..errors import PreconditionError

logger = logging.getLogger(__name__)

LaplaceFunction = Callable[[np.ndarray], np.ndarray]


def talbot_contour(degree: int) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Contour shape s_k and weights g_k of the fixed Talbot rule with r = 2M/5:
    p_k = r s_k / t and f(t) ~ r / (M t) Re sum_k g_k F(p_k)
    """
    r = 2.0 * degree / 5.0
    phi = np.arange(degree) * np.pi / degree
    cot = np.zeros(degree)
    cot[1:] = 1.0 / np.tan(phi[1:])
    shape = (phi * (cot + 1j)).astype(complex)
    shape[0] = 1.0
    weights = np.empty(degree, dtype=complex)
    weights[0] = 0.5 * np.exp(r)
    weights[1:] = np.exp(r * shape[1:]) * (1.0 + 1j * phi[1:] * (1.0 + cot[1:] ** 2) - 1j * cot[1:])
    return shape, weights, r


@dataclass(frozen=True)
class TalbotResult:
    values: np.ndarray
    stable: np.ndarray


def talbot(function: LaplaceFunction, times: np.ndarray, degree: int = 32,
           max_term: float = 1e10, value_cap: Optional[float] = None) -> TalbotResult:
    """
    Fixed Talbot inversion at positive times. A time is unstable when a
    contour term is non-finite or exceeds max_term, or the result exceeds
    value_cap; unstable values are returned as zero.
    """
    times = np.asarray(times, dtype=float)
    shape, weights, r = talbot_contour(degree)
    values = np.zeros(times.size)
    stable = np.zeros(times.size, dtype=bool)
    for i, t in enumerate(times):
        if t <= 0:
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            terms = weights * np.asarray(function(r * shape / t), dtype=complex)
            value = r / (degree * t) * float(np.real(np.sum(terms)))
        ok = np.all(np.isfinite(terms)) and np.max(np.abs(terms)) <= max_term and np.isfinite(value)
        if ok and value_cap is not None:
            ok = abs(value) <= value_cap
        if ok:
            values[i] = value
            stable[i] = True
    return TalbotResult(values=values, stable=stable)


def stehfest_coefficients(terms: int) -> np.ndarray:
    """Salzer summation weights V_1..V_N for an even N"""
    if terms % 2:
        terms += 1
    half = terms // 2
    coefficients = np.zeros(terms)
    for k in range(1, terms + 1):
        total = 0.0
        for j in range((k + 1) // 2, min(k, half) + 1):
            total += (j ** half * factorial(2 * j)) / (
                factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k)
            )
        coefficients[k - 1] = (-1) ** (k + half) * total
    return coefficients


def stehfest(function: LaplaceFunction, times: np.ndarray, terms: int = 14) -> np.ndarray:
    """Gaver-Stehfest inversion on the real axis"""
    terms += terms % 2
    return stehfest_sweep(function, times, (terms,))[terms]


def stehfest_sweep(function: LaplaceFunction, times: np.ndarray, counts: Sequence[int]) -> Dict[int, np.ndarray]:
    """
    Gaver-Stehfest inverses for several even term counts from one evaluation
    of F at k ln2 / t, k = 1..max(counts). Non-positive times give zero.
    """
    times = np.asarray(times, dtype=float)
    counts = sorted({int(n) for n in counts})
    if not counts or counts[0] < 2 or any(n % 2 for n in counts):
        raise PreconditionError("Gaver-Stehfest term counts must be even and at least 2")
    live = times > 0
    k = np.arange(1, counts[-1] + 1)
    nodes = np.outer(log(2.0) / times[live], k)
    samples = np.real(np.asarray(function(nodes.ravel().astype(complex)), dtype=complex)).reshape(nodes.shape)
    sweep = {}
    for n in counts:
        values = np.zeros(times.size)
        values[live] = log(2.0) / times[live] * (samples[:, :n] @ stehfest_coefficients(n))
        sweep[n] = values
    return sweep


@dataclass(frozen=True)
class AtomFit:
    locations: np.ndarray
    weights: np.ndarray
    residual: float


def matrix_pencil_atoms(function: LaplaceFunction, scale: float, samples: int = 32, max_atoms: int = 4,
                        noise: float = 1e-10) -> Optional[AtomFit]:
    """
    Fit sum_i w_i exp(-eta a_i) to F sampled at eta_j = j * step with
    step = 0.5 / scale. Returns None unless a model of at most max_atoms
    terms with positive weights reproduces the samples to the noise level.
    """
    if not scale > 0:
        return None
    step = 0.5 / scale
    eta = np.arange(samples) * step
    data = np.real(np.asarray(function(eta.astype(complex)), dtype=complex))
    if not np.all(np.isfinite(data)):
        return None
    pencil = samples // 2
    matrix = hankel(data[: samples - pencil], data[samples - pencil - 1:])
    _, singular, vh = np.linalg.svd(matrix, full_matrices=False)
    rank = int(np.sum(singular > max(noise, 1e-14) * singular[0]))
    if rank == 0 or rank > max_atoms:
        return None
    basis = vh[:rank].conj().T
    poles = np.linalg.eigvals(np.linalg.pinv(basis[:-1]) @ basis[1:])
    if np.any(np.abs(np.imag(poles)) > 1e-8) or np.any(np.real(poles) <= 0) or np.any(np.real(poles) > 1 + 1e-10):
        return None
    poles = np.clip(np.real(poles), 1e-300, 1.0)
    vandermonde = poles[None, :] ** np.arange(samples)[:, None]
    weights = np.linalg.lstsq(vandermonde, data, rcond=None)[0]
    if np.any(weights <= 0):
        return None
    residual = float(np.max(np.abs(vandermonde @ weights - data)))
    if residual > max(10.0 * noise, 1e-9) or abs(weights.sum() - 1.0) > max(10.0 * noise, 1e-8):
        return None
    locations = -np.log(poles) / step
    order = np.argsort(locations)
    return AtomFit(locations=locations[order], weights=weights[order] / weights.sum(), residual=residual)

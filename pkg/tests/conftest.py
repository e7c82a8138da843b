"""
Shared fixtures: small settings and the closed-form models most tests use
"""

import numpy as np
import pytest
from scipy.stats import gamma

from app.config import MixvolSettings
from app.models.mgp import MgpDescriptor, MixingLaw
from app.services.market_service import MarketService


@pytest.fixture
def config():
    """Settings with path counts small enough for unit tests"""
    return MixvolSettings(mc_paths=20_000, mc_batch_size=4096, heston_draws=4000, seed=7)


@pytest.fixture
def single_atom():
    """Black-Scholes with sigma = 0.2 written as a one-atom mixture"""
    return MgpDescriptor(mixing=MixingLaw.point(0.0), maturities=np.array([1.0]),
                         variance_increments=np.array([[0.04]]), x0=100.0)


@pytest.fixture
def two_atom():
    """Equal-weight mixture of total variances 0.01 and 0.09 at T = 1"""
    return MgpDescriptor(mixing=MixingLaw.from_atoms([0.0, 1.0], [0.5, 0.5]), maturities=np.array([1.0]),
                         variance_increments=np.array([[0.01], [0.09]]), x0=100.0)


@pytest.fixture
def two_maturity():
    """Two atoms on two maturities with piecewise-constant variance rates"""
    return MgpDescriptor(mixing=MixingLaw.from_atoms([0.0, 1.0], [0.4, 0.6]), maturities=np.array([0.5, 1.0]),
                         variance_increments=np.array([[0.01, 0.02], [0.03, 0.05]]), x0=100.0)


@pytest.fixture
def gamma_slice():
    """
    Slice factory for a Gamma(shape, scale) law of total variance, the law
    resolved into many narrow lognormal components
    """
    def make(forward: float, maturity: float, shape: float, scale: float, cells: int = 4000, grid=None):
        edges = np.linspace(0.0, gamma.ppf(1.0 - 1e-10, shape, scale=scale), cells + 1)
        weights = np.diff(gamma.cdf(edges, shape, scale=scale))
        centers = 0.5 * (edges[1:] + edges[:-1])
        return MarketService().mixture_slice(forward, maturity, centers, weights, grid=grid)

    return make

"""
Black-Scholes kernels in forward form, vectorized over total variance
"""

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from ..errors import DomainError
from ..models.mgp import OptionKind


def _d1_d2(forward, strike, total_variance):
    sqrt_v = np.sqrt(total_variance)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(forward / strike) + 0.5 * total_variance) / sqrt_v
    return d1, d1 - sqrt_v


def black_price(forward, strike, total_variance, discount=1.0, kind: OptionKind = OptionKind.CALL):
    """Discounted Black price; zero variance gives the discounted intrinsic value"""
    forward = np.asarray(forward, dtype=float)
    total_variance = np.asarray(total_variance, dtype=float)
    live = total_variance > 0
    d1, d2 = _d1_d2(forward, strike, np.where(live, total_variance, 1.0))
    call = np.where(live, forward * norm.cdf(d1) - strike * norm.cdf(d2), np.maximum(forward - strike, 0.0))
    if kind is OptionKind.PUT:
        value = call - (forward - strike)
    else:
        value = call
    return discount * value


def black_delta(spot, forward, strike, total_variance, discount=1.0, kind: OptionKind = OptionKind.CALL):
    """Sensitivity to the spot, with the forward proportional to the spot"""
    total_variance = np.asarray(total_variance, dtype=float)
    live = total_variance > 0
    d1, _ = _d1_d2(forward, strike, np.where(live, total_variance, 1.0))
    n_d1 = np.where(live, norm.cdf(d1), (np.asarray(forward) > strike).astype(float))
    if kind is OptionKind.PUT:
        n_d1 = n_d1 - 1.0
    return discount * forward / spot * n_d1


def black_gamma(spot, forward, strike, total_variance, discount=1.0):
    total_variance = np.asarray(total_variance, dtype=float)
    live = total_variance > 0
    safe_v = np.where(live, total_variance, 1.0)
    d1, _ = _d1_d2(forward, strike, safe_v)
    scale = discount * forward / spot
    return np.where(live, scale * norm.pdf(d1) / (spot * np.sqrt(safe_v)), 0.0)


def black_vega(forward, strike, total_variance, maturity, discount=1.0):
    """Sensitivity to the volatility sqrt(v / T)"""
    total_variance = np.asarray(total_variance, dtype=float)
    live = total_variance > 0
    d1, _ = _d1_d2(forward, strike, np.where(live, total_variance, 1.0))
    return np.where(live, discount * forward * norm.pdf(d1) * np.sqrt(maturity), 0.0)


def implied_volatility(price: float, forward: float, strike: float, maturity: float,
                       discount: float = 1.0, kind: OptionKind = OptionKind.CALL) -> float:
    """Black volatility reproducing a discounted price"""
    if maturity <= 0:
        raise DomainError(f"implied volatility needs a positive maturity, got {maturity}")
    intrinsic = float(black_price(forward, strike, 0.0, discount, kind))
    upper = float(black_price(forward, strike, 25.0 * maturity, discount, kind))
    if not intrinsic - 1e-14 * forward <= price < upper:
        raise DomainError(f"price {price} outside the no-arbitrage range ({intrinsic}, {upper})")

    def objective(sigma: float) -> float:
        return float(black_price(forward, strike, sigma * sigma * maturity, discount, kind)) - price

    if objective(1e-8) >= 0:
        return 0.0
    return brentq(objective, 1e-8, 5.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)

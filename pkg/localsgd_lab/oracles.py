"""Closed-form oracles and constant-bearing bounds used as ground truth.

Every function checks its hypothesis and raises :class:`RegimeError` outside
it. Functions taking ``paper_literal`` return the formula exactly as
originally displayed; the default is the value consistent with the dynamics
the lab simulates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from localsgd_lab.errors import InvalidParameterError, RegimeError

HOMOG_DRIFT_C = 0.0005
STEP_C1 = 0.0005
STEP_C2 = 0.002
DEFAULT_C_H = 0.01
PAPER_C_H = 0.07
SIGMA_GAP_C = 0.025
PAPER_SIGMA_GAP_C = 0.12
LOWER_2O_C = 0.002
LOWER_3O_C = 0.005


@dataclass(frozen=True)
class QuadDistribution:
    mean: float
    variance: float


@dataclass(frozen=True)
class KeyScales:
    """Contraction factors and per-unit-sigma mixing scales."""

    alpha_y: float
    alpha_z: float
    sigma_y: float
    sigma_z: float


@dataclass(frozen=True)
class HeteroRoundMap:
    """x^(r+1,0) = a x^(r,0) + b zeta* for the heterogeneous pair."""

    a: float
    b: float

    def apply(self, x: float, zeta_star: float) -> float:
        return self.a * x + self.b * zeta_star


@dataclass(frozen=True)
class BiasEnvelope:
    """Lower and upper magnitude bounds on the iterate bias; ``None`` marks a member outside its regime."""

    lower: float | None
    upper: float | None
    lower_reason: str = ""
    upper_reason: str = ""


def quad_sgd_distribution(
    L: float, sigma: float, eta: float, x0: float, t: int, paper_literal: bool = False
) -> QuadDistribution:
    """Mean and variance of SGD on (L/2) x^2 with N(0, sigma^2) gradient noise after t steps."""
    if not 0 < eta * L < 1:
        raise RegimeError(f"0 < eta*L < 1 (got eta*L={eta * L:g})")
    if t < 0:
        raise InvalidParameterError(f"t must be non-negative, got {t}")
    c = 1.0 - eta * L
    mean = c**t * x0
    if paper_literal:
        variance = (1.0 - c**t) * eta**2 * sigma**2 / (eta * L)
    else:
        variance = eta**2 * sigma**2 * (1.0 - c ** (2 * t)) / (1.0 - c * c)
    return QuadDistribution(mean=mean, variance=variance)


def key_scales(eta: float, L: float, k: int) -> KeyScales:
    if not 0 < eta * L <= 1 / 6:
        raise RegimeError(f"0 < eta*L <= 1/6 (got eta*L={eta * L:g})")
    if k < 1:
        raise RegimeError(f"k >= 1 (got k={k})")
    alpha_y = 1.0 - eta * L / 2.0
    alpha_z = 1.0 - eta * L
    sigma_y = math.sqrt(eta**2 * (1.0 - alpha_y**k) / (1.0 - alpha_y))
    sigma_z = math.sqrt(eta**2 * (1.0 - alpha_z**k) / (1.0 - alpha_z))
    return KeyScales(alpha_y=alpha_y, alpha_z=alpha_z, sigma_y=sigma_y, sigma_z=sigma_z)


def sigma_gap_lower(eta: float, L: float, sigma: float, k: int, paper_literal: bool = False) -> float:
    """Lower bound on sigma_y - sigma_z (in units of sigma, times sigma)."""
    if eta * L > 1 / 6 or eta * L <= 0:
        raise RegimeError(f"0 < eta*L <= 1/6 (got eta*L={eta * L:g})")
    if k < 2:
        raise RegimeError(f"k >= 2 (got k={k})")
    if eta * L * k <= 0.5:
        return eta**2 * L * sigma * k**1.5 / 24.0
    c = PAPER_SIGMA_GAP_C if paper_literal else SIGMA_GAP_C
    return c * eta * sigma / math.sqrt(eta * L)


def bias_envelope_2o(eta: float, H: float, sigma: float, k: int) -> BiasEnvelope:
    """Second-order bias sandwich: 0.002 min{eta^2 k^1.5 H sigma, sqrt(eta/H) sigma} <= |bias| <= min{4 eta^2 k^1.5 H sigma, eta sqrt(k) sigma}."""
    upper: float | None = None
    lower: float | None = None
    upper_reason = lower_reason = ""
    if eta <= 1.0 / H:
        upper = min(4.0 * eta**2 * k**1.5 * H * sigma, eta * math.sqrt(k) * sigma)
    else:
        upper_reason = "eta <= 1/H"
    if k < 2:
        lower_reason = "k >= 2 (bias is identically zero at k = 1)"
    elif eta > 1.0 / (2.0 * H):
        lower_reason = "eta <= 1/(2H)"
    else:
        lower = LOWER_2O_C * min(eta**2 * k**1.5 * H * sigma, math.sqrt(eta / H) * sigma)
    return BiasEnvelope(lower, upper, lower_reason, upper_reason)


def upper_terms_3o(eta: float, H: float, Q: float, sigma: float, k: int) -> tuple[float, float, float]:
    return (
        0.25 * eta**3 * k**2 * Q * sigma**2,
        4.0 * eta**2 * k**1.5 * H * sigma,
        eta * math.sqrt(k) * sigma,
    )


def bias_envelope_3o(eta: float, H: float, Q: float, sigma: float, k: int, horizon: int | None = None) -> BiasEnvelope:
    """Third-order bias sandwich; ``horizon`` is the K of the lower bound's Q condition (defaults to k)."""
    horizon = k if horizon is None else horizon
    upper: float | None = None
    lower: float | None = None
    upper_reason = lower_reason = ""
    if eta <= 1.0 / H:
        upper = min(upper_terms_3o(eta, H, Q, sigma, k))
    else:
        upper_reason = "eta <= 1/H"
    if k < 2:
        lower_reason = "k >= 2 (bias is identically zero at k = 1)"
    elif eta > 1.0 / (2.0 * H):
        lower_reason = "eta <= 1/(2H)"
    elif sigma > 0 and Q > H**2 / (12.0 * horizon * sigma):
        lower_reason = "Q <= H^2/(12 K sigma)"
    else:
        lower = LOWER_3O_C * eta**3 * sigma**2 * Q * min((k - 1) / (eta * H), k * (k - 1))
    return BiasEnvelope(lower, upper, lower_reason, upper_reason)


def hetero_round_map(H: float, eta: float, K: int, paper_literal: bool = False) -> HeteroRoundMap:
    if not 0 < eta * H < 1:
        raise RegimeError(f"0 < eta*H < 1 (got eta*H={eta * H:g})")
    if K < 1:
        raise InvalidParameterError(f"K must be >= 1, got {K}")
    mu = H / 2.0
    ph = (1.0 - eta * H) ** K
    pm = (1.0 - eta * mu) ** K
    a = 0.5 * (ph + pm)
    if paper_literal:
        b = 0.5 * ((1.0 - ph) - (1.0 - pm))
    else:
        # (1 - (1 - eta h)^K) / h summed as a geometric series; exactly 0 at K = 1
        powers = np.arange(K)
        b = 0.5 * eta * float(np.sum((1.0 - eta * H) ** powers - (1.0 - eta * mu) ** powers))
    return HeteroRoundMap(a=a, b=b)


def hetero_round_starts(H: float, eta: float, K: int, R: int, zeta_star: float, x0: float = 0.0) -> np.ndarray:
    """Compose the round map R times; returns x^(r,0) for r = 0..R."""
    m = hetero_round_map(H, eta, K)
    out = np.empty(R + 1)
    out[0] = x0
    for r in range(R):
        out[r + 1] = m.apply(out[r], zeta_star)
    return out


def hetero_drift_asymptotic(H: float, eta: float, K: int) -> float:
    """Leading small-eta*H*K term of b: -eta^2 K (K - 1) H / 8."""
    return -(eta**2) * K * (K - 1) * H / 8.0


def homog_drift_bound(eta: float, L: float, sigma: float, K: int, R: int) -> float:
    """Ceiling on E[x^(R,0)] for FedAvg on the piecewise instance started at 0."""
    if not 0 < eta * L <= 1 / 6:
        raise RegimeError(f"0 < eta*L <= 1/6 (got eta*L={eta * L:g})")
    if R == 0 or sigma == 0:
        return 0.0
    s = eta * L * K
    return -HOMOG_DRIFT_C * math.sqrt(eta / L) * sigma * min(R * s**1.5, 1.0, math.sqrt(s))


def homog_value_floor(eta: float, L: float, sigma: float, K: int, R: int, c: float = HOMOG_DRIFT_C) -> float:
    """Lower bound (c^2/4) eta sigma^2 min(R^2 (eta L K)^3, 1, eta L K) on E[f1(x^(R,0))]."""
    s = eta * L * K
    return c**2 / 4.0 * eta * sigma**2 * min(R**2 * s**3, 1.0, s)


def hetero_drift_bound(eta: float, H: float, zeta_star: float, K: int, R: int, c_h: float = DEFAULT_C_H) -> float:
    if eta * H > 1:
        raise RegimeError(f"eta*H <= 1 (got eta*H={eta * H:g})")
    if c_h <= 0:
        raise InvalidParameterError(f"c_h must be positive, got {c_h}")
    s = eta * H * K
    return -(c_h / H) * min(1.0, s, s * s * R) * zeta_star


def largest_valid_c_h(grid: list[tuple[float, int, int]], H: float = 1.0, zeta_star: float = 1.0) -> float:
    """Largest c_h for which the drift bound holds at every (eta, K, R) grid point (K >= 2)."""
    best = math.inf
    for eta, K, R in grid:
        exact = hetero_round_starts(H, eta, K, R, zeta_star)[-1]
        unit = hetero_drift_bound(eta, H, zeta_star, K, R, c_h=1.0)
        if unit < 0:
            best = min(best, exact / unit)
    return best


def step_window(eta: float, L: float, sigma: float, k: int) -> tuple[float, float]:
    """Admissible range of E[x] at the start of a round for the per-round step bound."""
    scales = key_scales(eta, L, k)
    return (-math.sqrt(STEP_C1) * sigma * scales.sigma_y / scales.alpha_y**k, 0.0)


def expected_step_bound(eta: float, L: float, sigma: float, k: int, e0: float) -> float:
    """Ceiling on E[x^(k)] after k SGD steps on the piecewise instance from a start with mean e0."""
    window = step_window(eta, L, sigma, k)
    if not window[0] <= e0 <= window[1]:
        raise RegimeError("-sqrt(c1) sigma_y / alpha_y^k <= e0 <= 0", window=window)
    drift = 0.5 * STEP_C2 * sigma * math.sqrt(eta / L) * min(1.0, eta * L * k) ** 1.5
    return (1.0 - eta * L / 2.0) ** k * e0 - drift

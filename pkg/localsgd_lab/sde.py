"""Continuous-limit checks: Euler-Maruyama paths and backward-equation Taylor coefficients.

The SDE is dX = -F'(X) dt + sqrt(eta) sigma dB. One Euler-Maruyama step is
written as X - dt * (F'(X) + sqrt(eta / dt) sigma z), which for dt = eta is
the SGD update with Gaussian gradient noise, bit for bit.

The Ito generator of this SDE carries the factor 1/2 on the diffusion term,
giving u_tt(0, x) = F' F'' - (1/2) eta sigma^2 F'''. ``paper_literal=True``
drops that factor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from localsgd_lab.engine import Trajectory, check_finite, default_checkpoints
from localsgd_lab.errors import InconclusiveError, InvalidParameterError, RegimeError
from localsgd_lab.estimators import (
    Z95,
    MonteCarloEstimate,
    ProgressCallback,
    WelfordState,
    estimate_bias,
    map_blocks,
    reduce_states,
)
from localsgd_lab.objectives import Objective1D
from localsgd_lab.rng import RngKey, normals

logger = logging.getLogger(__name__)

DEFAULT_T_GRID = (0.05, 0.1, 0.15, 0.2)
EXPANSION_GATE = 0.2
REL_TOL = 0.1


@dataclass(frozen=True)
class TaylorCoeffs:
    u_t: float
    u_tt: float


@dataclass
class BackwardExpansion:
    fitted: TaylorCoeffs
    fitted_stderr: TaylorCoeffs
    predicted: TaylorCoeffs
    points: list[tuple[float, MonteCarloEstimate]] = field(default_factory=list)

    def u_tt_within(self, rel_tol: float) -> bool:
        return abs(self.fitted.u_tt - self.predicted.u_tt) <= rel_tol * abs(self.predicted.u_tt)


@dataclass(frozen=True)
class DiscreteCrossCheck:
    measured: MonteCarloEstimate
    predicted: float

    @property
    def relative_error(self) -> float:
        return abs(self.measured.mean - self.predicted) / abs(self.predicted) if self.predicted else math.inf


def _diffusion(eta: float, sigma: float, paper_literal: bool) -> float:
    return eta * sigma**2 if paper_literal else 0.5 * eta * sigma**2


def taylor_coeffs_predicted(
    obj: Objective1D, x: float, eta: float, sigma: float, paper_literal: bool = False
) -> TaylorCoeffs:
    f1 = float(obj.mean_grad(x))
    f2 = float(obj.hess(x))
    f3 = float(obj.third(x))
    return TaylorCoeffs(u_t=-f1, u_tt=f1 * f2 - _diffusion(eta, sigma, paper_literal) * f3)


def discrete_bias_predicted(
    obj: Objective1D, x: float, eta: float, sigma: float, k: int, paper_literal: bool = False
) -> float:
    """Leading-order SGD bias after k steps from x."""
    f3 = float(obj.third(x))
    if paper_literal:
        return -0.5 * eta**3 * k**2 * sigma**2 * f3
    return -0.25 * eta**3 * k * (k - 1) * sigma**2 * f3


def simulate_sde(
    obj: Objective1D,
    x0: float,
    eta: float,
    dt: float,
    key: RngKey,
    n: int,
    record: Sequence[int],
    sign: float = 1.0,
    sigma: float | None = None,
) -> np.ndarray:
    """Euler-Maruyama on ``n`` replicas; rows follow the ``record`` step indices."""
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    sigma = obj.constants.sigma if sigma is None else sigma
    scale = math.sqrt(eta / dt) * sigma
    x = np.full(n, float(x0))
    wanted = set(record)
    out = {0: x.copy()} if 0 in wanted else {}
    for j in range(max(record)):
        noise = sign * (scale * normals(key.at(step=j), n))
        x = x - dt * (obj.mean_grad(x) + noise)
        check_finite(x, j + 1, key.replica)
        if j + 1 in wanted:
            out[j + 1] = x.copy()
    return np.stack([out[s] for s in record])


def euler_maruyama(
    obj: Objective1D,
    x0: float,
    eta: float,
    dt: float,
    steps: int,
    key: RngKey,
    antithetic_sign: int = 1,
    full_trace: bool = False,
) -> Trajectory:
    record = list(range(steps + 1)) if full_trace else default_checkpoints(steps)
    values = simulate_sde(obj, x0, eta, dt, key, 1, record, float(antithetic_sign))
    return Trajectory(np.array(record), values[:, 0])


def _steps_for(t_grid: Sequence[float], dt: float) -> list[int]:
    steps = []
    for t in t_grid:
        s = round(t / dt)
        if s < 1 or abs(s * dt - t) > 1e-9 * max(1.0, t):
            raise InvalidParameterError(f"t={t} is not a positive multiple of dt={dt}")
        steps.append(s)
    return steps


def _wls(t: np.ndarray, y: np.ndarray, se: np.ndarray, cubic: bool) -> tuple[np.ndarray, np.ndarray]:
    """Fit y = u_t t + u_tt t^2 / 2 (+ c t^3); returns coefficients and their standard errors."""
    cols = [t, 0.5 * t**2] + ([t**3] if cubic else [])
    X = np.column_stack(cols)
    if np.all(se == 0):
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        return beta, np.zeros_like(beta)
    w = 1.0 / np.maximum(se, np.min(se[se > 0])) ** 2
    xtwx = (X * w[:, None]).T @ X
    beta = np.linalg.solve(xtwx, (X * w[:, None]).T @ y)
    cov = np.linalg.inv(xtwx)
    return beta, np.sqrt(np.maximum(np.diag(cov), 0.0))


def check_backward_expansion(
    obj: Objective1D,
    x: float,
    eta: float,
    sigma: float,
    n: int,
    key: RngKey,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    dt: float | None = None,
    cubic: bool = True,
    rel_tol: float = REL_TOL,
    paper_literal: bool = False,
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> BackwardExpansion:
    """Estimate u(t, x) = E[X(t) | X(0) = x] on antithetic SDE paths and fit its Taylor coefficients."""
    if n < 2 or n % 2:
        raise InvalidParameterError(f"n must be an even number >= 2, got {n}")
    grad = abs(float(obj.mean_grad(x)))
    if max(t_grid) * (obj.constants.H + grad) > EXPANSION_GATE:
        raise RegimeError(f"max(t) (H + |F'(x)|) <= {EXPANSION_GATE}")
    dt = min(t_grid) / 5.0 if dt is None else dt
    steps = _steps_for(t_grid, dt)
    record = sorted(set(steps))

    def block(first: int, size: int) -> list[WelfordState]:
        block_key = key.at(replica=first)
        plus = simulate_sde(obj, x, eta, dt, block_key, size, record, 1.0, sigma)
        minus = simulate_sde(obj, x, eta, dt, block_key, size, record, -1.0, sigma)
        pairs = 0.5 * (plus + minus) - x
        return [WelfordState.from_samples(row) for row in pairs]

    per_block = map_blocks(block, n // 2, workers, progress=progress)
    by_step = {s: MonteCarloEstimate.from_state(reduce_states([b[i] for b in per_block])) for i, s in enumerate(record)}
    points = [(float(t), by_step[s]) for t, s in zip(t_grid, steps)]

    ts = np.array([p[0] for p in points])
    ys = np.array([p[1].mean for p in points])
    ses = np.array([p[1].stderr for p in points])
    beta, se = _wls(ts, ys, ses, cubic and len(ts) > 3)
    fitted = TaylorCoeffs(float(beta[0]), float(beta[1]))
    fitted_se = TaylorCoeffs(float(se[0]), float(se[1]))
    predicted = taylor_coeffs_predicted(obj, x, eta, sigma, paper_literal)
    logger.info("u_tt fitted %.6g +- %.3g, predicted %.6g", fitted.u_tt, fitted_se.u_tt, predicted.u_tt)

    if predicted.u_tt != 0.0:
        allowed = rel_tol * abs(predicted.u_tt)
        if Z95 * fitted_se.u_tt > allowed:
            need = math.ceil(n * (Z95 * fitted_se.u_tt / allowed) ** 2)
            raise InconclusiveError("u_tt confidence interval wider than the tolerance", required_n=need + need % 2)
    return BackwardExpansion(fitted, fitted_se, predicted, points)


def discrete_cross_check(
    obj: Objective1D,
    x: float,
    eta: float,
    k: int,
    n: int,
    key: RngKey,
    paper_literal: bool = False,
    workers: int = 1,
) -> DiscreteCrossCheck:
    """Antithetic SGD bias at k steps against the leading-order prediction."""
    sigma = math.sqrt(obj.noise.variance())
    measured = estimate_bias(obj, x, eta, [k], n, "antithetic", key, workers)[k]
    return DiscreteCrossCheck(measured, discrete_bias_predicted(obj, x, eta, sigma, k, paper_literal))

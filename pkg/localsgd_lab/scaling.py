"""Power-law fits of measured bias magnitudes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

import numpy as np

from localsgd_lab.errors import InconclusiveError, InvalidParameterError, NonPositiveMagnitudeError, RegimeError
from localsgd_lab.estimators import MonteCarloEstimate, ProgressCallback, estimate_bias
from localsgd_lab.objectives import Objective1D, family_from_params
from localsgd_lab.oracles import upper_terms_3o
from localsgd_lab.rng import RngKey

logger = logging.getLogger(__name__)

Axis = Literal["k", "eta"]

SIGNIFICANCE = 5.0
TOLERANCE_2O = 0.15
TOLERANCE_3O = 0.2
TARGETS: dict[tuple[int, str], float] = {(2, "k"): 1.5, (2, "eta"): 2.0, (3, "k"): 2.0, (3, "eta"): 3.0}


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    r_squared: float
    exponent_stderr: float
    n_points: int

    def predict(self, s: float) -> float:
        return math.exp(self.intercept) * s**self.exponent


@dataclass
class SweepPoint:
    axis: str
    s: float
    estimate: MonteCarloEstimate
    used_in_fit: bool = True
    note: str = ""


@dataclass
class SweepResult:
    points: list[SweepPoint]
    fit: PowerLawFit
    order: int
    target: float
    tolerance: float
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return abs(self.fit.exponent - self.target) <= self.tolerance

    @property
    def window(self) -> tuple[float, float]:
        return (self.target - self.tolerance, self.target + self.tolerance)


def fit_power_law(points: Sequence[tuple[float, float] | tuple[float, float, float]]) -> PowerLawFit:
    """Weighted least squares of log y on log s; weights default to 1."""
    if len(points) < 3:
        raise InvalidParameterError(f"need at least 3 points, got {len(points)}")
    s = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    w = np.array([p[2] if len(p) > 2 else 1.0 for p in points], dtype=np.float64)  # type: ignore[misc]
    bad = [i for i, v in enumerate(y) if not v > 0]
    if bad:
        raise NonPositiveMagnitudeError(bad)
    if np.any(s <= 0) or len(np.unique(s)) != len(s):
        raise InvalidParameterError("scales must be positive and distinct")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise InvalidParameterError("weights must be positive and finite")

    X = np.column_stack([np.ones_like(s), np.log(s)])
    ly = np.log(y)
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], ly * sw, rcond=None)
    resid = ly - X @ beta
    ss_res = float(np.sum(w * resid**2))
    centered = ly - np.average(ly, weights=w)
    ss_tot = float(np.sum(w * centered**2))
    r_squared = 1.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    dof = len(s) - 2
    cov = np.linalg.inv((X * w[:, None]).T @ X) * (ss_res / dof)
    return PowerLawFit(
        exponent=float(beta[1]),
        intercept=float(beta[0]),
        r_squared=r_squared,
        exponent_stderr=float(math.sqrt(max(cov[1, 1], 0.0))),
        n_points=len(s),
    )


def bias_order(obj: Objective1D) -> int:
    """2 for objectives with unbounded third derivative, 3 for smooth non-quadratic ones."""
    c = obj.constants
    if not c.q_bounded:
        return 2
    if c.Q > 0:
        return 3
    raise InvalidParameterError("quadratic objectives have zero bias; nothing to fit")


def check_sweep_regime(obj: Objective1D, etas: Sequence[float], ks: Sequence[int]) -> None:
    """Refuse grids that leave the targeted rate regime or mix regimes.

    Both orders need k >= 2 and eta <= 1/(2kH); past eta k H ~ 1 the bias
    saturates and the power law changes. Third-order grids must also stay on
    one term of the upper envelope.
    """
    H, Q, sigma = obj.constants.H, obj.constants.Q, obj.constants.sigma
    order = bias_order(obj)
    active: set[int] = set()
    for eta, k in zip(etas, ks):
        if k < 2:
            raise RegimeError(f"k >= 2 (got k={k})")
        if eta > 1.0 / (2.0 * k * H):
            raise RegimeError(f"eta <= 1/(2kH) (got eta={eta:g}, k={k}, H={H:g}, eta k H={eta * k * H:g})")
        if order == 3:
            terms = upper_terms_3o(eta, H, Q, sigma, k)
            active.add(int(np.argmin(terms)))
    if len(active) > 1:
        raise RegimeError("grid crosses between terms of the third-order bias envelope")


def _mark_points(points: list[SweepPoint]) -> None:
    for p in points:
        e = p.estimate
        if abs(e.mean) < SIGNIFICANCE * e.stderr:
            p.used_in_fit = False
            p.note = f"|mean| < {SIGNIFICANCE:g} stderr"
    signs = [math.copysign(1.0, p.estimate.mean) for p in points if p.used_in_fit]
    if not signs:
        return
    majority = 1.0 if sum(signs) >= 0 else -1.0
    for p in points:
        if p.used_in_fit and math.copysign(1.0, p.estimate.mean) != majority:
            p.used_in_fit = False
            p.note = "sign opposite to majority"


def sweep_bias_scaling(
    family: str,
    params: dict[str, Any],
    axis: Axis,
    grid: Sequence[float],
    fixed: float,
    n: int,
    key: RngKey,
    x0: float = 0.0,
    tolerance: float | None = None,
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> SweepResult:
    """Measure antithetic bias along ``axis`` with the other of (eta, k) held at ``fixed`` and fit the exponent."""
    obj = family_from_params(family, params)
    if not isinstance(obj, Objective1D):
        raise InvalidParameterError(f"family '{family}' is not a scalar objective")
    if axis not in ("k", "eta"):
        raise InvalidParameterError(f"axis must be 'k' or 'eta', got {axis!r}")
    etas = [float(fixed)] * len(grid) if axis == "k" else [float(g) for g in grid]
    ks = [int(g) for g in grid] if axis == "k" else [int(fixed)] * len(grid)
    check_sweep_regime(obj, etas, ks)
    order = bias_order(obj)

    points = []
    for eta, k, s in zip(etas, ks, grid):
        est = estimate_bias(obj, x0, eta, [k], n, "antithetic", key.child(f"{axis}={s}"), workers, progress)[k]
        logger.info("sweep %s=%s mean=%.6g stderr=%.3g", axis, s, est.mean, est.stderr)
        points.append(SweepPoint(axis, float(s), est))
    _mark_points(points)

    used = [p for p in points if p.used_in_fit]
    if len(used) < 3:
        worst = min((abs(p.estimate.mean) / p.estimate.stderr for p in points if p.estimate.stderr > 0), default=0.0)
        need = math.ceil(n * (SIGNIFICANCE / max(worst, 1e-3)) ** 2)
        raise InconclusiveError(f"only {len(used)} significant sweep points", required_n=need)
    fit = fit_power_law([(p.s, abs(p.estimate.mean), (p.estimate.mean / p.estimate.stderr) ** 2) for p in used])
    tol = tolerance if tolerance is not None else (TOLERANCE_2O if order == 2 else TOLERANCE_3O)
    return SweepResult(points, fit, order, TARGETS[(order, axis)], tol, {"family": family, **params, "fixed": fixed})

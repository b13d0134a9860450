"""Monte-Carlo estimators with mergeable statistics.

Replicas are cut into fixed-size blocks independent of the worker count.
Blocks run on a thread pool, and their ``WelfordState`` summaries are merged
in ascending block order, so every estimate is bitwise identical for any
number of workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence, TypeVar

import numpy as np

from localsgd_lab.engine import (
    FedAvgConfig,
    population_gap,
    population_grad,
    simulate_fedavg,
    simulate_fedavg_composite,
    simulate_gd,
    simulate_sgd,
)
from localsgd_lab.errors import InvalidParameterError, RangeTooSmallError, RegimeError
from localsgd_lab.objectives import ClientObjective, CompositeObjective, Objective1D
from localsgd_lab.oracles import quad_sgd_distribution
from localsgd_lab.rng import RngKey, uniforms

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1 << 16
OUTSIDE_MASS_LIMIT = 1e-3
CDF_GRID_POINTS = 512
Z95 = 1.96

Mode = Literal["plain", "antithetic"]
Metric = Literal["value_gap", "grad_sq"]
ProgressCallback = Callable[[int], None]
T = TypeVar("T")


@dataclass(frozen=True)
class WelfordState:
    """Running count, mean and sum of squared deviations."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> WelfordState:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size == 0:
            return cls()
        mean = float(samples.mean())
        return cls(int(samples.size), mean, float(np.sum((samples - mean) ** 2)))

    def update(self, x: float) -> WelfordState:
        count = self.count + 1
        delta = x - self.mean
        mean = self.mean + delta / count
        return WelfordState(count, mean, self.m2 + delta * (x - mean))

    def merge(self, other: WelfordState) -> WelfordState:
        """Chan et al. pairwise combination."""
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return WelfordState(count, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0


@dataclass(frozen=True)
class MonteCarloEstimate:
    n: int
    mean: float
    stderr: float

    @classmethod
    def from_state(cls, state: WelfordState) -> MonteCarloEstimate:
        stderr = math.sqrt(state.variance / state.count) if state.count > 0 else math.inf
        return cls(state.count, state.mean, stderr)

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.mean - Z95 * self.stderr, self.mean + Z95 * self.stderr)


ESTIMATE_HEADER = ("experiment", "objective", "eta", "k", "K", "R", "M", "n", "mode", "mean", "stderr", "ci_lo", "ci_hi")
ESTIMATES_NAME = "estimates.csv"


def estimate_row(
    experiment: str,
    objective: str,
    est: MonteCarloEstimate,
    eta: float,
    mode: Mode = "plain",
    k: int | None = None,
    K: int | None = None,
    R: int | None = None,
    M: int | None = None,
) -> tuple:
    """One ``estimates.csv`` row; step counts that do not apply are left empty."""
    lo, hi = est.ci95
    counts = tuple("" if v is None else v for v in (k, K, R, M))
    return (experiment, objective, eta, *counts, est.n, mode, est.mean, est.stderr, lo, hi)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self) -> None:
        if np.any(np.diff(self.edges) <= 0):
            raise InvalidParameterError("histogram edges must be strictly increasing")

    @property
    def outside(self) -> int:
        return self.total - int(self.counts.sum())

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


@dataclass
class DensityResult:
    histograms: dict[int, Histogram]
    means: dict[int, MonteCarloEstimate]


@dataclass(frozen=True)
class DominanceReport:
    violation: float
    dkw_bound: float
    n: int
    coupled: bool

    def within(self, factor: float) -> bool:
        return self.violation <= factor * self.dkw_bound


@dataclass
class FedAvgRoundStats:
    """Per-round mean of the round starts plus the final-iterate metric."""

    rounds: list[MonteCarloEstimate] = field(default_factory=list)
    metric: MonteCarloEstimate | None = None


def blocks(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """(first replica, size) of every block covering ``n`` replicas."""
    return [(start, min(block_size, n - start)) for start in range(0, n, block_size)]


def map_blocks(
    fn: Callable[[int, int], T],
    n: int,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
    progress: ProgressCallback | None = None,
) -> list[T]:
    """Run ``fn(first, size)`` over all blocks; results come back in block order."""
    spans = blocks(n, block_size)
    if workers <= 1 or len(spans) == 1:
        results = []
        for start, size in spans:
            results.append(fn(start, size))
            if progress:
                progress(1)
        return results

    ordered: list[T | None] = [None] * len(spans)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(fn, start, size): i for i, (start, size) in enumerate(spans)}
        for future in as_completed(future_to_index):
            ordered[future_to_index[future]] = future.result()
            if progress:
                progress(1)
    return [r for r in ordered if r is not None]


def reduce_states(states: Sequence[WelfordState]) -> WelfordState:
    total = WelfordState()
    for state in states:
        total = total.merge(state)
    return total


def dkw_bound(n: int, alpha: float = 0.05) -> float:
    """Dvoretzky-Kiefer-Wolfowitz sup-gap bound at confidence 1 - alpha."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def suggest_sample_size(eta: float, sigma: float, k: int, target: float) -> int:
    """Plain-mode replicas needed so that stderr ~ eta sigma sqrt(k) / sqrt(n) <= target / 5."""
    if target <= 0:
        raise InvalidParameterError(f"target must be positive, got {target}")
    return max(2, math.ceil((5.0 * eta * sigma * math.sqrt(k) / target) ** 2))


def _check_mode(n: int, mode: str) -> None:
    if mode not in ("plain", "antithetic"):
        raise InvalidParameterError(f"mode must be 'plain' or 'antithetic', got {mode!r}")
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if mode == "antithetic" and n % 2:
        raise InvalidParameterError(f"antithetic mode needs an even n, got {n}")


def _sgd_samples(
    obj: Objective1D, x0: float, eta: float, record: list[int], key: RngKey, first: int, size: int, mode: str
) -> np.ndarray:
    """Iterates at ``record`` for one block; antithetic mode returns pair averages."""
    k = max(record)
    block_key = key.at(replica=first)
    plus = simulate_sgd(obj, x0, eta, k, block_key, size, record, 1.0)
    if mode == "plain":
        return plus
    minus = simulate_sgd(obj, x0, eta, k, block_key, size, record, -1.0)
    return 0.5 * (plus + minus)


def estimate_bias(
    obj: Objective1D,
    x0: float,
    eta: float,
    k_list: Sequence[int],
    n: int,
    mode: Mode,
    key: RngKey,
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> dict[int, MonteCarloEstimate]:
    """E[x_sgd^(k)] - z_gd^(k) for every k; antithetic estimates count pairs as samples."""
    _check_mode(n, mode)
    ks = sorted(set(int(k) for k in k_list))
    record = [0, *ks] if ks[0] != 0 else ks
    gd = simulate_gd(obj, x0, eta, max(ks), record)[:, 0]
    paths = n if mode == "plain" else n // 2

    def block(first: int, size: int) -> list[WelfordState]:
        xs = _sgd_samples(obj, x0, eta, record, key, first, size, mode)
        return [WelfordState.from_samples(xs[i] - gd[i]) for i in range(len(record))]

    per_block = map_blocks(block, paths, workers, progress=progress)
    out: dict[int, MonteCarloEstimate] = {}
    for i, k in enumerate(record):
        if k in ks:
            out[k] = MonteCarloEstimate.from_state(reduce_states([states[i] for states in per_block]))
    logger.debug("bias estimates %s", {k: (e.mean, e.stderr) for k, e in out.items()})
    return out


def compare_modes(
    obj: Objective1D, x0: float, eta: float, k: int, n: int, key: RngKey, workers: int = 1
) -> tuple[MonteCarloEstimate, MonteCarloEstimate]:
    """Plain and antithetic bias estimates from the same number of SGD paths."""
    plain = estimate_bias(obj, x0, eta, [k], n, "plain", key, workers)[k]
    anti = estimate_bias(obj, x0, eta, [k], n, "antithetic", key.child("antithetic"), workers)[k]
    return plain, anti


def predicted_range(obj: Objective1D, x0: float, eta: float, checkpoints: Sequence[int]) -> tuple[float, float]:
    """mean +- 6 predicted SD, using the quadratic oracle at the objective's largest curvature."""
    H = obj.constants.H
    sigma = math.sqrt(obj.noise.variance())
    gd = simulate_gd(obj, x0, eta, max(checkpoints), [0, *sorted(set(checkpoints) - {0})])[:, 0]
    sd = 0.0
    for t in checkpoints:
        try:
            sd = max(sd, math.sqrt(quad_sgd_distribution(H, sigma, eta, x0, int(t)).variance))
        except RegimeError:
            raise InvalidParameterError("cannot predict a histogram range with eta*H >= 1; pass range") from None
    lo, hi = float(gd.min()), float(gd.max())
    if sd == 0.0:
        return (lo - 1.0, hi + 1.0)
    return (lo - 6.0 * sd, hi + 6.0 * sd)


def estimate_density(
    obj: Objective1D,
    x0: float,
    eta: float,
    checkpoints: Sequence[int],
    n: int,
    key: RngKey,
    bins: int = 200,
    range: tuple[float, float] | None = None,
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> DensityResult:
    """Histograms and mean estimates of the SGD iterate at each checkpoint."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    cps = sorted(set(int(c) for c in checkpoints))
    lo, hi = range if range is not None else predicted_range(obj, x0, eta, cps)
    edges = np.linspace(lo, hi, bins + 1)

    def block(first: int, size: int) -> list[tuple[WelfordState, np.ndarray]]:
        xs = _sgd_samples(obj, x0, eta, cps, key, first, size, "plain")
        return [(WelfordState.from_samples(row), np.histogram(row, bins=edges)[0]) for row in xs]

    per_block = map_blocks(block, n, workers, progress=progress)
    result = DensityResult(histograms={}, means={})
    for i, cp in enumerate(cps):
        counts = np.sum([b[i][1] for b in per_block], axis=0)
        hist = Histogram(edges=edges, counts=counts, total=n)
        if hist.outside / n > OUTSIDE_MASS_LIMIT:
            raise RangeTooSmallError(hist.outside / n, cp)
        result.histograms[cp] = hist
        result.means[cp] = MonteCarloEstimate.from_state(reduce_states([b[i][0] for b in per_block]))
    return result


def _survival(sorted_samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Empirical Pr[X >= c] on the grid."""
    return 1.0 - np.searchsorted(sorted_samples, grid, side="left") / sorted_samples.size


def dominance_check(
    obj_a: Objective1D,
    obj_b: Objective1D,
    x0: float,
    eta: float,
    k: int,
    n: int,
    key: RngKey,
    coupled: bool = True,
    workers: int = 1,
) -> DominanceReport:
    """Largest amount by which Pr[b >= c] falls below Pr[a >= c] on a pooled quantile grid."""
    if obj_a.noise != obj_b.noise:
        raise InvalidParameterError("dominance check needs both objectives to share the noise model")
    key_b = key if coupled else key.child("comparator")

    def sample(obj: Objective1D, base: RngKey) -> np.ndarray:
        parts = map_blocks(lambda first, size: simulate_sgd(obj, x0, eta, k, base.at(replica=first), size, [k])[0], n, workers)
        return np.sort(np.concatenate(parts))

    a = sample(obj_a, key)
    b = sample(obj_b, key_b)
    pooled = np.sort(np.concatenate([a, b]))
    grid = np.quantile(pooled, (np.arange(CDF_GRID_POINTS) + 0.5) / CDF_GRID_POINTS)
    gap = _survival(a, grid) - _survival(b, grid)
    return DominanceReport(violation=max(0.0, float(gap.max())), dkw_bound=dkw_bound(n), n=n, coupled=coupled)


def _shadow_index(key: RngKey, first: int, size: int, total_steps: int) -> np.ndarray:
    u = uniforms(key.child("shadow").at(replica=first), size)
    return np.minimum((u * total_steps).astype(np.int64), total_steps - 1)


def fedavg_error(
    clients: Sequence[ClientObjective] | CompositeObjective,
    cfg: FedAvgConfig,
    n: int,
    key: RngKey,
    metric: Metric = "value_gap",
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> MonteCarloEstimate:
    """Average FedAvg suboptimality over ``n`` replicas.

    ``value_gap`` measures F(x^(R,0)) - F(x*); ``grad_sq`` measures
    F'(x_hat)^2 at the client average x_hat before a uniformly random local
    step (r, k) drawn per replica.
    """
    return fedavg_round_stats(clients, cfg, n, key, metric, workers, progress).metric  # type: ignore[return-value]


def fedavg_round_stats(
    clients: Sequence[ClientObjective] | CompositeObjective,
    cfg: FedAvgConfig,
    n: int,
    key: RngKey,
    metric: Metric = "value_gap",
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> FedAvgRoundStats:
    if metric not in ("value_gap", "grad_sq"):
        raise InvalidParameterError(f"unknown metric {metric!r}")
    composite = isinstance(clients, CompositeObjective)
    if composite and metric == "grad_sq":
        raise InvalidParameterError("grad_sq is measured on scalar client families only")

    def block(first: int, size: int) -> tuple[list[WelfordState], WelfordState]:
        block_key = key.at(replica=first)
        if isinstance(clients, CompositeObjective):
            starts = simulate_fedavg_composite(clients, cfg, block_key, size)
            x_star = np.array([c.constants.x_star for c in clients.coords])
            final = clients.value(starts[:, -1, :]) - float(clients.value(x_star))
            rounds = [WelfordState.from_samples(clients.value(starts[:, r, :])) for r in range(cfg.R + 1)]
            return rounds, WelfordState.from_samples(final)
        shadow = _shadow_index(key, first, size, cfg.total_steps) if metric == "grad_sq" else None
        out = simulate_fedavg(clients, cfg, block_key, size, shadow_index=shadow)
        rounds = [WelfordState.from_samples(row) for row in out.round_starts]
        if metric == "grad_sq" and out.shadow is not None:
            samples = population_grad(clients, out.shadow) ** 2
        else:
            samples = population_gap(clients, out.round_starts[-1])
        return rounds, WelfordState.from_samples(samples)

    per_block = map_blocks(block, n, workers, progress=progress)
    stats = FedAvgRoundStats()
    for r in range(cfg.R + 1):
        stats.rounds.append(MonteCarloEstimate.from_state(reduce_states([b[0][r] for b in per_block])))
    stats.metric = MonteCarloEstimate.from_state(reduce_states([b[1] for b in per_block]))
    return stats

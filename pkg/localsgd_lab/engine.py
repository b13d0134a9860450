"""Trajectory generation for GD, SGD and FedAvg.

The ``simulate_*`` kernels advance a block of replicas at once; replica ``j``
of a block reads the draws of ``key.at(replica=key.replica + j)``, so results
never depend on how replicas are blocked. The ``run_*`` operations are the
single-replica views used for inspection and exact checks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from localsgd_lab.errors import DivergedError, InvalidParameterError
from localsgd_lab.objectives import ClientObjective, CompositeObjective, NoiseModel, Objective1D, Quadratic
from localsgd_lab.rng import RngKey, uniforms

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class FedAvgConfig:
    """Full description of one FedAvg experiment."""

    eta: float
    K: int
    R: int
    M: int
    x0: float = 0.0
    replicas: int = 1
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise InvalidParameterError(f"eta must be positive, got {self.eta}")
        for label in ("K", "R", "M", "replicas"):
            if getattr(self, label) < 1:
                raise InvalidParameterError(f"{label} must be >= 1, got {getattr(self, label)}")

    @property
    def total_steps(self) -> int:
        return self.K * self.R


@dataclass(frozen=True)
class Trajectory:
    """Checkpointed iterates of one run."""

    steps: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        steps = np.asarray(self.steps)
        if steps.size == 0 or steps[0] != 0:
            raise InvalidParameterError("trajectory must start with step index 0")
        if np.any(np.diff(steps) <= 0):
            raise InvalidParameterError("trajectory step indices must be strictly increasing")

    @property
    def checkpoints(self) -> list[tuple[int, float]]:
        return [(int(s), float(v)) for s, v in zip(self.steps, self.values)]

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def at(self, step: int) -> float:
        idx = np.searchsorted(self.steps, step)
        if idx >= len(self.steps) or self.steps[idx] != step:
            raise KeyError(f"step {step} was not checkpointed")
        return float(self.values[idx])


@dataclass
class FedAvgRun:
    """Single-replica FedAvg output."""

    round_starts: Trajectory
    local: dict[int, Trajectory] = field(default_factory=dict)


@dataclass
class FedAvgBlock:
    """Output of the vectorized FedAvg kernel for one block of replicas."""

    round_starts: np.ndarray
    shadow: np.ndarray | None = None
    local: dict[int, np.ndarray] = field(default_factory=dict)


def default_checkpoints(total: int, boundary: int | None = None) -> list[int]:
    """Step 0, powers of two, round boundaries and the final step."""
    marks = {0, total}
    p = 1
    while p <= total:
        marks.add(p)
        p *= 2
    if boundary:
        marks.update(range(0, total + 1, boundary))
    return sorted(marks)


def check_finite(
    x: np.ndarray,
    step: int,
    replica0: int,
    round: int | None = None,
    client: int | None = None,
    coordinate: int | None = None,
) -> None:
    bad = ~np.isfinite(x) | (np.abs(x) > DIVERGENCE_LIMIT)
    if bad.any():
        i = int(np.argmax(bad))
        raise DivergedError(step=step, replica=replica0 + i, round=round, client=client, coordinate=coordinate)


def draw_noise(noise: NoiseModel, key: RngKey, size: int, sign: float = 1.0) -> np.ndarray:
    """Centered noise for ``size`` consecutive replicas, times the antithetic sign."""
    if noise.is_deterministic:
        return np.zeros(size)
    return sign * noise.draw(uniforms(key, size))


def _start(x0: ArrayLike, n: int) -> np.ndarray:
    x = np.asarray(x0, dtype=np.float64)
    return np.full(n, float(x)) if x.ndim == 0 else x.astype(np.float64, copy=True)


def simulate_gd(obj: Objective1D, x0: ArrayLike, eta: float, k: int, record: Sequence[int]) -> np.ndarray:
    """Noiseless GD; returns iterates at the ``record`` steps, one row per step."""
    x = _start(x0, 1)
    wanted = set(record)
    out = {0: x.copy()} if 0 in wanted else {}
    for j in range(k):
        x = x - eta * obj.mean_grad(x)
        check_finite(x, j + 1, 0)
        if j + 1 in wanted:
            out[j + 1] = x.copy()
    return np.stack([out[s] for s in record])


def simulate_sgd(
    obj: Objective1D,
    x0: ArrayLike,
    eta: float,
    k: int,
    key: RngKey,
    n: int,
    record: Sequence[int],
    sign: float = 1.0,
) -> np.ndarray:
    """SGD on ``n`` replicas starting at ``key.replica``; rows follow ``record``."""
    if k < 0:
        raise InvalidParameterError(f"k must be non-negative, got {k}")
    x = _start(x0, n)
    wanted = set(record)
    if max(wanted, default=0) > k:
        raise InvalidParameterError(f"checkpoint beyond horizon k={k}")
    out = {0: x.copy()} if 0 in wanted else {}
    for j in range(k):
        noise = draw_noise(obj.noise, key.at(step=j), n, sign)
        x = x - eta * obj.stoch_grad(x, noise)
        check_finite(x, j + 1, key.replica)
        if j + 1 in wanted:
            out[j + 1] = x.copy()
    return np.stack([out[s] for s in record])


def run_gd(obj: Objective1D, x0: float, eta: float, k: int) -> Trajectory:
    """Deterministic GD with every iterate checkpointed."""
    if k < 0:
        raise InvalidParameterError(f"k must be non-negative, got {k}")
    steps = list(range(k + 1))
    return Trajectory(np.array(steps), simulate_gd(obj, x0, eta, k, steps)[:, 0])


def run_sgd(
    obj: Objective1D,
    x0: float,
    eta: float,
    k: int,
    key: RngKey,
    antithetic_sign: int = 1,
    full_trace: bool = False,
) -> Trajectory:
    """One SGD trajectory; identical key and sign reproduce it bit-exactly."""
    if antithetic_sign not in (1, -1):
        raise InvalidParameterError(f"antithetic_sign must be +1 or -1, got {antithetic_sign}")
    steps = list(range(k + 1)) if full_trace else default_checkpoints(k)
    values = simulate_sgd(obj, x0, eta, k, key, 1, steps, float(antithetic_sign))
    return Trajectory(np.array(steps), values[:, 0])


def _ordered(clients: Sequence[ClientObjective]) -> list[ClientObjective]:
    tags = [c.client_tag for c in clients]
    if len(set(tags)) != len(tags):
        raise InvalidParameterError(f"client tags must be distinct, got {tags}")
    return sorted(clients, key=lambda c: c.client_tag)


def homogeneous_clients(obj: Objective1D, M: int) -> list[ClientObjective]:
    """M clients sharing one objective, each with its own noise stream."""
    return [ClientObjective(obj, obj.noise, m) for m in range(M)]


def simulate_fedavg(
    clients: Sequence[ClientObjective],
    cfg: FedAvgConfig,
    key: RngKey,
    n: int,
    sign: float = 1.0,
    shadow_index: np.ndarray | None = None,
    local_record: Sequence[int] = (),
) -> FedAvgBlock:
    """FedAvg on ``n`` replicas: broadcast, K local steps per client, uniform average.

    Client noise is keyed by ``client_tag`` and the global local-step index
    ``r * K + k``; clients are averaged in ascending tag order. When
    ``shadow_index`` is given, replica ``j`` also records the client average
    before local step ``shadow_index[j]`` (a flat ``r * K + k`` index).
    """
    ordered = _ordered(clients)
    if len(ordered) != cfg.M:
        raise InvalidParameterError(f"expected {cfg.M} clients, got {len(ordered)}")
    x = _start(cfg.x0, n)
    starts = np.empty((cfg.R + 1, n))
    starts[0] = x
    shadow = np.full(n, np.nan) if shadow_index is not None else None
    wanted = set(local_record)
    local_out: dict[int, dict[int, np.ndarray]] = {c.client_tag: {} for c in ordered}
    if 0 in wanted:
        for c in ordered:
            local_out[c.client_tag][0] = x.copy()

    for r in range(cfg.R):
        local = [x.copy() for _ in ordered]
        for k in range(cfg.K):
            t = r * cfg.K + k
            if shadow is not None and shadow_index is not None:
                hit = shadow_index == t
                if hit.any():
                    shadow[hit] = _average(local, cfg.M)[hit]
            for m, client in enumerate(ordered):
                noise = draw_noise(client.noise, key.at(client=client.client_tag, round=r, step=t), n, sign)
                local[m] = local[m] - cfg.eta * client.objective.stoch_grad(local[m], noise)
                check_finite(local[m], k + 1, key.replica, round=r, client=client.client_tag)
                if t + 1 in wanted:
                    local_out[client.client_tag][t + 1] = local[m].copy()
        x = _average(local, cfg.M)
        starts[r + 1] = x

    block = FedAvgBlock(round_starts=starts, shadow=shadow)
    if wanted:
        block.local = {tag: np.stack([rows[s] for s in sorted(rows)]) for tag, rows in local_out.items()}
    return block


def _average(local: list[np.ndarray], M: int) -> np.ndarray:
    total = local[0].copy()
    for x in local[1:]:
        total += x
    return total / M


def run_fedavg(
    clients: Sequence[ClientObjective],
    cfg: FedAvgConfig,
    key: RngKey,
    full_trace: bool = False,
) -> FedAvgRun:
    """Single-replica FedAvg; round starts x^(r,0) for r = 0..R plus local traces per client."""
    total = cfg.total_steps
    record = list(range(total + 1)) if full_trace else default_checkpoints(total, cfg.K)
    block = simulate_fedavg(clients, cfg, key, 1, local_record=record)
    round_starts = Trajectory(np.arange(cfg.R + 1), block.round_starts[:, 0])
    local = {tag: Trajectory(np.array(record), rows[:, 0]) for tag, rows in block.local.items()}
    return FedAvgRun(round_starts=round_starts, local=local)


def simulate_fedavg_composite(
    composite: CompositeObjective,
    cfg: FedAvgConfig,
    key: RngKey,
    n: int,
    sign: float = 1.0,
) -> np.ndarray:
    """FedAvg on every coordinate of a composite; returns round starts shaped (dim, R + 1, n)."""
    rows = []
    for i in range(composite.dim):
        coord_cfg = FedAvgConfig(cfg.eta, cfg.K, cfg.R, cfg.M, composite.x0[i], cfg.replicas, cfg.master_seed)
        try:
            block = simulate_fedavg(composite.clients_for(i, cfg.M), coord_cfg, key.child(f"coord{i}"), n, sign)
        except DivergedError as e:
            e.coordinate = i
            raise
        rows.append(block.round_starts)
    return np.stack(rows)


def simulate_minibatch_sgd(
    clients: Sequence[ClientObjective],
    cfg: FedAvgConfig,
    key: RngKey,
    n: int,
    sign: float = 1.0,
) -> np.ndarray:
    """Minibatch SGD baseline: each round averages the M*K stochastic gradients at the broadcast point.

    Returns the round starts, shape (R + 1, n).
    """
    ordered = _ordered(clients)
    x = _start(cfg.x0, n)
    starts = np.empty((cfg.R + 1, n))
    starts[0] = x
    batch = cfg.M * cfg.K
    for r in range(cfg.R):
        g = np.zeros(n)
        for k in range(cfg.K):
            t = r * cfg.K + k
            for client in ordered:
                noise = draw_noise(client.noise, key.at(client=client.client_tag, round=r, step=t), n, sign)
                g += client.objective.stoch_grad(x, noise)
        x = x - cfg.eta * (g / batch)
        check_finite(x, r + 1, key.replica, round=r)
        starts[r + 1] = x
    return starts


def run_minibatch_sgd(clients: Sequence[ClientObjective], cfg: FedAvgConfig, key: RngKey) -> Trajectory:
    starts = simulate_minibatch_sgd(clients, cfg, key, 1)
    return Trajectory(np.arange(cfg.R + 1), starts[:, 0])


def run_single_machine_sgd(clients: Sequence[ClientObjective], cfg: FedAvgConfig, key: RngKey) -> Trajectory:
    """Single-machine baseline: K*R sequential SGD steps on the lowest-tag client, sampled at round boundaries."""
    first = _ordered(clients)[0]
    record = list(range(0, cfg.total_steps + 1, cfg.K))
    values = simulate_sgd(first.objective, cfg.x0, cfg.eta, cfg.total_steps, key.at(client=first.client_tag), 1, record)
    return Trajectory(np.arange(cfg.R + 1), values[:, 0])


def population_gap(clients: Sequence[ClientObjective], x: np.ndarray) -> np.ndarray:
    """F(x) - F(x*) for the average objective F = (1/M) sum_m F_m."""
    x_star = population_optimum(clients)
    values = sum(c.objective.value(x) for c in clients) / len(clients)
    floor = sum(float(c.objective.value(x_star)) for c in clients) / len(clients)
    return values - floor


def population_grad(clients: Sequence[ClientObjective], x: np.ndarray) -> np.ndarray:
    return sum(c.objective.mean_grad(x) for c in clients) / len(clients)


def population_optimum(clients: Sequence[ClientObjective]) -> float:
    objectives = [c.objective for c in clients]
    if all(isinstance(o, Quadratic) for o in objectives):
        return sum(o.shift for o in objectives) / sum(o.L for o in objectives)  # type: ignore[attr-defined]
    first = objectives[0]
    if any(o is not first for o in objectives):
        logger.warning("heterogeneous non-quadratic clients: using first client's optimum")
    return first.constants.x_star

"""Convergence-rate and step-size formulas, reported term by term.

Constants hidden by the Theta / O statements are omitted; every
``BoundReport`` keeps its named terms so callers can compare structure rather
than a single opaque number.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

from localsgd_lab.engine import FedAvgConfig
from localsgd_lab.errors import AssumptionMismatchError, InvalidParameterError, RegimeError
from localsgd_lab.estimators import MonteCarloEstimate, ProgressCallback, fedavg_error
from localsgd_lab.objectives import ClientObjective
from localsgd_lab.rng import RngKey

logger = logging.getLogger(__name__)

DEFAULT_SLACK = 10.0
_TOL = 1e-12

Which = Literal["convex3o", "nonconvex3o", "nonconvex2o"]


@dataclass(frozen=True)
class RateInputs:
    """Problem constants: smoothness, noise, distances, heterogeneity and budget."""

    H: float = 1.0
    sigma: float = 0.0
    Q: float = 0.0
    G: float = 0.0
    D: float = 1.0
    B: float = 1.0
    zeta_star: float = 0.0
    zeta: float = 0.0
    M: int = 1
    K: int = 1
    R: int = 1

    def __post_init__(self) -> None:
        for label in ("H", "sigma", "Q", "G", "D", "B", "zeta_star", "zeta"):
            if getattr(self, label) < 0:
                raise InvalidParameterError(f"{label} must be non-negative, got {getattr(self, label)}")
        for label in ("M", "K", "R"):
            if getattr(self, label) < 1:
                raise InvalidParameterError(f"{label} must be >= 1, got {getattr(self, label)}")


@dataclass(frozen=True)
class BoundReport:
    """Named terms of a rate; ``total`` is their sum in order."""

    theorem: str
    terms: dict[str, float]
    candidates: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        total = 0.0
        for value in self.terms.values():
            total += value
        return total

    def rows(self) -> list[tuple[str, str, float]]:
        out = [(self.theorem, name, value) for name, value in self.terms.items()]
        out += [(self.theorem, f"candidate:{name}", value) for name, value in self.candidates.items()]
        out.append((self.theorem, "total", self.total))
        return out


def _ratio(num: float, den: float) -> float:
    """num / den with x / 0 = inf for x > 0 and 0 / 0 = inf (an absent constraint)."""
    if den == 0:
        return math.inf
    return num / den


def _homog_terms(p: RateInputs) -> tuple[dict[str, float], dict[str, float]]:
    local_noise = p.sigma * p.D / math.sqrt(p.K * p.R)
    local_drift = p.H ** (1 / 3) * p.sigma ** (2 / 3) * p.D ** (4 / 3) / (p.K ** (1 / 3) * p.R ** (2 / 3))
    terms = {
        "smooth": p.H * p.D**2 / (p.K * p.R),
        "noise": p.sigma * p.D / math.sqrt(p.M * p.K * p.R),
        "local": min(local_noise, local_drift),
    }
    return terms, {"local_noise": local_noise, "local_drift": local_drift}


def lower_bound_homog(inputs: RateInputs) -> BoundReport:
    """HD^2/(KR) + sigma D/sqrt(MKR) + min{sigma D/sqrt(KR), H^1/3 sigma^2/3 D^4/3 / (K^1/3 R^2/3)}."""
    if inputs.K < 2:
        raise RegimeError(f"K >= 2 (got K={inputs.K})")
    terms, candidates = _homog_terms(inputs)
    return BoundReport("lower_homog", terms, candidates)


def lower_bound_hetero(inputs: RateInputs) -> BoundReport:
    if inputs.K < 2:
        raise RegimeError(f"K >= 2 (got K={inputs.K})")
    p = inputs
    terms, candidates = _homog_terms(p)
    ratio = p.zeta_star**2 / p.H if p.H > 0 else math.inf
    drift = p.H ** (1 / 3) * p.zeta_star ** (2 / 3) * p.D ** (4 / 3) / p.R ** (2 / 3)
    terms["hetero"] = min(ratio, drift)
    candidates.update({"hetero_ratio": ratio, "hetero_drift": drift})
    return BoundReport("lower_hetero", terms, candidates)


def previous_upper_bound(inputs: RateInputs) -> BoundReport:
    """Earlier FedAvg upper bound; uses the uniform heterogeneity zeta."""
    p = inputs
    terms = {
        "smooth": p.H * p.D**2 / (p.K * p.R),
        "noise": p.sigma * p.D / math.sqrt(p.M * p.K * p.R),
        "local": p.H ** (1 / 3) * p.sigma ** (2 / 3) * p.D ** (4 / 3) / (p.K ** (1 / 3) * p.R ** (2 / 3)),
        "hetero": p.H ** (1 / 3) * p.zeta ** (2 / 3) * p.D ** (4 / 3) / p.R ** (2 / 3),
    }
    return BoundReport("previous_upper", terms)


def previous_lower_bound(inputs: RateInputs) -> BoundReport:
    p = inputs
    hetero_short = p.H * p.D**2 / p.R
    hetero_drift = p.H ** (1 / 3) * p.zeta_star ** (2 / 3) * p.D ** (4 / 3) / p.R ** (2 / 3)
    terms = {
        "noise": p.sigma * p.D / math.sqrt(p.M * p.K * p.R),
        "local": p.H ** (1 / 3) * p.sigma ** (2 / 3) * p.D ** (4 / 3) / (p.K ** (2 / 3) * p.R ** (2 / 3)),
        "hetero": min(hetero_short, hetero_drift),
    }
    return BoundReport("previous_lower", terms, {"hetero_short": hetero_short, "hetero_drift": hetero_drift})


def baseline_rate(inputs: RateInputs) -> BoundReport:
    """Best of minibatch SGD and single-machine SGD."""
    p = inputs
    single = p.H * p.D**2 / p.R
    local = p.sigma * p.D / math.sqrt(p.K * p.R)
    terms = {
        "smooth": p.H * p.D**2 / (p.K * p.R),
        "noise": p.sigma * p.D / math.sqrt(p.M * p.K * p.R),
        "local": min(single, local),
    }
    return BoundReport("baseline", terms, {"single_machine": single, "minibatch_noise": local})


def _shared_eta(p: RateInputs) -> dict[str, float]:
    return {
        "smooth": 1.0 / p.H,
        "noise": _ratio(math.sqrt(p.B * p.M), p.sigma * math.sqrt(p.H * p.R * p.K)),
    }


def _shared_rate(p: RateInputs) -> dict[str, float]:
    return {
        "smooth": p.H * p.B / (p.K * p.R),
        "noise": p.sigma * math.sqrt(p.B * p.H) / math.sqrt(p.M * p.K * p.R),
    }


def stepsize_and_rate_convex_3o(inputs: RateInputs) -> tuple[float, BoundReport]:
    p = inputs
    if p.H <= 0:
        raise InvalidParameterError("H must be positive")
    etas = _shared_eta(p)
    etas["third"] = _ratio(p.B**0.2, p.K**0.6 * p.R**0.2 * p.Q**0.4 * p.sigma**0.8)
    terms = _shared_rate(p)
    terms["third"] = p.B**0.8 * p.sigma**0.8 * p.Q**0.4 / (p.K**0.4 * p.R**0.8)
    return min(etas.values()), BoundReport("convex3o", terms, {f"eta_{k}": v for k, v in etas.items()})


def stepsize_and_rate_nonconvex_3o(inputs: RateInputs) -> tuple[float, BoundReport]:
    p = inputs
    if p.H <= 0:
        raise InvalidParameterError("H must be positive")
    etas = _shared_eta(p)
    etas["third"] = _ratio(p.B**0.2, p.K * p.R**0.2 * p.Q**0.4 * (p.sigma + p.G) ** 0.8)
    terms = _shared_rate(p)
    terms["third"] = p.B**0.8 * (p.G + p.sigma) ** 0.8 * p.Q**0.4 / p.R**0.8
    return min(etas.values()), BoundReport("nonconvex3o", terms, {f"eta_{k}": v for k, v in etas.items()})


def stepsize_and_rate_nonconvex_2o(inputs: RateInputs) -> tuple[float, BoundReport]:
    p = inputs
    if p.H <= 0:
        raise InvalidParameterError("H must be positive")
    etas = _shared_eta(p)
    etas["third"] = _ratio(p.B ** (1 / 3), p.K * p.R ** (1 / 3) * p.H ** (2 / 3) * (p.G + p.sigma) ** (2 / 3))
    terms = _shared_rate(p)
    terms["third"] = p.B ** (2 / 3) * (p.G + p.sigma) ** (2 / 3) * p.H ** (2 / 3) / p.R ** (2 / 3)
    return min(etas.values()), BoundReport("nonconvex2o", terms, {f"eta_{k}": v for k, v in etas.items()})


STEPSIZE_RULES: dict[str, Callable[[RateInputs], tuple[float, BoundReport]]] = {
    "convex3o": stepsize_and_rate_convex_3o,
    "nonconvex3o": stepsize_and_rate_nonconvex_3o,
    "nonconvex2o": stepsize_and_rate_nonconvex_2o,
}


def all_reports(inputs: RateInputs) -> list[BoundReport]:
    """Every formula that applies to ``inputs``; lower bounds are skipped when K < 2."""
    reports = [previous_upper_bound(inputs), previous_lower_bound(inputs), baseline_rate(inputs)]
    if inputs.K >= 2:
        reports[1:1] = [lower_bound_homog(inputs), lower_bound_hetero(inputs)]
    for rule in STEPSIZE_RULES.values():
        reports.append(rule(inputs)[1])
    return reports


@dataclass(frozen=True)
class UpperBoundVerdict:
    theorem: str
    eta: float
    measured: MonteCarloEstimate
    bound: BoundReport
    slack: float

    @property
    def passed(self) -> bool:
        return self.measured.mean <= self.slack * self.bound.total

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} theorem={self.theorem} measured={self.measured.mean:.6g} "
            f"bound={self.bound.total:.6g} C={self.slack:g} eta={self.eta:.6g}"
        )


def check_assumptions(clients: Sequence[ClientObjective], inputs: RateInputs, which: str) -> None:
    """Refuse when a client's declared constants exceed the inputs a theorem is evaluated with."""
    for c in clients:
        k = c.objective.constants
        if k.H > inputs.H + _TOL:
            raise AssumptionMismatchError(f"client {c.client_tag}: H={k.H:g} exceeds inputs.H={inputs.H:g}")
        if math.sqrt(c.noise.variance()) > inputs.sigma + _TOL:
            raise AssumptionMismatchError(f"client {c.client_tag}: noise scale exceeds inputs.sigma={inputs.sigma:g}")
        if which.endswith("3o"):
            if not k.q_bounded:
                raise AssumptionMismatchError(f"client {c.client_tag}: third-order smoothness is not declared")
            if k.Q > inputs.Q + _TOL:
                raise AssumptionMismatchError(f"client {c.client_tag}: Q={k.Q:g} exceeds inputs.Q={inputs.Q:g}")


def verify_upper_bound(
    clients: Sequence[ClientObjective],
    inputs: RateInputs,
    n: int,
    key: RngKey,
    which: Which,
    slack: float = DEFAULT_SLACK,
    x0: float = 0.0,
    workers: int = 1,
    progress: ProgressCallback | None = None,
) -> UpperBoundVerdict:
    """Run FedAvg at the prescribed step size and compare E[F'(x_hat)^2] with slack * bound."""
    if which not in STEPSIZE_RULES:
        raise InvalidParameterError(f"unknown theorem {which!r}")
    if len(clients) != inputs.M:
        raise InvalidParameterError(f"expected {inputs.M} clients, got {len(clients)}")
    check_assumptions(clients, inputs, which)
    eta, report = STEPSIZE_RULES[which](inputs)
    cfg = FedAvgConfig(eta=eta, K=inputs.K, R=inputs.R, M=inputs.M, x0=x0, replicas=n, master_seed=key.master_seed)
    measured = fedavg_error(clients, cfg, n, key.child(which), "grad_sq", workers, progress)
    verdict = UpperBoundVerdict(which, eta, measured, report, slack)
    logger.info(verdict.line())
    return verdict

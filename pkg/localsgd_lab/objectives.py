"""Stochastic scalar objectives with exact derivatives and keyed noise samplers.

Objectives are immutable. A sampler never owns random state: ``stoch_grad``
takes the already-drawn noise value, and ``NoiseModel.draw`` maps uniform
variates from :mod:`localsgd_lab.rng` to centered noise.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, ClassVar

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate
from scipy.special import ndtri

from localsgd_lab.errors import ConfigError, InvalidParameterError

logger = logging.getLogger(__name__)

LOGCOSH_SWITCH = 20.0
_LOG2 = math.log(2.0)


class NoiseKind(StrEnum):
    """Supported gradient-noise distributions."""

    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    POINT_MASS = "point_mass"


@dataclass(frozen=True)
class NoiseModel:
    """Distribution of the additive gradient noise ``f'(x; xi) - F'(x)``.

    For ``point_mass`` the atom is folded into the client's mean gradient, so
    the centered draw is identically zero and ``scale`` only records the atom.
    """

    kind: NoiseKind
    scale: float = 0.0

    def __post_init__(self) -> None:
        if self.kind is not NoiseKind.POINT_MASS and self.scale < 0:
            raise InvalidParameterError(f"noise scale must be non-negative, got {self.scale}")

    @classmethod
    def gaussian(cls, sigma: float) -> NoiseModel:
        return cls(NoiseKind.GAUSSIAN, sigma)

    @classmethod
    def uniform(cls, sigma: float) -> NoiseModel:
        return cls(NoiseKind.UNIFORM, sigma)

    @classmethod
    def point_mass(cls, zeta: float) -> NoiseModel:
        return cls(NoiseKind.POINT_MASS, zeta)

    @property
    def is_deterministic(self) -> bool:
        return self.kind is NoiseKind.POINT_MASS or self.scale == 0.0

    def variance(self) -> float:
        if self.kind is NoiseKind.GAUSSIAN:
            return self.scale**2
        if self.kind is NoiseKind.UNIFORM:
            return self.scale**2 / 3.0
        return 0.0

    def draw(self, u: np.ndarray) -> np.ndarray:
        """Map uniform variates on (0, 1) to centered noise values."""
        if self.kind is NoiseKind.GAUSSIAN:
            return self.scale * ndtri(u)
        if self.kind is NoiseKind.UNIFORM:
            return self.scale * (2.0 * u - 1.0)
        return np.zeros_like(u)


@dataclass(frozen=True)
class Constants:
    """Declared smoothness, noise scale and optimum of an objective."""

    H: float
    Q: float
    sigma: float
    x_star: float = 0.0

    @property
    def q_bounded(self) -> bool:
        return math.isfinite(self.Q)


class Objective1D(ABC):
    """A scalar stochastic objective F(x) = E[f(x; xi)]."""

    family: ClassVar[str] = ""

    def __init__(self, constants: Constants, noise: NoiseModel) -> None:
        self.constants = constants
        self.noise = noise

    @abstractmethod
    def value(self, x: ArrayLike) -> np.ndarray:
        """F(x)."""
        ...

    @abstractmethod
    def mean_grad(self, x: ArrayLike) -> np.ndarray:
        """F'(x)."""
        ...

    @abstractmethod
    def hess(self, x: ArrayLike) -> np.ndarray:
        """F''(x)."""
        ...

    @abstractmethod
    def third(self, x: ArrayLike) -> np.ndarray:
        """F'''(x)."""
        ...

    def stoch_grad(self, x: ArrayLike, noise: ArrayLike) -> np.ndarray:
        """f'(x; xi) = F'(x) + noise."""
        return self.mean_grad(x) + noise

    def gap(self, x: ArrayLike) -> np.ndarray:
        """F(x) - F(x_star)."""
        return self.value(x) - self.value(self.constants.x_star)

    def __repr__(self) -> str:
        c = self.constants
        return f"<{self.__class__.__name__}(H={c.H!r}, Q={c.Q!r}, sigma={c.sigma!r}, noise={self.noise.kind!s})>"


class PiecewiseQuadratic(Objective1D):
    """Two-curvature quadratic with a kink in F'' at the optimum 0."""

    family = "piecewise"

    def __init__(self, h_right: float, h_left: float, noise: NoiseModel) -> None:
        if h_right <= 0 or h_left <= 0:
            raise InvalidParameterError(f"curvatures must be positive, got h_right={h_right}, h_left={h_left}")
        self.h_right = float(h_right)
        self.h_left = float(h_left)
        super().__init__(Constants(H=max(h_right, h_left), Q=math.inf, sigma=noise.scale), noise)

    def _curvature(self, x: np.ndarray) -> np.ndarray:
        return np.where(x >= 0.0, self.h_right, self.h_left)

    def value(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * self._curvature(x) * x * x

    def mean_grad(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self._curvature(x) * x

    def hess(self, x: ArrayLike) -> np.ndarray:
        return self._curvature(np.asarray(x, dtype=np.float64))

    def third(self, x: ArrayLike) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=np.float64))


class Quadratic(Objective1D):
    """F(x) = (L/2) x^2 - shift * x, optimum shift / L."""

    family = "quadratic"

    def __init__(self, L: float, noise: NoiseModel, shift: float = 0.0) -> None:
        if L <= 0:
            raise InvalidParameterError(f"curvature must be positive, got L={L}")
        self.L = float(L)
        self.shift = float(shift)
        super().__init__(Constants(H=self.L, Q=0.0, sigma=noise.scale, x_star=self.shift / self.L), noise)

    def value(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * self.L * x * x - self.shift * x

    def mean_grad(self, x: ArrayLike) -> np.ndarray:
        return self.L * np.asarray(x, dtype=np.float64) - self.shift

    def hess(self, x: ArrayLike) -> np.ndarray:
        return np.full_like(np.asarray(x, dtype=np.float64), self.L)

    def third(self, x: ArrayLike) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=np.float64))


def logcosh(y: ArrayLike) -> np.ndarray:
    """log(cosh(y)) without overflow for large |y|."""
    y = np.asarray(y, dtype=np.float64)
    a = np.abs(y)
    tail = a - _LOG2 + np.log1p(np.exp(-2.0 * a))
    head = np.log(np.cosh(np.minimum(a, LOGCOSH_SWITCH)))
    return np.where(a > LOGCOSH_SWITCH, tail, head)


def _phi_scalar(y: float) -> float:
    if y == 0.0:
        return 0.0
    value, _ = integrate.quad(lambda s: float(logcosh(s)), 0.0, y, epsabs=1e-12, epsrel=1e-12, limit=200)
    return value


class LogCosh(Objective1D):
    """Smooth convex instance with F''' peaking at Q at the optimum.

    F(x) = (3/8) H x^2 + H^3 / (64 Q^2) * phi(4 Q x / H), with phi the
    primitive of log cosh vanishing at 0. Then F'' ranges over [H/2, H] and
    F''' = Q sech^2(4 Q x / H).
    """

    family = "logcosh"

    def __init__(self, H: float, Q: float, noise: NoiseModel) -> None:
        if H <= 0 or Q <= 0:
            raise InvalidParameterError(f"H and Q must be positive, got H={H}, Q={Q}")
        self.H = float(H)
        self.Q = float(Q)
        self._scale = 4.0 * self.Q / self.H
        self._phi = np.vectorize(_phi_scalar, otypes=[np.float64])
        super().__init__(Constants(H=self.H, Q=self.Q, sigma=noise.scale), noise)

    def value(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return 0.375 * self.H * x * x + self.H**3 / (64.0 * self.Q**2) * self._phi(self._scale * x)

    def mean_grad(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return 0.75 * self.H * x + self.H**2 / (16.0 * self.Q) * logcosh(self._scale * x)

    def hess(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return 0.75 * self.H + 0.25 * self.H * np.tanh(self._scale * x)

    def third(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.Q / np.cosh(np.minimum(np.abs(self._scale * x), 350.0)) ** 2

    def gap(self, x: ArrayLike) -> np.ndarray:
        return self.value(x)


@dataclass(frozen=True)
class ClientObjective:
    """One client's local objective and noise."""

    objective: Objective1D
    noise: NoiseModel
    client_tag: int = 0

    @classmethod
    def of(cls, objective: Objective1D, client_tag: int = 0) -> ClientObjective:
        return cls(objective, objective.noise, client_tag)


def heterogeneity_at(clients: list[ClientObjective], x: float) -> float:
    """(1/M) sum_m F_m'(x)^2."""
    grads = np.array([float(c.objective.mean_grad(x)) for c in clients])
    return float(np.mean(grads**2))


def uniform_heterogeneity(clients: list[ClientObjective], grid: ArrayLike) -> float:
    """max over the grid of sqrt((1/M) sum_m (F_m'(x) - F'(x))^2)."""
    xs = np.asarray(grid, dtype=np.float64)
    grads = np.stack([c.objective.mean_grad(xs) for c in clients])
    spread = grads - grads.mean(axis=0)
    return float(np.sqrt((spread**2).mean(axis=0)).max())


def make_piecewise_quadratic(h_right: float, h_left: float, sigma: float) -> PiecewiseQuadratic:
    if sigma < 0:
        raise InvalidParameterError(f"sigma must be non-negative, got {sigma}")
    return PiecewiseQuadratic(h_right, h_left, NoiseModel.gaussian(sigma))


def make_logcosh_instance(H: float, Q: float, sigma: float, noise_kind: str = "gaussian") -> LogCosh:
    kind = NoiseKind(noise_kind)
    if kind is NoiseKind.POINT_MASS:
        raise InvalidParameterError("logcosh instance takes gaussian or uniform noise")
    return LogCosh(H, Q, NoiseModel(kind, sigma))


def make_quadratic(L: float, sigma: float) -> Quadratic:
    return Quadratic(L, NoiseModel.gaussian(sigma))


def make_hetero_pair(H: float, zeta_star: float) -> list[ClientObjective]:
    """Two deterministic clients with a shared optimum at 0.

    Client 1 steps x <- x (1 - eta H) + eta zeta*, client 2 steps
    x <- x (1 - eta mu) - eta zeta* with mu = H / 2.
    """
    if H <= 0 or zeta_star < 0:
        raise InvalidParameterError(f"need H > 0 and zeta_star >= 0, got H={H}, zeta_star={zeta_star}")
    mu = H / 2.0
    first = Quadratic(H, NoiseModel.point_mass(zeta_star), shift=zeta_star)
    second = Quadratic(mu, NoiseModel.point_mass(-zeta_star), shift=-zeta_star)
    return [ClientObjective(first, first.noise, 0), ClientObjective(second, second.noise, 1)]


def lowerbound_mu(H: float, sigma: float, zeta_star: float, D: float, K: int, R: int) -> float:
    """Curvature of the second coordinate of the lower-bound composite."""
    noise = min(
        sigma * D / math.sqrt(K * R),
        sigma ** (2 / 3) * H ** (1 / 3) * D ** (4 / 3) / (K ** (1 / 3) * R ** (2 / 3)),
    )
    hetero = zeta_star ** (2 / 3) * H ** (1 / 3) * D ** (4 / 3) / R ** (2 / 3)
    return max(noise, hetero, H * D**2 / (K * R)) / D**2


@dataclass(frozen=True)
class CompositeObjective:
    """Coordinate-wise sum of independent scalar objectives.

    ``coords`` holds the population objective of each coordinate and
    ``families`` the client objectives; client ``m`` uses
    ``families[i][m % len(families[i])]`` on coordinate ``i``.
    """

    coords: tuple[Objective1D, ...]
    families: tuple[tuple[ClientObjective, ...], ...]
    x0: tuple[float, ...]
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not len(self.coords) == len(self.families) == len(self.x0):
            raise InvalidParameterError("coords, families and x0 must have equal length")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def value(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return sum((obj.value(x[i]) for i, obj in enumerate(self.coords)), start=np.zeros(x.shape[1:]))

    def mean_grad(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.stack([obj.mean_grad(x[i]) for i, obj in enumerate(self.coords)])

    def check_clients(self, M: int) -> None:
        """Every client family must be split evenly over M, or the population optimum moves off x*."""
        for i, family in enumerate(self.families):
            if M % len(family):
                raise InvalidParameterError(
                    f"M={M} splits the {len(family)} client objectives of coordinate {i} unevenly; "
                    f"M must be a multiple of {len(family)}"
                )

    def clients_for(self, coordinate: int, M: int) -> list[ClientObjective]:
        self.check_clients(M)
        family = self.families[coordinate]
        return [ClientObjective(family[m % len(family)].objective, family[m % len(family)].noise, m) for m in range(M)]


def make_lowerbound_composite(
    H: float,
    mu: float,
    sigma: float,
    zeta_star: float,
    D: float,
    L: float | None = None,
) -> CompositeObjective:
    """Three-coordinate hard instance.

    Coordinate 1 is the piecewise quadratic with curvatures (L, L/2), L = H/12
    unless given; coordinate 2 is the noiseless mu x^2; coordinate 3 is the
    heterogeneous pair, or the noiseless quadratic with gradient H x when
    zeta_star = 0. Starts at (0, D/2, D/2).
    """
    if H <= 0 or D <= 0 or sigma < 0 or zeta_star < 0:
        raise InvalidParameterError("need H > 0, D > 0, sigma >= 0, zeta_star >= 0")
    if not 0 < mu <= H:
        raise InvalidParameterError(f"need 0 < mu <= H, got mu={mu}, H={H}")
    L = H / 12.0 if L is None else L
    first = make_piecewise_quadratic(L, L / 2.0, sigma)
    second = make_quadratic(2.0 * mu, 0.0)
    if zeta_star > 0:
        pair = tuple(make_hetero_pair(H, zeta_star))
        third: Objective1D = Quadratic(0.75 * H, NoiseModel.point_mass(0.0))
        third_family = pair
    else:
        third = make_quadratic(H, 0.0)
        third_family = (ClientObjective.of(third),)
    logger.debug("lower-bound composite L=%g mu=%g sigma=%g zeta*=%g D=%g", L, mu, sigma, zeta_star, D)
    return CompositeObjective(
        coords=(first, second, third),
        families=((ClientObjective.of(first),), (ClientObjective.of(second),), third_family),
        x0=(0.0, D / 2.0, D / 2.0),
        params={"H": H, "L": L, "mu": mu, "sigma": sigma, "zeta_star": zeta_star, "D": D},
    )


FAMILIES: tuple[str, ...] = ("piecewise", "logcosh", "quadratic", "hetero_pair", "composite")


def family_from_params(name: str, params: dict[str, Any]) -> Objective1D | list[ClientObjective] | CompositeObjective:
    """Build an objective from its config key and parameter table."""
    p = dict(params)
    try:
        if name == "piecewise":
            if "H" in p:
                H = float(p["H"])
                return make_piecewise_quadratic(H, H / 2.0, float(p.get("sigma", 1.0)))
            return make_piecewise_quadratic(float(p["h_right"]), float(p["h_left"]), float(p.get("sigma", 1.0)))
        if name == "logcosh":
            return make_logcosh_instance(
                float(p.get("H", 1.0)), float(p.get("Q", 0.5)), float(p.get("sigma", 1.0)), str(p.get("noise", "gaussian"))
            )
        if name == "quadratic":
            return make_quadratic(float(p.get("L", 1.0)), float(p.get("sigma", 1.0)))
        if name == "hetero_pair":
            return make_hetero_pair(float(p.get("H", 1.0)), float(p.get("zeta_star", 1.0)))
        if name == "composite":
            H = float(p.get("H", 1.0))
            sigma = float(p.get("sigma", 1.0))
            zeta_star = float(p.get("zeta_star", 0.0))
            D = float(p.get("D", 1.0))
            mu = p.get("mu")
            if mu is None:
                mu = lowerbound_mu(H, sigma, zeta_star, D, int(p.get("K", 4)), int(p.get("R", 4)))
            L = p.get("L")
            return make_lowerbound_composite(H, float(mu), sigma, zeta_star, D, None if L is None else float(L))
    except KeyError as e:
        raise ConfigError(f"objective '{name}' is missing parameter {e}") from None
    raise ConfigError(f"unknown objective family '{name}' (known: {', '.join(FAMILIES)})")

"""Base classes and protocols for lab commands."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Any, ClassVar, Protocol, runtime_checkable

from localsgd_lab.config import Param, Schema, validate_params
from localsgd_lab.context import RunContext
from localsgd_lab.errors import ConfigError
from localsgd_lab.estimators import BLOCK_SIZE
from localsgd_lab.objectives import ClientObjective, CompositeObjective, Objective1D, family_from_params


@runtime_checkable
class Command(Protocol):
    """Protocol defining the interface for lab commands."""

    name: ClassVar[str]
    anchor: ClassVar[str]
    summary: ClassVar[str]
    schema: ClassVar[Schema]

    def run(self, ctx: RunContext) -> None:
        """Execute the command, writing CSVs and verdicts through ``ctx``."""
        ...


class BaseCommand(ABC, Command):
    """Abstract base class for commands with default implementations."""

    name: ClassVar[str] = ""
    anchor: ClassVar[str] = ""
    summary: ClassVar[str] = ""
    schema: ClassVar[Schema] = {}

    def validate(self, params: dict[str, Any]) -> dict[str, Any]:
        return validate_params(self.name, params, self.schema)

    @property
    def help_text(self) -> str:
        return f"{self.summary} [verifies: {self.anchor}]"

    @abstractmethod
    def run(self, ctx: RunContext) -> None:
        """Execute the command."""
        ...

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}(name={self.name!r})>"


SCALAR_FAMILIES = ("piecewise", "logcosh", "quadratic")
FAMILY_KEYS: dict[str, tuple[str, ...]] = {
    "piecewise": ("h_right", "h_left", "sigma"),
    "logcosh": ("H", "Q", "sigma", "noise"),
    "quadratic": ("L", "sigma"),
    "hetero_pair": ("H", "zeta_star"),
    "composite": ("H", "sigma", "zeta_star", "D", "K", "R"),
}


def family_schema(default: str = "piecewise", families: tuple[str, ...] = SCALAR_FAMILIES, **defaults: Any) -> dict[str, Param]:
    """Objective selector plus every parameter the listed families read."""
    base: dict[str, Param] = {
        "objective": Param("str", default, "objective family", families),
        "h_right": Param("float", 2.0, "piecewise curvature for x >= 0"),
        "h_left": Param("float", 0.2, "piecewise curvature for x < 0"),
        "H": Param("float", 1.0, "smoothness"),
        "Q": Param("float", 0.5, "third-order smoothness (logcosh)"),
        "L": Param("float", 1.0, "quadratic curvature"),
        "sigma": Param("float", 1.0, "gradient noise scale"),
        "noise": Param("str", "gaussian", "logcosh noise distribution", ("gaussian", "uniform")),
    }
    if "hetero_pair" in families or "composite" in families:
        base["zeta_star"] = Param("float", 1.0, "heterogeneity at the optimum")
    if "composite" in families:
        base["D"] = Param("float", 1.0, "initial distance")
    for name, value in defaults.items():
        base[name] = Param(base[name].kind, value, base[name].help, base[name].choices)
    return base


def family_params(params: dict[str, Any], extra: dict[str, Any] | None = None) -> dict[str, Any]:
    name = params["objective"]
    picked = {k: params[k] for k in FAMILY_KEYS[name] if k in params}
    picked.update(extra or {})
    return picked


def build_objective(params: dict[str, Any]) -> Objective1D:
    obj = family_from_params(params["objective"], family_params(params))
    if not isinstance(obj, Objective1D):
        raise ConfigError(f"objective '{params['objective']}' is not a scalar objective")
    return obj


def build_clients(params: dict[str, Any], M: int, K: int, R: int) -> list[ClientObjective] | CompositeObjective:
    """Client set for FedAvg-style commands; scalar families are replicated across M clients."""
    name = params["objective"]
    built = family_from_params(name, family_params(params, {"K": K, "R": R} if name == "composite" else None))
    if isinstance(built, Objective1D):
        return [ClientObjective(built, built.noise, m) for m in range(M)]
    if isinstance(built, list) and len(built) != M:
        raise ConfigError(f"objective '{name}' defines {len(built)} clients but M={M}")
    if isinstance(built, CompositeObjective):
        built.check_clients(M)
    return built


def block_count(n: int) -> int:
    return max(1, math.ceil(n / BLOCK_SIZE))

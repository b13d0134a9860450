"""Base classes and profile scaling for acceptance criteria."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar, Literal, Protocol, Sequence, runtime_checkable

from localsgd_lab.context import RunContext

Profile = Literal["quick", "full"]


@dataclass(frozen=True)
class ProfileScale:
    """Sample-size divisor and tolerance multiplier of a profile."""

    name: str
    n_divisor: int = 1
    tol_factor: float = 1.0

    @classmethod
    def of(cls, profile: str) -> ProfileScale:
        if profile == "quick":
            return cls("quick", 10, 1.5)
        return cls("full")

    def n(self, full: int) -> int:
        """Scaled sample size, kept even so antithetic pairs stay whole."""
        scaled = max(2, full // self.n_divisor)
        return scaled + scaled % 2

    def widen(self, tolerance: float) -> float:
        """A tolerance that bounds a distance from above."""
        return tolerance * self.tol_factor

    def relax(self, margin: float) -> float:
        """A margin that must be exceeded, such as a gap measured in standard errors."""
        return margin / self.tol_factor


@dataclass(frozen=True)
class CriterionResult:
    passed: bool
    detail: str
    rows: tuple[tuple[Any, ...], ...] = ()


@runtime_checkable
class Criterion(Protocol):
    """Protocol defining the interface for acceptance criteria."""

    number: ClassVar[int]
    name: ClassVar[str]
    title: ClassVar[str]

    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        """Evaluate the criterion; failures are results, not exceptions."""
        ...


class BaseCriterion(ABC, Criterion):
    number: ClassVar[int] = 0
    name: ClassVar[str] = ""
    title: ClassVar[str] = ""
    header: ClassVar[Sequence[str]] = ()

    @abstractmethod
    def run(self, ctx: RunContext, scale: ProfileScale) -> CriterionResult:
        ...

    @property
    def csv_name(self) -> str:
        return f"criterion_{self.number:02d}_{self.name}.csv"

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}(number={self.number}, name={self.name!r})>"

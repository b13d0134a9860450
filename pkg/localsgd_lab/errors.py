"""Custom exception hierarchy for the simulation lab."""

from __future__ import annotations


class LabError(Exception):
    """Base exception for every error raised by the lab."""

    pass


class InvalidParameterError(LabError):
    """A constructor or operation received an argument outside its domain."""

    pass


class ConfigError(LabError):
    """Configuration error (file format, unknown command, schema violation)."""

    pass


class RegimeError(LabError):
    """A formula was evaluated outside the hypothesis it was proven under."""

    def __init__(self, hypothesis: str, window: tuple[float, float] | None = None) -> None:
        self.hypothesis = hypothesis
        self.window = window
        super().__init__(hypothesis)

    def __str__(self) -> str:
        if self.window is not None:
            lo, hi = self.window
            return f"regime violated: {self.hypothesis} (window [{lo:.6g}, {hi:.6g}])"
        return f"regime violated: {self.hypothesis}"


class DivergedError(LabError):
    """An iterate became non-finite or left the divergence guard."""

    def __init__(
        self,
        step: int,
        replica: int | None = None,
        round: int | None = None,
        client: int | None = None,
        coordinate: int | None = None,
    ) -> None:
        self.step = step
        self.replica = replica
        self.round = round
        self.client = client
        self.coordinate = coordinate
        super().__init__(str(self))

    def __str__(self) -> str:
        parts = [f"step={self.step}"]
        for label in ("replica", "round", "client", "coordinate"):
            value = getattr(self, label)
            if value is not None:
                parts.append(f"{label}={value}")
        return "iterate diverged at " + " ".join(parts)


class RangeTooSmallError(LabError):
    """Histogram range leaves too much probability mass outside."""

    def __init__(self, outside_fraction: float, checkpoint: int) -> None:
        self.outside_fraction = outside_fraction
        self.checkpoint = checkpoint
        super().__init__(str(self))

    def __str__(self) -> str:
        return f"{self.outside_fraction:.4%} of mass outside histogram range at checkpoint {self.checkpoint}"


class NonPositiveMagnitudeError(LabError):
    """Power-law fit received magnitudes that are not strictly positive."""

    def __init__(self, indices: list[int]) -> None:
        self.indices = indices
        super().__init__(str(self))

    def __str__(self) -> str:
        return f"non-positive magnitudes at indices {self.indices}"


class InconclusiveError(LabError):
    """A Monte-Carlo confidence interval is too wide to decide."""

    def __init__(self, message: str, required_n: int) -> None:
        self.required_n = required_n
        super().__init__(message)

    def __str__(self) -> str:
        return f"{self.args[0]} (rerun with n >= {self.required_n})"


class AssumptionMismatchError(LabError):
    """An objective's declared constants do not satisfy a theorem's assumptions."""

    pass


class RunCancelled(LabError):
    """A command was cancelled by the user (CTRL+C)."""

    def __init__(self, command_name: str) -> None:
        self.command_name = command_name
        super().__init__(f"Run cancelled during {command_name}")

    def __str__(self) -> str:
        return f"Run cancelled during {self.command_name}"

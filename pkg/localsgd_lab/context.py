"""RunContext - Shared state for one command run."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

from localsgd_lab.artifacts import write_csv
from localsgd_lab.config import ExperimentSpec
from localsgd_lab.estimators import ProgressCallback
from localsgd_lab.rng import RngKey
from localsgd_lab.ui import Console


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    line: str


@dataclass
class RunContext:
    """Context object that flows through a command and the acceptance pipeline."""

    spec: ExperimentSpec
    out_dir: Path
    workers: int = 1
    profile: str = "full"
    paper_literal: bool = False
    ui: Console | None = None
    artifacts: list[Path] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def params(self) -> dict[str, Any]:
        return self.spec.params

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def key(self, experiment_id: str) -> RngKey:
        return RngKey(self.seed, experiment_id)

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        path = write_csv(self.out_dir / name, header, rows)
        if path not in self.artifacts:
            self.artifacts.append(path)
        return path

    def record_verdict(self, name: str, passed: bool, line: str) -> Verdict:
        verdict = Verdict(name, passed, line)
        self.verdicts.append(verdict)
        if self.ui:
            self.ui.verdict(passed, line)
        return verdict

    @contextmanager
    def track(self, total: int, description: str) -> Iterator[ProgressCallback | None]:
        """Progress callback for block-parallel estimators, or None without a UI."""
        if self.ui is None or self.ui.quiet:
            yield None
            return
        with self.ui.progress(total=total, description=description) as task:
            yield task.advance

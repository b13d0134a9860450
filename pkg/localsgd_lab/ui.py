"""UI abstraction layer - Rich wrapper for run output and log routing."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from typing import Any, Iterator, Sequence

from rich.console import Console as RichConsole
from rich.logging import RichHandler
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TaskID,
    TextColumn,
    TimeElapsedColumn,
    TimeRemainingColumn,
)
from rich.rule import Rule
from rich.table import Table
from rich.text import Text
from rich.theme import Theme

LAB_THEME = Theme(
    {
        "lab.status": "cyan",
        "lab.ok": "green",
        "lab.warn": "yellow",
        "lab.fail": "red bold",
        "lab.step": "bold magenta",
        "lab.note": "dim",
    }
)


class BlockProgress:
    """Handle on one Rich progress task, advanced once per finished block."""

    def __init__(self, progress: Progress, task_id: TaskID):
        self._progress = progress
        self._task_id = task_id

    def advance(self, blocks: int = 1) -> None:
        self._progress.advance(self._task_id, advance=blocks)


class Console:
    """Console wrapper for Rich used by commands and the acceptance pipeline.

    In quiet mode only errors and verdict lines are printed, so a quiet run's
    output is exactly its PASS/FAIL summary.
    """

    def __init__(self, quiet: bool = False, record: bool = False, width: int | None = None):
        self._console = RichConsole(theme=LAB_THEME, record=record, width=width)
        self._quiet = quiet
        self._step = 0
        self._steps = 0

    @property
    def quiet(self) -> bool:
        return self._quiet

    @property
    def rich(self) -> RichConsole:
        return self._console

    def export_text(self) -> str:
        """Text printed so far; only available when created with ``record=True``."""
        return self._console.export_text(clear=False)

    def _line(self, symbol: str, style: str, message: str) -> None:
        line = Text("  ")
        line.append(symbol, style=style)
        line.append(" ")
        line.append(message, style=style)
        self._console.print(line)

    def set_total_steps(self, total: int) -> None:
        self._steps = total
        self._step = 0

    def step(self, name: str) -> None:
        """Numbered section header such as ``[3/12] criterion title``."""
        self._step += 1
        if self._quiet:
            return
        header = Text(f"[{self._step}/{self._steps}] " if self._steps else "", style="lab.step")
        header.append(name, style="bold")
        self._console.print()
        self._console.print(Rule(header, style="magenta"))

    def status(self, message: str) -> None:
        if not self._quiet:
            self._line("→", "lab.status", message)

    def success(self, message: str) -> None:
        if not self._quiet:
            self._line("✓", "lab.ok", message)

    def warning(self, message: str) -> None:
        if not self._quiet:
            self._line("⚠", "lab.warn", message)

    def info(self, message: str) -> None:
        if not self._quiet:
            self._line("ℹ", "lab.note", message)

    def error(self, message: str) -> None:
        self._line("✗", "lab.fail", message)

    def verdict(self, passed: bool, line: str) -> None:
        """Print a PASS/FAIL line; shown even in quiet mode."""
        self._console.print(Text(line, style="lab.ok" if passed else "lab.fail"))

    def table(self, title: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        if self._quiet:
            return
        table = Table(title=title, title_style="bold cyan", header_style="lab.step")
        for column in columns:
            table.add_column(column, justify="right" if column not in ("theorem", "command", "algorithm") else "left")
        for row in rows:
            table.add_row(*(_cell(v) for v in row))
        self._console.print(table)

    @contextmanager
    def progress(self, total: int, description: str = "Simulating") -> Iterator[BlockProgress]:
        """Transient bar counting finished replica blocks."""
        with Progress(
            SpinnerColumn("dots"),
            TextColumn("[bold blue]{task.description}"),
            BarColumn(bar_width=40),
            MofNCompleteColumn(),
            TimeElapsedColumn(),
            TimeRemainingColumn(),
            console=self._console,
            transient=True,
            disable=self._quiet,
        ) as progress:
            yield BlockProgress(progress, progress.add_task(description, total=total))

    def rule(self, title: str = "") -> None:
        if not self._quiet:
            self._console.print(Rule(title, style="lab.note"))


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def configure_logging(verbose: int = 0, console: Console | None = None) -> None:
    """Route ``localsgd_lab`` loggers through a RichHandler.

    0 keeps warnings only, 1 shows INFO and 2 or more shows DEBUG.
    """
    level = logging.WARNING if verbose <= 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logger = logging.getLogger("localsgd_lab")
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    handler = RichHandler(
        console=console.rich if console else None,
        show_path=verbose >= 2,
        rich_tracebacks=True,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False

"""Command registry for the experiment runner."""

from __future__ import annotations

import importlib

from .base import BaseCommand

COMMAND_REGISTRY: dict[str, type[BaseCommand]] = {}

BUILTIN_MODULES = (
    "bias_scan",
    "density",
    "fedavg_run",
    "lowerbound_suite",
    "sde_check",
    "rate_fit",
    "bounds_eval",
    "verify_upper",
    "oracle_grid",
    "acceptance",
)


def register_command(command_class: type[BaseCommand]) -> type[BaseCommand]:
    """Decorator to register a command class in the registry."""
    COMMAND_REGISTRY[command_class.name] = command_class
    return command_class


def load_builtin_commands() -> None:
    for module in BUILTIN_MODULES:
        importlib.import_module(f"{__name__}.{module}")


def get_command(name: str) -> type[BaseCommand] | None:
    """Get a command class by name from the registry."""
    load_builtin_commands()
    return COMMAND_REGISTRY.get(name)


def get_all_commands() -> list[type[BaseCommand]]:
    """Get all registered command classes in registration order."""
    load_builtin_commands()
    return list(COMMAND_REGISTRY.values())


def list_commands() -> list[tuple[str, str, str]]:
    """(name, one-line summary, result verified) for every experiment command."""
    return [(c.name, c.summary, c.anchor) for c in get_all_commands()]

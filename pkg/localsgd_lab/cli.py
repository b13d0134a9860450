"""CLI entry point and command orchestration using argparse."""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any

import platformdirs

from localsgd_lab import __build__, __version__
from localsgd_lab.commands import get_all_commands, get_command, list_commands
from localsgd_lab.config import ExperimentSpec, load_config, parse_assignment, resolve_seed, save_config
from localsgd_lab.context import RunContext
from localsgd_lab.errors import ConfigError, InconclusiveError, LabError, RunCancelled
from localsgd_lab.manifest import CONFIG_NAME, MANIFEST_NAME, RunManifest, spec_hash
from localsgd_lab.ui import Console, configure_logging

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2
EXIT_CANCELLED = 130


def default_workers() -> int:
    """Available parallelism of this process."""
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def default_out_dir(spec: ExperimentSpec) -> Path:
    return platformdirs.user_data_path("localsgd-lab") / "runs" / f"{spec.command}-{spec_hash(spec)[:12]}"


def build_spec(args: argparse.Namespace, command: str | None = None) -> ExperimentSpec:
    """Merge the config file, positional overrides and flags into one spec."""
    base = load_config(args.config) if args.config else None
    if command is None:
        if base is None:
            raise ConfigError("run needs --config FILE")
        command = base.command
    elif base is not None and base.command != command:
        raise ConfigError(f"config is for '{base.command}', not '{command}'")
    base = base or ExperimentSpec(command)

    params: dict[str, Any] = dict(base.params)
    for text in args.overrides:
        name, value = parse_assignment(text)
        params[name] = value
    return ExperimentSpec(
        command=command,
        params=params,
        master_seed=resolve_seed(args.seed, base),
        output_dir=args.out if args.out is not None else base.output_dir,
    )


def run_command(
    spec: ExperimentSpec,
    workers: int,
    profile: str = "full",
    paper_literal: bool = False,
    ui: Console | None = None,
) -> tuple[RunContext, RunManifest]:
    """Validate, run, then write config.toml and manifest.txt next to the CSVs."""
    command_class = get_command(spec.command)
    if command_class is None:
        known = ", ".join(c.name for c in get_all_commands())
        raise ConfigError(f"unknown command '{spec.command}' (known: {known})")
    command = command_class()
    spec = replace(spec, params=command.validate(spec.params), master_seed=spec.seed)
    out_dir = spec.output_dir or default_out_dir(spec)
    out_dir.mkdir(parents=True, exist_ok=True)

    ctx = RunContext(spec, out_dir, workers=workers, profile=profile, paper_literal=paper_literal, ui=ui)
    if ui:
        ui.rule(f"{spec.command} seed={spec.seed} workers={workers}")
    started = time.perf_counter()
    try:
        command.run(ctx)
    except KeyboardInterrupt:
        raise RunCancelled(spec.command) from None
    elapsed = time.perf_counter() - started

    save_config(replace(spec, output_dir=None), out_dir / CONFIG_NAME)
    manifest = RunManifest(
        command=spec.command,
        spec_hash=spec_hash(spec),
        tool_version=__version__,
        master_seed=spec.seed,
        workers=workers,
        wall_time=elapsed,
        profile=profile,
        paper_literal=paper_literal,
    )
    for path in ctx.artifacts:
        manifest.record(path)
    manifest.write(out_dir)
    if ui:
        ui.info(f"{len(ctx.artifacts)} files written to {out_dir} in {elapsed:.1f}s")
    return ctx, manifest


def _report_error(console: Console, error: LabError) -> None:
    console.error(str(error))
    if isinstance(error, InconclusiveError):
        console.info(f"increase n to at least {error.required_n}")


def cmd_experiment(args: argparse.Namespace) -> int:
    """Run one experiment command (or a config file via ``run``)."""
    console = Console(quiet=args.quiet)
    configure_logging(args.verbose, console)
    try:
        spec = build_spec(args, getattr(args, "experiment", None))
        ctx, _ = run_command(spec, args.workers or default_workers(), args.profile, args.paper_literal, console)
    except RunCancelled as e:
        console.warning(f"Run cancelled during: {e.command_name}")
        return EXIT_CANCELLED
    except LabError as e:
        _report_error(console, e)
        return EXIT_ERROR
    except KeyboardInterrupt:
        console.warning("Run cancelled")
        return EXIT_CANCELLED

    if not ctx.passed:
        failed = [v.name for v in ctx.verdicts if not v.passed]
        console.error(f"{len(failed)} verdict(s) failed: {', '.join(failed)}")
        return EXIT_FAILED
    if ctx.verdicts:
        console.success(f"all {len(ctx.verdicts)} verdict(s) passed")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    """Re-run a recorded run and compare every CSV checksum with its manifest."""
    console = Console(quiet=args.quiet)
    configure_logging(args.verbose, console)
    run_dir: Path = args.run_dir
    try:
        recorded = RunManifest.read(run_dir / MANIFEST_NAME)
        spec = load_config(run_dir / CONFIG_NAME)
        if spec_hash(spec) != recorded.spec_hash:
            console.warning("config.toml does not match the manifest's spec hash")
        spec = replace(spec, output_dir=args.out or run_dir / "replay")
        _, replayed = run_command(spec, args.workers or default_workers(), recorded.profile, recorded.paper_literal, console)
    except RunCancelled as e:
        console.warning(f"Replay cancelled during: {e.command_name}")
        return EXIT_CANCELLED
    except LabError as e:
        _report_error(console, e)
        return EXIT_ERROR
    except KeyboardInterrupt:
        console.warning("Replay cancelled")
        return EXIT_CANCELLED

    mismatched = replayed.mismatches(recorded)
    if mismatched:
        for name in mismatched:
            console.error(f"checksum differs: {name}")
        return EXIT_FAILED
    console.success(f"replay reproduced {len(recorded.checksums)} file checksum(s)")
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    """List experiment commands with the result each one verifies."""
    console = Console()
    console.table("Commands", ["command", "summary", "verifies"], list_commands())
    return EXIT_OK


def cmd_version(_args: argparse.Namespace) -> int:
    """Show version information."""
    print(f"localsgd-lab {__version__} (build: {__build__})")
    return EXIT_OK


def _output_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--out", type=Path, default=None, help="Output directory (default: per-user data dir)")
    parent.add_argument("--workers", type=int, default=None, help="Worker threads (default: available parallelism)")
    parent.add_argument("-v", "--verbose", action="count", default=0, help="Log diagnostics (-vv for debug)")
    parent.add_argument("-q", "--quiet", action="store_true", help="Only errors and verdict lines")
    return parent


def _run_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False, parents=[_output_options()])
    parent.add_argument("--config", type=Path, default=None, help="Experiment config file (TOML subset)")
    parent.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="Master seed (unsigned 64-bit)")
    parent.add_argument("--profile", choices=("quick", "full"), default="full", help="Acceptance profile")
    parent.add_argument(
        "--paper-literal",
        action="store_true",
        help="Use formulas exactly as originally displayed instead of the corrected ones",
    )
    parent.add_argument("overrides", nargs="*", metavar="key=value", help="Parameter overrides")
    return parent


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser."""
    parser = argparse.ArgumentParser(
        prog="localsgd-lab",
        description="FedAvg / Local SGD iterate-bias and rate-bound simulation lab",
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    run_options = _run_options()

    for command_class in get_all_commands():
        sub = subparsers.add_parser(
            command_class.name,
            help=command_class.summary,
            description=command_class().help_text,
            parents=[run_options],
        )
        sub.set_defaults(handler=cmd_experiment, experiment=command_class.name)

    run_parser = subparsers.add_parser("run", help="Run the command named in --config", parents=[run_options])
    run_parser.set_defaults(handler=cmd_experiment, experiment=None)

    replay_parser = subparsers.add_parser(
        "replay", help="Re-run a finished run and compare checksums", parents=[_output_options()]
    )
    replay_parser.add_argument("run_dir", type=Path, help="Directory holding manifest.txt and config.toml")
    replay_parser.set_defaults(handler=cmd_replay)

    subparsers.add_parser("list", help="List experiment commands").set_defaults(handler=cmd_list)
    subparsers.add_parser("version", help="Show version information").set_defaults(handler=cmd_version)
    return parser


def main(argv: list[str] | None = None) -> None:
    """Main entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)

    handler = getattr(args, "handler", None)
    if handler is None:
        parser.print_help()
        sys.exit(0)
    sys.exit(handler(args))


if __name__ == "__main__":
    main()

"""Experiment configuration: a TOML subset, parameter schemas and seed precedence.

A config file holds top-level ``command``, ``master_seed`` and ``output_dir``
keys plus one ``[params]`` table of scalars or flat lists of scalars::

    command = "rate-fit"
    master_seed = 7

    [params]
    objective = "piecewise"
    axis = "k"
    grid = [16, 32, 64, 128]
"""

from __future__ import annotations

import json
import math
import os
import re
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping

from localsgd_lab.errors import ConfigError

SEED_ENV_VAR = "LOCALSGD_LAB_SEED"
MAX_SEED = (1 << 64) - 1

ParamKind = Literal["int", "float", "str", "bool", "ints", "floats"]

_BARE_KEY = re.compile(r"^[A-Za-z0-9_-]+$")
_TOP_LEVEL = ("command", "master_seed", "output_dir")


@dataclass(frozen=True)
class Param:
    """One entry of a command's parameter schema."""

    kind: ParamKind
    default: Any = None
    help: str = ""
    choices: tuple[str, ...] | None = None


Schema = Mapping[str, Param]


@dataclass(frozen=True)
class ExperimentSpec:
    command: str
    params: dict[str, Any] = field(default_factory=dict)
    master_seed: int | None = None
    output_dir: Path | None = None

    @property
    def seed(self) -> int:
        return 0 if self.master_seed is None else self.master_seed


def check_seed(seed: Any) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"master_seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


def _key(name: str) -> str:
    return name if _BARE_KEY.match(name) else json.dumps(name)


def _scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise ConfigError(f"unsupported config value {value!r} ({type(value).__name__})")


def _value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_scalar(v) for v in value) + "]"
    return _scalar(value)


def serialize(spec: ExperimentSpec) -> str:
    lines = [f"command = {_scalar(spec.command)}"]
    if spec.master_seed is not None:
        lines.append(f"master_seed = {spec.master_seed}")
    if spec.output_dir is not None:
        lines.append(f"output_dir = {_scalar(str(spec.output_dir))}")
    lines += ["", "[params]"]
    for name, value in spec.params.items():
        lines.append(f"{_key(name)} = {_value(value)}")
    return "\n".join(lines) + "\n"


def parse(text: str) -> ExperimentSpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid config: {e}") from None
    unknown = set(data) - set(_TOP_LEVEL) - {"params"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    command = data.get("command")
    if not isinstance(command, str):
        raise ConfigError("config must set command = \"<name>\"")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("[params] must be a table")
    for name, value in params.items():
        if isinstance(value, dict):
            raise ConfigError(f"params.{name}: nested tables are not supported")
        if isinstance(value, list) and any(isinstance(v, (list, dict)) for v in value):
            raise ConfigError(f"params.{name}: only flat lists of scalars are supported")
    seed = data.get("master_seed")
    output_dir = data.get("output_dir")
    return ExperimentSpec(
        command=command,
        params=dict(params),
        master_seed=None if seed is None else check_seed(seed),
        output_dir=None if output_dir is None else Path(output_dir),
    )


def load_config(path: Path) -> ExperimentSpec:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse(text)


def save_config(spec: ExperimentSpec, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize(spec), encoding="utf-8")
    return path


def parse_assignment(text: str) -> tuple[str, Any]:
    """Parse a ``key=value`` override; the value uses config syntax, bare words become strings."""
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    name, raw = (part.strip() for part in text.split("=", 1))
    if not name:
        raise ConfigError(f"empty key in {text!r}")
    try:
        return name, tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return name, raw


def _coerce(name: str, value: Any, param: Param) -> Any:
    def fail() -> ConfigError:
        return ConfigError(f"parameter '{name}' expects {param.kind}, got {value!r}")

    kind = param.kind
    if kind == "bool":
        if not isinstance(value, bool):
            raise fail()
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise fail()
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise fail()
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise fail()
        if param.choices and value not in param.choices:
            raise ConfigError(f"parameter '{name}' must be one of {', '.join(param.choices)}, got {value!r}")
        return value
    if not isinstance(value, (list, tuple)) or not value:
        raise fail()
    scalar = Param("int" if kind == "ints" else "float")
    return [_coerce(name, v, scalar) for v in value]


def validate_params(command: str, params: Mapping[str, Any], schema: Schema) -> dict[str, Any]:
    """Check ``params`` against ``schema`` and fill defaults; schema order is kept."""
    unknown = [k for k in params if k not in schema]
    if unknown:
        raise ConfigError(f"{command}: unknown parameters {', '.join(sorted(unknown))} (known: {', '.join(schema)})")
    out: dict[str, Any] = {}
    for name, param in schema.items():
        if name in params:
            out[name] = _coerce(name, params[name], param)
        elif param.default is not None:
            out[name] = list(param.default) if isinstance(param.default, (list, tuple)) else param.default
        else:
            raise ConfigError(f"{command}: missing required parameter '{name}'")
    return out


def resolve_seed(cli_seed: int | None, spec: ExperimentSpec, environ: Mapping[str, str] | None = None) -> int:
    """CLI flag, then config file, then the environment variable, then 0."""
    if cli_seed is not None:
        return check_seed(cli_seed)
    if spec.master_seed is not None:
        return spec.master_seed
    env = os.environ if environ is None else environ
    raw = env.get(SEED_ENV_VAR)
    if raw:
        try:
            return check_seed(int(raw, 0))
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}={raw!r} is not an integer") from None
    return 0

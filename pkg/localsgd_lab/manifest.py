"""Reproducibility manifests written next to every run's CSVs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from localsgd_lab.artifacts import file_checksum
from localsgd_lab.config import ExperimentSpec, serialize
from localsgd_lab.errors import ConfigError

MANIFEST_NAME = "manifest.txt"
CONFIG_NAME = "config.toml"


def spec_hash(spec: ExperimentSpec) -> str:
    """sha256 of the serialized spec; the output directory does not take part."""
    return hashlib.sha256(serialize(replace(spec, output_dir=None)).encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    command: str
    spec_hash: str
    tool_version: str
    master_seed: int
    workers: int
    wall_time: float = 0.0
    profile: str = "full"
    paper_literal: bool = False
    checksums: dict[str, str] = field(default_factory=dict)

    def record(self, path: Path) -> None:
        self.checksums[path.name] = file_checksum(path)

    def render(self) -> str:
        lines = [
            f"command = {self.command}",
            f"tool_version = {self.tool_version}",
            f"spec_hash = {self.spec_hash}",
            f"master_seed = {self.master_seed}",
            f"workers = {self.workers}",
            f"profile = {self.profile}",
            f"paper_literal = {'true' if self.paper_literal else 'false'}",
            f"wall_time_s = {self.wall_time:.3f}",
        ]
        lines += [f"file {name} {digest}" for name, digest in sorted(self.checksums.items())]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: Path) -> Path:
        path = out_dir / MANIFEST_NAME
        path.write_text(self.render(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: Path) -> RunManifest:
        fields: dict[str, str] = {}
        checksums: dict[str, str] = {}
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read manifest {path}: {e}") from None
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("file "):
                parts = line.split()
                if len(parts) != 3:
                    raise ConfigError(f"malformed manifest line: {line!r}")
                checksums[parts[1]] = parts[2]
                continue
            key, sep, value = line.partition(" = ")
            if not sep:
                raise ConfigError(f"malformed manifest line: {line!r}")
            fields[key.strip()] = value.strip()
        try:
            return cls(
                command=fields["command"],
                spec_hash=fields["spec_hash"],
                tool_version=fields["tool_version"],
                master_seed=int(fields["master_seed"]),
                workers=int(fields["workers"]),
                wall_time=float(fields.get("wall_time_s", "0")),
                profile=fields.get("profile", "full"),
                paper_literal=fields.get("paper_literal", "false") == "true",
                checksums=checksums,
            )
        except KeyError as e:
            raise ConfigError(f"manifest {path} is missing {e}") from None
        except ValueError as e:
            raise ConfigError(f"manifest {path}: {e}") from None

    def mismatches(self, other: RunManifest) -> list[str]:
        """Files whose checksum differs or that exist in only one of the two manifests."""
        names = sorted(set(self.checksums) | set(other.checksums))
        return [n for n in names if self.checksums.get(n) != other.checksums.get(n)]

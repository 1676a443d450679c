"""Run manifests written next to every command's outputs.

A manifest is a flat ``key = value`` text file::

    version = 1
    subcommand = unmix
    argv = unmix --input scene/cube.hsc --out est
    reproducible = true
    seed = 0
    config.k = 3
    config.lam = 0.1
    ...
    input.cube = scene/cube.hsc
    result.iterations = 100
    artifact.M.csv = 4f0c...

Artifact paths are stored relative to the manifest's directory.  There is no
timestamp, so re-running the same command rewrites the same bytes.
"""

from __future__ import annotations

import logging
import os
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .core import RejectedInputError
from .io import ParseError, read_key_values, write_key_values
from .utils import sha256_file

MANIFEST_NAME = "manifest.txt"
_FORMAT_VERSION = 1


@dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    seed: int | None = None
    config: dict[str, str] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    # facts about the run worth keeping, e.g. corrupted channels
    results: dict[str, str] = field(default_factory=dict)
    # artifact path (relative to the manifest directory) -> sha256
    checksums: dict[str, str] = field(default_factory=dict)
    # timing output cannot be reproduced byte for byte
    reproducible: bool = True

    def add_artifact(self, path: Path, manifest_path: Path) -> None:
        name = os.path.relpath(path, manifest_path.parent)
        self.checksums[Path(name).as_posix()] = sha256_file(path)

    def save(self, path: Path) -> Path:
        items: list[tuple[str, str]] = [
            ("version", str(_FORMAT_VERSION)),
            ("subcommand", self.subcommand),
            ("argv", shlex.join(self.argv)),
            ("reproducible", "true" if self.reproducible else "false"),
        ]
        if self.seed is not None:
            items.append(("seed", str(self.seed)))
        items.extend((f"config.{k}", v) for k, v in self.config.items())
        items.extend((f"input.{k}", v) for k, v in self.inputs.items())
        items.extend((f"result.{k}", v) for k, v in self.results.items())
        items.extend((f"artifact.{k}", v) for k, v in self.checksums.items())
        return write_key_values(path, items)

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        values = read_key_values(path)
        for key in ("version", "subcommand", "argv"):
            if key not in values:
                raise ParseError(path, 1, f"missing key {key!r}")
        if values["version"] != str(_FORMAT_VERSION):
            raise ParseError(path, 1, f"unsupported manifest version {values['version']!r}")
        seed = values.get("seed")
        return cls(
            subcommand=values["subcommand"],
            argv=shlex.split(values["argv"]),
            seed=int(seed) if seed is not None else None,
            config=_with_prefix(values, "config."),
            inputs=_with_prefix(values, "input."),
            results=_with_prefix(values, "result."),
            checksums=_with_prefix(values, "artifact."),
            reproducible=values.get("reproducible", "true") == "true",
        )

    def verify(self, manifest_path: Path, logger: logging.Logger | None = None) -> list[str]:
        """Artifact names whose current checksum differs from the recorded one."""
        mismatched = []
        for name, expected in self.checksums.items():
            target = manifest_path.parent / name
            actual = sha256_file(target) if target.exists() else None
            if actual != expected:
                mismatched.append(name)
                if logger:
                    logger.warning("Checksum mismatch for %s", target)
        return mismatched


def _with_prefix(values: dict[str, str], prefix: str) -> dict[str, str]:
    return {k[len(prefix) :]: v for k, v in values.items() if k.startswith(prefix)}


def manifest_path_for(out: Path, is_dir: bool) -> Path:
    """``<dir>/manifest.txt`` for directory outputs, ``<file>.manifest.txt`` otherwise."""
    if is_dir:
        return out / MANIFEST_NAME
    return out.with_name(f"{out.name}.{MANIFEST_NAME}")


def write_manifest(
    manifest: RunManifest,
    path: Path,
    artifacts: list[Path],
    logger: logging.Logger | None = None,
) -> Path:
    for artifact in artifacts:
        if not artifact.exists():
            raise RejectedInputError(f"artifact {artifact} was not written")
        manifest.add_artifact(artifact, path)
    manifest.save(path)
    if logger:
        logger.info("Wrote manifest %s (%d artifact(s))", path, len(artifacts))
    return path

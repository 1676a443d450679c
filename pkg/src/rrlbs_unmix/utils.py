"""Small helpers for number formatting, checksums and file writes."""

from __future__ import annotations

import hashlib
import os
import time
from pathlib import Path

import numpy as np


def format_real(value: float) -> str:
    """Decimal text that parses back to the identical float64."""
    return format(float(value), ".17g")


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_name = f"{path.name}.tmp-{os.getpid()}-{time.time_ns()}"
    temp_path = path.with_name(temp_name)
    try:
        temp_path.write_text(text, encoding="utf-8")
        os.replace(temp_path, path)
    finally:
        # a failed write or replace must not leave the temp file behind
        temp_path.unlink(missing_ok=True)


def sha256_file(path: Path, chunk_size: int = 1 << 16) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def parse_int_list(value: str) -> list[int]:
    """Parse ``"625,2500,10000"``; empty items are ignored."""
    items = [item.strip() for item in value.split(",") if item.strip()]
    try:
        return [int(item) for item in items]
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {value!r}") from None


def geometric_grid(low: float, high: float, steps: int) -> list[float]:
    """*steps* points from *low* to *high* inclusive, equally spaced in log."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if low <= 0 or high <= 0:
        raise ValueError("geometric grid bounds must be positive")
    if steps == 1:
        return [float(low)]
    return [float(v) for v in np.geomspace(low, high, steps)]

"""Per-iteration timing of the robust loss against the Frobenius baseline."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

from .config import SolverConfig
from .core import RejectedInputError
from .io import SpectralCube
from .progress import ProgressReporter
from .solver import solve
from .synth import SceneSpec, generate_scene
from .utils import atomic_write_text, format_real

BENCH_HEADER = "n_pixels,loss,seconds_per_iteration,ratio_to_fro"
BENCH_LOSSES = ("frobenius", "l21")


@dataclass(frozen=True)
class BenchRow:
    n_pixels: int
    loss: str
    seconds_per_iteration: float
    ratio_to_fro: float


def seconds_per_iteration(
    cube: SpectralCube, config: SolverConfig, iterations: int, repeats: int = 3
) -> float:
    """Best-of-*repeats* wall time of one inner iteration.

    Runs exactly *iterations* inner steps in a single phase so every loss
    does the same amount of work.
    """
    if iterations < 1 or repeats < 1:
        raise RejectedInputError("iterations and repeats must be >= 1")
    cfg = config.with_overrides(
        inner_stop="tolerance", inner_tol=0.0, max_inner=iterations, max_outer=1
    )
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        result = solve(cube, cfg)
        elapsed = time.perf_counter() - start
        best = min(best, elapsed / max(len(result.trace), 1))
    return best


def square_side(n_pixels: int) -> int:
    side = math.isqrt(n_pixels)
    if n_pixels < 1 or side * side != n_pixels:
        raise RejectedInputError(f"bench sizes must be perfect squares, got {n_pixels}")
    return side


def run_bench(
    sizes: list[int],
    channels: int,
    endmembers: int,
    iterations: int,
    repeats: int,
    config: SolverConfig,
    seed: int = 0,
    logger: logging.Logger | None = None,
) -> list[BenchRow]:
    log = logger or logging.getLogger(__name__)
    if not sizes:
        raise RejectedInputError("no bench sizes given")
    sides = [square_side(n) for n in sizes]
    rows: list[BenchRow] = []
    with ProgressReporter(len(sizes) * len(BENCH_LOSSES), log, "Benchmark", "cells") as progress:
        for n_pixels, side in zip(sizes, sides):
            spec = SceneSpec(
                width=side,
                height=side,
                channels=channels,
                endmembers=endmembers,
                noise_sigma=0.01,
                blur_radius=1,
                seed=seed,
            )
            cube, _ = generate_scene(spec)
            timings: dict[str, float] = {}
            for loss in BENCH_LOSSES:
                key = f"{n_pixels}:{loss}"
                progress.add_task(key, f"N={n_pixels} loss={loss}")
                cfg = config.with_overrides(k=endmembers, loss=loss)
                timings[loss] = seconds_per_iteration(cube, cfg, iterations, repeats)
                progress.complete(key, f"{timings[loss] * 1e3:.3f} ms/iteration")
            for loss in BENCH_LOSSES:
                rows.append(
                    BenchRow(
                        n_pixels=n_pixels,
                        loss=loss,
                        seconds_per_iteration=timings[loss],
                        ratio_to_fro=timings[loss] / timings["frobenius"],
                    )
                )
    return rows


def write_bench_csv(rows: list[BenchRow], path: Path) -> Path:
    lines = [BENCH_HEADER]
    for row in rows:
        lines.append(
            f"{row.n_pixels},{row.loss},"
            f"{format_real(row.seconds_per_iteration)},{format_real(row.ratio_to_fro)}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path

"""Text file formats: HSC1 cubes, CSV matrices, P3 images, traces, reports.

Every real is written with 17 significant digits so a read after a write
gives back the same float64 values.  Writes go through a temporary file and
``os.replace`` so a crashed run never leaves a half-written artifact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

from .core import (
    Matrix,
    RealVector,
    RejectedInputError,
    as_matrix,
    as_vector,
    column_sum_to_one,
    require_nonnegative,
)
from .sparsity import GUIDANCE_MAX, RESCALED, GuidanceMap
from .utils import atomic_write_text, format_real

if TYPE_CHECKING:  # pragma: no cover
    from .metrics import EvalReport
    from .solver import SolveTrace

CUBE_MAGIC = "HSC1"
TRACE_HEADER = "outer,inner,objective,loss,penalty,max_change"

# red, blue, green, black, then four extension inks
PALETTE = np.array(
    [
        (255, 0, 0),
        (0, 0, 255),
        (0, 255, 0),
        (0, 0, 0),
        (255, 255, 0),
        (0, 255, 255),
        (255, 128, 0),
        (255, 255, 255),
    ],
    dtype=np.float64,
)


class ParseError(RejectedInputError):
    """A file did not match its format; names the file and 1-based line."""

    def __init__(self, path: Path | str, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = Path(path)
        self.line = line
        self.message = message

    def __reduce__(self):
        return type(self), (self.path, self.line, self.message)


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """L x N cube; pixel n sits at row n // width, column n % width."""

    channels: int
    width: int
    height: int
    data: Matrix
    wavelengths: Optional[RealVector] = None

    def __post_init__(self) -> None:
        if self.channels < 1 or self.width < 1 or self.height < 1:
            raise RejectedInputError(
                f"cube dimensions must be positive, got L={self.channels}, "
                f"W={self.width}, H={self.height}"
            )
        data = as_matrix(self.data, "cube data")
        if data.shape != (self.channels, self.width * self.height):
            raise RejectedInputError(
                f"cube data has shape {data.shape}, expected "
                f"({self.channels}, {self.width * self.height})"
            )
        require_nonnegative(data, "cube data")
        object.__setattr__(self, "data", data)
        if self.wavelengths is not None:
            wavelengths = as_vector(self.wavelengths, "wavelengths")
            if wavelengths.shape[0] != self.channels:
                raise RejectedInputError(
                    f"{wavelengths.shape[0]} wavelengths for {self.channels} channels"
                )
            object.__setattr__(self, "wavelengths", wavelengths)

    @property
    def pixels(self) -> int:
        return self.width * self.height


# ----------------------------------------------------------------------
# Parsing helpers
# ----------------------------------------------------------------------


def _content_lines(path: Path) -> list[str]:
    lines = path.read_text(encoding="ascii").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return lines


def _parse_reals(tokens: list[str], path: Path, line: int) -> RealVector:
    try:
        values = np.array([float(token) for token in tokens], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(path, line, f"not a decimal number ({exc})") from None
    if not np.all(np.isfinite(values)):
        raise ParseError(path, line, "NaN or infinite value")
    return values


def _format_row(values: Iterable[float], sep: str) -> str:
    return sep.join(format_real(v) for v in values)


# ----------------------------------------------------------------------
# Cubes
# ----------------------------------------------------------------------


def read_cube(path: Path | str) -> SpectralCube:
    path = Path(path)
    lines = _content_lines(path)
    if not lines:
        raise ParseError(path, 1, "empty file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != CUBE_MAGIC:
        raise ParseError(path, 1, f"expected header '{CUBE_MAGIC} <L> <W> <H>'")
    try:
        channels, width, height = (int(token) for token in header[1:])
    except ValueError:
        raise ParseError(path, 1, "header dimensions must be integers") from None
    if min(channels, width, height) < 1:
        raise ParseError(path, 1, "header dimensions must be positive")
    pixels = width * height
    if len(lines) - 1 < channels:
        raise ParseError(
            path, len(lines) + 1, f"expected {channels} channel lines, found {len(lines) - 1}"
        )
    if len(lines) - 1 > channels:
        raise ParseError(path, channels + 2, f"unexpected line after {channels} channels")
    data = np.empty((channels, pixels), dtype=np.float64)
    for index, text in enumerate(lines[1:]):
        line = index + 2
        tokens = text.split()
        if len(tokens) != pixels:
            raise ParseError(path, line, f"expected {pixels} values, found {len(tokens)}")
        row = _parse_reals(tokens, path, line)
        if np.any(row < 0):
            raise ParseError(path, line, "negative value")
        data[index] = row
    return SpectralCube(channels=channels, width=width, height=height, data=data)


def write_cube(cube: SpectralCube, path: Path | str) -> Path:
    path = Path(path)
    lines = [f"{CUBE_MAGIC} {cube.channels} {cube.width} {cube.height}"]
    lines.extend(_format_row(row, " ") for row in cube.data)
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


# ----------------------------------------------------------------------
# Matrices and guidance maps
# ----------------------------------------------------------------------


def read_matrix_csv(path: Path | str) -> Matrix:
    path = Path(path)
    lines = _content_lines(path)
    if not lines:
        raise ParseError(path, 1, "empty file")
    rows: list[RealVector] = []
    for index, text in enumerate(lines):
        line = index + 1
        tokens = [token.strip() for token in text.split(",")]
        if rows and len(tokens) != rows[0].shape[0]:
            raise ParseError(
                path, line, f"ragged row: {len(tokens)} values, expected {rows[0].shape[0]}"
            )
        rows.append(_parse_reals(tokens, path, line))
    return np.vstack(rows)


def write_matrix_csv(m: Matrix, path: Path | str) -> Path:
    path = Path(path)
    m = as_matrix(m, "matrix")
    atomic_write_text(path, "".join(_format_row(row, ",") + "\n" for row in m))
    return path


def read_guidance_csv(path: Path | str) -> GuidanceMap:
    path = Path(path)
    values = read_matrix_csv(path)
    if values.shape[0] != 1:
        raise ParseError(path, 2, f"guidance map must be a single row, found {values.shape[0]}")
    try:
        return GuidanceMap(values[0], RESCALED)
    except RejectedInputError as exc:
        raise ParseError(path, 1, str(exc)) from None


def write_guidance_csv(h: GuidanceMap, path: Path | str) -> Path:
    return write_matrix_csv(h.values[None, :], path)


# ----------------------------------------------------------------------
# P3 images
# ----------------------------------------------------------------------


def _to_bytes(values: np.ndarray) -> np.ndarray:
    # round half up, then clamp to the 8-bit range
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.int64)


def _write_ppm(path: Path | str, width: int, height: int, rgb: np.ndarray) -> Path:
    path = Path(path)
    if rgb.shape != (width * height, 3):
        raise RejectedInputError(f"image has {rgb.shape[0]} pixels, expected {width * height}")
    lines = ["P3", f"{width} {height}", "255"]
    grid = rgb.reshape(height, width * 3)
    lines.extend(" ".join(str(int(v)) for v in row) for row in grid)
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def _gray(levels: np.ndarray) -> np.ndarray:
    return np.repeat(levels[:, None], 3, axis=1)


def write_abundance_ppm(a: Matrix, width: int, height: int, path: Path | str) -> Path:
    """Pseudo-color abundance image: each pixel mixes the palette inks by A."""
    a = as_matrix(a, "abundance")
    require_nonnegative(a, "abundance")
    k = a.shape[0]
    if k > PALETTE.shape[0]:
        raise RejectedInputError(f"palette holds {PALETTE.shape[0]} colors, got K={k}")
    if a.shape[1] != width * height:
        raise RejectedInputError(f"abundance has {a.shape[1]} pixels for a {width}x{height} image")
    rgb = column_sum_to_one(a).T @ PALETTE[:k]
    return _write_ppm(path, width, height, _to_bytes(rgb))


def write_error_ppm(
    a_true: Matrix, a_est: Matrix, width: int, height: int, path: Path | str
) -> Path:
    """Grayscale map of per-pixel abundance error, brightest at the maximum."""
    a_true = as_matrix(a_true, "a_true")
    a_est = as_matrix(a_est, "a_est")
    if a_true.shape != a_est.shape:
        raise RejectedInputError(f"abundance shapes differ: {a_true.shape} vs {a_est.shape}")
    diff = a_true - a_est
    error = np.sqrt(np.sum(diff * diff, axis=0))
    peak = float(np.max(error)) if error.size else 0.0
    levels = np.zeros_like(error) if peak == 0.0 else error / peak * 255.0
    return _write_ppm(path, width, height, _gray(_to_bytes(levels)))


def write_guidance_ppm(h: GuidanceMap, width: int, height: int, path: Path | str) -> Path:
    levels = np.minimum(h.values, GUIDANCE_MAX) / GUIDANCE_MAX * 255.0
    return _write_ppm(path, width, height, _gray(_to_bytes(levels)))


# ----------------------------------------------------------------------
# Traces, reports and key-value documents
# ----------------------------------------------------------------------


def write_trace_csv(trace: "SolveTrace", path: Path | str) -> Path:
    path = Path(path)
    lines = [TRACE_HEADER]
    for r in trace:
        reals = _format_row((r.objective, r.loss, r.penalty, r.max_change), ",")
        lines.append(f"{r.outer},{r.inner},{reals}")
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def write_key_values(path: Path | str, items: Iterable[tuple[str, str]]) -> Path:
    path = Path(path)
    lines = []
    for key, value in items:
        if "=" in key or "\n" in key or "\n" in value:
            raise RejectedInputError(f"cannot store key {key!r} in a key-value file")
        lines.append(f"{key} = {value}")
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def read_key_values(path: Path | str) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    out: dict[str, str] = {}
    for index, text in enumerate(path.read_text(encoding="utf-8").splitlines()):
        line = index + 1
        stripped = text.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParseError(path, line, "expected 'key = value'")
        if key in out:
            raise ParseError(path, line, f"duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _join_reals(values: Iterable[float]) -> str:
    return ",".join(format_real(v) for v in values)


def write_report(report: "EvalReport", path: Path | str) -> Path:
    items = [
        ("k", str(len(report.assignment))),
        ("assignment", ",".join(str(j) for j in report.assignment)),
        ("sad", _join_reals(report.sad)),
        ("rmse", _join_reals(report.rmse)),
        ("mean_sad", format_real(report.mean_sad)),
        ("mean_rmse", format_real(report.mean_rmse)),
        ("mean_sad_degrees", format_real(report.mean_sad_degrees)),
    ]
    if report.guidance_rmse is not None:
        items.append(("guidance_rmse", format_real(report.guidance_rmse)))
    if report.guidance_corr is not None:
        items.append(("guidance_corr", format_real(report.guidance_corr)))
    return write_key_values(path, items)


def read_report(path: Path | str) -> "EvalReport":
    from .metrics import EvalReport

    path = Path(path)
    values = read_key_values(path)

    def field(key: str) -> str:
        if key not in values:
            raise ParseError(path, 1, f"missing key {key!r}")
        return values[key]

    def reals(text: str) -> tuple[float, ...]:
        if not text:
            return ()
        try:
            return tuple(float(v) for v in text.split(","))
        except ValueError:
            raise ParseError(path, 1, f"bad number list {text!r}") from None

    try:
        k = int(field("k"))
        assignment = tuple(int(v) for v in field("assignment").split(","))
    except ValueError:
        raise ParseError(path, 1, "k and assignment must be integers") from None
    sads, rmses = reals(field("sad")), reals(field("rmse"))
    if not (len(assignment) == len(sads) == len(rmses) == k):
        raise ParseError(path, 1, f"report lists do not all have {k} entries")
    if sorted(assignment) != list(range(k)):
        raise ParseError(path, 1, f"assignment {assignment} is not a permutation")

    def real(text: str) -> float:
        parsed = reals(text)
        if len(parsed) != 1 or math.isnan(parsed[0]):
            raise ParseError(path, 1, f"expected a single number, got {text!r}")
        return parsed[0]

    optional = {
        key: real(values[key]) for key in ("guidance_rmse", "guidance_corr") if key in values
    }
    mean_sad = real(field("mean_sad"))
    mean_rmse = real(field("mean_rmse"))
    return EvalReport(
        assignment=assignment,
        sad=sads,
        rmse=rmses,
        mean_sad=mean_sad,
        mean_rmse=mean_rmse,
        guidance_rmse=optional.get("guidance_rmse"),
        guidance_corr=optional.get("guidance_corr"),
    )

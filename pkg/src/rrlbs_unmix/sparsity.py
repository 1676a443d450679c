"""Guidance map: per-pixel sparsity strength for the abundance penalty.

A guidance value ``h_n`` in ``[0, 0.5]`` sets the exponent ``1 - h_n`` of
the lp penalty applied to pixel ``n``.  Pure pixels get a large ``h`` (a
strong, close-to-l1/2 constraint); mixed pixels get a small one (close to
lasso).  The initial map comes from a spatial heuristic; later maps come
from the Gini index of the current abundance columns, scaled back to
mixing proportions by the endmember peaks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .core import (
    Matrix,
    RealVector,
    RejectedInputError,
    as_matrix,
    as_vector,
    elem_pow,
    require_nonnegative,
)

if TYPE_CHECKING:  # pragma: no cover
    from .io import SpectralCube

RAW = "raw"
RESCALED = "rescaled"
GUIDANCE_MAX = 0.5


@dataclass(frozen=True, eq=False)
class GuidanceMap:
    values: RealVector
    state: str = RAW

    def __post_init__(self) -> None:
        values = as_vector(self.values, "guidance values")
        if self.state not in (RAW, RESCALED):
            raise RejectedInputError(f"unknown guidance state {self.state!r}")
        require_nonnegative(values, "guidance values")
        if self.state == RESCALED and np.any(values > GUIDANCE_MAX):
            raise RejectedInputError("rescaled guidance values must lie in [0, 0.5]")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_rescaled(self) -> bool:
        return self.state == RESCALED


def gini(a: RealVector) -> float:
    """Gini sparsity index of a nonnegative vector.

    0 for a uniform vector, ``(K - 1) / K`` for a one-hot vector of length K.
    Scale and permutation invariant.
    """
    a = as_vector(a, "a")
    if a.shape[0] == 0:
        raise RejectedInputError("gini: empty vector")
    require_nonnegative(a, "a")
    total = float(np.sum(a))
    if total == 0.0:
        raise RejectedInputError("gini: undefined for an all-zero vector")
    k = a.shape[0]
    ordered = np.sort(a, kind="stable")
    ranks = np.arange(1, k + 1, dtype=np.float64)
    weights = (k - ranks + 0.5) / k
    return float(1.0 - 2.0 * np.sum((ordered / total) * weights))


def gini_columns(a: Matrix) -> RealVector:
    """Gini index of every column of *a*; all-zero columns map to 0."""
    a = as_matrix(a, "abundance")
    require_nonnegative(a, "abundance")
    k = a.shape[0]
    totals = np.sum(a, axis=0)
    ordered = np.sort(a, axis=0, kind="stable")
    weights = (k - np.arange(1, k + 1, dtype=np.float64) + 0.5) / k
    live = totals > 0
    out = np.zeros(a.shape[1], dtype=np.float64)
    if np.any(live):
        shares = ordered[:, live] / totals[live]
        out[live] = 1.0 - 2.0 * (weights @ shares)
    return out


def initial_guidance(cube: "SpectralCube", sigma: float) -> GuidanceMap:
    """Heuristic map from 4-neighbour spectral similarity.

    ``h_i = sum_j exp(-||x_j - x_i||^2 / sigma)`` over the up, down, left and
    right neighbours.  Out-of-grid neighbours reflect onto the pixel itself
    and so contribute exactly 1.  Flat regions score high, edges score low.
    """
    if not sigma > 0:
        raise RejectedInputError(f"sigma must be positive, got {sigma}")
    width, height = cube.width, cube.height
    if width < 1 or height < 1:
        raise RejectedInputError("cube must have at least one pixel")
    x = as_matrix(cube.data, "cube data")
    grid = x.reshape(x.shape[0], height, width)
    padded = np.pad(grid, ((0, 0), (1, 1), (1, 1)), mode="edge")
    h = np.zeros((height, width), dtype=np.float64)
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        shifted = padded[:, 1 + dr : 1 + dr + height, 1 + dc : 1 + dc + width]
        dist = np.sum((shifted - grid) ** 2, axis=0)
        h += np.exp(-dist / sigma)
    return GuidanceMap(h.reshape(-1), RAW)


def rescale_half(h: GuidanceMap) -> GuidanceMap:
    """Affinely map *h* onto ``[0, 0.5]``; a constant map becomes all zeros."""
    values = h.values
    lo = float(np.min(values))
    hi = float(np.max(values))
    if hi == lo:
        return GuidanceMap(np.zeros_like(values), RESCALED)
    scaled = (values - lo) / (2.0 * (hi - lo))
    return GuidanceMap(np.clip(scaled, 0.0, GUIDANCE_MAX), RESCALED)


def guidance_from_abundance(a: Matrix) -> GuidanceMap:
    a = as_matrix(a, "abundance")
    if a.shape[0] < 2:
        raise RejectedInputError("guidance_from_abundance needs K >= 2")
    return rescale_half(GuidanceMap(gini_columns(a), RAW))


def guidance_from_factors(m: Matrix, a: Matrix) -> GuidanceMap:
    """Guidance map from the current factors.

    Renormalization leaves the endmember magnitudes in M, so each row of A is
    first multiplied by the peak of its M column.  The Gini index then sees
    mixing proportions against peak-normalized spectra instead of rows scaled
    to unit norm.
    """
    m = as_matrix(m, "m")
    a = as_matrix(a, "abundance")
    if m.shape[1] != a.shape[0]:
        raise RejectedInputError(f"factors {m.shape} and {a.shape} do not chain")
    require_nonnegative(m, "m")
    return guidance_from_abundance(a * np.max(m, axis=0)[:, None])


def blank_guidance(n: int) -> GuidanceMap:
    """All-zero map: the same lasso-strength constraint on every pixel."""
    return GuidanceMap(np.zeros(n, dtype=np.float64), RESCALED)


def constant_guidance(n: int, value: float) -> GuidanceMap:
    return GuidanceMap(np.full(n, value, dtype=np.float64), RESCALED)


def build_h_matrix(h: GuidanceMap, k: int) -> Matrix:
    if not h.is_rescaled:
        raise RejectedInputError("build_h_matrix expects a rescaled guidance map")
    if k < 1:
        raise RejectedInputError(f"k must be >= 1, got {k}")
    return np.tile(h.values, (k, 1))


def sparsity_penalty(a: Matrix, h_mat: Matrix, xi: float) -> float:
    """``sum_{k,n} (A_kn + xi) ** (1 - H_kn)`` (the lambda factor excluded)."""
    if xi < 0:
        raise RejectedInputError(f"xi must be nonnegative, got {xi}")
    a = as_matrix(a, "abundance")
    h_mat = as_matrix(h_mat, "H")
    if np.any((h_mat < 0) | (h_mat > GUIDANCE_MAX)):
        raise RejectedInputError("H entries must lie in [0, 0.5]")
    return float(np.sum(elem_pow(a + xi, 1.0 - h_mat)))


def guidance_error(h_est: GuidanceMap, h_true: GuidanceMap) -> tuple[float, float]:
    """RMSE and Pearson correlation between two guidance maps.

    Correlation is reported as 0 when either map is constant.
    """
    if len(h_est) != len(h_true):
        raise RejectedInputError(
            f"guidance maps differ in length: {len(h_est)} vs {len(h_true)}"
        )
    diff = h_est.values - h_true.values
    rmse = float(np.sqrt(np.mean(diff * diff)))
    if np.ptp(h_est.values) == 0 or np.ptp(h_true.values) == 0:
        return rmse, 0.0
    corr = float(np.corrcoef(h_est.values, h_true.values)[0, 1])
    return rmse, corr

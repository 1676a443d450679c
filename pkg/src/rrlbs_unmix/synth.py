"""Seeded synthetic scenes with ground truth.

A scene mixes K smooth spectra over a Voronoi partition of the image grid.
Box-blurring the region indicators gives pure cores and mixed transition
bands, so the abundance Gini map (the true guidance map) has real structure.
Channel rows can be blanked or swamped with noise to mimic corrupted bands.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .core import Matrix, RejectedInputError, as_matrix, matmul
from .io import SpectralCube
from .metrics import sad
from .sparsity import GuidanceMap, blank_guidance, guidance_from_abundance

_LOGGER = logging.getLogger(__name__)

OUTLIER_KINDS = ("blank", "heavy_noise")
MIN_PAIRWISE_SAD = 0.15
MAX_ATTEMPTS = 1000
HEAVY_NOISE_GAIN = 3.0

# independent random streams per generation stage
_STREAM_ENDMEMBERS = 0
_STREAM_ABUNDANCES = 1
_STREAM_CORRUPTION = 2


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    channels: int
    endmembers: int
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_kind: str = "blank"
    blur_radius: int = 0
    seed: int = 0

    @property
    def pixels(self) -> int:
        return self.width * self.height

    @property
    def outlier_count(self) -> int:
        # the epsilon keeps 0.2 * 30 at 6 despite binary rounding
        return math.floor(self.outlier_fraction * self.channels + 1e-9)

    def validate(self) -> "SceneSpec":
        if self.width < 1 or self.height < 1:
            raise RejectedInputError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.endmembers < 1:
            raise RejectedInputError(f"endmembers must be >= 1, got {self.endmembers}")
        if self.channels < 4 * self.endmembers:
            raise RejectedInputError(
                f"need channels >= 4 * endmembers, got L={self.channels}, K={self.endmembers}"
            )
        if self.endmembers > self.pixels:
            raise RejectedInputError(
                f"endmembers ({self.endmembers}) exceed pixel count ({self.pixels})"
            )
        if self.noise_sigma < 0:
            raise RejectedInputError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.outlier_fraction < 1:
            raise RejectedInputError(
                f"outlier_fraction must lie in [0, 1), got {self.outlier_fraction}"
            )
        if self.outlier_kind not in OUTLIER_KINDS:
            raise RejectedInputError(f"unknown outlier kind {self.outlier_kind!r}")
        if self.blur_radius < 0:
            raise RejectedInputError(f"blur_radius must be >= 0, got {self.blur_radius}")
        if self.seed < 0:
            raise RejectedInputError(f"seed must be >= 0, got {self.seed}")
        return self


@dataclass(frozen=True, eq=False)
class GroundTruth:
    m_true: Matrix
    a_true: Matrix
    outlier_channels: tuple[int, ...]
    h_true: GuidanceMap


def gen_endmembers(l: int, k: int, seed: int) -> Matrix:
    """K peak-normalized spectra built from 2-4 Gaussian bumps each."""
    if k < 1:
        raise RejectedInputError(f"k must be >= 1, got {k}")
    if l < 4 * k:
        raise RejectedInputError(f"need l >= 4k, got l={l}, k={k}")
    rng = np.random.default_rng((seed, _STREAM_ENDMEMBERS))
    channel = np.arange(l, dtype=np.float64)[:, None]
    narrow, wide = max(1.0, l / 16.0), max(2.0, l / 5.0)
    for attempt in range(1, MAX_ATTEMPTS + 1):
        m = np.empty((l, k), dtype=np.float64)
        for j in range(k):
            bumps = int(rng.integers(2, 5))
            centers = rng.uniform(0.0, l - 1.0, size=bumps)
            widths = rng.uniform(narrow, wide, size=bumps)
            heights = rng.uniform(0.3, 1.0, size=bumps)
            spectrum = np.sum(heights * np.exp(-0.5 * ((channel - centers) / widths) ** 2), axis=1)
            m[:, j] = spectrum / spectrum.max()
        if _min_pairwise_sad(m) >= MIN_PAIRWISE_SAD:
            _LOGGER.debug("endmembers accepted after %d attempt(s)", attempt)
            return m
    raise RejectedInputError(
        f"could not draw {k} endmembers with pairwise SAD >= {MIN_PAIRWISE_SAD} "
        f"in {MAX_ATTEMPTS} attempts"
    )


def _min_pairwise_sad(m: Matrix) -> float:
    pairs = itertools.combinations(range(m.shape[1]), 2)
    return min((sad(m[:, i], m[:, j]) for i, j in pairs), default=math.pi)


def gen_abundances(spec: SceneSpec) -> Matrix:
    """Blurred Voronoi indicators, columns scaled to sum 1."""
    spec.validate()
    k, width, height = spec.endmembers, spec.width, spec.height
    rng = np.random.default_rng((spec.seed, _STREAM_ABUNDANCES))
    seeds = rng.choice(spec.pixels, size=k, replace=False)
    seed_rows, seed_cols = np.divmod(seeds, width)
    rows, cols = np.mgrid[0:height, 0:width]
    dist = (rows[None] - seed_rows[:, None, None]) ** 2 + (cols[None] - seed_cols[:, None, None]) ** 2
    label = np.argmin(dist, axis=0)
    maps = (label[None] == np.arange(k)[:, None, None]).astype(np.float64)
    if spec.blur_radius > 0:
        size = 2 * spec.blur_radius + 1
        maps = uniform_filter(maps, size=(1, size, size), mode="nearest")
        # the running sums leave round-off negatives next to region borders
        maps = np.maximum(maps, 0.0)
    a = maps.reshape(k, spec.pixels)
    return a / a.sum(axis=0, keepdims=True)


def assemble_cube(m: Matrix, a: Matrix, spec: SceneSpec) -> tuple[SpectralCube, GroundTruth]:
    """X = M A plus clipped Gaussian noise, then corrupt a subset of channels."""
    spec.validate()
    m = as_matrix(m, "m")
    a = as_matrix(a, "a")
    if m.shape != (spec.channels, spec.endmembers) or a.shape != (spec.endmembers, spec.pixels):
        raise RejectedInputError(
            f"factors {m.shape} x {a.shape} do not fit the scene "
            f"(L={spec.channels}, K={spec.endmembers}, N={spec.pixels})"
        )
    clean = matmul(m, a)
    rng = np.random.default_rng((spec.seed, _STREAM_CORRUPTION))
    x = clean.copy()
    if spec.noise_sigma > 0:
        x = np.maximum(x + rng.normal(0.0, spec.noise_sigma, size=x.shape), 0.0)

    count = spec.outlier_count
    outliers = np.sort(rng.choice(spec.channels, size=count, replace=False)) if count else []
    for row in outliers:
        if spec.outlier_kind == "blank":
            x[row] = 0.0
        else:
            x[row] = rng.uniform(0.0, HEAVY_NOISE_GAIN * clean[row].max(), size=spec.pixels)

    h_true = guidance_from_abundance(a) if spec.endmembers >= 2 else blank_guidance(spec.pixels)
    cube = SpectralCube(channels=spec.channels, width=spec.width, height=spec.height, data=x)
    truth = GroundTruth(
        m_true=m,
        a_true=a,
        outlier_channels=tuple(int(r) for r in outliers),
        h_true=h_true,
    )
    return cube, truth


def generate_scene(spec: SceneSpec) -> tuple[SpectralCube, GroundTruth]:
    spec.validate()
    m = gen_endmembers(spec.channels, spec.endmembers, spec.seed)
    a = gen_abundances(spec)
    _LOGGER.info(
        "Generated %dx%d scene: L=%d, K=%d, %d corrupted channel(s)",
        spec.width,
        spec.height,
        spec.channels,
        spec.endmembers,
        spec.outlier_count,
    )
    return assemble_cube(m, a, spec)

"""Endmember (SAD) and abundance (RMSE) scores after optimal matching."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import (
    Matrix,
    RealVector,
    RejectedInputError,
    as_matrix,
    as_vector,
    column_sum_to_one,
)
from .sparsity import GuidanceMap, guidance_error

EXHAUSTIVE_MAX_K = 8
MATCH_MAX_K = 12


@dataclass(frozen=True)
class EvalReport:
    # assignment[k] is the estimated column matched to truth column k (0-based)
    assignment: tuple[int, ...]
    sad: tuple[float, ...]
    rmse: tuple[float, ...]
    mean_sad: float
    mean_rmse: float
    guidance_rmse: Optional[float] = None
    guidance_corr: Optional[float] = None

    def sad_degrees(self) -> tuple[float, ...]:
        return tuple(math.degrees(value) for value in self.sad)

    @property
    def mean_sad_degrees(self) -> float:
        return math.degrees(self.mean_sad)


def sad(m: RealVector, m_hat: RealVector) -> float:
    """Spectral angle between two nonzero spectra, in radians.

    Evaluated as twice the half-angle between the unit vectors, which equals
    the arccos of the cosine similarity but stays exact near 0 and pi.
    """
    m = as_vector(m, "m")
    m_hat = as_vector(m_hat, "m_hat")
    if m.shape != m_hat.shape:
        raise RejectedInputError(f"sad: length mismatch {m.shape[0]} vs {m_hat.shape[0]}")
    norm = float(np.linalg.norm(m))
    norm_hat = float(np.linalg.norm(m_hat))
    if norm == 0.0 or norm_hat == 0.0:
        raise RejectedInputError("sad: undefined for a zero vector")
    unit = m / norm
    unit_hat = m_hat / norm_hat
    angle = 2.0 * math.atan2(
        float(np.linalg.norm(unit - unit_hat)), float(np.linalg.norm(unit + unit_hat))
    )
    return min(max(angle, 0.0), math.pi)


def _sad_or_right_angle(m: RealVector, m_hat: RealVector) -> float:
    # a collapsed (all-zero) estimate shares no direction with anything
    if not np.any(m) or not np.any(m_hat):
        return math.pi / 2.0
    return sad(m, m_hat)


def rmse(a: RealVector, a_hat: RealVector) -> float:
    a = as_vector(a, "a")
    a_hat = as_vector(a_hat, "a_hat")
    if a.shape[0] == 0:
        raise RejectedInputError("rmse: empty vectors")
    if a.shape != a_hat.shape:
        raise RejectedInputError(f"rmse: length mismatch {a.shape[0]} vs {a_hat.shape[0]}")
    diff = a - a_hat
    return math.sqrt(float(np.mean(diff * diff)))


def sad_matrix(m_true: Matrix, m_est: Matrix) -> Matrix:
    """cost[k, j] = SAD between truth column k and estimated column j."""
    k = m_true.shape[1]
    cost = np.empty((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cost[i, j] = _sad_or_right_angle(m_true[:, i], m_est[:, j])
    return cost


def match_endmembers(m_true: Matrix, m_est: Matrix) -> tuple[int, ...]:
    """Bijection truth -> estimate minimizing total SAD.

    Exhaustive over all K! orders for K <= 8 (first minimum in lexicographic
    order wins ties); Hungarian assignment for 9 <= K <= 12.
    """
    m_true = as_matrix(m_true, "m_true")
    m_est = as_matrix(m_est, "m_est")
    if m_true.shape != m_est.shape:
        raise RejectedInputError(
            f"endmember matrices differ in shape: {m_true.shape} vs {m_est.shape}"
        )
    k = m_true.shape[1]
    if k > MATCH_MAX_K:
        raise RejectedInputError(f"matching supports K <= {MATCH_MAX_K}, got {k}")
    cost = sad_matrix(m_true, m_est)
    if k <= EXHAUSTIVE_MAX_K:
        rows = np.arange(k)
        best: tuple[int, ...] = tuple(range(k))
        best_cost = math.inf
        for perm in itertools.permutations(range(k)):
            total = float(np.sum(cost[rows, list(perm)]))
            if total < best_cost:
                best, best_cost = perm, total
        return tuple(int(j) for j in best)
    _, cols = linear_sum_assignment(cost)
    return tuple(int(j) for j in cols)


def evaluate(
    truth: tuple[Matrix, Matrix],
    est: tuple[Matrix, Matrix],
    *,
    sum_to_one: bool = True,
    h_est: GuidanceMap | None = None,
    h_true: GuidanceMap | None = None,
) -> EvalReport:
    """Match endmembers by SAD and score abundances under that matching.

    With *sum_to_one* both abundance matrices get their columns scaled to sum
    1 before RMSE, which puts row-normalized solver output on the scale of the
    mixing proportions.  Guidance maps are scored when both are given.
    """
    m_true, a_true = (as_matrix(v, "truth") for v in truth)
    m_est, a_est = (as_matrix(v, "estimate") for v in est)
    if m_true.shape != m_est.shape or a_true.shape != a_est.shape:
        raise RejectedInputError(
            "truth and estimate shapes differ: "
            f"M {m_true.shape} vs {m_est.shape}, A {a_true.shape} vs {a_est.shape}"
        )
    if m_true.shape[1] != a_true.shape[0]:
        raise RejectedInputError(f"M {m_true.shape} and A {a_true.shape} do not chain")
    if sum_to_one:
        a_true = column_sum_to_one(a_true)
        a_est = column_sum_to_one(a_est)

    assignment = match_endmembers(m_true, m_est)
    sads = tuple(
        _sad_or_right_angle(m_true[:, k], m_est[:, j]) for k, j in enumerate(assignment)
    )
    rmses = tuple(rmse(a_true[k], a_est[j]) for k, j in enumerate(assignment))

    guidance_rmse = guidance_corr = None
    if h_est is not None and h_true is not None:
        guidance_rmse, guidance_corr = guidance_error(h_est, h_true)
    return EvalReport(
        assignment=assignment,
        sad=sads,
        rmse=rmses,
        mean_sad=float(np.mean(sads)),
        mean_rmse=float(np.mean(rmses)),
        guidance_rmse=guidance_rmse,
        guidance_corr=guidance_corr,
    )

"""Dense matrix helpers shared by the solver, sparsity and metrics modules.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 (2-D for a
matrix, 1-D for a vector).  The helpers here add the shape and finiteness
checks every caller would otherwise repeat.
"""

from __future__ import annotations

import numpy as np

Matrix = np.ndarray
RealVector = np.ndarray


class RejectedInputError(ValueError):
    """An input violated the precondition of the operation it was passed to."""


def as_matrix(value: object, name: str = "matrix") -> Matrix:
    """Return *value* as a finite float64 2-D array or raise."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise RejectedInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} contains NaN or infinite values")
    return arr


def as_vector(value: object, name: str = "vector") -> RealVector:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 1:
        raise RejectedInputError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} contains NaN or infinite values")
    return arr


def require_nonnegative(arr: np.ndarray, name: str) -> None:
    if np.any(arr < 0):
        raise RejectedInputError(f"{name} must be nonnegative")


def _require_same_shape(a: Matrix, b: Matrix, op: str) -> None:
    if a.shape != b.shape:
        raise RejectedInputError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _checked(result: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(result)):
        raise RejectedInputError(f"{op} produced non-finite values")
    return result


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _require_same_shape(a, b, "hadamard")
    return _checked(a * b, "hadamard")


def elem_pow(base: Matrix, expo: Matrix) -> Matrix:
    """Entry-wise ``base ** expo`` with ``0 ** e == 0`` for ``e > 0``.

    A zero base paired with a nonpositive exponent is rejected; callers that
    need negative exponents shift the base by a positive offset first.
    """
    base = as_matrix(base, "base")
    expo = as_matrix(expo, "expo")
    _require_same_shape(base, expo, "elem_pow")
    require_nonnegative(base, "base")
    if np.any((base == 0) & (expo <= 0)):
        raise RejectedInputError("elem_pow: zero base with nonpositive exponent")
    return _checked(np.power(base, expo), "elem_pow")


def row_l2_norms(x: Matrix) -> RealVector:
    x = as_matrix(x, "x")
    return np.sqrt(np.sum(x * x, axis=1))


def norm_l2p(x: Matrix, p: float) -> float:
    """Sum over rows of ``||row||_2 ** p``; ``p == 1`` gives the l2,1 norm."""
    if not 0.0 < p <= 1.0:
        raise RejectedInputError(f"norm_l2p: p must lie in (0, 1], got {p}")
    norms = row_l2_norms(x)
    if p == 1.0:
        return float(np.sum(norms))
    return float(np.sum(norms**p))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise RejectedInputError(
            f"matmul: inner dimensions disagree {a.shape} x {b.shape}"
        )
    return _checked(a @ b, "matmul")


def column_sum_to_one(a: Matrix) -> Matrix:
    """Copy of *a* with every nonzero column scaled to sum 1."""
    a = np.array(as_matrix(a, "a"))
    totals = a.sum(axis=0)
    live = totals > 0
    a[:, live] /= totals[live]
    return a

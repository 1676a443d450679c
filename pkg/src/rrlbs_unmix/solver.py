"""Robust, guidance-weighted NMF solver.

Minimizes

    loss(X - M A) + lam * sum((A + xi) ** (1 - H))

over nonnegative M (L x K) and A (K x N) with multiplicative updates.  The
loss is an l2,1 (or l2,p) norm over channel rows, so a corrupted channel adds
its residual norm instead of its squared norm and cannot dominate the fit.
H repeats the per-pixel guidance map on every row; it is refreshed from the
Gini index of the abundance columns between inner phases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterator, NamedTuple

import numpy as np

from .config import SolverConfig
from .core import (
    Matrix,
    RealVector,
    RejectedInputError,
    as_matrix,
    as_vector,
    column_sum_to_one,
    matmul,
    norm_l2p,
    require_nonnegative,
)
from .sparsity import (
    GuidanceMap,
    blank_guidance,
    build_h_matrix,
    constant_guidance,
    guidance_from_factors,
    initial_guidance,
    rescale_half,
    sparsity_penalty,
)

if TYPE_CHECKING:  # pragma: no cover
    from .io import SpectralCube

_LOGGER = logging.getLogger(__name__)
_TINY = 1e-300


class SolverError(RuntimeError):
    """The objective became non-finite; the run was aborted."""

    def __init__(self, outer: int, inner: int, term: str, trace: "SolveTrace") -> None:
        super().__init__(
            f"non-finite {term} term at outer iteration {outer}, inner iteration {inner}"
        )
        self.outer = outer
        self.inner = inner
        self.term = term
        self.trace = trace

    def __reduce__(self):
        return type(self), (self.outer, self.inner, self.term, self.trace)


class Objective(NamedTuple):
    total: float
    loss: float
    penalty: float


@dataclass(frozen=True)
class TraceRecord:
    outer: int
    inner: int
    objective: float
    loss: float
    penalty: float
    max_change: float
    # objective of the iterate this step started from (same H)
    start_objective: float


@dataclass
class SolveTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        if self.records:
            last = self.records[-1]
            if (record.outer, record.inner) <= (last.outer, last.inner):
                raise ValueError(
                    f"trace indices must increase: ({last.outer}, {last.inner}) "
                    f"then ({record.outer}, {record.inner})"
                )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def objectives(self) -> RealVector:
        return np.array([r.objective for r in self.records], dtype=np.float64)

    def outer_blocks(self) -> list[list[TraceRecord]]:
        """Records grouped by outer iteration, i.e. one list per inner phase."""
        blocks: list[list[TraceRecord]] = []
        for record in self.records:
            if not blocks or blocks[-1][0].outer != record.outer:
                blocks.append([])
            blocks[-1].append(record)
        return blocks

    def monotone_violations(self, rtol: float = 1e-10) -> list[TraceRecord]:
        """Records whose update step raised the objective by more than *rtol*."""
        return [
            r
            for r in self.records
            if r.objective - r.start_objective > rtol * abs(r.start_objective)
        ]


@dataclass(eq=False)
class UnmixResult:
    m: Matrix
    a: Matrix
    h: GuidanceMap
    trace: SolveTrace
    config: SolverConfig
    initial_h: GuidanceMap | None = None

    def sum_to_one(self) -> Matrix:
        """Copy of A with every nonzero column scaled to sum 1 (reporting only)."""
        return column_sum_to_one(self.a)


# ----------------------------------------------------------------------
# Update rules
# ----------------------------------------------------------------------


def channel_weights(
    x: Matrix, m: Matrix, a: Matrix, eps_guard: float, p: float = 1.0
) -> RealVector:
    """Diagonal of U from the guarded residual row norms.

    p == 1:  U_ll = 1/2 * (||e_l||^2 + eps) ** -1/2
    p < 1:   U_ll = p/2 * (||e_l||^2 + eps) ** ((p - 2) / 2)
    """
    if not 0.0 < p <= 1.0:
        raise RejectedInputError(f"p must lie in (0, 1], got {p}")
    if eps_guard <= 0:
        raise RejectedInputError(f"eps_guard must be positive, got {eps_guard}")
    residual = matmul(m, a) - as_matrix(x, "x")
    sq = np.sum(residual * residual, axis=1) + eps_guard
    if p == 1.0:
        return 0.5 / np.sqrt(sq)
    return (p / 2.0) * sq ** ((p - 2.0) / 2.0)


def update_m(
    m: Matrix, a: Matrix, x: Matrix, u: RealVector, phi: float = 1e-8
) -> Matrix:
    """M <- M * (U X A^T) / (U M A A^T), denominator floored at phi."""
    m = as_matrix(m, "m")
    a = as_matrix(a, "a")
    x = as_matrix(x, "x")
    u = _weights(u, x.shape[0])
    numer = matmul(u[:, None] * x, a.T)
    denom = matmul(u[:, None] * matmul(m, a), a.T)
    return m * numer / np.maximum(denom, phi)


def update_a(
    a: Matrix,
    m: Matrix,
    x: Matrix,
    u: RealVector,
    lam: float,
    h_mat: Matrix,
    xi: float,
    phi: float = 1e-8,
) -> Matrix:
    """A <- A * (M^T U X) / (M^T U M A + lam (1 - H) (A + xi)^-H), floored at phi."""
    a = as_matrix(a, "a")
    m = as_matrix(m, "m")
    x = as_matrix(x, "x")
    u = _weights(u, x.shape[0])
    if lam < 0:
        raise RejectedInputError(f"lambda must be nonnegative, got {lam}")
    if xi <= 0:
        raise RejectedInputError(f"xi must be positive, got {xi}")
    numer = matmul(m.T, u[:, None] * x)
    denom = matmul(m.T, u[:, None] * matmul(m, a))
    if lam > 0:
        denom = denom + _penalty_gradient(a, lam, as_matrix(h_mat, "H"), xi)
    return a * numer / np.maximum(denom, phi)


def _penalty_gradient(a: Matrix, lam: float, h_mat: Matrix, xi: float) -> Matrix:
    if h_mat.shape != a.shape:
        raise RejectedInputError(f"H shape {h_mat.shape} does not match A {a.shape}")
    return lam * (1.0 - h_mat) * np.power(a + xi, -h_mat)


def _weights(u: RealVector, rows: int) -> RealVector:
    u = as_vector(u, "u")
    if u.shape[0] != rows:
        raise RejectedInputError(f"u has {u.shape[0]} entries for {rows} channels")
    if np.any(u <= 0):
        raise RejectedInputError("channel weights must be positive")
    return u


def renormalize(m: Matrix, a: Matrix, mode: str) -> tuple[Matrix, Matrix]:
    """Scale rows of A to unit norm and columns of M inversely.

    All-zero rows of A and their M columns are left alone.
    """
    m = as_matrix(m, "m")
    a = as_matrix(a, "a")
    if m.shape[1] != a.shape[0]:
        raise RejectedInputError(f"renormalize: {m.shape} and {a.shape} do not chain")
    if mode == "l1_rows":
        scale = np.sum(np.abs(a), axis=1)
    elif mode == "l2_rows":
        scale = np.sqrt(np.sum(a * a, axis=1))
    else:
        raise RejectedInputError(f"unknown norm mode {mode!r}")
    scale = np.where(scale > 0, scale, 1.0)
    return m * scale[None, :], a / scale[:, None]


def objective(
    x: Matrix,
    m: Matrix,
    a: Matrix,
    lam: float,
    h_mat: Matrix,
    xi: float,
    loss: str,
    p: float = 1.0,
    eps_guard: float = 0.0,
) -> Objective:
    """Objective value split into its loss and penalty terms.

    ``eps_guard > 0`` evaluates the smoothed loss whose majorizer the update
    rules minimize; the solver traces that form.  Per residual row ``s``:
    frobenius ``s / 4``, l21 ``sqrt(s + eps) / 2``, l2p ``(s + eps)**(p/2) / 2``.
    """
    residual = as_matrix(x, "x") - matmul(m, a)
    if loss == "frobenius":
        loss_term = 0.25 * float(np.sum(residual * residual))
    elif loss in ("l21", "l2p"):
        power = 1.0 if loss == "l21" else p
        if eps_guard == 0.0:
            loss_term = 0.5 * norm_l2p(residual, power)
        else:
            sq = np.sum(residual * residual, axis=1) + eps_guard
            loss_term = 0.5 * float(np.sum(sq ** (power / 2.0)))
    else:
        raise RejectedInputError(f"unknown loss {loss!r}")
    penalty = lam * sparsity_penalty(a, h_mat, xi) if lam > 0 else 0.0
    return Objective(loss_term + penalty, loss_term, penalty)


def init_factors(
    x: Matrix, k: int, seed: int, strategy: str = "random"
) -> tuple[Matrix, Matrix]:
    """Seeded starting factors.

    ``random`` draws M in (0, 1] scaled by the mean spectrum of X; A is drawn
    in (0, 1] for both strategies and its rows scaled to sum 1.
    ``pixel_sample`` takes k distinct pixels of X as the endmembers.
    """
    x = as_matrix(x, "x")
    if k < 1:
        raise RejectedInputError(f"k must be >= 1, got {k}")
    channels, pixels = x.shape
    rng = np.random.default_rng(seed)
    if strategy == "random":
        mean_spectrum = np.maximum(x.mean(axis=1), 1e-12)
        m = (1.0 - rng.random((channels, k))) * mean_spectrum[:, None]
    elif strategy == "pixel_sample":
        if k > pixels:
            raise RejectedInputError(f"pixel_sample needs k <= N, got k={k}, N={pixels}")
        picks = rng.choice(pixels, size=k, replace=False)
        m = x[:, picks].copy()
    else:
        raise RejectedInputError(f"unknown init strategy {strategy!r}")
    a = 1.0 - rng.random((k, pixels))
    a /= a.sum(axis=1, keepdims=True)
    return m, a


# ----------------------------------------------------------------------
# Algorithm driver
# ----------------------------------------------------------------------

StepFn = Callable[
    [Matrix, Matrix, Matrix, RealVector, float, Matrix, SolverConfig], tuple[Matrix, Matrix]
]
Callback = Callable[[TraceRecord, Matrix, Matrix], None]


def _standard_step(
    m: Matrix, a: Matrix, x: Matrix, u: RealVector, lam: float, h_mat: Matrix, cfg: SolverConfig
) -> tuple[Matrix, Matrix]:
    a = update_a(a, m, x, u, lam, h_mat, cfg.xi, cfg.phi)
    m = update_m(m, a, x, u, cfg.phi)
    return m, a


def _hat_step(
    m: Matrix, a: Matrix, x: Matrix, u: RealVector, lam: float, h_mat: Matrix, cfg: SolverConfig
) -> tuple[Matrix, Matrix]:
    # U^(1/2) folded into M and X, leaving plain NMF-shaped products.
    su = np.sqrt(u)[:, None]
    m_hat = su * m
    x_hat = su * x
    denom = m_hat.T @ (m_hat @ a)
    if lam > 0:
        denom = denom + _penalty_gradient(a, lam, h_mat, cfg.xi)
    a = a * (m_hat.T @ x_hat) / np.maximum(denom, cfg.phi)
    m_hat = m_hat * (x_hat @ a.T) / np.maximum(m_hat @ (a @ a.T), cfg.phi)
    return m_hat / su, a


def solve(
    cube: "SpectralCube",
    config: SolverConfig,
    *,
    h0: GuidanceMap | None = None,
    m0: Matrix | None = None,
    a0: Matrix | None = None,
    callback: Callback | None = None,
    logger: logging.Logger | None = None,
) -> UnmixResult:
    """Run the alternating solver on *cube*.

    *h0* replaces the heuristic initial guidance map and *m0*/*a0* replace the
    seeded starting factors.  *callback* sees every trace record together with
    the (renormalized) iterate it describes.
    """
    return _run(cube, config, _standard_step, h0, m0, a0, callback, logger)


def solve_hat_form(
    cube: "SpectralCube",
    config: SolverConfig,
    *,
    h0: GuidanceMap | None = None,
    m0: Matrix | None = None,
    a0: Matrix | None = None,
    callback: Callback | None = None,
    logger: logging.Logger | None = None,
) -> UnmixResult:
    """Same iteration as :func:`solve`, written with U^(1/2) M and U^(1/2) X."""
    return _run(cube, config, _hat_step, h0, m0, a0, callback, logger)


def _run(
    cube: "SpectralCube",
    config: SolverConfig,
    step: StepFn,
    h0: GuidanceMap | None,
    m0: Matrix | None,
    a0: Matrix | None,
    callback: Callback | None,
    logger: logging.Logger | None,
) -> UnmixResult:
    log = logger or _LOGGER
    cfg = config.validate()
    x = as_matrix(cube.data, "cube data")
    require_nonnegative(x, "cube data")
    pixels = x.shape[1]

    if m0 is None and a0 is None:
        m, a = init_factors(x, cfg.k, cfg.seed, cfg.init)
    elif m0 is not None and a0 is not None:
        m, a = _starting_factors(x, m0, a0, cfg.k)
    else:
        raise RejectedInputError("m0 and a0 must be given together")

    lam = cfg.effective_lam
    initial_h: GuidanceMap | None = None
    if cfg.sparsity == "learned":
        if h0 is None:
            initial_h = rescale_half(initial_guidance(cube, cfg.sigma))
        else:
            initial_h = h0 if h0.is_rescaled else rescale_half(h0)
        if len(initial_h) != pixels:
            raise RejectedInputError(f"h0 has {len(initial_h)} entries for {pixels} pixels")
        h = initial_h
    elif cfg.sparsity == "fixed":
        h = constant_guidance(pixels, 1.0 - cfg.fixed_p)
    else:
        h = blank_guidance(pixels)
    h_mat = build_h_matrix(h, cfg.k)

    def evaluate(m_: Matrix, a_: Matrix) -> Objective:
        return objective(x, m_, a_, lam, h_mat, cfg.xi, cfg.loss, cfg.p, cfg.eps_guard)

    def weights(m_: Matrix, a_: Matrix) -> RealVector:
        if cfg.loss == "frobenius":
            return np.full(x.shape[0], 0.5)
        return channel_weights(x, m_, a_, cfg.eps_guard, cfg.p)

    m, a = renormalize(m, a, cfg.norm_mode)
    u = weights(m, a)
    trace = SolveTrace()
    current = evaluate(m, a)
    outer_reference = current.total
    inner_cap = min(cfg.q, cfg.max_inner) if cfg.inner_stop == "cadence" else cfg.max_inner

    for outer in range(1, cfg.max_outer + 1):
        for inner in range(1, inner_cap + 1):
            m_new, a_new = step(m, a, x, u, lam, h_mat, cfg)
            if not (np.all(np.isfinite(m_new)) and np.all(np.isfinite(a_new))):
                raise SolverError(outer, inner, "loss", trace)
            stepped = evaluate(m_new, a_new)
            _require_finite(stepped, outer, inner, trace)
            m_new, a_new = renormalize(m_new, a_new, cfg.norm_mode)
            u = weights(m_new, a_new)
            change = max(float(np.max(np.abs(m_new - m))), float(np.max(np.abs(a_new - a))))
            m, a = m_new, a_new
            record = TraceRecord(
                outer=outer,
                inner=inner,
                objective=stepped.total,
                loss=stepped.loss,
                penalty=stepped.penalty,
                max_change=change,
                start_objective=current.total,
            )
            trace.append(record)
            log.debug(
                "outer %d inner %d objective %.10g (loss %.6g, penalty %.6g)",
                outer,
                inner,
                stepped.total,
                stepped.loss,
                stepped.penalty,
            )
            if callback is not None:
                callback(record, m, a)
            # rescaling leaves M A, and so the objective, unchanged when lam == 0
            after = stepped if lam == 0 else evaluate(m, a)
            rel = abs(current.total - after.total) / max(abs(current.total), _TINY)
            current = after
            if rel < cfg.inner_tol:
                break

        if cfg.sparsity == "learned" and cfg.k >= 2:
            h = guidance_from_factors(m, a)
            h_mat = build_h_matrix(h, cfg.k)
            current = evaluate(m, a)
            _require_finite(current, outer, inner, trace)
        rel_outer = abs(outer_reference - current.total) / max(abs(outer_reference), _TINY)
        log.info(
            "outer %d: %d inner iterations, objective %.10g (relative change %.3g)",
            outer,
            inner,
            current.total,
            rel_outer,
        )
        outer_reference = current.total
        if rel_outer < cfg.outer_tol:
            break

    return UnmixResult(m=m, a=a, h=h, trace=trace, config=cfg, initial_h=initial_h)


def _starting_factors(x: Matrix, m0: Matrix, a0: Matrix, k: int) -> tuple[Matrix, Matrix]:
    m = np.array(as_matrix(m0, "m0"))
    a = np.array(as_matrix(a0, "a0"))
    require_nonnegative(m, "m0")
    require_nonnegative(a, "a0")
    if m.shape != (x.shape[0], k) or a.shape != (k, x.shape[1]):
        raise RejectedInputError(
            f"starting factors {m.shape} x {a.shape} do not fit "
            f"{x.shape[0]} channels, {x.shape[1]} pixels and k={k}"
        )
    return m, a


def _require_finite(value: Objective, outer: int, inner: int, trace: SolveTrace) -> None:
    if not math.isfinite(value.loss):
        raise SolverError(outer, inner, "loss", trace)
    if not math.isfinite(value.penalty):
        raise SolverError(outer, inner, "penalty", trace)

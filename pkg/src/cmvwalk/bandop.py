"""Exact algebra of periodic banded operators on the doubled lattice.

An operator ``A`` is stored by its diagonals: ``<delta_{i+d}, A delta_i> =
coeffs[d][i mod p]`` for offsets ``d`` in ``[lo, hi]``. Sums, products and
adjoints stay in this class, so every walk operator, the field, and all the
symmetric polynomials are represented exactly (up to float roundoff).

Norms are estimated on finite windows of doubled indices ``[-2M, 2M+1]``
(``M`` sites on each side of the origin).
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from cmvwalk.lattice import WalkerState, position_values

logger = logging.getLogger(__name__)

TRIM_TOL = 1e-14

NORM_REL_TOL = 1e-12
NORM_MAX_ITER = 20000
STABILITY_TOL = 1e-8

_svd_fallback = contextvars.ContextVar("svd_fallback", default=True)


@contextlib.contextmanager
def svd_fallback(enabled: bool):
    """Set the default of ``operator_norm(fallback=...)`` within a block."""
    token = _svd_fallback.set(enabled)
    try:
        yield
    finally:
        _svd_fallback.reset(token)


class NormConvergenceError(RuntimeError):
    """Power iteration hit its iteration cap before reaching the requested tolerance."""

    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate


class PeriodicBandedOperator:
    __slots__ = ("_period", "_lo", "_coeffs")

    def __init__(self, period: int, lo: int, coeffs: np.ndarray):
        period = int(period)
        if period < 1:
            raise ValueError(f"period must be >= 1, got {period}")
        c = np.asarray(coeffs, dtype=np.complex128)
        if c.ndim != 2 or c.shape[1] != period:
            raise ValueError(f"coefficient table must have shape (rows, {period}), got {c.shape}")
        # trim negligible boundary diagonals
        keep = np.flatnonzero(np.max(np.abs(c), axis=1, initial=0.0) >= TRIM_TOL)
        if keep.size == 0:
            lo, c = 0, np.zeros((0, period), dtype=np.complex128)
        else:
            lo, c = int(lo) + int(keep[0]), c[keep[0] : keep[-1] + 1].copy()
        c.setflags(write=False)
        self._period = period
        self._lo = lo
        self._coeffs = c

    # ------------------------------------------------------------------ basics

    @property
    def period(self) -> int:
        return self._period

    @property
    def lo(self) -> int:
        return self._lo

    @property
    def hi(self) -> int:
        return self._lo + self._coeffs.shape[0] - 1

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def half_bandwidth(self) -> int:
        if self.is_zero():
            return 0
        return max(abs(self.lo), abs(self.hi))

    @property
    def offsets(self) -> range:
        return range(self.lo, self.hi + 1)

    def is_zero(self) -> bool:
        return self._coeffs.shape[0] == 0

    def diagonal(self, d: int) -> np.ndarray:
        """Coefficients of offset ``d`` over one period (zeros outside the band)."""
        if self.is_zero() or d < self.lo or d > self.hi:
            return np.zeros(self._period, dtype=np.complex128)
        return self._coeffs[d - self.lo]

    def entry(self, row: int, col: int) -> complex:
        """``<delta_row, A delta_col>``."""
        return complex(self.diagonal(int(row) - int(col))[int(col) % self._period])

    def tiled(self, period: int) -> np.ndarray:
        """Coefficient table repeated out to ``period`` (a multiple of the own period)."""
        if period % self._period:
            raise ValueError(f"{period} is not a multiple of {self._period}")
        return np.tile(self._coeffs, (1, period // self._period))

    def __repr__(self) -> str:
        return f"PeriodicBandedOperator(period={self.period}, offsets=[{self.lo}, {self.hi}])"

    # -------------------------------------------------------------- arithmetic

    def __matmul__(self, other: "PeriodicBandedOperator") -> "PeriodicBandedOperator":
        return compose(self, other)

    def __add__(self, other: "PeriodicBandedOperator") -> "PeriodicBandedOperator":
        return linear_combine([(1.0, self), (1.0, other)])

    def __sub__(self, other: "PeriodicBandedOperator") -> "PeriodicBandedOperator":
        return linear_combine([(1.0, self), (-1.0, other)])

    def __neg__(self) -> "PeriodicBandedOperator":
        return PeriodicBandedOperator(self.period, self.lo, -self._coeffs)

    def __mul__(self, scalar: complex) -> "PeriodicBandedOperator":
        return PeriodicBandedOperator(self.period, self.lo, complex(scalar) * self._coeffs)

    __rmul__ = __mul__

    def adjoint(self) -> "PeriodicBandedOperator":
        return adjoint(self)

    def __pow__(self, k: int) -> "PeriodicBandedOperator":
        return power(self, k)


def build(period: int, coeff_table: Mapping[int, Sequence[complex] | complex]) -> PeriodicBandedOperator:
    """Operator from ``{offset: values over one period}``.

    A scalar value (or a length-1 sequence) is broadcast over the period.
    """
    period = int(period)
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    if not coeff_table:
        raise ValueError("empty coefficient table")
    lo, hi = min(coeff_table), max(coeff_table)
    c = np.zeros((hi - lo + 1, period), dtype=np.complex128)
    for d, vals in coeff_table.items():
        row = np.atleast_1d(np.asarray(vals, dtype=np.complex128))
        if row.size == 1:
            row = np.full(period, row[0])
        if row.size != period:
            raise ValueError(f"offset {d}: expected {period} values, got {row.size}")
        c[d - lo] = row
    return PeriodicBandedOperator(period, lo, c)


def identity(period: int = 1) -> PeriodicBandedOperator:
    return build(period, {0: 1.0})


def zero(period: int = 1) -> PeriodicBandedOperator:
    return PeriodicBandedOperator(period, 0, np.zeros((0, period)))


def shift(k: int) -> PeriodicBandedOperator:
    """Doubled-index shift ``delta_i -> delta_{i+k}``."""
    return build(1, {int(k): 1.0})


def diagonal_operator(values: Sequence[complex]) -> PeriodicBandedOperator:
    """Periodic multiplication operator with ``values[i mod p]`` at index ``i``."""
    values = np.asarray(values, dtype=np.complex128)
    return build(values.size, {0: values})


def compose(A: PeriodicBandedOperator, B: PeriodicBandedOperator) -> PeriodicBandedOperator:
    """Exact product ``A B``.

    ``(AB)_{i+d,i} = sum_{d2} B_{i+d2,i} A_{i+d,i+d2}``; the period is
    ``lcm(p_A, p_B)``. Terms are accumulated in a fixed (d2, dA) order.
    """
    p = math.lcm(A.period, B.period)
    if A.is_zero() or B.is_zero():
        return zero(p)
    r = np.arange(p)
    out = np.zeros((A.hi + B.hi - A.lo - B.lo + 1, p), dtype=np.complex128)
    lo = A.lo + B.lo
    for kb, d2 in enumerate(B.offsets):
        b = B.coeffs[kb][r % B.period]
        if not b.any():
            continue
        cols = (r + d2) % A.period
        for ka, da in enumerate(A.offsets):
            out[da + d2 - lo] += b * A.coeffs[ka][cols]
    return PeriodicBandedOperator(p, lo, out)


def product(ops: Iterable[PeriodicBandedOperator]) -> PeriodicBandedOperator:
    """Ordered product ``K_1 K_2 ... K_m`` (identity when empty)."""
    acc = None
    for op in ops:
        acc = op if acc is None else compose(acc, op)
    return identity() if acc is None else acc


def power(A: PeriodicBandedOperator, k: int) -> PeriodicBandedOperator:
    if k < 0:
        raise ValueError("negative powers are not supported; use adjoint for unitaries")
    acc = identity(A.period)
    for _ in range(k):
        acc = compose(acc, A)
    return acc


def linear_combine(terms: Iterable[tuple[complex, PeriodicBandedOperator]]) -> PeriodicBandedOperator:
    terms = list(terms)
    if not terms:
        return zero()
    p = math.lcm(*(op.period for _, op in terms))
    nonzero = [(c, op) for c, op in terms if not op.is_zero()]
    if not nonzero:
        return zero(p)
    lo = min(op.lo for _, op in nonzero)
    hi = max(op.hi for _, op in nonzero)
    out = np.zeros((hi - lo + 1, p), dtype=np.complex128)
    for c, op in nonzero:
        out[op.lo - lo : op.hi - lo + 1] += complex(c) * op.tiled(p)
    return PeriodicBandedOperator(p, lo, out)


def adjoint(A: PeriodicBandedOperator) -> PeriodicBandedOperator:
    """``(A*)_{i+d,i} = conj(A_{i,i+d})``: negate offsets and shift residues."""
    p = A.period
    if A.is_zero():
        return zero(p)
    r = np.arange(p)
    out = np.zeros_like(A.coeffs)
    for k, d in enumerate(A.offsets):
        # new offset -d lives in row (hi - d) when rows run from -hi to -lo
        out[A.hi - d] = np.conj(A.coeffs[k][(r - d) % p])
    return PeriodicBandedOperator(p, -A.hi, out)


def commutator(A: PeriodicBandedOperator, B: PeriodicBandedOperator) -> PeriodicBandedOperator:
    return linear_combine([(1.0, compose(A, B)), (-1.0, compose(B, A))])


def max_abs_diff(A: PeriodicBandedOperator, B: PeriodicBandedOperator) -> float:
    """Largest entrywise difference between two operators."""
    diff = linear_combine([(1.0, A), (-1.0, B)])
    return max_abs(diff)


def max_abs(A: PeriodicBandedOperator) -> float:
    return float(np.max(np.abs(A.coeffs), initial=0.0))


def allclose(A: PeriodicBandedOperator, B: PeriodicBandedOperator, atol: float = 1e-13) -> bool:
    return max_abs_diff(A, B) <= atol


def apply(A: PeriodicBandedOperator, psi: WalkerState) -> WalkerState:
    """Exact sparse ``A psi``; the support grows by at most the band on each side."""
    if psi.is_empty() or A.is_zero():
        return WalkerState(0, [])
    src = psi.indices
    amp = psi.array
    res = src % A.period
    out = np.zeros(psi.array.size + A.hi - A.lo, dtype=np.complex128)
    for k, d in enumerate(A.offsets):
        out[d - A.lo : d - A.lo + amp.size] += A.coeffs[k][res] * amp
    return WalkerState(psi.lo + A.lo, out)


# ------------------------------------------------------------------ windows


@dataclass(frozen=True)
class WindowMatrix:
    """Dense truncation onto doubled indices ``[-2M, 2M+1]``."""

    radius: int
    matrix: np.ndarray

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-2 * self.radius, 2 * self.radius + 2)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def window_indices(radius: int) -> np.ndarray:
    return np.arange(-2 * radius, 2 * radius + 2)


def window_matrix(A: PeriodicBandedOperator, radius: int) -> WindowMatrix:
    if radius < 1 or radius < A.half_bandwidth:
        raise ValueError(f"window radius {radius} too small for half-bandwidth {A.half_bandwidth}")
    idx = window_indices(radius)
    dim = idx.size
    W = np.zeros((dim, dim), dtype=np.complex128)
    for k, d in enumerate(A.offsets):
        if abs(d) >= dim:
            continue
        cols = np.arange(max(0, -d), min(dim, dim - d))
        W[cols + d, cols] = A.coeffs[k][idx[cols] % A.period]
    return WindowMatrix(radius, W)


def position_commutator_window(A: PeriodicBandedOperator, radius: int) -> WindowMatrix:
    """Window of ``[X, A]``: entries ``(x(i+d) - x(i)) A_{i+d,i}`` with ``x(i) = |site(i)|``."""
    if radius < A.half_bandwidth + 1:
        raise ValueError(f"window radius {radius} too small for half-bandwidth {A.half_bandwidth}")
    W = window_matrix(A, radius)
    x = position_values(W.indices).astype(float)
    return WindowMatrix(radius, (x[:, None] - x[None, :]) * W.matrix)


def default_radius(A: PeriodicBandedOperator) -> int:
    """``4 * (half-bandwidth in sites) + period + 8``."""
    return 4 * math.ceil(A.half_bandwidth / 2) + A.period + 8


# -------------------------------------------------------------------- norms


@dataclass(frozen=True)
class NormEstimate:
    value: float
    rel_tol: float
    radii: tuple[int, int]
    stabilized: bool
    iterations: int = 0
    method: str = "power"


def _power_iteration(W: np.ndarray, rel_tol: float, max_iter: int) -> tuple[float, float, int]:
    """Largest singular value of ``W`` from power iteration on ``W^H W``."""
    G = W.conj().T @ W
    x = np.ones(G.shape[0], dtype=np.complex128) / math.sqrt(G.shape[0])
    lam_prev = None
    change = math.inf
    for it in range(1, max_iter + 1):
        y = G @ x
        lam = float(np.vdot(x, y).real)
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return 0.0, 0.0, it
        x = y / ny
        if lam_prev is not None:
            change = abs(lam - lam_prev) / max(abs(lam), np.finfo(float).tiny)
            if change <= rel_tol:
                return math.sqrt(max(lam, 0.0)), change, it
        lam_prev = lam
    raise NormConvergenceError(
        f"power iteration did not reach rel_tol={rel_tol:g} in {max_iter} iterations "
        f"(last relative change {change:.3g})",
        estimate=math.sqrt(max(lam_prev or 0.0, 0.0)),
    )


def operator_norm(
    W: WindowMatrix,
    rel_tol: float = NORM_REL_TOL,
    max_iter: int = NORM_MAX_ITER,
    fallback: bool | None = None,
) -> NormEstimate:
    """Largest singular value of a window matrix.

    Power iteration on ``W^H W`` from the normalized all-ones vector. Windows of
    operators with a continuous band spectrum have clustered top singular values
    and can exhaust ``max_iter``; then a dense SVD is used when ``fallback`` is
    set (recorded as ``method="svd"``), otherwise :class:`NormConvergenceError`
    is raised. ``fallback=None`` takes the setting of :func:`svd_fallback`.
    """
    if fallback is None:
        fallback = _svd_fallback.get()
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    radii = (W.radius, W.radius)
    if not W.matrix.any():
        return NormEstimate(0.0, 0.0, radii, False, 0)
    try:
        value, achieved, iters = _power_iteration(W.matrix, rel_tol, max_iter)
    except NormConvergenceError:
        if not fallback:
            raise
        logger.info("power iteration hit the %d-iteration cap at radius %d; using dense SVD", max_iter, W.radius)
        try:
            value = float(np.linalg.norm(W.matrix, 2))
        except np.linalg.LinAlgError as exc:
            raise NormConvergenceError(f"dense SVD failed after power iteration cap: {exc}") from exc
        return NormEstimate(value, 0.0, radii, False, max_iter, "svd")
    return NormEstimate(value, achieved, radii, False, iters)


def stabilized_norm(
    A: PeriodicBandedOperator,
    m1: int | None = None,
    m2: int | None = None,
    *,
    commutator_with_position: bool = False,
    rel_tol: float = NORM_REL_TOL,
    max_iter: int = NORM_MAX_ITER,
    fallback: bool | None = None,
) -> NormEstimate:
    """Window norm of ``A`` (or of ``[X, A]``) at two radii.

    ``m2`` defaults to ``m1 + period + 4``; the larger-window value is reported.
    """
    if m1 is None:
        m1 = default_radius(A)
    if m2 is None:
        m2 = m1 + A.period + 4
    window = position_commutator_window if commutator_with_position else window_matrix
    e1 = operator_norm(window(A, m1), rel_tol, max_iter, fallback)
    e2 = operator_norm(window(A, m2), rel_tol, max_iter, fallback)
    stable = abs(e2.value - e1.value) <= STABILITY_TOL
    if not stable:
        logger.debug("window norm not stabilized: %.12g at M=%d vs %.12g at M=%d", e1.value, m1, e2.value, m2)
    method = e2.method if e1.method == e2.method else f"{e1.method}+{e2.method}"
    return NormEstimate(e2.value, max(e1.rel_tol, e2.rel_tol), (m1, m2), stable, e1.iterations + e2.iterations, method)


def position_commutator_norm(A: PeriodicBandedOperator, m1: int | None = None, m2: int | None = None, **kw) -> NormEstimate:
    """Stabilized window estimate of ``||[X, A]||``."""
    if m1 is None:
        m1 = max(default_radius(A), A.half_bandwidth + 1)
    return stabilized_norm(A, m1, m2, commutator_with_position=True, **kw)


# ------------------------------------------------------------ scalar checks


@dataclass(frozen=True)
class ScalarFit:
    """Best scalar-identity fit of a periodic banded operator.

    ``worst`` is the (offset, residue) of the largest violating coefficient.
    """

    gamma: complex
    max_offdiag: float
    max_diag_dev: float
    worst: tuple[int, int] | None

    def is_scalar(self, tol: float) -> bool:
        return self.max_offdiag <= tol and self.max_diag_dev <= tol


def scalar_fit(A: PeriodicBandedOperator) -> ScalarFit:
    diag = A.diagonal(0)
    gamma = complex(np.mean(diag))
    dev = np.abs(diag - gamma)
    max_diag_dev = float(dev.max(initial=0.0))
    worst = (0, int(np.argmax(dev))) if max_diag_dev > 0 else None
    max_off = 0.0
    for k, d in enumerate(A.offsets):
        if d == 0:
            continue
        mags = np.abs(A.coeffs[k])
        m = float(mags.max())
        if m > max_off:
            max_off = m
            if m > max_diag_dev:
                worst = (d, int(np.argmax(mags)))
    return ScalarFit(gamma, max_off, max_diag_dev, worst)


def as_scalar_identity(A: PeriodicBandedOperator, tol: float = 1e-10) -> tuple[complex, ScalarFit] | None:
    """``(gamma, fit)`` if ``A`` equals ``gamma * I`` within ``tol``, else ``None``."""
    fit = scalar_fit(A)
    if fit.is_scalar(tol):
        return fit.gamma, fit
    logger.debug("not a scalar identity: worst entry %s (offdiag %.3g, diag dev %.3g)", fit.worst, fit.max_offdiag, fit.max_diag_dev)
    return None

"""Walk operators: coin, shift, CMV walk, periodic field and the B/C decomposition.

Conventions (doubled index ``i``, ``r = sqrt(1 - t^2)``):

* ``W_t`` has 2x2 blocks ``[[r, t], [-t, r]]`` on the pairs ``(2j, 2j+1)``,
* ``V_t`` has the same blocks on ``(2j-1, 2j)``,
* ``U_t = V_t W_t = r^2 I + r t B + t^2 C``,
* ``D_n delta_i = alpha^i delta_i`` with ``alpha = exp(2 pi i k / n)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from cmvwalk import bandop
from cmvwalk.bandop import PeriodicBandedOperator, build, compose

IDENTITY_TOL = 1e-13
BLOCK_TOL = 1e-12


class ConstructionMismatch(AssertionError):
    """Two independent constructions of the same operator disagree."""


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmission parameter t must lie in [0, 1], got {t}")
    return t


@dataclass(frozen=True)
class WalkParams:
    t: float
    n: int = 1
    k: int = 1
    r: float = field(init=False)
    alpha: complex = field(init=False)

    def __post_init__(self):
        t = _check_t(self.t)
        n, k = int(self.n), int(self.k)
        if n < 1:
            raise ValueError(f"period n must be >= 1, got {n}")
        if n == 1:
            k = 1 if k in (0, 1) else k
        if not 1 <= k < max(n, 2):
            raise ValueError(f"root selector k must satisfy 1 <= k < max(n, 2), got k={k}, n={n}")
        if math.gcd(k, n) != 1:
            raise ValueError(f"gcd(k, n) must be 1, got gcd({k}, {n}) = {math.gcd(k, n)}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "r", math.sqrt(1.0 - t * t))
        object.__setattr__(self, "alpha", root_of_unity(n, k))


def root_of_unity(n: int, k: int = 1) -> complex:
    if n == 1:
        return 1 + 0j
    return cmath.exp(2j * math.pi * k / n)


# ------------------------------------------------------------ coin and shift


def build_coin(t: float) -> PeriodicBandedOperator:
    """``W_t``: up -> r up - t down, down -> r down + t up, same site."""
    t = _check_t(t)
    r = math.sqrt(1.0 - t * t)
    # residue 0 = up column, residue 1 = down column
    return build(2, {-1: [0.0, t], 0: [r, r], 1: [-t, 0.0]})


def build_shift(t: float) -> PeriodicBandedOperator:
    """``V_t``: up_j -> r up_j + t down_{j-1}, down_j -> r down_j - t up_{j+1}."""
    t = _check_t(t)
    r = math.sqrt(1.0 - t * t)
    return build(2, {-1: [t, 0.0], 0: [r, r], 1: [0.0, -t]})


def build_walk(t: float) -> PeriodicBandedOperator:
    """Field-free CMV walk ``U_t = V_t W_t``."""
    return compose(build_shift(t), build_coin(t))


def build_B() -> PeriodicBandedOperator:
    """``B = T_{-1} - T_{+1}`` on the doubled lattice."""
    return build(1, {-1: 1.0, 1: -1.0})


def build_C() -> PeriodicBandedOperator:
    """``C = |down><down| (x) T_{-1} + |up><up| (x) T_{+1}`` (pure conditional shift)."""
    return build(2, {-2: [0.0, 1.0], 2: [1.0, 0.0]})


def walk_from_decomposition(t: float) -> PeriodicBandedOperator:
    t = _check_t(t)
    r = math.sqrt(1.0 - t * t)
    return bandop.linear_combine([(r * r, bandop.identity()), (r * t, build_B()), (t * t, build_C())])


# --------------------------------------------------------------------- field


def build_field(n: int, k: int = 1) -> PeriodicBandedOperator:
    """``D_n`` with entry ``alpha^i`` at doubled index ``i`` (overall phase fixed to 1)."""
    params = WalkParams(0.0, n, k)
    return bandop.diagonal_operator(params.alpha ** np.arange(params.n))


def field_power(params: WalkParams, j: int) -> PeriodicBandedOperator:
    """``D_n^j`` for any integer ``j`` (negative powers are adjoints)."""
    return bandop.diagonal_operator(params.alpha ** (j * np.arange(params.n)))


def random_field(rng: np.random.Generator, period: int) -> PeriodicBandedOperator:
    """Diagonal unitary with i.i.d. uniform phases, repeated with ``period``.

    With ``period >= 4N + 2`` the walk started at site 0 never sees a repeat
    within ``N`` steps, so this stands in for an arbitrary non-periodic field.
    """
    return bandop.diagonal_operator(np.exp(2j * math.pi * rng.random(period)))


# -------------------------------------------------------- conjugated family


def B_conj(params: WalkParams, j: int) -> PeriodicBandedOperator:
    """Closed form ``B^(j) = alpha^-j T_{-1} - alpha^j T_{+1}``."""
    a = params.alpha**j
    return build(1, {-1: 1 / a, 1: -a})


def C_conj(params: WalkParams, j: int) -> PeriodicBandedOperator:
    """Closed form ``C^(j) = alpha^-2j |down><down| T_{-1} + alpha^2j |up><up| T_{+1}``."""
    a2 = params.alpha ** (2 * j)
    return build(2, {-2: [0.0, 1 / a2], 2: [a2, 0.0]})


def U_conj(params: WalkParams, j: int) -> PeriodicBandedOperator:
    r, t = params.r, params.t
    return bandop.linear_combine(
        [(r * r, bandop.identity()), (r * t, B_conj(params, j)), (t * t, C_conj(params, j))]
    )


_CLOSED_FORMS = {"B": B_conj, "C": C_conj, "U": U_conj}


def conjugated(which: str, j: int, params: WalkParams, check: bool = True) -> PeriodicBandedOperator:
    """``A^(j) = D_n^j A D_n^-j`` for ``A`` in ``{"B", "C", "U"}``.

    The closed form is returned; with ``check`` it is compared entrywise to the
    explicit conjugation and a mismatch raises :class:`ConstructionMismatch`.
    """
    try:
        closed = _CLOSED_FORMS[which]
    except KeyError:
        raise ValueError(f"unknown operator {which!r}; expected one of B, C, U") from None
    op = closed(params, j)
    if check:
        base = {"B": build_B, "C": build_C}.get(which, lambda: build_walk(params.t))()
        explicit = bandop.product([field_power(params, j), base, field_power(params, -j)])
        err = bandop.max_abs_diff(op, explicit)
        if err > IDENTITY_TOL:
            raise ConstructionMismatch(f"{which}^({j}): closed form and conjugation differ by {err:.3g}")
    return op


# ------------------------------------------------------------ step and block


def build_step(params: WalkParams) -> PeriodicBandedOperator:
    """One walk step in the periodic field, ``U_{t,n} = D_n U_t``."""
    return compose(build_field(params.n, params.k), build_walk(params.t))


def build_step_with_field(t: float, fld: PeriodicBandedOperator) -> PeriodicBandedOperator:
    return compose(fld, build_walk(t))


def build_block(params: WalkParams, check: bool = True) -> PeriodicBandedOperator:
    """``U^(0) U^(1) ... U^(n-1)``.

    With ``check``, confirms ``U_{t,n}^n = D_n (block) D_n^(n-1)`` entrywise.
    """
    block = bandop.product(U_conj(params, j) for j in range(params.n))
    if check:
        step = build_step(params)
        lhs = bandop.power(step, params.n)
        rhs = bandop.product([field_power(params, 1), block, field_power(params, params.n - 1)])
        err = bandop.max_abs_diff(lhs, rhs)
        if err > BLOCK_TOL:
            raise ConstructionMismatch(f"n-step block identity violated by {err:.3g}")
    return block


def alternate_factors(params: WalkParams) -> tuple[PeriodicBandedOperator, PeriodicBandedOperator]:
    """Position-dependent coin factorization ``U_{t,n} = V^(alpha) W^(alpha)``.

    Only used as a cross-check of :func:`build_step`.
    """
    t, r, a, n = params.t, params.r, params.alpha, params.n
    V = build(1, {-1: 0.0, 0: r, 1: 0.0})
    V = bandop.linear_combine([(1.0, V), (1.0, build(2, {-1: [t / a, 0.0], 1: [0.0, -a * t]}))])
    # W^(alpha) = [[r, t], [-a t, a r]] (x) diag(alpha^{2j}); site j owns indices 2j, 2j+1
    p = math.lcm(2, n)
    up = np.arange(0, p, 2)
    phase = a ** up  # alpha^{2j} at the up index 2j
    w_diag = np.empty(p, dtype=complex)
    w_diag[0::2] = r * phase
    w_diag[1::2] = a * r * phase
    w_low = np.zeros(p, dtype=complex)  # offset +1: up column -> down row
    w_low[0::2] = -a * t * phase
    w_up = np.zeros(p, dtype=complex)  # offset -1: down column -> up row
    w_up[1::2] = t * phase
    W = build(p, {-1: w_up, 0: w_diag, 1: w_low})
    return V, W

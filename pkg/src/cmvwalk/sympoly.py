"""Elementary symmetric polynomials of the non-commuting operators B^(j), C^(j).

``S_[a,b]^{l,m}`` is the sum over ``a <= j_1 < ... < j_l <= b`` and over
``eta in {0,1}^l`` with ``m`` ones of the ordered products
``A_{eta_1}^(j_1) ... A_{eta_l}^(j_l)`` where ``A_1 = C`` and ``A_0 = B``.
It is the coefficient of ``r^{2n-l-m} t^{l+m}`` in ``U^(0) U^(1) ... U^(n-1)``.

Two constructions are provided: brute-force enumeration of every product, and
the recursion that peels off the smallest superscript. They are used as
independent checks of each other.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from cmvwalk import bandop, model
from cmvwalk.bandop import PeriodicBandedOperator
from cmvwalk.model import WalkParams
from cmvwalk.reports import BoundReport, CollapseReport

TERM_CAP = 10**6
COLLAPSE_TOL = 1e-10
IDENTITY_TOL = 1e-12
NORM_TOL = 1e-8
LN_TOL = 1e-6


@dataclass(frozen=True)
class SymPolySpec:
    a: int
    b: int
    ell: int
    m: int
    params: WalkParams

    def __post_init__(self):
        n = self.params.n
        if self.a < 0 or self.b > n - 1 or self.b < self.a - 1:
            raise ValueError(f"interval [{self.a}, {self.b}] must lie in [0, {n - 1}]")
        if not 0 <= self.m <= self.ell <= self.length:
            raise ValueError(f"need 0 <= m <= l <= {self.length}, got l={self.ell}, m={self.m}")

    @property
    def length(self) -> int:
        return self.b - self.a + 1

    @classmethod
    def full(cls, params: WalkParams, ell: int, m: int) -> "SymPolySpec":
        return cls(0, params.n - 1, ell, m, params)


def term_count(length: int, ell: int, m: int) -> int:
    """Number of products in ``S^{l,m}`` over an interval of ``length`` superscripts."""
    if not 0 <= m <= ell <= length:
        raise ValueError(f"need 0 <= m <= l <= len, got len={length}, l={ell}, m={m}")
    return math.comb(length, ell) * math.comb(ell, m)


def _etas(ell: int, m: int) -> list[tuple[int, ...]]:
    """All ``eta in {0,1}^l`` with ``m`` ones, lexicographically ordered."""
    out = []
    for ones in itertools.combinations(range(ell), m):
        eta = [0] * ell
        for i in ones:
            eta[i] = 1
        out.append(tuple(eta))
    return sorted(out)


def enumerate_S(spec: SymPolySpec, cap: int = TERM_CAP) -> PeriodicBandedOperator:
    """Brute-force sum of all ordered products (j-tuple major, eta minor)."""
    count = term_count(spec.length, spec.ell, spec.m)
    if count > cap:
        raise ValueError(f"S^{{{spec.ell},{spec.m}}} has {count} terms, above the cap {cap}")
    if spec.ell == 0:
        return bandop.identity()
    p = spec.params
    factors = {
        j: (model.B_conj(p, j), model.C_conj(p, j)) for j in range(spec.a, spec.b + 1)
    }
    etas = _etas(spec.ell, spec.m)
    acc = bandop.zero()
    seen = 0
    for js in itertools.combinations(range(spec.a, spec.b + 1), spec.ell):
        for eta in etas:
            term = bandop.product(factors[j][e] for j, e in zip(js, eta))
            acc = bandop.linear_combine([(1.0, acc), (1.0, term)])
            seen += 1
    assert seen == count
    return acc


class _Recursion:
    """Memoized ``S_[a,b]^{l,m}`` built by splitting on the first superscript."""

    def __init__(self, params: WalkParams, b: int):
        self.params = params
        self.b = b
        self._B = {}
        self._C = {}
        self._memo: dict[tuple[int, int, int], PeriodicBandedOperator] = {}

    def factor_B(self, j: int) -> PeriodicBandedOperator:
        if j not in self._B:
            self._B[j] = model.B_conj(self.params, j)
        return self._B[j]

    def factor_C(self, j: int) -> PeriodicBandedOperator:
        if j not in self._C:
            self._C[j] = model.C_conj(self.params, j)
        return self._C[j]

    def S(self, a: int, ell: int, m: int) -> PeriodicBandedOperator:
        key = (a, ell, m)
        if key not in self._memo:
            self._memo[key] = self._build(a, ell, m)
        return self._memo[key]

    def _build(self, a: int, ell: int, m: int) -> PeriodicBandedOperator:
        length = self.b - a + 1
        if m < 0 or m > ell or ell > length:
            return bandop.zero()
        if ell == 0:
            return bandop.identity()
        terms = []
        if m >= 1:
            terms.append((1.0, bandop.compose(self.factor_C(a), self.S(a + 1, ell - 1, m - 1))))
        if m < ell:
            terms.append((1.0, bandop.compose(self.factor_B(a), self.S(a + 1, ell - 1, m))))
        if ell < length:
            terms.append((1.0, self.S(a + 1, ell, m)))
        return bandop.linear_combine(terms)


def recursive_S(spec: SymPolySpec) -> PeriodicBandedOperator:
    return _Recursion(spec.params, spec.b).S(spec.a, spec.ell, spec.m)


def all_S(params: WalkParams) -> dict[tuple[int, int], PeriodicBandedOperator]:
    """Every ``S_[0,n-1]^{l,m}`` with ``0 <= m <= l <= n`` from one shared recursion."""
    rec = _Recursion(params, params.n - 1)
    return {(ell, m): rec.S(0, ell, m) for ell in range(params.n + 1) for m in range(ell + 1)}


def xi_region(n: int) -> list[tuple[int, int]]:
    """Pairs ``(l, m)`` with ``0 <= m <= l <= n`` and ``l + m < n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [(ell, m) for ell in range(n + 1) for m in range(ell + 1) if ell + m < n]


# ------------------------------------------------------------ identities


def conjugation_identity_gap(params: WalkParams, ell: int, m: int) -> float:
    """Entrywise gap in ``D S_[0,n-1] D* = S_[1,n-1]^{l-1,m-1} C + S_[1,n-1]^{l-1,m} B + chi S_[1,n-1]^{l,m}``."""
    n = params.n
    if not 1 <= ell <= n or not 0 <= m <= ell:
        raise ValueError("need 1 <= l <= n and 0 <= m <= l")
    rec = _Recursion(params, n - 1)
    D = model.build_field(n, params.k)
    lhs = bandop.product([D, rec.S(0, ell, m), D.adjoint()])
    terms = []
    if m >= 1:
        terms.append((1.0, bandop.compose(rec.S(1, ell - 1, m - 1), model.build_C())))
    if m < ell:
        terms.append((1.0, bandop.compose(rec.S(1, ell - 1, m), model.build_B())))
    if ell != n:
        terms.append((1.0, rec.S(1, ell, m)))
    return bandop.max_abs_diff(lhs, bandop.linear_combine(terms))


def field_commutator(params: WalkParams, ell: int, m: int) -> float:
    """``max |[S_[0,n-1]^{l,m}, D_n]|`` entrywise."""
    S = _Recursion(params, params.n - 1).S(0, ell, m)
    return bandop.max_abs(bandop.commutator(S, model.build_field(params.n, params.k)))


def shifted_commutator_sum(params: WalkParams, ell: int, m: int) -> float:
    """``max |[C, S_[1,n-1]^{l-1,m-1}] + [B, S_[1,n-1]^{l-1,m}]|`` entrywise."""
    rec = _Recursion(params, params.n - 1)
    total = bandop.linear_combine(
        [
            (1.0, bandop.commutator(model.build_C(), rec.S(1, ell - 1, m - 1))),
            (1.0, bandop.commutator(model.build_B(), rec.S(1, ell - 1, m))),
        ]
    )
    return bandop.max_abs(total)


# -------------------------------------------------------------- collapse


def verify_collapse(
    n: int, k: int, ell: int, m: int, tol: float = COLLAPSE_TOL, method: str = "recursive"
) -> CollapseReport:
    """Check whether ``S_[0,n-1]^{l,m}`` is ``gamma * I``.

    Inside the region ``l + m < n`` the report passes only if the operator is
    scalar within ``tol`` and, for odd ``l - m``, ``|gamma| <= tol``. Outside
    that region nothing is claimed and the report always passes.
    """
    params = WalkParams(0.0, n, k)
    spec = SymPolySpec.full(params, ell, m)
    if method == "recursive":
        S = recursive_S(spec)
    elif method == "enumerate":
        S = enumerate_S(spec)
    else:
        raise ValueError(f"unknown method {method!r}")
    fit = bandop.scalar_fit(S)
    in_xi = ell + m < n
    ok = True
    if in_xi:
        ok = fit.is_scalar(tol)
        if (ell - m) % 2 == 1:
            ok = ok and abs(fit.gamma) <= tol
    return CollapseReport(
        n=n,
        k=k,
        ell=ell,
        m=m,
        gamma=fit.gamma,
        max_offdiag=fit.max_offdiag,
        max_diag_dev=fit.max_diag_dev,
        term_count=term_count(n, ell, m),
        in_xi=in_xi,
        tol=tol,
        passed=ok,
    )


# ------------------------------------------------------ commutator bounds


def commutator_bound(n: int, ell: int, m: int) -> int:
    """``2^{l-m} l C(n,l) C(l,m)``."""
    return 2 ** (ell - m) * ell * math.comb(n, ell) * math.comb(ell, m)


def commutator_bound_check(n: int, k: int, ell: int, m: int, radius: int | None = None) -> BoundReport:
    """``||[X, S^{l,m}]||`` on stabilized windows against its combinatorial bound.

    Inside the collapse region the norm must also vanish (below ``1e-8``).
    """
    if not 0 <= m <= ell <= n:
        raise ValueError("need 0 <= m <= l <= n")
    params = WalkParams(0.0, n, k)
    S = recursive_S(SymPolySpec.full(params, ell, m))
    est = bandop.position_commutator_norm(S, radius)
    bound = float(commutator_bound(n, ell, m))
    in_xi = ell + m < n
    passed = est.value <= bound + NORM_TOL and (not in_xi or est.value < NORM_TOL)
    return BoundReport(
        claim="commutator_bound",
        params={"n": n, "k": k, "ell": ell, "m": m},
        computed=est.value,
        bound=bound,
        tol=NORM_TOL,
        window_radii=est.radii,
        details={"in_xi": in_xi, "stabilized": est.stabilized, "norm_method": est.method},
        passed=passed,
    )


# ------------------------------------------------- expansion of [X, U^n]


def _grouped(params: WalkParams, S: dict) -> list[PeriodicBandedOperator]:
    """``Q_K = sum_{l+m=K} S^{l,m}`` for ``K = 0 .. 2n``."""
    n = params.n
    return [
        bandop.linear_combine([(1.0, S[(ell, K - ell)]) for ell in range(n + 1) if 0 <= K - ell <= ell])
        for K in range(2 * n + 1)
    ]


@dataclass(frozen=True)
class ExpansionReport:
    params: WalkParams
    radius: int
    block_gap: float
    field_gap: float
    low_order_max: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.block_gap, self.field_gap, self.low_order_max) <= self.tol

    def to_bound_report(self) -> BoundReport:
        worst = max(self.block_gap, self.field_gap, self.low_order_max)
        return BoundReport(
            claim="commutator_expansion",
            params={"t": self.params.t, "n": self.params.n, "k": self.params.k},
            computed=worst,
            bound=self.tol,
            window_radii=(self.radius, self.radius),
            details={"block_gap": self.block_gap, "field_gap": self.field_gap, "low_order_max": self.low_order_max},
        )


def expansion_check(params: WalkParams, radius: int | None = None, tol: float = COLLAPSE_TOL) -> ExpansionReport:
    """Compare ``[X, U^(0)...U^(n-1)]`` with ``sum_K r^{2n-K} t^K [X, Q_K]`` on a window.

    Also checks ``[X, U_{t,n}^n] = D_n [X, block] D_n^{n-1}`` (the field factors
    are diagonal, so the commutator only picks up phases) and that every
    ``[X, Q_K]`` with ``K < n`` vanishes.
    """
    n, r, t = params.n, params.r, params.t
    block = model.build_block(params)
    S = all_S(params)
    Q = _grouped(params, S)
    if radius is None:
        radius = max(bandop.default_radius(block), max(q.half_bandwidth for q in Q) + 1)
    lhs = bandop.position_commutator_window(block, radius).matrix
    rhs = np.zeros_like(lhs)
    low = 0.0
    for K, q in enumerate(Q):
        wq = bandop.position_commutator_window(q, radius).matrix
        rhs += r ** (2 * n - K) * t**K * wq
        if K < n:
            low = max(low, float(np.max(np.abs(wq), initial=0.0)))
    block_gap = float(np.max(np.abs(lhs - rhs)))

    step_n = bandop.power(model.build_step(params), n)
    full = bandop.position_commutator_window(step_n, radius)
    phases = params.alpha ** full.indices
    conj = phases[:, None] * lhs * (phases ** (n - 1))[None, :]
    field_gap = float(np.max(np.abs(full.matrix - conj)))
    return ExpansionReport(params, radius, block_gap, field_gap, low, tol)


@dataclass(frozen=True)
class LnResult:
    params: WalkParams
    window: bandop.WindowMatrix
    norm: bandop.NormEstimate
    bound: float
    step_norm: bandop.NormEstimate
    identity_gap: float

    @property
    def passed(self) -> bool:
        return self.norm.value <= self.bound + LN_TOL and self.identity_gap <= NORM_TOL

    def to_bound_report(self) -> BoundReport:
        return BoundReport(
            claim="Ln_bound",
            params={"t": self.params.t, "n": self.params.n, "k": self.params.k},
            computed=self.norm.value,
            bound=self.bound,
            tol=LN_TOL,
            window_radii=self.norm.radii,
            details={
                "identity_gap": self.identity_gap,
                "step_commutator_norm": self.step_norm.value,
                "stabilized": self.norm.stabilized,
            },
            passed=self.passed,
        )


def build_Ln(params: WalkParams, radius: int | None = None) -> LnResult:
    """``L_n = sum_{k=0}^n r^{n-k} t^k sum_{l+m=n+k} [X, S^{l,m}]`` on windows.

    Checks ``||L_n|| <= 3 n 4^{n-1}`` and ``t^n ||L_n|| / n = ||[X, U_{t,n}^n]|| / n``,
    both norms taken on the same pair of windows.
    """
    n, r, t = params.n, params.r, params.t
    Q = _grouped(params, all_S(params))
    inner = bandop.linear_combine([(r ** (n - k) * t**k, Q[n + k]) for k in range(n + 1)])
    step_n = bandop.power(model.build_step(params), n)
    if radius is None:
        radius = max(bandop.default_radius(step_n), inner.half_bandwidth + 1)
    m2 = radius + step_n.period + 4
    ln_norm = bandop.position_commutator_norm(inner, radius, m2)
    step_norm = bandop.position_commutator_norm(step_n, radius, m2)
    gap = abs(t**n * ln_norm.value - step_norm.value) / n
    window = bandop.position_commutator_window(inner, m2)
    return LnResult(params, window, ln_norm, 3.0 * n * 4.0 ** (n - 1), step_norm, gap)

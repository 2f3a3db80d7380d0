"""Numerical checks of the velocity bounds and supporting lemmas.

Every check returns :class:`~cmvwalk.reports.BoundReport` records. Norms of
``[X, U^N]`` are window estimates, which approach the true norm from below;
the window radii used are recorded on each report.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from cmvwalk import bandop, dynamics, model
from cmvwalk.bandop import NormEstimate, PeriodicBandedOperator
from cmvwalk.model import WalkParams
from cmvwalk.reports import BoundReport

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20231017
NORM_TOL = 1e-8
VELOCITY_TOL = 1e-10
EXACT_TOL = 1e-12
COMMUTE_TOL = 1e-13
OFFDIAG_TOL = 1e-12
DISTINCT_TOL = 1e-9

FieldSpec = int | PeriodicBandedOperator | None


def _field(spec: FieldSpec, k: int = 1) -> PeriodicBandedOperator:
    if spec is None:
        return bandop.identity()
    if isinstance(spec, PeriodicBandedOperator):
        if spec.lo != 0 or spec.hi != 0:
            raise ValueError("field must be a diagonal operator")
        return spec
    return model.build_field(int(spec), k)


def _describe_field(spec: FieldSpec, k: int) -> dict:
    if isinstance(spec, PeriodicBandedOperator):
        return {"field": "custom", "field_period": spec.period}
    return {"n": 1 if spec is None else int(spec), "k": k}


def commutator_radius(N: int, period: int) -> int:
    """Window radius (in sites) used for ``[X, U^N]``."""
    return 4 * N + period + 8


def position_commutator_power(
    step: PeriodicBandedOperator, N: int, radius: int | None = None
) -> NormEstimate:
    """Window estimate of ``||[X, step^N]|| = ||tau_N(X) - X||``."""
    UN = bandop.power(step, N)
    if radius is None:
        radius = commutator_radius(N, step.period)
    radius = max(radius, UN.half_bandwidth + 1)
    return bandop.position_commutator_norm(UN, radius)


# ---------------------------------------------------------------- linear bound


def check_linear_bound(
    t: float,
    field: FieldSpec = None,
    N: int = 10,
    *,
    k: int = 1,
    initial=None,
    radius: int | None = None,
    tol: float = NORM_TOL,
    seed: int | None = None,
) -> BoundReport:
    """``<X>/N <= ||tau_N(X) - X|| / N <= t``, with equality at ``t = 0`` and ``t = 1``.

    ``computed`` is the middle quantity. ``field`` is a period ``n``, a
    diagonal operator, or ``None`` for the field-free walk.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    fld = _field(field, k)
    step = model.build_step_with_field(t, fld)
    psi = dynamics.evolve(dynamics.default_initial_state() if initial is None else initial, step, N)
    velocity = dynamics.moment(psi, 1) / N
    est = position_commutator_power(step, N, radius)
    middle = est.value / N
    ok = velocity <= middle + tol and middle <= t + tol
    if t in (0.0, 1.0):
        ok = ok and abs(velocity - t) <= tol and abs(middle - t) <= tol
    return BoundReport(
        claim="linear_bound",
        params=dict(t=t, N=N, **_describe_field(field, k)),
        computed=middle,
        bound=t,
        tol=tol,
        window_radii=est.radii,
        seed=seed,
        details={"velocity": velocity, "stabilized": est.stabilized, "norm_method": est.method},
        passed=ok,
    )


def check_velocity_series(
    t: float,
    field: FieldSpec = None,
    N_max: int = 200,
    *,
    k: int = 1,
    moments: Sequence[int] = (2, 3),
    seed: int | None = None,
) -> BoundReport:
    """``<X^p>/N^p <= t`` for ``N = 1 .. N_max``; ``computed`` is the worst ratio over ``p`` and ``N``."""
    step = model.build_step_with_field(t, _field(field, k))
    series, higher, drift = dynamics.velocity_series_for_step(step, N_max, moments=tuple(moments))
    worst = float(series.velocity.max())
    worst_p = {1: worst}
    for p, values in higher.items():
        worst_p[p] = float((values / series.steps.astype(float) ** p).max())
    computed = max(worst_p.values())
    return BoundReport(
        claim="velocity_series",
        params=dict(t=t, N_max=N_max, **_describe_field(field, k)),
        computed=computed,
        bound=t,
        tol=VELOCITY_TOL,
        seed=seed,
        details={"worst_by_moment": {str(p): v for p, v in worst_p.items()}, "norm_drift": drift},
        passed=computed <= t + VELOCITY_TOL and drift < EXACT_TOL,
    )


# ------------------------------------------------------------ subsequence bound


def subsequence_bound(t: float, n: int) -> float:
    return 0.75 * (4 * t) ** n


def check_subsequence_bound(
    t: float, n: int, k_max: int = 1, *, k: int = 1, radius: int | None = None, tol: float = NORM_TOL
) -> list[BoundReport]:
    """``(1/N)||tau_N(X) - X|| <= (3/4)(4t)^n`` along ``N = n, 2n, .., k_max n``.

    The first report is ``(1/n)||[X, U^n]||`` itself. Each later report also
    checks the reduction ``(1/N)||tau_N(X) - X|| <= (1/n)||[X, U^n]||``,
    evaluating both sides on the same window radius.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    params = WalkParams(t, n, k)
    step = model.build_step(params)
    bound = subsequence_bound(t, n)
    reports = []
    for mult in range(1, k_max + 1):
        N = n * mult
        r = radius if radius is not None else commutator_radius(N, step.period)
        est = position_commutator_power(step, N, r)
        value = est.value / N
        details = {"multiple": mult, "stabilized": est.stabilized, "norm_method": est.method}
        ok = value <= bound + tol
        step_n = value
        if mult > 1:
            step_n = position_commutator_power(step, n, est.radii[0]).value / n
            ok = ok and value <= step_n + tol
        details["step_norm_per_n"] = step_n
        reports.append(
            BoundReport(
                claim="subsequence_bound",
                params={"t": t, "n": n, "k": k, "N": N},
                computed=value,
                bound=bound,
                tol=tol,
                window_radii=est.radii,
                details=details,
                passed=ok,
            )
        )
    return reports


# ----------------------------------------------------------------- main theorem


def threshold(t: float, n: int) -> float:
    """``N_0(t, n) = max(n (4t)^(1-n), n)``; for ``t = 0`` the bound holds from ``N = n`` on."""
    if t <= 0:
        return float(n)
    return max(n * (4 * t) ** (1 - n), float(n))


def default_N_range(t: float, n: int, count: int = 10) -> range:
    N0 = threshold(t, n)
    first = math.floor(N0) + 1
    return range(first, first + count)


def check_main_theorem(
    t: float,
    n: int,
    N_range: Iterable[int] | None = None,
    *,
    k: int = 1,
    radius: int | None = None,
    tol: float = NORM_TOL,
) -> list[BoundReport]:
    """``(1/N)||tau_N(X) - X|| <= (4t)^n`` for every ``N`` in the range, all above ``N_0``.

    For ``t >= 1/4`` the bound is at least 1 and the reports are marked vacuous.
    """
    N0 = threshold(t, n)
    Ns = list(default_N_range(t, n) if N_range is None else N_range)
    if not Ns:
        raise ValueError("empty N range")
    below = [N for N in Ns if N <= N0]
    if below:
        raise ValueError(f"N values {below} do not exceed the threshold N0 = {N0:.6g}")
    params = WalkParams(t, n, k)
    step = model.build_step(params)
    bound = (4 * t) ** n
    vacuous = t >= 0.25
    reports = []
    for N in Ns:
        est = position_commutator_power(step, N, radius)
        reports.append(
            BoundReport(
                claim="main_theorem",
                params={"t": t, "n": n, "k": k, "N": N},
                computed=est.value / N,
                bound=bound,
                tol=tol,
                window_radii=est.radii,
                details={"N0": N0, "vacuous": vacuous, "stabilized": est.stabilized, "norm_method": est.method},
            )
        )
    return reports


# ------------------------------------------------------- diagonal commutant


def commutant_projection(K: PeriodicBandedOperator, fld: PeriodicBandedOperator) -> PeriodicBandedOperator:
    """Keep the entries ``K_ij`` with ``d_i = d_j`` (the part of ``K`` commuting with ``D``)."""
    p = math.lcm(K.period, fld.period)
    d = fld.tiled(p)[0] if fld.coeffs.shape[0] else np.zeros(p)
    table = {}
    for off in K.offsets:
        coeffs = K.tiled(p)[off - K.lo]
        cols = np.arange(p)
        same = np.abs(d[(cols + off) % p] - d[cols]) <= DISTINCT_TOL
        table[off] = np.where(same, coeffs, 0.0)
    return bandop.build(p, table)


def group_average(K: PeriodicBandedOperator, params: WalkParams) -> PeriodicBandedOperator:
    """``(1/n) sum_j D^j K D^-j``, the conditional expectation onto the commutant of ``D``."""
    terms = [
        (1.0 / params.n, bandop.product([model.field_power(params, j), K, model.field_power(params, -j)]))
        for j in range(params.n)
    ]
    return bandop.linear_combine(terms)


def random_banded(rng: np.random.Generator, period: int, half_bandwidth: int) -> PeriodicBandedOperator:
    table = {}
    for off in range(-half_bandwidth, half_bandwidth + 1):
        table[off] = rng.standard_normal(period) + 1j * rng.standard_normal(period)
    return bandop.build(period, table)


def offdiag_mass(A: PeriodicBandedOperator) -> float:
    """Largest off-diagonal coefficient magnitude."""
    mass = 0.0
    for off in A.offsets:
        if off != 0:
            mass = max(mass, float(np.abs(A.diagonal(off)).max()))
    return mass


def check_commutant_diagonal(
    n: int, trials: int = 50, seed: int = DEFAULT_SEED, *, k: int = 1, half_bandwidth: int | None = None
) -> BoundReport:
    """Banded operators of bandwidth ``< n`` commuting with ``D_n`` are diagonal.

    Two routes per random ``K``: the entrywise projection onto ``{K_ij : d_i = d_j}``
    and the group average over powers of ``D_n``. Both must be diagonal and agree;
    the averaged operator must commute with ``D_n``. ``B`` is included as a
    fixed case whose projection must vanish.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    b = n - 1 if half_bandwidth is None else half_bandwidth
    if b >= n:
        raise ValueError("half bandwidth must be < n")
    params = WalkParams(0.0, n, k)
    fld = model.build_field(n, k)
    vals = params.alpha ** np.arange(n)
    sep = min(abs(vals[i] - vals[j]) for i in range(n) for j in range(i))
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    ops = [("B", model.build_B())] + [(f"trial{i}", random_banded(rng, 2 * n, b)) for i in range(trials)]
    for name, K in ops:
        proj = commutant_projection(K, fld)
        avg = group_average(K, params)
        commute = bandop.max_abs(bandop.commutator(avg, fld))
        agree = bandop.max_abs_diff(proj, avg)
        mass = max(offdiag_mass(proj), offdiag_mass(avg))
        worst = max(worst, mass)
        if commute > COMMUTE_TOL or agree > COMMUTE_TOL or mass >= OFFDIAG_TOL:
            failures.append(name)
        if name == "B" and not proj.is_zero():
            failures.append("B-projection")
    if failures:
        logger.info("commutant check failed for %s", failures)
    return BoundReport(
        claim="commutant_diagonal",
        params={"n": n, "k": k, "trials": trials, "half_bandwidth": b},
        computed=worst,
        bound=OFFDIAG_TOL,
        seed=seed,
        details={"min_separation": float(sep), "failures": failures},
        passed=not failures and sep > DISTINCT_TOL,
    )


# --------------------------------------------------------------- extremes


def check_extremes(field: FieldSpec = None, N_max: int = 50, *, k: int = 1, seed: int | None = None) -> list[BoundReport]:
    """``<X>/N`` equals exactly 1 at ``t = 1`` and 0 at ``t = 0`` for any diagonal field."""
    fld = _field(field, k)
    out = []
    for t in (1.0, 0.0):
        step = model.build_step_with_field(t, fld)
        s, _, _ = dynamics.velocity_series_for_step(step, N_max)
        dev = float(np.abs(s.velocity - t).max())
        out.append(
            BoundReport(
                claim="extreme_velocity",
                params=dict(t=t, N_max=N_max, **_describe_field(field, k)),
                computed=dev,
                bound=EXACT_TOL,
                seed=seed,
            )
        )
    return out


# ------------------------------------------------------------- exploration


@dataclass(frozen=True)
class ProbeRow:
    t: float
    n: int
    N: int
    velocity: float
    reference: float
    ratio: float
    peak_site: int

    def to_record(self) -> dict:
        return {
            "t": self.t,
            "n": self.n,
            "N": self.N,
            "velocity": self.velocity,
            "reference": self.reference,
            "ratio": self.ratio,
            "peak_site": self.peak_site,
        }


def conjecture_probe(t_grid: Iterable[float], n_grid: Iterable[int], N: int = 100, k: int = 1) -> list[ProbeRow]:
    """Measured ``<X>/N`` next to ``t^n``. Data only; nothing is asserted."""
    rows = []
    n_values = list(n_grid)
    for t in t_grid:
        for n in n_values:
            psi = dynamics.run(WalkParams(t, n, k), N)
            v = dynamics.moment(psi, 1) / N
            ref = t**n
            ratio = 0.0 if ref == 0 else v / ref
            peak = dynamics.peak_site(dynamics.site_distribution(psi))
            rows.append(ProbeRow(t, n, N, v, ref, ratio, peak))
    return rows


def monotone_sanity(t: float, n_max: int = 6, k: int = 1) -> tuple[list[float], list[int]]:
    """``(1/n)||[X, U^n]||`` for ``n = 1 .. n_max`` and the ``n`` where it increased.

    An increase is logged as a warning, never treated as a failure.
    """
    values = []
    for n in range(1, n_max + 1):
        step = model.build_step(WalkParams(t, n, k))
        values.append(position_commutator_power(step, n).value / n)
    rises = [n for n in range(2, n_max + 1) if values[n - 1] > values[n - 2] + NORM_TOL]
    if rises:
        logger.warning("(1/n)||[X,U^n]|| increased at n=%s for t=%g", rises, t)
    return values, rises


def random_field_for(N: int, rng: np.random.Generator) -> PeriodicBandedOperator:
    """Random phases with a period long enough that ``N`` steps from site 0 never see a repeat."""
    return model.random_field(rng, 4 * N + 2)

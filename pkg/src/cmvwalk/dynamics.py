"""Sparse time evolution, site distributions, position moments and velocities.

The position functional is the mean *absolute* site ``<X> = sum |j| P(j)``,
not the signed mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cmvwalk import bandop, model
from cmvwalk.bandop import PeriodicBandedOperator
from cmvwalk.lattice import UP, WalkerState, delta_state
from cmvwalk.model import WalkParams

NORM_TOL = 1e-10


def evolve(psi: WalkerState, step: PeriodicBandedOperator, N: int) -> WalkerState:
    """``step^N psi``, applied exactly one step at a time."""
    if N < 0:
        raise ValueError("number of steps must be >= 0")
    for _ in range(N):
        psi = bandop.apply(step, psi)
    return psi


def trajectory(psi: WalkerState, step: PeriodicBandedOperator, N: int):
    """Yield ``(k, step^k psi)`` for ``k = 0 .. N``."""
    yield 0, psi
    for k in range(1, N + 1):
        psi = bandop.apply(step, psi)
        yield k, psi


@dataclass(frozen=True)
class SiteDistribution:
    sites: np.ndarray
    prob_up: np.ndarray
    prob_down: np.ndarray

    @property
    def prob_total(self) -> np.ndarray:
        return self.prob_up + self.prob_down

    def total(self) -> float:
        return float(self.prob_total.sum())

    def rows(self):
        for s, u, d, tot in zip(self.sites, self.prob_up, self.prob_down, self.prob_total):
            yield int(s), float(u), float(d), float(tot)

    def __len__(self) -> int:
        return self.sites.size


def _site_probs(psi: WalkerState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if psi.is_empty():
        raise ValueError("empty state")
    lo = psi.lo - (psi.lo % 2)  # first up index of the lowest site
    hi = psi.hi + (1 - psi.hi % 2)
    amp = np.zeros(hi - lo + 1, dtype=np.complex128)
    amp[psi.lo - lo : psi.hi - lo + 1] = psi.array
    p = np.abs(amp) ** 2
    sites = np.arange(lo // 2, hi // 2 + 1)
    return sites, p[0::2], p[1::2]


def site_distribution(psi: WalkerState, tol: float = NORM_TOL) -> SiteDistribution:
    """Per-site probabilities split by spin, for a unit state."""
    nrm = psi.norm()
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"state is not normalized: norm = {nrm!r}")
    sites, up, down = _site_probs(psi)
    return SiteDistribution(sites, up, down)


def moment(psi: WalkerState, p: int = 1) -> float:
    """``<X^p> = sum_j |j|^p P(j)``."""
    if p < 1:
        raise ValueError("moment order must be >= 1")
    if psi.is_empty():
        return 0.0
    sites, up, down = _site_probs(psi)
    return float(np.sum(np.abs(sites).astype(float) ** p * (up + down)))


def default_initial_state() -> WalkerState:
    return delta_state(0, UP)


@dataclass(frozen=True)
class VelocitySeries:
    steps: np.ndarray
    mean_abs_position: np.ndarray

    @property
    def velocity(self) -> np.ndarray:
        return self.mean_abs_position / self.steps


def velocity_series_for_step(
    step: PeriodicBandedOperator, N_max: int, initial: WalkerState | None = None, moments: tuple[int, ...] = ()
) -> tuple[VelocitySeries, dict[int, np.ndarray], float]:
    """Velocities ``<X>/N`` for ``N = 1 .. N_max``.

    Also returns ``<X^p>`` for each requested ``p`` and the worst norm drift
    ``max_N | ||psi_N|| - 1 |`` seen along the way.
    """
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    psi = default_initial_state() if initial is None else initial
    steps = np.arange(1, N_max + 1)
    first = np.empty(N_max)
    higher = {p: np.empty(N_max) for p in moments}
    drift = 0.0
    for k, state in trajectory(psi, step, N_max):
        if k == 0:
            continue
        drift = max(drift, abs(state.norm() - 1.0))
        first[k - 1] = moment(state, 1)
        for p in moments:
            higher[p][k - 1] = moment(state, p)
    return VelocitySeries(steps, first), higher, drift


def velocity_series(params: WalkParams, N_max: int, initial: WalkerState | None = None) -> VelocitySeries:
    series, _, _ = velocity_series_for_step(model.build_step(params), N_max, initial)
    return series


def peak_site(dist: SiteDistribution) -> int:
    """Most probable site; ties go to the larger ``|site|``, then to the positive side."""
    if len(dist) == 0:
        raise ValueError("empty distribution")
    tot = dist.prob_total
    best = tot.max()
    candidates = [int(s) for s, p in zip(dist.sites, tot) if p == best]
    return max(candidates, key=lambda s: (abs(s), s))


def run(params: WalkParams, N: int, initial: WalkerState | None = None) -> WalkerState:
    psi = default_initial_state() if initial is None else initial
    return evolve(psi, model.build_step(params), N)

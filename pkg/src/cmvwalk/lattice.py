"""Doubled-index bookkeeping and finitely supported walker states.

The spin x site basis is flattened onto a single integer lattice by

    delta_{2j}   = |up>   (x) |j>
    delta_{2j+1} = |down> (x) |j>

Negative indices follow floor division, so index -1 is the down spin at site -1.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

UP = "up"
DOWN = "down"
_SPINS = (UP, DOWN)


def _check_spin(spin: str) -> str:
    if spin not in _SPINS:
        raise ValueError(f"spin must be 'up' or 'down', got {spin!r}")
    return spin


def index_of(site: int, spin: str) -> int:
    """Doubled index of ``spin (x) |site>``."""
    return 2 * int(site) + (0 if _check_spin(spin) == UP else 1)


def site_of(i: int) -> int:
    return int(i) // 2


def spin_of(i: int) -> str:
    return UP if int(i) % 2 == 0 else DOWN


def position_value(i: int) -> int:
    """Diagonal entry of the position operator X at doubled index ``i``: ``|site(i)|``."""
    return abs(int(i) // 2)


def position_values(indices: np.ndarray) -> np.ndarray:
    return np.abs(np.floor_divide(indices, 2))


class WalkerState:
    """Finitely supported complex vector on the doubled lattice.

    Amplitudes are kept in a contiguous array starting at doubled index ``lo``.
    Leading and trailing exact zeros are trimmed so ``lo``/``hi`` bracket the
    support; no magnitude-based pruning is done.
    """

    __slots__ = ("_lo", "_amp")

    def __init__(self, lo: int, amplitudes: Iterable[complex]):
        amp = np.array(amplitudes, dtype=np.complex128).ravel()
        nz = np.flatnonzero(amp)
        if nz.size == 0:
            self._lo = 0
            self._amp = np.zeros(0, dtype=np.complex128)
        else:
            self._lo = int(lo) + int(nz[0])
            self._amp = amp[nz[0] : nz[-1] + 1].copy()
        self._amp.setflags(write=False)

    @classmethod
    def from_mapping(cls, amplitudes: Mapping[int, complex]) -> "WalkerState":
        if not amplitudes:
            return cls(0, [])
        lo, hi = min(amplitudes), max(amplitudes)
        arr = np.zeros(hi - lo + 1, dtype=np.complex128)
        for i, a in amplitudes.items():
            arr[i - lo] = a
        return cls(lo, arr)

    @property
    def lo(self) -> int:
        return self._lo

    @property
    def hi(self) -> int:
        return self._lo + self._amp.size - 1

    @property
    def array(self) -> np.ndarray:
        """Read-only contiguous amplitudes on ``[lo, hi]`` (may contain interior zeros)."""
        return self._amp

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self._lo, self._lo + self._amp.size)

    @property
    def amplitudes(self) -> dict[int, complex]:
        return {int(i): complex(a) for i, a in zip(self.indices, self._amp) if a != 0}

    def is_empty(self) -> bool:
        return self._amp.size == 0

    def __getitem__(self, i: int) -> complex:
        k = int(i) - self._lo
        if 0 <= k < self._amp.size:
            return complex(self._amp[k])
        return 0j

    def norm(self) -> float:
        return float(np.linalg.norm(self._amp))

    def normalized(self) -> "WalkerState":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize the zero state")
        return WalkerState(self._lo, self._amp / nrm)

    def site_range(self) -> tuple[int, int]:
        return site_of(self.lo), site_of(self.hi)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WalkerState):
            return NotImplemented
        return self._lo == other._lo and np.array_equal(self._amp, other._amp)

    def __repr__(self) -> str:
        return f"WalkerState(lo={self.lo}, hi={self.hi}, norm={self.norm():.6g})"


def delta_state(site: int, spin: str, amplitude: complex = 1.0) -> WalkerState:
    if abs(amplitude) == 0:
        raise ValueError("delta_state needs a nonzero amplitude")
    return WalkerState(index_of(site, spin), [amplitude])


def superpose(terms: Iterable[tuple[int, str, complex]], normalize: bool = False) -> WalkerState:
    """Sum of ``amp * spin (x) |site>`` terms; repeated (site, spin) pairs add up."""
    acc: dict[int, complex] = {}
    for site, spin, amp in terms:
        i = index_of(site, spin)
        acc[i] = acc.get(i, 0j) + complex(amp)
    state = WalkerState.from_mapping(acc)
    if state.is_empty():
        raise ValueError("superposition has no nonzero amplitude")
    return state.normalized() if normalize else state


def spinor_state(up: complex, down: complex, site: int = 0) -> WalkerState:
    """Normalized ``phi (x) |site>`` with ``phi = (up, down)``."""
    nrm = math.hypot(abs(up), abs(down))
    if nrm == 0:
        raise ValueError("spinor must be nonzero")
    return WalkerState(index_of(site, UP), [up / nrm, down / nrm])

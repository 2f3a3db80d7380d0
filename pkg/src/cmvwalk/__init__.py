"""CMV-type discrete-time quantum walks in periodic diagonal fields.

Exact periodic banded operator algebra, walk construction, sparse dynamics and
numerical checks of the velocity bounds and symmetric-polynomial identities.
"""

from cmvwalk.lattice import UP, DOWN, WalkerState, delta_state, index_of, position_value, superpose
from cmvwalk.bandop import NormConvergenceError, PeriodicBandedOperator, build
from cmvwalk.model import WalkParams

__all__ = [
    "UP",
    "DOWN",
    "WalkerState",
    "delta_state",
    "superpose",
    "index_of",
    "position_value",
    "PeriodicBandedOperator",
    "NormConvergenceError",
    "build",
    "WalkParams",
]

__version__ = "0.1.0"

"""Report records produced by the verification routines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class BoundReport:
    """One checked inequality ``computed <= bound + tol``."""

    claim: str
    params: dict[str, Any]
    computed: float
    bound: float
    tol: float = 0.0
    window_radii: tuple[int, int] | None = None
    seed: int | None = None
    details: dict[str, Any] = field(default_factory=dict)
    passed: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "computed", float(self.computed))
        object.__setattr__(self, "bound", float(self.bound))
        if self.passed is None:
            object.__setattr__(self, "passed", bool(self.computed <= self.bound + self.tol))
        else:
            object.__setattr__(self, "passed", bool(self.passed))

    @property
    def margin(self) -> float:
        return self.bound - self.computed

    def to_record(self) -> dict[str, Any]:
        return {
            "claim": self.claim,
            "params": dict(self.params, **self.details),
            "computed": self.computed,
            "bound": self.bound,
            "margin": self.margin,
            "pass": self.passed,
            "window_radii": list(self.window_radii) if self.window_radii else None,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class CollapseReport:
    """Scalar-identity certificate for one symmetric polynomial ``S^{l,m}``."""

    n: int
    k: int
    ell: int
    m: int
    gamma: complex
    max_offdiag: float
    max_diag_dev: float
    term_count: int
    in_xi: bool
    tol: float
    passed: bool

    @property
    def collapsed(self) -> bool:
        return self.max_offdiag <= self.tol and self.max_diag_dev <= self.tol

    def to_record(self) -> dict[str, Any]:
        residual = max(self.max_offdiag, self.max_diag_dev)
        return {
            "claim": "collapse",
            "params": {
                "n": self.n,
                "k": self.k,
                "ell": self.ell,
                "m": self.m,
                "gamma": [self.gamma.real, self.gamma.imag],
                "max_offdiag": self.max_offdiag,
                "max_diag_dev": self.max_diag_dev,
                "term_count": self.term_count,
                "in_xi": self.in_xi,
            },
            "computed": residual,
            "bound": self.tol,
            "margin": self.tol - residual,
            "pass": self.passed,
            "window_radii": None,
            "seed": None,
        }

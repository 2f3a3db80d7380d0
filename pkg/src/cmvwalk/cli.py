"""Command-line interface.

Exit status: 0 when every emitted report passes, 1 when at least one fails,
2 for usage or configuration errors, 3 when a window norm does not converge.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from cmvwalk import __version__, bandop, dynamics, model, sympoly, verify
from cmvwalk.bandop import NormConvergenceError
from cmvwalk.lattice import spinor_state
from cmvwalk.model import WalkParams
from cmvwalk.reports import BoundReport

logger = logging.getLogger("cmvwalk")

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3

OUTPUT_DIR_ENV = "CMVWALK_OUTPUT_DIR"
COMMANDS = ("simulate", "verify-sympoly", "verify-bounds", "norms", "conjecture-probe")
CSV_HEADER = "site,prob_up,prob_down,prob_total"


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _complex(text: str) -> complex:
    return complex(text.replace(" ", ""))


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


@dataclass
class RunConfig:
    command: str
    t: float = 0.5
    period: int = 1
    root_k: int = 1
    steps: int = 100
    spin_up: complex = 1 + 0j
    spin_down: complex = 0j
    site: int = 0
    field: str = "periodic"
    format: str = "csv"
    output: str | None = None
    seed: int = verify.DEFAULT_SEED
    window_radius: int | None = None
    tol_norm: float = verify.NORM_TOL
    tol_collapse: float = sympoly.COLLAPSE_TOL
    k_max: int = 3
    n_count: int = 10
    t_grid: tuple[float, ...] = (0.2, 0.5, 0.8)
    n_grid: tuple[int, ...] = (1, 2, 3, 5, 10)
    strict_norms: bool = False

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not 0.0 <= self.t <= 1.0:
            raise ConfigError(f"t must lie in [0, 1], got {self.t}")
        if self.period < 1:
            raise ConfigError(f"period must be >= 1, got {self.period}")
        if self.period > 1 and math.gcd(self.root_k, self.period) != 1:
            raise ConfigError(f"gcd(root-k, period) must be 1, got gcd({self.root_k}, {self.period})")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.field not in ("periodic", "random"):
            raise ConfigError(f"field must be periodic or random, got {self.field!r}")
        if self.k_max < 0 or self.n_count < 0:
            raise ConfigError("k-max and n-count must be >= 0")
        if self.window_radius is not None and self.window_radius < 1:
            raise ConfigError("window radius must be >= 1")
        if min(self.tol_norm, self.tol_collapse) < 0:
            raise ConfigError("tolerances must be >= 0")
        if any(not 0.0 <= t <= 1.0 for t in self.t_grid) or any(n < 1 for n in self.n_grid):
            raise ConfigError("grid values out of range")
        try:
            WalkParams(self.t, self.period, self.root_k)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_CONVERTERS: dict[str, Callable[[str], Any]] = {
    "t": float,
    "period": int,
    "root_k": int,
    "steps": int,
    "spin_up": _complex,
    "spin_down": _complex,
    "site": int,
    "field": str.strip,
    "format": str.strip,
    "output": str.strip,
    "seed": int,
    "window_radius": _optional_int,
    "tol_norm": float,
    "tol_collapse": float,
    "k_max": int,
    "n_count": int,
    "t_grid": _floats,
    "n_grid": _ints,
    "strict_norms": _bool,
}


def read_config_file(path: str) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, Any] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


# ------------------------------------------------------------------ parser


def _common_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("walk")
    g.add_argument("--t", type=float, help="transmission parameter in [0, 1]")
    g.add_argument("--period", "--n", dest="period", type=int, help="field period n")
    g.add_argument("--root-k", dest="root_k", type=int, help="root selector k, gcd(k, n) = 1")
    g.add_argument("--steps", type=int, help="number of walk steps N")
    g.add_argument("--seed", type=int, help="seed for random fields")
    g.add_argument("--window-radius", dest="window_radius", type=_optional_int, help="window radius in sites")
    g.add_argument("--tol-norm", dest="tol_norm", type=float, help="tolerance for norm bounds")
    g.add_argument("--tol-collapse", dest="tol_collapse", type=float, help="tolerance for scalar collapse")
    g.add_argument(
        "--strict-norms",
        dest="strict_norms",
        action="store_true",
        help="fail with exit 3 instead of falling back to dense SVD",
    )
    o = p.add_argument_group("output")
    o.add_argument("--format", choices=("csv", "json"), help="output format")
    o.add_argument("--output", "-o", help=f"output file (default: ${OUTPUT_DIR_ENV}/<command>.<ext> or stdout)")
    o.add_argument("--config", help="key = value file; flags take precedence")
    o.add_argument("--verbose", "-v", action="count", help="more log output")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="cmvwalk", description="CMV quantum walks in periodic fields.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], argument_default=argparse.SUPPRESS, help="evolve and write the site distribution")
    sim.add_argument("--spin-up", dest="spin_up", type=_complex, help="initial up amplitude (complex)")
    sim.add_argument("--spin-down", dest="spin_down", type=_complex, help="initial down amplitude (complex)")
    sim.add_argument("--site", type=int, help="initial site")
    sim.add_argument("--field", choices=("periodic", "random"), help="periodic field D_n or seeded random phases")

    sub.add_parser("verify-sympoly", parents=[common], argument_default=argparse.SUPPRESS, help="scalar collapse of S^{l,m} over the region l + m < n")

    vb = sub.add_parser("verify-bounds", parents=[common], argument_default=argparse.SUPPRESS, help="subsequence and main velocity bounds")
    vb.add_argument("--k-max", dest="k_max", type=int, help="largest multiple N = k n in the subsequence check")
    vb.add_argument("--n-count", dest="n_count", type=int, help="number of N values above the threshold")

    sub.add_parser("norms", parents=[common], argument_default=argparse.SUPPRESS, help="norms of [X, B], [X, C], [X, rtB + t^2 C] and [X, U^N]")

    cp = sub.add_parser("conjecture-probe", parents=[common], argument_default=argparse.SUPPRESS, help="measured velocity next to t^n (no assertions)")
    cp.add_argument("--t-grid", dest="t_grid", type=_floats, help="comma separated t values")
    cp.add_argument("--n-grid", dest="n_grid", type=_ints, help="comma separated periods")
    return parser


def config_from_args(argv: Sequence[str] | None) -> tuple[RunConfig, int]:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    verbosity = ns.pop("verbose", 0) or 0
    values: dict[str, Any] = {}
    cfg_path = ns.pop("config", None)
    if cfg_path:
        values.update(read_config_file(cfg_path))
    values.update(ns)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    cfg = RunConfig(command=command, **{k: v for k, v in values.items() if k in known})
    cfg.validate()
    return cfg, verbosity


# ------------------------------------------------------------------ output


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def distribution_csv(dist: dynamics.SiteDistribution) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for site, up, down, total in dist.rows():
        buf.write(f"{site},{fmt_float(up)},{fmt_float(down)},{fmt_float(total)}\n")
    return buf.getvalue()


def distribution_json(dist: dynamics.SiteDistribution, meta: dict[str, Any]) -> str:
    sites = [
        {"site": s, "prob_up": u, "prob_down": d, "prob_total": tot} for s, u, d, tot in dist.rows()
    ]
    return json.dumps({"sites": sites, "meta": meta}) + "\n"


def parse_distribution_json(text: str) -> tuple[dynamics.SiteDistribution, dict[str, Any]]:
    obj = json.loads(text)
    rows = obj["sites"]
    dist = dynamics.SiteDistribution(
        np.array([r["site"] for r in rows], dtype=int),
        np.array([r["prob_up"] for r in rows], dtype=float),
        np.array([r["prob_down"] for r in rows], dtype=float),
    )
    return dist, obj["meta"]


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_lines(records: Sequence[dict[str, Any]]) -> str:
    return "".join(json.dumps(r, default=_json_default) + "\n" for r in records)


def _destination(cfg: RunConfig, ext: str) -> str | None:
    if cfg.output:
        return cfg.output
    out_dir = os.environ.get(OUTPUT_DIR_ENV)
    if out_dir:
        return os.path.join(out_dir, f"{cfg.command}.{ext}")
    return None


def write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------- commands


def _simulate(cfg: RunConfig) -> tuple[str, str, list[dict]]:
    if cfg.field == "random":
        fld = verify.random_field_for(cfg.steps, np.random.default_rng(cfg.seed))
    else:
        fld = model.build_field(cfg.period, cfg.root_k)
    step = model.build_step_with_field(cfg.t, fld)
    psi = dynamics.evolve(spinor_state(cfg.spin_up, cfg.spin_down, cfg.site), step, cfg.steps)
    dist = dynamics.site_distribution(psi)
    if cfg.format == "csv":
        return distribution_csv(dist), "csv", []
    meta = {"t": cfg.t, "n": cfg.period, "k": cfg.root_k, "N": cfg.steps, "seed": cfg.seed, "field": cfg.field}
    return distribution_json(dist, meta), "json", []


def _verify_sympoly(cfg: RunConfig) -> list[dict]:
    return [
        sympoly.verify_collapse(cfg.period, cfg.root_k, ell, m, tol=cfg.tol_collapse).to_record()
        for ell, m in sympoly.xi_region(cfg.period)
    ]


def _verify_bounds(cfg: RunConfig) -> list[dict]:
    reports = []
    kw = {"k": cfg.root_k, "radius": cfg.window_radius, "tol": cfg.tol_norm}
    if cfg.k_max:
        reports += verify.check_subsequence_bound(cfg.t, cfg.period, cfg.k_max, **kw)
    if cfg.n_count:
        Ns = verify.default_N_range(cfg.t, cfg.period, cfg.n_count)
        reports += verify.check_main_theorem(cfg.t, cfg.period, Ns, **kw)
    return [r.to_record() for r in reports]


def _norms(cfg: RunConfig) -> list[dict]:
    params = WalkParams(cfg.t, cfg.period, cfg.root_k)
    r, t = params.r, params.t
    cases = [
        ("B", model.build_B(), 1.0),
        ("C", model.build_C(), 1.0),
        ("rtB+t^2C", bandop.linear_combine([(r * t, model.build_B()), (t * t, model.build_C())]), t),
    ]
    records = []
    for name, op, expected in cases:
        m1 = cfg.window_radius if cfg.window_radius else None
        est = bandop.position_commutator_norm(op, m1)
        records.append(
            BoundReport(
                claim="position_commutator_norm",
                params={"operator": name, "t": t, "stabilized": est.stabilized, "norm_method": est.method},
                computed=est.value,
                bound=expected,
                tol=cfg.tol_norm,
                window_radii=est.radii,
                passed=abs(est.value - expected) <= cfg.tol_norm and est.stabilized,
            ).to_record()
        )
    if cfg.steps >= 1:
        rep = verify.check_linear_bound(
            cfg.t, cfg.period, cfg.steps, k=cfg.root_k, radius=cfg.window_radius, tol=cfg.tol_norm
        )
        records.append(rep.to_record())
    return records


def _probe(cfg: RunConfig) -> tuple[str, str]:
    rows = verify.conjecture_probe(cfg.t_grid, cfg.n_grid, cfg.steps, cfg.root_k) if cfg.steps else []
    if cfg.format == "json":
        return "".join(json.dumps(r.to_record()) + "\n" for r in rows), "jsonl"
    buf = io.StringIO()
    buf.write("t,n,N,velocity,reference,ratio,peak_site\n")
    for r in rows:
        buf.write(
            f"{fmt_float(r.t)},{r.n},{r.N},{fmt_float(r.velocity)},{fmt_float(r.reference)},"
            f"{fmt_float(r.ratio)},{r.peak_site}\n"
        )
    return buf.getvalue(), "csv"


def execute(cfg: RunConfig) -> int:
    """Run one configured command and write its output; returns the exit status."""
    with bandop.svd_fallback(not cfg.strict_norms):
        if cfg.command == "simulate":
            text, ext, records = _simulate(cfg)
        elif cfg.command == "conjecture-probe":
            text, ext = _probe(cfg)
            records = []
        else:
            runner = {"verify-sympoly": _verify_sympoly, "verify-bounds": _verify_bounds, "norms": _norms}
            records = runner[cfg.command](cfg)
            text, ext = report_lines(records), "jsonl"
    write_output(text, _destination(cfg, ext))
    failed = [r for r in records if not r["pass"]]
    for r in failed:
        logger.error("check failed: %s %s computed=%.6g bound=%.6g", r["claim"], r["params"], r["computed"], r["bound"])
    return EXIT_VIOLATION if failed else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg, verbosity = config_from_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    except ConfigError as exc:
        print(f"cmvwalk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return execute(cfg)
    except NormConvergenceError as exc:
        print(f"cmvwalk: norm did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ValueError, OSError) as exc:
        print(f"cmvwalk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

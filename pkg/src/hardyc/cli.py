"""``hardyc`` command line: potential values, bounds, eigenvalue estimates, sweeps and suites.

Every command writes one JSON record (schema ``hardyc/1``) that embeds a run
manifest; ``sweep --out csv`` writes the bare table instead.  Exit codes:
0 success, 1 verification failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import time
from importlib import resources
from typing import Sequence

import numpy as np

from . import __version__
from .geometry import LatticeConfig, ReducedCoords, reduced_coords
from .potential import PoleError, eval_closed, eval_series
from .spectral import GridError, estimate_mu, ladder, sweep_R, worker_count
from .suites import SUITES, run_suite
from .supersolution import C1, lambda_lower, optimal_alpha

SCHEMA_ID = "hardyc/1"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("hardyc").joinpath("schema/hardyc-1.json").read_text("utf-8"))


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"malformed {what} {text!r}: expected comma-separated numbers") from None
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"malformed {what} {text!r}: non-finite entry")
    return vals


_GRID_RE = re.compile(r"^\s*(\d+)\s*x\s*(\d+)\s*$")


def parse_grid(text: str) -> tuple[int, int]:
    m = _GRID_RE.match(text)
    if not m:
        raise UsageError(f"malformed grid {text!r}: expected NsxNr, e.g. 256x128")
    return int(m.group(1)), int(m.group(2))


def _sizes(args) -> list[tuple[int, int]]:
    if getattr(args, "ladder", None):
        return [parse_grid(t) for t in args.ladder.split(",")]
    return [parse_grid(args.grid)]


def _config(d: int, R: float) -> LatticeConfig:
    if d < 3:
        raise UsageError(f"d must be >= 3, got {d}")
    if not (R > 0 and math.isfinite(R)):
        raise UsageError(f"R must be positive, got {R}")
    return LatticeConfig.normalized_config(d, R)


def _sig15(x: float) -> float:
    return float(f"{x:.15g}")


def _delta(args, cfg: LatticeConfig) -> float:
    return args.delta if args.delta is not None else args.delta_factor * cfg.h


# ---------------------------------------------------------------------------

def cmd_potential(args) -> tuple[dict, int]:
    if args.d < 2:
        raise UsageError(f"d must be >= 2, got {args.d}")
    cfg = LatticeConfig.normalized_config(args.d, args.R)
    if args.point is not None:
        p = _floats(args.point, "point")
        if len(p) != args.d:
            raise UsageError(f"point has {len(p)} coordinates, expected d = {args.d}")
        c = reduced_coords(np.array(p), cfg)
    else:
        v = _floats(args.reduced, "reduced point")
        if len(v) != 2 or v[1] < 0:
            raise UsageError("reduced point must be 'a,rho' with rho >= 0")
        c = ReducedCoords(v[0], v[1])
    if c.is_pole():
        raise UsageError(f"point ({c.a}, {c.rho}) is a pole of V")
    closed = series = None
    bound = None
    if args.method in ("closed", "both"):
        closed = eval_closed(c, cfg).value
    if args.method in ("series", "both"):
        sv = eval_series(c, cfg, args.tol)
        series, bound = sv.value, sv.error_bound
    agree = None
    if closed is not None and series is not None:
        agree = bool(abs(closed - series) <= args.tol + bound + 4 * np.finfo(float).eps * abs(series))
    return {"a": c.a, "rho": c.rho, "value_closed": closed, "value_series": series,
            "error_bound": bound, "agree": agree}, EXIT_OK


def cmd_bounds(args) -> tuple[dict, int]:
    _config(args.d, args.R)
    return {"lower": _sig15(lambda_lower(args.R, args.d)), "upper": _sig15((args.d - 2) ** 2 / 4.0),
            "C1": _sig15(C1(args.R, args.d)), "alpha_opt": _sig15(optimal_alpha(args.R, args.d))}, EXIT_OK


def cmd_mu(args) -> tuple[dict, int]:
    cfg = _config(args.d, args.R)
    sizes = _sizes(args)
    try:
        est = estimate_mu(cfg, ladder(cfg, sizes, _delta(args, cfg)), tol=args.tol)
    except GridError as exc:
        raise UsageError(str(exc)) from None
    ok = est.sandwich_ok and est.monotone
    return est.as_dict(), EXIT_OK if ok else EXIT_FAIL


def _sweep_rows(args) -> list[dict]:
    R_list = _floats(args.R_list, "R list")
    if any(b >= a for a, b in zip(R_list[:-1], R_list[1:])):
        raise UsageError(f"R list must be strictly decreasing, got {args.R_list}")
    for R in R_list:
        _config(args.d, R)
    try:
        rows = sweep_R(args.d, R_list, _sizes(args), args.delta_factor, args.tol)
    except GridError as exc:
        raise UsageError(str(exc)) from None
    return [{"R": r.R, "lower": r.lower, "mu_hat": r.mu_hat, "upper": r.upper, "gap": r.gap,
             "grid": r.grid, "delta": r.delta} for r in rows]


CSV_COLUMNS = ("R", "lower", "mu_hat", "upper", "gap", "grid", "delta")


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([row[c] if isinstance(row[c], str) else repr(float(row[c])) for c in CSV_COLUMNS])
    return buf.getvalue()


def cmd_verify(args) -> tuple[dict, int]:
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    if args.samples is not None and args.samples < 1:
        raise UsageError("--samples must be >= 1")
    cfg = _config(args.d, args.R)
    try:
        rep = run_suite(args.suite, cfg, args.samples, args.seed, _sizes(args), args.delta_factor)
    except GridError as exc:
        raise UsageError(str(exc)) from None
    return rep.as_dict(), EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hardyc", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"hardyc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False):
        sp.add_argument("--d", type=int, default=3, help="space dimension")
        sp.add_argument("--R", type=float, default=1.0, help="cylinder radius")
        sp.add_argument("--output", "-o", default="-", help="output file ('-' for stdout)")
        sp.add_argument("--timing", action="store_true",
                        help="record wall time in the manifest (makes output non-reproducible)")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="64-bit seed for sample points")

    def grid_opts(sp, default="256x128"):
        sp.add_argument("--grid", default=default, help="grid size NsxNr")
        sp.add_argument("--ladder", default=None, help="comma-separated nested grids, coarse to fine")
        sp.add_argument("--delta-factor", type=float, default=1e-3,
                        help="pole-exclusion radius as a multiple of h")
        sp.add_argument("--tol", type=float, default=1e-10, help="eigen-residual tolerance")

    sp = sub.add_parser("potential", help="evaluate V at a point")
    common(sp)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--point", help="Cartesian point x1,...,xd")
    g.add_argument("--reduced", help="reduced coordinates a,rho")
    sp.add_argument("--method", choices=("closed", "series", "both"), default="both")
    sp.add_argument("--tol", type=float, default=1e-10)

    sp = sub.add_parser("verify", help="run a verification suite")
    common(sp, seed=True)
    sp.add_argument("--suite", required=True, help=f"one of: {', '.join(SUITES)}")
    sp.add_argument("--samples", type=int, default=None, help="points or test functions to draw")
    grid_opts(sp)

    sp = sub.add_parser("bounds", help="analytic Hardy bounds and supersolution constants")
    common(sp)

    sp = sub.add_parser("mu", help="finite-element estimate of the Hardy constant")
    common(sp)
    grid_opts(sp)
    sp.add_argument("--delta", type=float, default=None, help="absolute pole-exclusion radius")

    sp = sub.add_parser("sweep", help="estimates over decreasing radii")
    common(sp)
    sp.add_argument("--R-list", dest="R_list", required=True, help="strictly decreasing radii")
    sp.add_argument("--out", choices=("csv", "json"), default="csv")
    grid_opts(sp)
    return p


COMMANDS = {"potential": cmd_potential, "verify": cmd_verify, "bounds": cmd_bounds,
            "mu": cmd_mu, "sweep": None}


def _config_echo(args) -> dict:
    skip = {"output", "timing", "command", "seed"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write(text: str, target: str) -> None:
    if target == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def render(command: str, args, result: dict, wall: float | None) -> str:
    manifest = {"command": command, "config": _config_echo(args),
                "seed": getattr(args, "seed", None), "version": __version__,
                "wall_time_s": wall}
    record = {"schema": SCHEMA_ID, "manifest": manifest, "result": result}
    return json.dumps(record, indent=2, sort_keys=True, allow_nan=False) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    t0 = time.perf_counter()
    try:
        worker_count()
        if args.command == "sweep":
            rows = _sweep_rows(args)
            code = EXIT_OK
            result = {"rows": rows}
            if args.out == "csv":
                _write(rows_to_csv(rows), args.output)
                return code
        else:
            result, code = COMMANDS[args.command](args)
    except (UsageError, PoleError, ValueError) as exc:
        print(f"hardyc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    wall = time.perf_counter() - t0 if args.timing else None
    _write(render(args.command, args, result, wall), args.output)
    return code


if __name__ == "__main__":
    sys.exit(main())

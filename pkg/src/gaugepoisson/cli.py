"""Command-line front end: ``gaugepoisson verify|average|simulate|scenarios``.

Exit codes: 0 success, 1 a check or conservation test failed, 2 configuration
or usage error, 3 runtime or domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, DomainExitError, GaugePoissonError, InvalidActionError
from .scenario import (
    Runner,
    average_table,
    build_scenario,
    builtin_names,
    conservation,
    load_config,
    parse_grid,
    read_points,
    simulate,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None, stream=None) -> None:
    if out is None:
        (stream or sys.stdout).write(text)
        return
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load(args):
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    try:
        return build_scenario(cfg)
    except (DimensionError, ValueError) as exc:
        raise ConfigError(f"inconsistent scenario: {exc}") from exc


def cmd_verify(args) -> int:
    scn = _load(args)
    report = Runner(scn, args.seed, args.parallel).run()
    _emit(_dump_json(report), args.out)
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {c['name']}: residual {c['residual']:.3e} (tol {c['tolerance']:.1e})", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_average(args) -> int:
    scn = _load(args)
    Y = None
    if args.points is not None:
        Q, Y = read_points(args.points, scn.m, scn.n)
    else:
        spec = args.grid or scn.config.get("average", {}).get("grid")
        if spec is None:
            raise ConfigError("average needs --grid, --points or average.grid in the config")
        Q = parse_grid(spec, scn.m)
    header, rows = average_table(scn, Q, Y)
    _emit(_csv_text(header, rows), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = _load(args)
    traj = simulate(scn)
    m, n = scn.dims
    header = ["t"] + [f"p{i + 1}" for i in range(m)] + [f"q{i + 1}" for i in range(m)] + [f"y{a + 1}" for a in range(n)]
    rows = np.column_stack([traj.times, traj.states])
    report = conservation(scn, traj)
    _emit(_csv_text(header, rows), args.out)
    report_path = args.report
    if report_path is None and args.out is not None:
        report_path = str(Path(args.out).with_suffix("")) + ".conservation.json"
    _emit(_dump_json(report), report_path, sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_scenarios(args) -> int:
    for name in builtin_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gaugepoisson", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="scenario JSON file or builtin scenario name")
        p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        p.add_argument("--seed", type=int, default=None, metavar="U64", help="override verification.seed")
        p.add_argument("--parallel", type=int, default=1, metavar="N", help="worker threads for independent checks")

    p = sub.add_parser("verify", help="run the configured checks and write a JSON report")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("average", help="tabulate the averaged gauge form")
    common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--grid", metavar="SPEC", help="lo:hi:count for every axis, or one triple per axis, comma-separated")
    g.add_argument("--points", metavar="PATH", help="CSV with columns q1..qm and optionally y1..yn")
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("simulate", help="integrate the configured trajectory")
    common(p)
    p.add_argument("--report", metavar="PATH", help="conservation JSON (default: next to --out, else stderr)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenarios", help="list builtin scenarios")
    p.set_defaults(func=cmd_scenarios)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "parallel", 1) < 1:
        print("error: --parallel must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InvalidActionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainExitError as exc:
        print(f"domain error: {exc} (last valid t = {exc.t!r})", file=sys.stderr)
        return EXIT_RUNTIME
    except (DomainError, GaugePoissonError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

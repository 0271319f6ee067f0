"""Command-line driver: ``obsvkit analyze`` and ``obsvkit verify <battery>``.

Exit status: 0 when every check passes (degenerate runs always exit 0),
1 when a check fails, 2 on invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time

from . import __version__
from .batteries import (
    Tolerances,
    run_analyze,
    run_brackets,
    run_flow,
    run_gradients,
    run_identities,
)
from .errors import InvalidConfig
from .lie import DEFAULT_DT
from .scenario import DEGENERACIES

SEED_ENV = "OBSVKIT_SEED"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise InvalidConfig(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidConfig(f"--tol-override expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obsvkit", description="Numerical observability checks for VINS/LINS.")
    p.add_argument("--version", action="version", version=f"obsvkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials):
        sp.add_argument("--trials", type=int, default=trials)
        sp.add_argument("--seed", type=int, default=None, help=f"base seed (default: ${SEED_ENV} or 0)")
        sp.add_argument("--tol-override", "--tol-overrides", dest="tol_override", action="append",
                        metavar="KEY=VALUE", default=[], help="override a named tolerance; repeatable")
        sp.add_argument("--out", default=None, help="write the JSON report here")

    an = sub.add_parser("analyze", help="nullspace battery over seeded scenarios")
    an.add_argument("--system", choices=("vins", "lins"), required=True)
    an.add_argument("--features", type=int, required=True)
    an.add_argument("--degeneracy", choices=DEGENERACIES, default="none")
    common(an, 50)

    ver = sub.add_parser("verify", help="identity batteries")
    vsub = ver.add_subparsers(dest="battery", required=True)
    for name, trials in (("gradients", 100), ("identities", 1000), ("brackets", 100)):
        common(vsub.add_parser(name), trials)
    fl = vsub.add_parser("flow")
    fl.add_argument("--duration", type=float, default=1.0)
    fl.add_argument("--dt", type=float, default=DEFAULT_DT)
    fl.add_argument("--jacobian", choices=("ad", "fd"), default="ad",
                    help="how Df is evaluated inside the variational equation")
    common(fl, 20)
    return p


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".obsvkit-", suffix=".json", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _config(args, seed: int, tol: Tolerances) -> dict:
    cfg = {"trials": args.trials, "seed": seed, "tolerances": tol.as_dict()}
    if args.command == "analyze":
        cfg.update(mode=args.system, n_features=args.features, degeneracy=args.degeneracy)
    elif args.battery == "flow":
        cfg.update(duration=args.duration, dt=args.dt, jacobian=args.jacobian)
    return cfg


def execute(args) -> dict:
    seed = args.seed if args.seed is not None else _default_seed()
    tol = Tolerances().with_overrides(_parse_overrides(args.tol_override))
    start = time.perf_counter()
    if args.command == "analyze":
        body = run_analyze(args.system, args.features, args.trials, seed, args.degeneracy, tol)
        command = "analyze"
    else:
        command = f"verify {args.battery}"
        if args.battery == "gradients":
            body = run_gradients(args.trials, seed, tol)
        elif args.battery == "identities":
            body = run_identities(args.trials, seed, tol)
        elif args.battery == "brackets":
            body = run_brackets(args.trials, seed, tol)
        else:
            body = run_flow(args.trials, seed, args.duration, args.dt, tol, args.jacobian)
    report = {
        "tool": "obsvkit",
        "version": __version__,
        "command": command,
        "config": _config(args, seed, tol),
        **body,
    }
    report.setdefault("informational", False)
    report["duration_s"] = time.perf_counter() - start
    return report


def _print_summary(report: dict, out=None) -> None:
    out = out or sys.stdout
    verdict = "PASS" if report["passed"] else "FAIL"
    if report["informational"]:
        verdict += " (informational)"
    print(f"{report['command']}: {verdict}  trials={report['config']['trials']} "
          f"seed={report['config']['seed']}  {report['duration_s']:.2f}s", file=out)
    summary = report.get("summary", {})
    if "null_dims" in summary:
        dims = ", ".join(f"{d}: {c}" for d, c in summary["null_dims"].items())
        print(f"  null dimension counts  {dims}", file=out)
        if summary["hypothesis_violations"]:
            print(f"  hypothesis violations  {summary['hypothesis_violations']}", file=out)
    for group, entries in summary.items():
        if not isinstance(entries, dict):
            if isinstance(entries, float):
                print(f"  {group:<40s} {entries:.3e}", file=out)
            continue
        if "max" in entries:
            print(f"  {group:<40s} max {entries['max']:.3e}  mean {entries['mean']:.3e}", file=out)
            continue
        for name, st in entries.items():
            if isinstance(st, dict) and "max" in st:
                print(f"  {group}/{name:<40s} max {st['max']:.3e}  mean {st['mean']:.3e}", file=out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        report = execute(args)
        text = json.dumps(report, indent=2, allow_nan=False)
        if args.out:
            write_atomic(args.out, text + "\n")
    except InvalidConfig as exc:
        print(f"obsvkit: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _print_summary(report)
    if report["informational"] or report["passed"]:
        return EXIT_OK
    return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

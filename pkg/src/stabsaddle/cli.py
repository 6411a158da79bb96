"""Command-line entry point: run sweeps, acceptance suites and tuning lookups."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import amdp, gates, harness, solvers
from .geometry import GeometryError

EXIT_OK, EXIT_CONFIG, EXIT_GATE = 0, 2, 3

TUNING_PARAMS = {
    "Theorem1": ("L_M", "T"),
    "Corollary1": ("L", "gamma_x", "gamma_y", "T"),
    "Theorem3": ("S", "A", "T"),
}


def _parse_pairs(pairs):
    out = {}
    for p in pairs:
        key, sep, val = p.partition("=")
        if not sep:
            raise harness.ConfigError(f"expected key=value, got {p!r}")
        out[key] = float(val)
    return out


def tuning_table(theorem: str, values: dict) -> dict:
    if theorem not in TUNING_PARAMS:
        raise harness.ConfigError(f"unknown theorem {theorem!r}; choose from {', '.join(TUNING_PARAMS)}")
    need = TUNING_PARAMS[theorem]
    if set(values) != set(need):
        raise harness.ConfigError(f"{theorem} needs exactly {', '.join(need)}")
    T = int(values["T"])
    if theorem == "Theorem1":
        tu = solvers.tune_theorem1(values["L_M"], T)
    elif theorem == "Corollary1":
        tu = solvers.tune_corollary1(values["L"], values["gamma_x"], values["gamma_y"], T)
    else:
        tu = amdp.tune_theorem3(int(values["S"]), int(values["A"]), T)
    return dict(vars(tu))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stabsaddle", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a sweep described by a JSON config")
    run.add_argument("config")
    run.add_argument("--gate", action="store_true", help="exit 3 when the config's gate thresholds fail")
    run.add_argument("--jobs", type=int, default=None)
    gate = sub.add_parser("gate", help="run an acceptance suite")
    gate.add_argument("suite", choices=[*gates.GATES, "all"])
    tune = sub.add_parser("print-tuning", help="print step sizes and stabilization weights")
    tune.add_argument("theorem", choices=list(TUNING_PARAMS))
    tune.add_argument("params", nargs="*", metavar="key=value")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "print-tuning":
            print(json.dumps(tuning_table(args.theorem, _parse_pairs(args.params)), indent=2))
            return EXIT_OK
        if args.command == "gate":
            results = gates.run_gates(None if args.suite == "all" else [args.suite])
            for r in results:
                print(r.line())
            return EXIT_OK if all(r.passed for r in results) else EXIT_GATE
        config = harness.parse_config(args.config)
        summary = harness.run_scenario(config, jobs=args.jobs)
        for row in summary.per_T:
            se = "n/a" if row["stderr"] is None else f"{row['stderr']:.3g}"
            print(f"T={row['T']}: mean={row['mean']:.6g} stderr={se}")
        if summary.slope is not None:
            print(f"slope={summary.slope:.4f} intercept={summary.intercept:.4f}")
        if args.gate:
            ok, detail = harness.check_gate(config, summary)
            print(("PASS " if ok else "FAIL ") + detail)
            return EXIT_OK if ok else EXIT_GATE
        return EXIT_OK
    except (harness.ConfigError, GeometryError, amdp.EnumerationGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
